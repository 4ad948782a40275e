"""Structured finite element assembly on block meshes.

Two element families cover every backend:

  * 2D bilinear quads on rectangles in block parameter coordinates,
    with three scalar weight fields: a Dirichlet weight (multiplies
    grad.grad in parameter coordinates), a mass weight, and an optional
    ring weight for the angular-mode term of axisymmetric reductions.
    The parameter metric of every 2D block is conformal to the flat
    rectangle, so the Dirichlet form needs no metric tensor.

  * 3D isoparametric trilinear hexahedra on curvilinear blocks given by
    their physical node coordinates, with conformally flat metric
    psi^(p-2) h: stiffness weight psi^2 and mass weight psi^p.

Mass matrices are lumped by nodal quadrature (positive diagonal).
Identifications that are exact on nodes are expressed by sharing global
node ids; everything else uses mortar constraints u_slave = R u_master
folded into the assembled operators (K -> R^T K R, lumped mass vector
m -> R^T m; interpolation weights are nonnegative and sum to one, so
positivity and total mass are preserved).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


_GAUSS_1D = np.array([-1.0, 1.0]) / np.sqrt(3.0)


@dataclass
class Assembly:
    """Accumulates COO triplets for K and a lumped mass vector."""

    n_nodes: int
    rows: list = field(default_factory=list)
    cols: list = field(default_factory=list)
    vals: list = field(default_factory=list)
    mass: np.ndarray = None
    ring_rows: list = field(default_factory=list)
    ring_vals: list = field(default_factory=list)

    def __post_init__(self):
        if self.mass is None:
            self.mass = np.zeros(self.n_nodes)
        self.ring = np.zeros(self.n_nodes)

    def add_stiffness(self, ids, local):
        k = ids.shape[1]
        for a in range(k):
            for b in range(k):
                self.rows.append(ids[:, a])
                self.cols.append(ids[:, b])
                self.vals.append(local[:, a, b])

    def add_lumped(self, ids, contrib, target=None):
        arr = self.mass if target is None else target
        np.add.at(arr, ids.ravel(), contrib.ravel())

    def stiffness_matrix(self) -> sp.csr_matrix:
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        vals = np.concatenate(self.vals)
        k = sp.coo_matrix((vals, (rows, cols)),
                          shape=(self.n_nodes, self.n_nodes)).tocsr()
        k.sum_duplicates()
        return k


# ---------------------------------------------------------------------------
# 2D bilinear quads
# ---------------------------------------------------------------------------

def _quad_local_stiffness(hx, hy, w_gauss):
    """Local stiffness of bilinear quads, cells vectorized.

    hx, hy: cell sizes (arrays of length ncells); w_gauss: (ncells, 4)
    Dirichlet weights at the 2x2 Gauss points.  Shape-function gradient
    products are evaluated exactly per Gauss point.
    """
    ncell = len(hx)
    out = np.zeros((ncell, 4, 4))
    for g, (gx, gy) in enumerate([(a, b) for b in _GAUSS_1D
                                  for a in _GAUSS_1D]):
        x, y = 0.5 * (gx + 1.0), 0.5 * (gy + 1.0)
        dn = np.array([
            [-(1 - y), -(1 - x)],
            [(1 - y), -x],
            [y, x],
            [-y, (1 - x)],
        ])  # gradients wrt unit square of nodes (0,0),(1,0),(1,1),(0,1)
        gxv = dn[:, 0][None, :] / hx[:, None]
        gyv = dn[:, 1][None, :] / hy[:, None]
        prod = (gxv[:, :, None] * gxv[:, None, :]
                + gyv[:, :, None] * gyv[:, None, :])
        out += w_gauss[:, g, None, None] * prod \
            * (hx * hy / 4.0)[:, None, None]
    return out


def assemble_block_2d(asm: Assembly, xs, ys, node_ids, weight_fns,
                      cell_mask=None):
    """Assemble one rectangular 2D block.

    xs, ys: 1D parameter coordinate arrays; node_ids: (len(xs), len(ys))
    global node ids; weight_fns: (dirichlet, mass, ring_or_None), each
    callable on (x, y) meshes; cell_mask: boolean (nx-1, ny-1), True to
    keep the cell.
    """
    w_dir, w_mass, w_ring = weight_fns
    nx, ny = len(xs), len(ys)
    ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    if cell_mask is not None:
        keep = cell_mask.ravel()
        ii, jj = ii[keep], jj[keep]
    if len(ii) == 0:
        return
    hx = (xs[ii + 1] - xs[ii])
    hy = (ys[jj + 1] - ys[jj])
    x0, y0 = xs[ii], ys[jj]
    ids = np.stack([node_ids[ii, jj], node_ids[ii + 1, jj],
                    node_ids[ii + 1, jj + 1], node_ids[ii, jj + 1]], axis=1)

    # Gauss points (2x2) in parameter coordinates
    gpts = []
    for gy in _GAUSS_1D:
        for gx in _GAUSS_1D:
            gpts.append((x0 + hx * 0.5 * (gx + 1.0),
                         y0 + hy * 0.5 * (gy + 1.0)))
    wdir = np.stack([w_dir(px, py) for (px, py) in gpts], axis=1)
    local = _quad_local_stiffness(hx, hy, wdir)
    asm.add_stiffness(ids, local)

    # lumped mass / ring by corner quadrature
    corners = [(x0, y0), (x0 + hx, y0), (x0 + hx, y0 + hy), (x0, y0 + hy)]
    area4 = (hx * hy / 4.0)
    mass_c = np.stack([w_mass(px, py) * area4 for (px, py) in corners],
                      axis=1)
    asm.add_lumped(ids, mass_c)
    if w_ring is not None:
        ring_c = np.stack([w_ring(px, py) * area4 for (px, py) in corners],
                          axis=1)
        asm.add_lumped(ids, ring_c, target=asm.ring)


# ---------------------------------------------------------------------------
# 3D isoparametric trilinear hexes
# ---------------------------------------------------------------------------

_HEX_CORNERS = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                         [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]])


def _hex_shape_grad(xi):
    """Trilinear shape values and reference gradients at xi in [0,1]^3."""
    x, y, z = xi
    vals = np.empty(8)
    grads = np.empty((8, 3))
    for a, (cx, cy, cz) in enumerate(_HEX_CORNERS):
        fx = x if cx else 1.0 - x
        fy = y if cy else 1.0 - y
        fz = z if cz else 1.0 - z
        dx = 1.0 if cx else -1.0
        dy = 1.0 if cy else -1.0
        dz = 1.0 if cz else -1.0
        vals[a] = fx * fy * fz
        grads[a] = [dx * fy * fz, fx * dy * fz, fx * fy * dz]
    return vals, grads


def assemble_block_3d(asm: Assembly, coords, node_ids, stiff_weight,
                      mass_weight, cell_mask=None):
    """Assemble one structured 3D block of trilinear hexes.

    coords: (nx, ny, nz, 3) physical node positions; node_ids matching
    int array; weights: callables on (ncells, 3) point arrays.
    """
    nx, ny, nz = node_ids.shape
    ii, jj, kk = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1),
                             np.arange(nz - 1), indexing="ij")
    ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
    if cell_mask is not None:
        keep = cell_mask.ravel()
        ii, jj, kk = ii[keep], jj[keep], kk[keep]
    if len(ii) == 0:
        return
    corner_idx = [(ii + c[0], jj + c[1], kk + c[2]) for c in _HEX_CORNERS]
    ids = np.stack([node_ids[ci] for ci in corner_idx], axis=1)
    xyz = np.stack([coords[ci] for ci in corner_idx], axis=1)  # (nc, 8, 3)

    ncell = len(ii)
    local = np.zeros((ncell, 8, 8))
    for gz in _GAUSS_1D:
        for gy in _GAUSS_1D:
            for gx in _GAUSS_1D:
                xi = (0.5 * (gx + 1), 0.5 * (gy + 1), 0.5 * (gz + 1))
                vals, grads = _hex_shape_grad(xi)
                jac = np.einsum("cad,ae->cde", xyz, grads)  # dX/dxi
                det = np.abs(np.linalg.det(jac))
                inv = np.linalg.inv(jac)
                gphys = np.einsum("ae,ced->cad", grads, inv)
                pts = np.einsum("a,cad->cd", vals, xyz)
                w = stiff_weight(pts) * det / 8.0
                local += w[:, None, None] * np.einsum(
                    "cad,cbd->cab", gphys, gphys)
    asm.add_stiffness(ids, local)

    # lumped mass by corner quadrature
    mass_c = np.zeros((ncell, 8))
    for a in range(8):
        xi = tuple(_HEX_CORNERS[a].astype(float))
        _, grads = _hex_shape_grad(xi)
        jac = np.einsum("cad,ae->cde", xyz, grads)
        det = np.abs(np.linalg.det(jac))
        mass_c[:, a] = mass_weight(xyz[:, a, :]) * det / 8.0
    asm.add_lumped(ids, mass_c)


# ---------------------------------------------------------------------------
# Mortar reduction
# ---------------------------------------------------------------------------

def mortar_reduce(k_full: sp.csr_matrix, mass_full: np.ndarray,
                  n_full: int, constraints: dict):
    """Fold slave-node constraints into the operator.

    constraints: slave_id -> list of (master_id, weight) with weights
    summing to 1.  Returns (K_red, mass_red, keep_ids, expand) where
    keep_ids maps reduced index -> original id and expand is a CSR
    matrix taking reduced vectors to full vectors.
    """
    slave = np.array(sorted(constraints.keys()), dtype=int)
    is_slave = np.zeros(n_full, dtype=bool)
    is_slave[slave] = True
    keep = np.where(~is_slave)[0]
    new_index = -np.ones(n_full, dtype=int)
    new_index[keep] = np.arange(len(keep))

    rows, cols, vals = [], [], []
    rows.append(keep)
    cols.append(new_index[keep])
    vals.append(np.ones(len(keep)))
    for s in slave:
        for m, w in constraints[s]:
            if is_slave[m]:
                raise ValueError("mortar master cannot itself be a slave")
            rows.append([s])
            cols.append([new_index[m]])
            vals.append([w])
    rows = np.concatenate([np.atleast_1d(r) for r in rows])
    cols = np.concatenate([np.atleast_1d(c) for c in cols])
    vals = np.concatenate([np.atleast_1d(v) for v in vals])
    expand = sp.coo_matrix((vals, (rows, cols)),
                           shape=(n_full, len(keep))).tocsr()
    k_red = (expand.T @ k_full @ expand).tocsr()
    k_red.sum_duplicates()
    mass_red = expand.T @ mass_full
    return k_red, mass_red, keep, expand


def symmetrize(k: sp.csr_matrix) -> sp.csr_matrix:
    return ((k + k.T) * 0.5).tocsr()
