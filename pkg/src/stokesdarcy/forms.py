"""Assembly of the coupled Stokes/Darcy operators.

Unknowns are packed as ``w = [v_x | v_y | phi]`` followed, in the saddle-point
system, by the fluid pressure. Matrices are indexed ``[test, trial]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .fem import (
    Q1_NODES,
    DofMap,
    build_dofmap,
    cell_geometry,
    gauss_rule,
    gauss_rule_1d,
    inverse_transpose,
)
from .mesh import INTERFACE, Mesh

DEFAULT_QUAD = 3


@dataclass(frozen=True)
class PhysicalParams:
    """Constant physical coefficients of the coupled model."""

    nu: float = 0.1
    eta: float = 1e-2
    rho: float = 1e3
    g: float = 10.0
    S0: float = 1e-3
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("nu", "eta", "rho", "g", "S0", "alpha"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    @property
    def rho_g(self) -> float:
        return self.rho * self.g


@dataclass(frozen=True)
class HydraulicTensor:
    """SPD conductivity ``R(theta) diag(k1, k2) R(theta)^T``."""

    k1: float = 1.0
    k2: float = 1e-2
    theta: float = 0.0

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("tensor eigenvalues must be positive")

    @property
    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        R = np.array([[c, -s], [s, c]])
        return R @ np.diag([self.k1, self.k2]) @ R.T

    @property
    def k_min(self) -> float:
        return min(self.k1, self.k2)

    @property
    def k_max(self) -> float:
        return max(self.k1, self.k2)

    def along(self, tau) -> float:
        tau = np.asarray(tau, dtype=float)
        return float(tau @ self.matrix @ tau)


@dataclass(frozen=True, eq=False)
class Spaces:
    """The discrete spaces of one mesh and the packing of their coefficients."""

    mesh: Mesh
    vx: DofMap
    vy: DofMap
    head: DofMap
    pressure: List[DofMap]
    zero_mean_pressure: bool = True

    @property
    def nv(self) -> int:
        return self.vx.ndofs

    @property
    def nh(self) -> int:
        return self.head.ndofs

    @property
    def nw(self) -> int:
        return 2 * self.nv + self.nh

    @property
    def np_(self) -> int:
        return sum(d.ndofs for d in self.pressure)

    @property
    def sl_vx(self) -> slice:
        return slice(0, self.nv)

    @property
    def sl_vy(self) -> slice:
        return slice(self.nv, 2 * self.nv)

    @property
    def sl_head(self) -> slice:
        return slice(2 * self.nv, self.nw)

    @property
    def w_dirichlet(self) -> np.ndarray:
        return np.concatenate([
            self.vx.dirichlet, self.nv + self.vy.dirichlet, 2 * self.nv + self.head.dirichlet
        ])

    def pressure_offsets(self) -> List[int]:
        return list(np.cumsum([0] + [d.ndofs for d in self.pressure])[:-1])


def build_spaces(mesh: Mesh, pressure: str = "q1", velocity_element: Optional[str] = None,
                 head_element: Optional[str] = None, zero_mean_pressure: bool = True) -> Spaces:
    """Q2 velocity and head with Q1 (``"q1"``) or Q1+Q0 (``"q1q0"``) pressure."""
    if pressure not in ("q1", "q1q0"):
        raise ValueError(f"unknown pressure space {pressure!r}")
    pdms = [build_dofmap(mesh, "pressure-q1")]
    if pressure == "q1q0":
        pdms.append(build_dofmap(mesh, "pressure-q0"))
    return Spaces(
        mesh,
        build_dofmap(mesh, "velocity-x", velocity_element),
        build_dofmap(mesh, "velocity-y", velocity_element),
        build_dofmap(mesh, "head", head_element),
        pdms,
        zero_mean_pressure,
    )


# ---------------------------------------------------------------- kernels

@dataclass(frozen=True)
class CellData:
    N: np.ndarray      # (nq, nl)
    G: np.ndarray      # (nc, nq, nl, 2) physical gradients
    dx: np.ndarray     # (nc, nq) det J * weight
    x: np.ndarray      # (nc, nq, 2)


@lru_cache(maxsize=64)
def cell_data(dm: DofMap, npoints: int = DEFAULT_QUAD) -> CellData:
    rule = gauss_rule(npoints)
    x, J, det = cell_geometry(dm.mesh, dm.cells, rule.points)
    if np.any(det <= 0):
        raise ValueError("inverted cell in mesh")
    JinvT = inverse_transpose(J, det)
    dN = dm.element.grads(rule.points)
    G = np.einsum("cqab,qib->cqia", JinvT, dN)
    return CellData(dm.element.values(rule.points), G, det * rule.weights, x)


def _scatter(local, test: DofMap, trial: DofMap, rows_idx=None, cols_idx=None):
    rd = test.cell_dofs if rows_idx is None else test.cell_dofs[rows_idx]
    cd = trial.cell_dofs if cols_idx is None else trial.cell_dofs[cols_idx]
    rows = np.broadcast_to(rd[:, :, None], local.shape)
    cols = np.broadcast_to(cd[:, None, :], local.shape)
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(test.ndofs, trial.ndofs))
    A = A.tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scatter_vec(local, dm: DofMap, rows_idx=None):
    rd = dm.cell_dofs if rows_idx is None else dm.cell_dofs[rows_idx]
    keep = rd >= 0
    return np.bincount(rd[keep], weights=local[keep], minlength=dm.ndofs)


def mass_matrix(dm: DofMap, npoints: int = DEFAULT_QUAD) -> sp.csr_matrix:
    """``int N_i N_j`` over the cells of ``dm``."""
    cd = cell_data(dm, npoints)
    local = np.einsum("cq,qi,qj->cij", cd.dx, cd.N, cd.N)
    return _scatter(local, dm, dm)


def stiffness_matrix(dm: DofMap, tensor=None, npoints: int = DEFAULT_QUAD):
    """``int grad(N_i)^T K grad(N_j)`` with a constant 2x2 ``K`` (identity by default)."""
    cd = cell_data(dm, npoints)
    K = np.eye(2) if tensor is None else np.asarray(tensor, dtype=float)
    local = np.einsum("cq,cqia,ab,cqjb->cij", cd.dx, cd.G, K, cd.G)
    return _scatter(local, dm, dm)


def derivative_matrix(test: DofMap, trial: DofMap, component: int,
                      npoints: int = DEFAULT_QUAD):
    """``int N_i d(M_j)/dx_component`` on cells shared by both dof maps."""
    if not np.array_equal(test.cells, trial.cells):
        raise ValueError("dof maps live on different cells")
    ct, cu = cell_data(test, npoints), cell_data(trial, npoints)
    local = np.einsum("cq,qi,cqj->cij", ct.dx, ct.N, cu.G[..., component])
    return _scatter(local, test, trial)


def load_vector(dm: DofMap, func: Callable, npoints: int = DEFAULT_QUAD):
    """``int func N_i``; ``func(x, y)`` is evaluated at quadrature points."""
    cd = cell_data(dm, npoints)
    vals = np.asarray(func(cd.x[..., 0], cd.x[..., 1]), dtype=float)
    vals = np.broadcast_to(vals, cd.dx.shape)
    local = np.einsum("cq,cq,qi->ci", cd.dx, vals, cd.N)
    return _scatter_vec(local, dm)


@dataclass(frozen=True)
class EdgeData:
    rows: np.ndarray   # index into dm.cells per interface edge
    N: np.ndarray      # (ne, nq, nl)
    ds: np.ndarray     # (ne, nq)
    x: np.ndarray      # (ne, nq, 2)


def interface_data(dm: DofMap, npoints: int = DEFAULT_QUAD) -> EdgeData:
    """Traces of the basis of ``dm`` on the interface edges, in mesh edge order."""
    rule = gauss_rule_1d(npoints)
    mesh = dm.mesh
    ie = mesh.edges_with_tag(INTERFACE)
    ec = mesh.edge_cells[ie]
    cell = np.where(mesh.cell_tags[ec[:, 0]] == dm.subdomain, ec[:, 0], ec[:, 1])
    if np.any(mesh.cell_tags[cell] != dm.subdomain):
        raise ValueError("interface edge without a cell in the dof map's subdomain")
    rows = np.searchsorted(dm.cells, cell)
    va, vb = mesh.edges[ie, 0], mesh.edges[ie, 1]
    cv = mesh.cells[cell]
    la = np.argmax(cv == va[:, None], axis=1)
    lb = np.argmax(cv == vb[:, None], axis=1)
    s = rule.points
    lo, hi = (1 - s) / 2, (1 + s) / 2
    ref = Q1_NODES[la][:, None, :] * lo[None, :, None] + Q1_NODES[lb][:, None, :] * hi[None, :, None]
    ne, nq = ref.shape[:2]
    N = dm.element.values(ref.reshape(-1, 2)).reshape(ne, nq, -1)
    Xa, Xb = mesh.vertices[va], mesh.vertices[vb]
    x = Xa[:, None, :] * lo[None, :, None] + Xb[:, None, :] * hi[None, :, None]
    length = np.linalg.norm(Xb - Xa, axis=1)
    ds = (length / 2)[:, None] * rule.weights[None, :]
    return EdgeData(rows, N, ds, x)


def interface_matrix(test: DofMap, trial: DofMap, npoints: int = DEFAULT_QUAD):
    """``int_I N_i M_j`` between traces of two (possibly different-side) dof maps."""
    et, eu = interface_data(test, npoints), interface_data(trial, npoints)
    local = np.einsum("eq,eqi,eqj->eij", et.ds, et.N, eu.N)
    return _scatter(local, test, trial, et.rows, eu.rows)


def interface_vector(dm: DofMap, func: Callable, npoints: int = DEFAULT_QUAD):
    ed = interface_data(dm, npoints)
    vals = np.broadcast_to(np.asarray(func(ed.x[..., 0], ed.x[..., 1]), dtype=float), ed.ds.shape)
    local = np.einsum("eq,eq,eqi->ei", ed.ds, vals, ed.N)
    return _scatter_vec(local, dm, ed.rows)


# ---------------------------------------------------------------- operators

def _check(spaces: Spaces):
    for dm in (spaces.vx, spaces.vy, spaces.head, *spaces.pressure):
        if dm.mesh is not spaces.mesh or dm.cells.max(initial=-1) >= spaces.mesh.num_cells:
            raise ValueError(f"dof map {dm.space} does not match the mesh")


def assemble_mass(spaces: Spaces, params: PhysicalParams) -> sp.csr_matrix:
    """Weighted mass ``eta (u, v)_0 + rho g S0 (phi, psi)_0``."""
    _check(spaces)
    Mv = mass_matrix(spaces.vx)
    Mh = mass_matrix(spaces.head)
    return sp.block_diag(
        [params.eta * Mv, params.eta * Mv, params.rho_g * params.S0 * Mh], format="csr"
    )


def bjs_weight(params: PhysicalParams, tensor: HydraulicTensor, tau=(1.0, 0.0)) -> float:
    ktt = tensor.along(tau)
    assert ktt > 0, "tau^T K tau must be positive for an SPD tensor"
    return params.alpha / np.sqrt(ktt)


def assemble_B(spaces: Spaces, params: PhysicalParams, tensor: HydraulicTensor) -> sp.csr_matrix:
    """Viscous, Darcy and Beavers-Joseph-Saffman parts of the coupled form."""
    _check(spaces)
    mesh = spaces.mesh
    tau = np.asarray(mesh.geometry.tangent)
    A = stiffness_matrix(spaces.vx)
    Ah = stiffness_matrix(spaces.head, tensor.matrix)
    Ivv = interface_matrix(spaces.vx, spaces.vx)
    c = params.eta * bjs_weight(params, tensor, tau)
    fluid = sp.bmat([
        [params.eta * params.nu * A + c * tau[0] * tau[0] * Ivv, c * tau[0] * tau[1] * Ivv],
        [c * tau[1] * tau[0] * Ivv, params.eta * params.nu * A + c * tau[1] * tau[1] * Ivv],
    ])
    return sp.block_diag([fluid, params.rho_g * Ah], format="csr")


def assemble_gram_nabla(spaces: Spaces, params: PhysicalParams, tensor: HydraulicTensor):
    """Gram matrix of ``eta nu |u|_1^2 + rho g k_max |phi|_1^2``."""
    A = stiffness_matrix(spaces.vx)
    Ah = stiffness_matrix(spaces.head)
    en = params.eta * params.nu
    return sp.block_diag([en * A, en * A, params.rho_g * tensor.k_max * Ah], format="csr")


def assemble_b(spaces: Spaces, params: PhysicalParams) -> sp.csr_matrix:
    """Divergence coupling ``-eta int q div u``; rows pressure, columns ``w``."""
    _check(spaces)
    blocks = []
    for q in spaces.pressure:
        Dx = derivative_matrix(q, spaces.vx, 0)
        Dy = derivative_matrix(q, spaces.vy, 1)
        Z = sp.csr_matrix((q.ndofs, spaces.nh))
        blocks.append([-params.eta * Dx, -params.eta * Dy, Z])
    return sp.bmat(blocks, format="csr")


def assemble_bI(spaces: Spaces, params: PhysicalParams) -> sp.csr_matrix:
    """Skew interface coupling ``eta rho g int_I (phi u.n_f - psi v.n_f)``.

    Only the (velocity test, head trial) block is integrated; the other block
    is its negative transpose, so skewness holds to the last bit.
    """
    _check(spaces)
    mesh = spaces.mesh
    n = mesh.geometry.normal_fluid
    c = params.eta * params.rho_g
    X = sp.vstack([
        c * n[0] * interface_matrix(spaces.vx, spaces.head),
        c * n[1] * interface_matrix(spaces.vy, spaces.head),
    ]).tocsr()
    nvv = 2 * spaces.nv
    return sp.bmat([[sp.csr_matrix((nvv, nvv)), X], [-X.T, None]], format="csr")


def assemble_pressure_mass(spaces: Spaces) -> sp.csr_matrix:
    blocks = [[None] * len(spaces.pressure) for _ in spaces.pressure]
    for i, a in enumerate(spaces.pressure):
        for j, b in enumerate(spaces.pressure):
            blocks[i][j] = _cross_mass(a, b)
    return sp.bmat(blocks, format="csr")


def _cross_mass(a: DofMap, b: DofMap):
    ca, cb = cell_data(a), cell_data(b)
    local = np.einsum("cq,qi,qj->cij", ca.dx, ca.N, cb.N)
    return _scatter(local, a, b)


def pressure_mean_vector(spaces: Spaces) -> np.ndarray:
    """Coefficients ``m`` with ``m . p = int_{Omega_f} p``."""
    return np.concatenate([load_vector(q, lambda x, y: 1.0) for q in spaces.pressure])


def assemble_load(spaces: Spaces, params: PhysicalParams, f: Callable, g0: Callable, t: float,
                  npoints: int = DEFAULT_QUAD) -> np.ndarray:
    """``eta int u.f + rho g int g0 psi``; ``f(x, y, t)`` returns the two components."""
    fx = load_vector(spaces.vx, lambda x, y: f(x, y, t)[0], npoints)
    fy = load_vector(spaces.vy, lambda x, y: f(x, y, t)[1], npoints)
    gh = load_vector(spaces.head, lambda x, y: g0(x, y, t), npoints)
    return np.concatenate([params.eta * fx, params.eta * fy, params.rho_g * gh])


def assemble_interface_load(spaces: Spaces, params: PhysicalParams, defects: Callable,
                            npoints: int = DEFAULT_QUAD) -> np.ndarray:
    """Right-hand side that absorbs interface-condition defects of given data.

    ``defects(x, y)`` returns ``(d_force, d_bjs, d_mass)``: the residuals of the
    normal-force balance, the slip law and mass conservation. The functional is
    ``-eta int_I d_force u.n_f + eta int_I d_bjs u.tau - eta rho g int_I d_mass psi``.
    """
    mesh = spaces.mesh
    n = np.asarray(mesh.geometry.normal_fluid)
    tau = np.asarray(mesh.geometry.tangent)
    parts = []
    for comp, dm in enumerate((spaces.vx, spaces.vy)):
        def g(x, y, comp=comp):
            d_force, d_bjs, _ = defects(x, y)
            return -d_force * n[comp] + d_bjs * tau[comp]
        parts.append(params.eta * interface_vector(dm, g, npoints))
    parts.append(-params.eta * params.rho_g * interface_vector(
        spaces.head, lambda x, y: defects(x, y)[2], npoints))
    return np.concatenate(parts)


@dataclass(eq=False)
class SystemOperators:
    """All assembled matrices of one discretisation."""

    spaces: Spaces
    params: PhysicalParams
    tensor: HydraulicTensor
    M: sp.csr_matrix
    B: sp.csr_matrix
    Bdiv: sp.csr_matrix
    CI: sp.csr_matrix
    mean: np.ndarray
    G: sp.csr_matrix = field(repr=False)
    Mp: sp.csr_matrix = field(repr=False)


def assemble_operators(spaces: Spaces, params: PhysicalParams,
                       tensor: HydraulicTensor) -> SystemOperators:
    return SystemOperators(
        spaces, params, tensor,
        M=assemble_mass(spaces, params),
        B=assemble_B(spaces, params, tensor),
        Bdiv=assemble_b(spaces, params),
        CI=assemble_bI(spaces, params),
        mean=pressure_mean_vector(spaces),
        G=assemble_gram_nabla(spaces, params, tensor),
        Mp=assemble_pressure_mass(spaces),
    )


def apply_dirichlet(A, b, dofs: Sequence[int], values) -> tuple:
    """Constrain ``x[dofs] = values`` by symmetric elimination.

    Known columns move to the right-hand side and the constrained rows and
    columns become identity, so a symmetric ``A`` stays symmetric and the
    constrained matrix does not depend on ``values``.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    dofs = np.asarray(dofs, dtype=int)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("boundary values are not finite at some Dirichlet dofs")
    g = np.zeros(A.shape[1])
    g[dofs] = values
    rhs = b - A @ g
    rhs[dofs] = values
    keep = np.ones(A.shape[0])
    keep[dofs] = 0.0
    D = sp.diags(keep)
    Ac = (D @ A @ D + sp.diags(1.0 - keep)).tocsr()
    Ac.eliminate_zeros()
    Ac.sort_indices()
    return Ac, rhs


def dirichlet_matrix(A, dofs) -> sp.csr_matrix:
    """The constrained matrix of :func:`apply_dirichlet` alone."""
    return apply_dirichlet(A, np.zeros(A.shape[0]), dofs, 0.0)[0]


def dump_coo(A) -> str:
    """Coordinate text dump, ``row col value`` per line sorted by (row, col)."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    triples = zip(C.row[order], C.col[order], C.data[order])
    return "".join(f"{int(r)} {int(c)} {float(v)!r}\n" for r, c, v in triples)
