"""Structural property suite: symmetry, skewness, coercivity, oracles, stability.

Every check returns a :class:`CheckResult`; :func:`run_checks` runs them all.
None of them needs a convergence sweep, and the whole suite takes seconds.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from . import analysis
from .fem import Q1, Q2, gauss_rule, gauss_rule_1d
from .forms import (
    HydraulicTensor,
    PhysicalParams,
    SystemOperators,
    apply_dirichlet,
    assemble_load,
    assemble_operators,
    build_spaces,
)
from .linalg import build_block_system, dense_solve, factorize
from .mesh import INTERFACE, Geometry, build_structured
from .mms import ManufacturedSolution, PolynomialSolution, ZeroSolution
from .timestep import SchemeConfig, TimeGrid, bdf2_derivative, run


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


class Context:
    """Lazily built shared objects; ``mutate`` may tamper with assembled operators."""

    def __init__(self, seed: int = 20240601, mutate: Optional[Callable] = None):
        self.rng = np.random.default_rng(seed)
        self.params = PhysicalParams()
        self.tensor = HydraulicTensor(1.0, 1e-2, 0.0)
        self.mutate = mutate
        self._ops: Dict = {}

    def ops(self, n: int = 4, pressure: str = "q1", tensor: Optional[HydraulicTensor] = None,
            geometry: Optional[Geometry] = None) -> SystemOperators:
        tensor = tensor or self.tensor
        key = (n, pressure, tensor, geometry)
        if key not in self._ops:
            spaces = build_spaces(build_structured(geometry, n), pressure)
            ops = assemble_operators(spaces, self.params, tensor)
            if self.mutate is not None:
                ops = self.mutate(ops) or ops
            self._ops[key] = ops
        return self._ops[key]


def _rel(a, b) -> float:
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    b = b.toarray() if sp.issparse(b) else np.asarray(b)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-300)
    return float(np.abs(a - b).max(initial=0.0) / scale)


# ------------------------------------------------------------------ checks

def check_mesh_partition(ctx: Context) -> CheckResult:
    ok, worst = True, ""
    for n in (1, 2, 3, 4):
        m = build_structured(n=n)
        counts = np.bincount(m.edge_tags, minlength=4)
        ie = m.edges_with_tag(INTERFACE)
        tags = m.cell_tags[m.edge_cells[ie]]
        good = (counts.sum() == len(m.edges) and len(ie) == n
                and np.all(tags[:, 0] != tags[:, 1])
                and build_structured(n=2 * n).num_cells == 4 * m.num_cells)
        if not good:
            ok, worst = False, f"n={n}"
    return CheckResult("mesh-partition", ok, "edge tags partition, n interface edges, 4x refinement"
                       + ("" if ok else f" broken at {worst}"))


def check_partition_of_unity(ctx: Context) -> CheckResult:
    pts = ctx.rng.uniform(-1, 1, (50, 2))
    err = 0.0
    for e in (Q1, Q2):
        err = max(err, np.abs(e.values(pts).sum(1) - 1).max(), np.abs(e.grads(pts).sum(1)).max())
        err = max(err, np.abs(e.values(e.nodes) - np.eye(e.num_nodes)).max())
    return CheckResult("partition-of-unity", err < 1e-13, f"max defect {err:.2e}")


def check_quadrature(ctx: Context) -> CheckResult:
    err = 0.0
    for k in range(1, 7):
        r = gauss_rule(k)
        for a, b in itertools.product(range(r.order + 1), repeat=2):
            exact = (1 - (-1) ** (a + 1)) / (a + 1) * (1 - (-1) ** (b + 1)) / (b + 1)
            err = max(err, abs(r.weights @ (r.points[:, 0] ** a * r.points[:, 1] ** b) - exact))
    return CheckResult("quadrature-exactness", err < 1e-13, f"max monomial error {err:.2e}")


def check_mass_spd(ctx: Context) -> CheckResult:
    ops = ctx.ops()
    free = np.setdiff1d(np.arange(ops.spaces.nw), ops.spaces.w_dirichlet)
    Z = ctx.rng.standard_normal((50, free.size))
    Mf = ops.M[free][:, free]
    q = np.einsum("ki,ki->k", Z, (Mf @ Z.T).T)
    sym = _rel(ops.M, ops.M.T)
    return CheckResult("mass-spd", bool(q.min() > 0 and sym < 1e-14),
                       f"min z'Mz {q.min():.3e}, asymmetry {sym:.1e}")


def check_B_symmetry(ctx: Context) -> CheckResult:
    worst = 0.0
    for theta in (0.0, 0.7):
        B = ctx.ops(tensor=HydraulicTensor(1.0, 1e-2, theta)).B
        worst = max(worst, abs(B - B.T).max() / abs(B).max())
    return CheckResult("B-symmetry", worst <= 1e-12, f"max|B-B'|/max|B| = {worst:.2e}")


def check_CI_skew(ctx: Context) -> CheckResult:
    C = ctx.ops().CI
    d = abs(C + C.T).max()
    return CheckResult("CI-skewness", d == 0.0 and C.nnz > 0, f"max|C+C'| = {d:.1e}")


def check_bI_antisymmetry(ctx: Context) -> CheckResult:
    C = ctx.ops().CI
    W = ctx.rng.standard_normal((100, C.shape[0]))
    vals = np.abs(np.einsum("ki,ki->k", W, (C @ W.T).T))
    scale = np.abs(C).sum() * np.abs(W).max() ** 2
    worst = float(vals.max() / scale)
    return CheckResult("bI-antisymmetry", worst < 1e-14, f"max |w'Cw| relative {worst:.1e}")


def check_coercivity(ctx: Context) -> CheckResult:
    ok, worst = True, np.inf
    for theta in (0.0, 0.7):
        K = HydraulicTensor(1.0, 1e-2, theta)
        ops = ctx.ops(tensor=K)
        Z = ctx.rng.standard_normal((100, ops.spaces.nw))
        zB = np.einsum("ki,ki->k", Z, (ops.B @ Z.T).T)
        zG = np.einsum("ki,ki->k", Z, (ops.G @ Z.T).T)
        gap = zB - K.k_min / K.k_max * zG
        worst = min(worst, gap.min())
        ok &= bool(np.all(gap >= -1e-10))
    return CheckResult("B-coercivity", ok, f"min z'Bz - (kmin/kmax)|z|^2 = {worst:.3e} over 200 samples")


def check_norm_equivalence(ctx: Context) -> CheckResult:
    ops = ctx.ops()
    K = ops.tensor
    Z = ctx.rng.standard_normal((50, ops.spaces.nw))
    lo, hi = np.inf, 0.0
    for z in Z:
        r = analysis.norm(ops, z, "Bnorm") / analysis.norm(ops, z, "nabla")
        lo, hi = min(lo, r), max(hi, r)
    ok = lo ** 2 >= K.k_min / K.k_max - 1e-12 and np.isfinite(hi)
    return CheckResult("norm-equivalence", bool(ok), f"|z|_B/|z|_nabla in [{lo:.3f}, {hi:.3f}]")


def check_bdf2_quadratic(ctx: Context) -> CheckResult:
    worst = 0.0
    for _ in range(20):
        a, b, c = ctx.rng.standard_normal((3, 5))
        s = ctx.rng.uniform(1e-3, 1.0)
        t = ctx.rng.uniform(0, 5)
        w = [a + b * tt + c * tt ** 2 for tt in (t - 2 * s, t - s, t)]
        D = bdf2_derivative(w[2], w[1], w[0], s)
        exact = b + 2 * c * t
        worst = max(worst, np.abs(D - exact).max() / (1 + np.abs(exact).max()))
    return CheckResult("bdf2-quadratic-exactness", worst <= 1e-13, f"max relative error {worst:.1e}")


def check_divergence_residual(ctx: Context) -> CheckResult:
    ops = ctx.ops(n=4)
    worst = 0.0
    for starter in ("taylor", "backward-euler"):
        r = run(ops, ManufacturedSolution(ops.params, ops.tensor), TimeGrid(0.5, 8),
                SchemeConfig(starter=starter), track_errors=False)
        worst = max(worst, r.max_div_residual)
    return CheckResult("divergence-residual", worst <= 1e-9, f"max per-step residual {worst:.1e}")


def check_polynomial_reproduction(ctx: Context) -> CheckResult:
    worst = 0.0
    for pressure in ("q1", "q1q0"):
        ops = ctx.ops(n=2, pressure=pressure, tensor=HydraulicTensor(1.0, 1e-2, 0.4))
        r = run(ops, PolynomialSolution(ops.params, ops.tensor), TimeGrid(1.0, 4))
        worst = max(worst, r.max_err_w, r.max_err_p)
    return CheckResult("three-level-consistency", worst <= 1e-10,
                       f"max error on a linear-in-time discrete solution {worst:.1e}")


def check_assembly_oracle(ctx: Context) -> CheckResult:
    geom = Geometry((0.0, 2.0, 1.0, 2.0), (0.0, 2.0, 0.0, 1.0), 1.0)
    worst, which = 0.0, ""
    for pressure, theta in (("q1", 0.0), ("q1q0", 0.5)):
        K = HydraulicTensor(1.0, 1e-2, theta)
        ops = ctx.ops(n=1, pressure=pressure, tensor=K, geometry=geom)
        ref = brute_force_operators(ops)
        for name, mat in ref.items():
            err = _rel(getattr(ops, name) if name != "F" else _oracle_load_target(ops), mat)
            if err > worst:
                worst, which = err, name
    return CheckResult("assembly-oracle", worst <= 1e-12,
                       f"max relative deviation {worst:.1e} ({which}) on a 4-cell mesh")


def check_lu_vs_dense(ctx: Context) -> CheckResult:
    worst = 0.0
    # a real step matrix ...
    ops = ctx.ops(n=4)
    A = build_block_system(ops, 0.1).matrix
    systems = [A]
    # ... and random sparse nonsymmetric systems of 500 unknowns
    for _ in range(2):
        R = sp.random(500, 500, density=0.01, random_state=ctx.rng) + sp.eye(500) * 2.0
        systems.append(R.tocsr())
    for S in systems:
        b = ctx.rng.standard_normal(S.shape[0])
        x1 = factorize(S).solve(b)
        x2 = dense_solve(S, b)
        worst = max(worst, np.linalg.norm(x1 - x2) / np.linalg.norm(x2))
    return CheckResult("lu-vs-dense", worst <= 1e-9,
                       f"max relative difference {worst:.1e} (sizes {[s.shape[0] for s in systems]})")


def check_infsup(ctx: Context) -> CheckResult:
    betas = [analysis.infsup_estimate(ctx.ops(n=n)) for n in (2, 4, 8)]
    var = (max(betas) - min(betas)) / max(betas)
    ok = min(betas) > 1e-3 and var < 0.25
    return CheckResult("inf-sup", ok, "beta_h = " + ", ".join(f"{b:.4f}" for b in betas)
                       + f" (variation {100 * var:.1f}%)")


def check_dirichlet(ctx: Context) -> CheckResult:
    ops = ctx.ops(n=2)
    D = ops.spaces.w_dirichlet
    A = ops.M + ops.B
    b = ctx.rng.standard_normal(A.shape[0])
    Ac, rhs = apply_dirichlet(A, b, D, 0.0)
    x = factorize(Ac).solve(rhs)
    sym = _rel(Ac, Ac.T)
    return CheckResult("dirichlet-elimination", bool(np.all(x[D] == 0.0) and sym < 1e-12),
                       f"constrained dofs exactly zero, asymmetry {sym:.1e}")


def check_stability(ctx: Context) -> CheckResult:
    ops = ctx.ops(n=4)
    zero = ZeroSolution(ops.params, ops.tensor)
    worst = 0.0
    for sigma in (0.5, 2.0):
        w0 = ctx.rng.standard_normal(ops.spaces.nw)
        w1 = ctx.rng.standard_normal(ops.spaces.nw)
        for w in (w0, w1):
            w[ops.spaces.w_dirichlet] = 0.0
        r = run(ops, zero, TimeGrid(10.0, int(round(10 / sigma))),
                initial=(w0, np.zeros(ops.spaces.np_), w1), track_errors=False)
        worst = max(worst, max(r.w_norms) / max(r.w_norms[0], r.w_norms[1]))
    return CheckResult("stability-witness", worst <= 2.0, f"max_n |w^n| / max(|w^0|, |w^1|) = {worst:.3f}")


def check_zero_data(ctx: Context) -> CheckResult:
    ops = ctx.ops(n=2)
    r = run(ops, ZeroSolution(ops.params, ops.tensor), TimeGrid(1.0, 4))
    big = max(np.abs(r.final.w).max(), np.abs(r.final.p).max())
    return CheckResult("zero-data", big == 0.0, f"max |coefficient| {big:.1e}")


CHECKS: List[Callable[[Context], CheckResult]] = [
    check_mesh_partition,
    check_partition_of_unity,
    check_quadrature,
    check_mass_spd,
    check_B_symmetry,
    check_CI_skew,
    check_bI_antisymmetry,
    check_coercivity,
    check_norm_equivalence,
    check_bdf2_quadratic,
    check_divergence_residual,
    check_polynomial_reproduction,
    check_assembly_oracle,
    check_lu_vs_dense,
    check_infsup,
    check_dirichlet,
    check_stability,
    check_zero_data,
]


def run_checks(ctx: Optional[Context] = None, names=None) -> List[CheckResult]:
    ctx = ctx or Context()
    out = []
    for fn in CHECKS:
        name = fn.__name__[len("check_"):]
        if names and name not in names:
            continue
        try:
            out.append(fn(ctx))
        except Exception as exc:  # a crashing check is a failing check
            out.append(CheckResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return out


# ------------------------------------------------------------ brute force

def _lagrange_1d(nodes, k, x):
    """Value and derivative of the k-th 1D Lagrange polynomial on ``nodes``."""
    val, der = 1.0, 0.0
    for j, xj in enumerate(nodes):
        if j == k:
            continue
        d = nodes[k] - xj
        der = der * (x - xj) / d + val / d
        val = val * (x - xj) / d
    return val, der


def _cell_basis(x0, x1, y0, y1, degree):
    """Physical tensor-product Lagrange basis of an axis-aligned cell.

    Returns a list of ``(node, f)`` where ``f(x, y)`` gives ``(value, dx, dy)``.
    """
    if degree == 0:
        return [(((x0 + x1) / 2, (y0 + y1) / 2), lambda x, y: (1.0, 0.0, 0.0))]
    xs = np.linspace(x0, x1, degree + 1)
    ys = np.linspace(y0, y1, degree + 1)
    out = []
    for a in range(degree + 1):
        for b in range(degree + 1):
            def f(x, y, a=a, b=b):
                lx, dlx = _lagrange_1d(xs, a, x)
                ly, dly = _lagrange_1d(ys, b, y)
                return lx * ly, dlx * ly, lx * dly
            out.append(((xs[a], ys[b]), f))
    return out


def _lookup(coords, node):
    d = np.hypot(coords[:, 0] - node[0], coords[:, 1] - node[1])
    k = int(np.argmin(d)) if len(d) else -1
    return k if k >= 0 and d[k] < 1e-12 else -1


def _rects(mesh, tag):
    out = []
    for c in np.flatnonzero(mesh.cell_tags == tag):
        v = mesh.vertices[mesh.cells[c]]
        out.append((v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max()))
    return out


def _oracle_load_target(ops):
    return assemble_load(ops.spaces, ops.params, _oracle_f, _oracle_g, 0.3)


# polynomial data so that both rules integrate the loads exactly
def _oracle_f(x, y, t):
    return np.stack([x ** 2 * y + t, x * y ** 2 - y])


def _oracle_g(x, y, t):
    return x ** 2 * y ** 2 + 1 + t


def brute_force_operators(ops: SystemOperators) -> Dict[str, np.ndarray]:
    """Dense reassembly of ``M, B, Bdiv, CI, G`` and a load vector with plain loops.

    Uses physical-coordinate Lagrange polynomials and a 5-point Gauss rule, and
    matches dofs by coordinates only, so none of the production kernels or dof
    tables is reused. Valid for axis-aligned cells.
    """
    from .mesh import FLUID, POROUS

    spc, prm, K = ops.spaces, ops.params, ops.tensor.matrix
    mesh = spc.mesh
    nv, nw = spc.nv, spc.nw
    npr = spc.np_
    g1 = gauss_rule_1d(5)
    M = np.zeros((nw, nw))
    B = np.zeros((nw, nw))
    G = np.zeros((nw, nw))
    Bdiv = np.zeros((npr, nw))
    C = np.zeros((nw, nw))
    F = np.zeros(nw)
    en, rg = prm.eta * prm.nu, prm.rho_g
    t = 0.3

    def quad_points(x0, x1, y0, y1):
        for (s, ws), (r, wr) in itertools.product(zip(g1.points, g1.weights), repeat=2):
            yield (x0 + (s + 1) * (x1 - x0) / 2, y0 + (r + 1) * (y1 - y0) / 2,
                   ws * wr * (x1 - x0) * (y1 - y0) / 4)

    vel_kind = spc.vx.element.degree
    for rect in _rects(mesh, FLUID):
        vb = [(_lookup(spc.vx.coords, nd), f) for nd, f in _cell_basis(*rect, vel_kind)]
        pb = []
        for q, off in zip(spc.pressure, spc.pressure_offsets()):
            for nd, f in _cell_basis(*rect, q.element.degree):
                k = _lookup(q.coords, nd)
                if k >= 0:
                    pb.append((off + k, f))
        for x, y, w in quad_points(*rect):
            vals = [(i, f(x, y)) for i, f in vb]
            fx, fy = _oracle_f(x, y, t)
            for i, (vi, dxi, dyi) in vals:
                F[i] += w * prm.eta * fx * vi
                F[nv + i] += w * prm.eta * fy * vi
                for j, (vj, dxj, dyj) in vals:
                    for off in (0, nv):
                        M[off + i, off + j] += w * prm.eta * vi * vj
                        B[off + i, off + j] += w * en * (dxi * dxj + dyi * dyj)
                        G[off + i, off + j] += w * en * (dxi * dxj + dyi * dyj)
            for k, f in pb:
                qk = f(x, y)[0]
                for j, (vj, dxj, dyj) in vals:
                    Bdiv[k, j] += -w * prm.eta * qk * dxj
                    Bdiv[k, nv + j] += -w * prm.eta * qk * dyj

    for rect in _rects(mesh, POROUS):
        hb = [(_lookup(spc.head.coords, nd), f) for nd, f in _cell_basis(*rect, spc.head.element.degree)]
        for x, y, w in quad_points(*rect):
            vals = [(2 * nv + i, f(x, y)) for i, f in hb]
            for i, (vi, dxi, dyi) in vals:
                F[i] += w * rg * _oracle_g(x, y, t) * vi
                gi = np.array([dxi, dyi])
                for j, (vj, dxj, dyj) in vals:
                    gj = np.array([dxj, dyj])
                    M[i, j] += w * rg * prm.S0 * vi * vj
                    B[i, j] += w * rg * gi @ K @ gj
                    G[i, j] += w * rg * ops.tensor.k_max * gi @ gj

    # interface: bottom edges of fluid cells on y = interface_y
    yI = mesh.geometry.interface_y
    tau = np.asarray(mesh.geometry.tangent)
    nf = np.asarray(mesh.geometry.normal_fluid)
    slip = prm.eta * prm.alpha / np.sqrt(tau @ K @ tau)
    for rect in _rects(mesh, FLUID):
        x0, x1, y0, _ = rect
        if abs(y0 - yI) > 1e-12:
            continue
        below = [r for r in _rects(mesh, POROUS) if r[0] == x0 and r[1] == x1 and r[3] == yI][0]
        vb = [(_lookup(spc.vx.coords, nd), f) for nd, f in _cell_basis(*rect, vel_kind)]
        hb = [(_lookup(spc.head.coords, nd), f) for nd, f in _cell_basis(*below, spc.head.element.degree)]
        for s, ws in zip(g1.points, g1.weights):
            x = x0 + (s + 1) * (x1 - x0) / 2
            w = ws * (x1 - x0) / 2
            for i, fi in vb:
                ui = fi(x, yI)[0]
                for j, fj in vb:
                    uj = fj(x, yI)[0]
                    for a, b in itertools.product(range(2), repeat=2):
                        B[a * nv + i, b * nv + j] += w * slip * tau[a] * tau[b] * ui * uj
                for k, fk in hb:
                    hk = fk(x, yI)[0]
                    for a in range(2):
                        val = w * prm.eta * rg * nf[a] * ui * hk
                        C[a * nv + i, 2 * nv + k] += val
                        C[2 * nv + k, a * nv + i] -= val
    return {"M": M, "B": B, "G": G, "Bdiv": Bdiv, "CI": C, "F": F}
