"""Three-level BDF2-type marching, its starter, and a backward-Euler reference.

Each implicit step solves

    (w^{n+1}, z)_0bar + c [B(w^{n+1}, z) + b(z, p^{n+1}) + b_I(w^{n+1}, z)] = rhs(z)
    b(w^{n+1}, q) = 0

with ``c = 2 sigma / 3`` (BDF2) or ``c = sigma`` (backward Euler). The matrix is
the same at every step, so it is factorized once per scheme.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import spsolve

from . import analysis
from .forms import (
    SystemOperators,
    apply_dirichlet,
    assemble_interface_load,
    assemble_load,
    load_vector,
    mass_matrix,
)
from .fem import interpolate
from .linalg import BlockSystem, LUFactorization, build_block_system, factorize, relative_residual
from .mms import ExactSolution

log = logging.getLogger(__name__)

SCHEMES = ("bdf2", "backward-euler")
STARTERS = ("taylor", "backward-euler")
RESIDUAL_TOL = 1e-10


class SteppingError(RuntimeError):
    """A time step failed; ``step`` is the index of the level being computed."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_n = n sigma`` of ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"final time must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"number of steps must be a positive integer, got {self.N}")

    @property
    def sigma(self) -> float:
        return self.T / self.N

    def t(self, n: int) -> float:
        return n * self.sigma

    @classmethod
    def from_sigma(cls, T: float, sigma: float) -> "TimeGrid":
        if not (np.isfinite(sigma) and sigma > 0):
            raise ValueError(f"time step must be positive, got {sigma}")
        N = T / sigma
        if abs(N - round(N)) > 1e-9 * max(1.0, N):
            raise ValueError(f"T={T} is not a whole number of steps of size {sigma}")
        return cls(T, int(round(N)))


@dataclass
class State:
    """Two consecutive time levels and the latest pressure."""

    w_prev: Optional[np.ndarray]
    w: np.ndarray
    p: np.ndarray
    n: int
    lam: float = 0.0


def bdf2_weights(sigma: float) -> Tuple[float, float, float]:
    """Coefficients of ``(w^{n+1}, w^n, w^{n-1})`` in ``(3 w^{n+1} - 4 w^n + w^{n-1}) / (2 sigma)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return 3 / (2 * sigma), -4 / (2 * sigma), 1 / (2 * sigma)


def bdf2_derivative(w_next, w_curr, w_prev, sigma: float):
    a, b, c = bdf2_weights(sigma)
    return a * np.asarray(w_next) + b * np.asarray(w_curr) + c * np.asarray(w_prev)


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "bdf2"
    starter: str = "taylor"
    interface_forcing: bool = True
    quad: int = 3

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.starter not in STARTERS:
            raise ValueError(f"starter must be one of {STARTERS}, got {self.starter!r}")


class Stepper:
    """Owns the factorized step matrices and the data of one run."""

    def __init__(self, ops: SystemOperators, data: ExactSolution, sigma: float,
                 config: SchemeConfig = SchemeConfig()):
        if not (np.isfinite(sigma) and sigma > 0):
            raise ValueError(f"time step must be positive, got {sigma}")
        self.ops = ops
        self.spaces = ops.spaces
        self.data = data
        self.sigma = float(sigma)
        self.config = config
        self._systems: Dict[str, Tuple[BlockSystem, LUFactorization]] = {}
        self.last_residual = 0.0

    # -- matrices ------------------------------------------------------------
    def weight(self, kind: str) -> float:
        return 2 * self.sigma / 3 if kind == "bdf2" else self.sigma

    def system(self, kind: str) -> Tuple[BlockSystem, LUFactorization]:
        if kind not in self._systems:
            sysm = build_block_system(self.ops, self.weight(kind))
            self._systems[kind] = (sysm, factorize(sysm.matrix))
        return self._systems[kind]

    # -- data ----------------------------------------------------------------
    def loads(self, t: float) -> np.ndarray:
        """``F(t)`` plus, when enabled, the interface consistency functional."""
        prm, data = self.ops.params, self.data
        F = assemble_load(self.spaces, prm, data.forcing, data.source, t, self.config.quad)
        if self.config.interface_forcing:
            F = F + assemble_interface_load(
                self.spaces, prm, lambda x, y: data.interface_defects(x, y, t), self.config.quad)
        return F

    def boundary(self, t: float) -> np.ndarray:
        """Vector of length ``nw`` holding the exact trace at Dirichlet dofs, zero elsewhere."""
        sp_ = self.spaces
        g = np.zeros(sp_.nw)
        v = self.data.velocity
        g[sp_.sl_vx] = interpolate(sp_.vx, lambda x, y: v(x, y, t)[0])
        g[sp_.sl_vy] = interpolate(sp_.vy, lambda x, y: v(x, y, t)[1])
        g[sp_.sl_head] = interpolate(sp_.head, lambda x, y: self.data.head(x, y, t))
        out = np.zeros_like(g)
        D = sp_.w_dirichlet
        out[D] = g[D]
        return out

    def project(self, vx, vy, phi, t: float) -> np.ndarray:
        """L2 projection of ``(vx, vy, phi)`` (callables of x, y) with exact boundary trace at ``t``."""
        sp_ = self.spaces
        g = self.boundary(t)
        out = []
        for dm, f, sl in ((sp_.vx, vx, sp_.sl_vx), (sp_.vy, vy, sp_.sl_vy),
                          (sp_.head, phi, sp_.sl_head)):
            M = mass_matrix(dm, self.config.quad + 1)
            b = load_vector(dm, f, self.config.quad + 1)
            A, rhs = apply_dirichlet(M, b, dm.dirichlet, g[sl][dm.dirichlet])
            out.append(_spd_solve(A, rhs))
        return np.concatenate(out)

    def project_exact(self, t: float) -> np.ndarray:
        d = self.data
        return self.project(lambda x, y: d.velocity(x, y, t)[0],
                            lambda x, y: d.velocity(x, y, t)[1],
                            lambda x, y: d.head(x, y, t), t)

    def project_pressure(self, t: float) -> np.ndarray:
        """L2 projection of the exact pressure onto the pressure space."""
        b = np.concatenate([
            load_vector(q, lambda x, y: self.data.pressure(x, y, t), self.config.quad + 1)
            for q in self.spaces.pressure
        ])
        return _spd_solve(self.ops.Mp, b)

    # -- solves --------------------------------------------------------------
    def solve(self, kind: str, rhs_w: np.ndarray, t: float, step: Optional[int] = None):
        """Solve one implicit system; returns ``(w, p, lambda)``."""
        sysm, lu = self.system(kind)
        sp_ = self.spaces
        D = sp_.w_dirichlet
        g = self.boundary(t)
        r_w = rhs_w - sysm.leading @ g
        r_w[D] = g[D]
        parts = [r_w, -(self.ops.Bdiv @ g)]
        if sysm.has_mean:
            parts.append(np.zeros(1))
        rhs = np.concatenate(parts)
        if not np.all(np.isfinite(rhs)):
            raise SteppingError("non-finite right-hand side", step)
        x = lu.solve(rhs)
        res = relative_residual(sysm.matrix, x, rhs)
        self.last_residual = res
        if not (np.isfinite(res) and res <= RESIDUAL_TOL):
            raise SteppingError(f"linear solve residual {res:.3e} above {RESIDUAL_TOL:g}", step)
        w = x[:sp_.nw]
        p = x[sp_.nw:sp_.nw + sp_.np_]
        lam = float(x[-1]) if sysm.has_mean else 0.0
        return w, p, lam

    def initial_state(self) -> State:
        """``w^0`` is the L2 projection of the initial fields; ``p^0`` likewise."""
        return State(None, self.project_exact(0.0), self.project_pressure(0.0), 0)

    def predictor(self) -> np.ndarray:
        """Taylor predictor ``w0 + sigma w_t(0)`` projected onto the discrete space."""
        d, s = self.data, self.sigma
        return self.project(
            lambda x, y: d.velocity(x, y, 0.0)[0] + s * d.velocity_rate(x, y, 0.0)[0],
            lambda x, y: d.velocity(x, y, 0.0)[1] + s * d.velocity_rate(x, y, 0.0)[1],
            lambda x, y: d.head(x, y, 0.0) + s * d.head_rate(x, y, 0.0),
            s,
        )

    def backward_euler_step(self, state: State) -> State:
        n1 = state.n + 1
        t1 = n1 * self.sigma
        rhs = self.ops.M @ state.w + self.sigma * self.loads(t1)
        w, p, lam = self.solve("backward-euler", rhs, t1, n1)
        return State(state.w, w, p, n1, lam)

    def first_step(self, state0: State) -> State:
        """Level 1 from level 0 with the configured starter.

        The pressure always comes from one backward-Euler solve at ``t_1``; the
        velocity and head come from the projected Taylor predictor unless the
        backward-Euler starter is selected.
        """
        if state0.n != 0:
            raise SteppingError("first_step expects the level-0 state", state0.n + 1)
        be = self.backward_euler_step(state0)
        if self.config.starter == "backward-euler":
            return be
        return State(state0.w, self.predictor(), be.p, 1, be.lam)

    def bdf2_step(self, state: State) -> State:
        if state.w_prev is None:
            raise SteppingError("BDF2 needs two previous levels", state.n + 1)
        n1 = state.n + 1
        t1 = n1 * self.sigma
        c = self.weight("bdf2")
        rhs = self.ops.M @ (4 * state.w - state.w_prev) / 3 + c * self.loads(t1)
        w, p, lam = self.solve("bdf2", rhs, t1, n1)
        return State(state.w, w, p, n1, lam)

    def divergence_residual(self, w: np.ndarray) -> float:
        """Relative size of the part of ``Bdiv v`` not absorbed by the mean multiplier."""
        r = self.ops.Bdiv @ w
        if self.spaces.zero_mean_pressure:
            m = self.ops.mean
            r = r - m * (m @ r) / (m @ m)
        v = w[:2 * self.spaces.nv]
        scale = np.linalg.norm(v)
        return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


def _spd_solve(A, b):
    return np.asarray(spsolve(A.tocsc(), b)).ravel()


@dataclass
class RunResult:
    """Trajectory summary and per-step diagnostics of one simulation."""

    grid: TimeGrid
    config: SchemeConfig
    rows: List[Tuple[int, float, float, float, float]] = field(default_factory=list)
    w_norms: List[float] = field(default_factory=list)
    exact_norms: List[float] = field(default_factory=list)
    max_err_w: float = 0.0
    max_err_p: float = 0.0
    max_div_residual: float = 0.0
    max_solve_residual: float = 0.0
    cpu_s: float = 0.0
    steps_bdf2: int = 0
    steps_be: int = 0
    final: Optional[State] = None

    @property
    def norm_w_h(self) -> float:
        return max(self.w_norms[1:], default=0.0)

    @property
    def norm_w_exact(self) -> float:
        return max(self.exact_norms[1:], default=0.0)

    def csv(self) -> str:
        lines = ["n, t, err_w_bar0, err_p_L2, div_residual"]
        lines += [f"{n}, {t:.10g}, {ew:.6e}, {ep:.6e}, {dr:.3e}" for n, t, ew, ep, dr in self.rows]
        return "\n".join(lines) + "\n"


def run(ops: SystemOperators, data: ExactSolution, grid: TimeGrid,
        config: SchemeConfig = SchemeConfig(), initial: Optional[Tuple] = None,
        track_errors: bool = True) -> RunResult:
    """March from ``t = 0`` to ``T``.

    ``initial`` optionally supplies ``(w0, p0)`` coefficient vectors instead of
    projecting the data at ``t = 0``, or ``(w0, p0, w1)`` to skip the starter. Errors are running maxima over
    ``n = 1..N``.
    """
    if config.scheme == "bdf2" and grid.N < 2:
        raise ValueError("the three-level scheme needs at least two steps")
    stepper = Stepper(ops, data, grid.sigma, config)
    res = RunResult(grid, config)
    given_w1 = None
    if initial is None:
        state = stepper.initial_state()
    else:
        state = State(None, np.asarray(initial[0], float), np.asarray(initial[1], float), 0)
        if len(initial) > 2:
            given_w1 = np.asarray(initial[2], float)

    overhead = [0.0]
    starter_solves = config.scheme == "backward-euler" or config.starter == "backward-euler"

    def record(st: State):
        t0 = time.perf_counter()
        t = grid.t(st.n)
        res.w_norms.append(analysis.norm(ops, st.w, "bar0"))
        if track_errors:
            ew = analysis.error_vs_exact(ops.spaces, st.w, data, t, "w", ops.params)
            ep = analysis.error_vs_exact(ops.spaces, st.p, data, t, "p", ops.params)
            res.exact_norms.append(analysis.exact_norm(ops.spaces, data, t, ops.params))
        else:
            ew = ep = 0.0
        dr = stepper.divergence_residual(st.w) if st.n > 0 else 0.0
        # the projected Taylor predictor is not a solve, so it is not held to the constraint
        solved = st.n >= 2 or (st.n == 1 and starter_solves)
        res.rows.append((st.n, t, ew, ep, dr))
        if st.n >= 1:
            res.max_err_w = max(res.max_err_w, ew)
            res.max_err_p = max(res.max_err_p, ep)
            if solved:
                res.max_div_residual = max(res.max_div_residual, dr)
            res.max_solve_residual = max(res.max_solve_residual, stepper.last_residual)
        overhead[0] += time.perf_counter() - t0

    record(state)
    start = time.perf_counter()
    try:
        if config.scheme == "bdf2":
            if given_w1 is None:
                state = stepper.first_step(state)
            else:
                state = State(state.w, given_w1, state.p, 1)
            record(state)
            for _ in range(grid.N - 1):
                state = stepper.bdf2_step(state)
                res.steps_bdf2 += 1
                record(state)
        else:
            for _ in range(grid.N):
                state = stepper.backward_euler_step(state)
                res.steps_be += 1
                record(state)
    except SteppingError:
        raise
    except Exception as exc:  # pragma: no cover - re-raised with the step index
        raise SteppingError(str(exc), state.n + 1) from exc
    # marching only: error evaluation is bookkeeping
    res.cpu_s = time.perf_counter() - start - overhead[0]
    res.final = state
    log.info("run finished: N=%d sigma=%g err_w=%.3e err_p=%.3e",
             grid.N, grid.sigma, res.max_err_w, res.max_err_p)
    return res


def predictor_error(ops: SystemOperators, data: ExactSolution, sigma: float,
                    projected: bool = False, npoints: int = analysis.ERROR_QUAD) -> float:
    """``||wbar^1 - w(sigma)||_0bar`` for the Taylor predictor.

    With ``projected`` the discrete ``P_h wbar^1`` is measured instead of the
    continuous predictor.
    """
    prm, sp_ = ops.params, ops.spaces
    if projected:
        w1 = Stepper(ops, data, sigma).predictor()
        return analysis.error_vs_exact(sp_, w1, data, sigma, "w", prm, npoints)
    from .forms import cell_data

    def gap_sq(dm, pred, exact):
        cd = cell_data(dm, npoints)
        x, y = cd.x[..., 0], cd.x[..., 1]
        return float(np.sum(cd.dx * (pred(x, y) - exact(x, y)) ** 2))

    d = data
    ev = sum(gap_sq(sp_.vx, lambda x, y, k=k: d.velocity(x, y, 0.0)[k]
                    + sigma * d.velocity_rate(x, y, 0.0)[k],
                    lambda x, y, k=k: d.velocity(x, y, sigma)[k]) for k in (0, 1))
    eh = gap_sq(sp_.head, lambda x, y: d.head(x, y, 0.0) + sigma * d.head_rate(x, y, 0.0),
                lambda x, y: d.head(x, y, sigma))
    return float(np.sqrt(prm.eta * ev + prm.rho_g * prm.S0 * eh))
