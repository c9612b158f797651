"""Norms, errors against closed-form fields, convergence orders, inf-sup diagnostic."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .fem import DofMap
from .forms import PhysicalParams, Spaces, SystemOperators, cell_data, stiffness_matrix

NORM_KINDS = ("bar0", "nabla", "Bnorm", "L2")
ERROR_QUAD = 4  # one order above the default assembly rule


def _gram(ops: SystemOperators, kind: str):
    if kind == "bar0":
        return ops.M
    if kind == "nabla":
        return ops.G
    if kind == "Bnorm":
        return ops.B
    if kind == "L2":
        return ops.Mp
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def norm(ops: SystemOperators, coeffs, kind: str = "bar0") -> float:
    """``sqrt(x^T G x)`` for the Gram matrix of ``kind``.

    ``bar0``, ``nabla`` and ``Bnorm`` act on the packed ``(v, phi)`` vector,
    ``L2`` on pressure coefficients.
    """
    G = _gram(ops, kind)
    x = np.asarray(coeffs, dtype=float)
    if x.shape != (G.shape[0],):
        raise ValueError(f"{kind} norm expects {G.shape[0]} coefficients, got {x.shape}")
    q = float(x @ (G @ x))
    if q < 0:
        # round-off can push a zero form slightly negative; anything larger is a bug
        if q < -1e-12 * float(np.abs(x) @ (abs(G) @ np.abs(x))):
            raise ValueError(f"negative quadratic form {q:.3e} for the {kind} norm")
        q = 0.0
    return math.sqrt(q)


def fe_values(dm: DofMap, coeffs, npoints: int = ERROR_QUAD) -> np.ndarray:
    """Finite element field at the quadrature points of every cell, shape ``(nc, nq)``."""
    cd = cell_data(dm, npoints)
    c = np.asarray(coeffs, dtype=float)
    local = np.where(dm.cell_dofs >= 0, c[np.maximum(dm.cell_dofs, 0)], 0.0)
    return local @ cd.N.T


def _l2_sq(dm: DofMap, coeffs, exact, npoints: int) -> float:
    cd = cell_data(dm, npoints)
    diff = fe_values(dm, coeffs, npoints) - exact(cd.x[..., 0], cd.x[..., 1])
    return float(np.sum(cd.dx * diff ** 2))


def error_vs_exact(spaces: Spaces, coeffs, exact, t: float, kind: str = "w",
                   params: Optional[PhysicalParams] = None, npoints: int = ERROR_QUAD) -> float:
    """Quadrature norm of ``u_h - u(t)``.

    ``kind`` is ``"w"`` (weighted ``bar0`` norm of velocity and head, needs
    ``params``), ``"v"``, ``"phi"`` or ``"p"`` (plain L2 norms).
    """
    c = np.asarray(coeffs, dtype=float)
    vel = exact.velocity
    if kind == "p":
        if c.shape != (spaces.np_,):
            raise ValueError("pressure coefficients have the wrong length")
        cd = cell_data(spaces.pressure[0], npoints)
        vals = sum(fe_values(q, c[o:o + q.ndofs], npoints)
                   for q, o in zip(spaces.pressure, spaces.pressure_offsets()))
        diff = vals - exact.pressure(cd.x[..., 0], cd.x[..., 1], t)
        return math.sqrt(float(np.sum(cd.dx * diff ** 2)))
    if c.shape != (spaces.nw,):
        raise ValueError("w coefficients have the wrong length")
    ev = (_l2_sq(spaces.vx, c[spaces.sl_vx], lambda x, y: vel(x, y, t)[0], npoints)
          + _l2_sq(spaces.vy, c[spaces.sl_vy], lambda x, y: vel(x, y, t)[1], npoints))
    eh = _l2_sq(spaces.head, c[spaces.sl_head], lambda x, y: exact.head(x, y, t), npoints)
    if kind == "v":
        return math.sqrt(ev)
    if kind == "phi":
        return math.sqrt(eh)
    if kind == "w":
        if params is None:
            raise ValueError("the weighted norm needs physical parameters")
        return math.sqrt(params.eta * ev + params.rho_g * params.S0 * eh)
    raise ValueError(f"unknown error kind {kind!r}")


def exact_norm(spaces: Spaces, exact, t: float, params: PhysicalParams,
               npoints: int = ERROR_QUAD) -> float:
    """``||w(t)||_0bar`` of the closed-form fields by quadrature."""
    zero = np.zeros(spaces.nw)
    return error_vs_exact(spaces, zero, exact, t, "w", params, npoints)


def conv_order(errors: Sequence, params: Optional[Sequence[float]] = None) -> List[float]:
    """Pairwise orders ``log(e_{i-1} / e_i) / log(p_{i-1} / p_i)``.

    ``errors`` holds plain error values or ``(param, error)`` pairs. Without
    parameters the refinement ratio is taken as 2.

    >>> [round(c, 4) for c in conv_order([2.0135e-2, 1.2685e-3])]
    [3.9885]
    """
    errs = list(errors)
    if errs and isinstance(errs[0], (tuple, list)):
        params = [float(p) for p, _ in errs]
        errs = [e for _, e in errs]
    e = np.asarray(errs, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two errors to estimate an order")
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("errors must be positive and finite")
    if params is None:
        ratio = np.full(e.size - 1, 2.0)
    else:
        p = np.asarray(params, dtype=float)
        if p.shape != e.shape or np.any(p <= 0) or np.any(np.diff(p) >= 0):
            raise ValueError("refinement parameters must be positive and strictly decreasing")
        ratio = p[:-1] / p[1:]
    return list(np.log(e[:-1] / e[1:]) / np.log(ratio))


def infsup_estimate(ops: SystemOperators, max_dofs: int = 4000) -> float:
    """Discrete inf-sup constant of the velocity/pressure pair.

    Smallest ``beta`` with ``sup_v b(v, q) / (eta |v|_1) >= beta ||q||_0`` over
    mean-zero discrete pressures, computed from a dense generalized
    eigenproblem on the free velocity dofs.
    """
    sp_ = ops.spaces
    nv = sp_.nv
    free = np.setdiff1d(np.arange(nv), sp_.vx.dirichlet)
    if 2 * free.size + sp_.np_ > max_dofs:
        raise ValueError(f"dense inf-sup estimate capped at {max_dofs} unknowns")
    A = stiffness_matrix(sp_.vx).toarray()[np.ix_(free, free)]
    Gv = sla.block_diag(A, A)
    cols = np.concatenate([free, nv + free])
    Bd = ops.Bdiv[:, cols].toarray() / ops.params.eta
    Mp = ops.Mp.toarray()
    Z = sla.null_space(ops.mean[None, :]) if sp_.zero_mean_pressure else np.eye(sp_.np_)
    BZ = Bd.T @ Z
    S = BZ.T @ sla.cho_solve(sla.cho_factor(Gv), BZ)
    Mz = Z.T @ Mp @ Z
    lam = sla.eigh(0.5 * (S + S.T), 0.5 * (Mz + Mz.T), eigvals_only=True)
    return float(math.sqrt(max(lam[0], 0.0)))


@dataclass
class ConvergenceRecord:
    """One refinement level of a convergence sweep."""

    param: float
    norm_w_exact: float
    norm_w_h: float
    err_w: float
    err_p: float
    cpu_s: float = 0.0


TABLE_HEADER = "param, norm_w_exact, norm_w_h, err_w, CO_w, err_p, CO_p, cpu_s"


def orders(records: Sequence[ConvergenceRecord], field: str) -> List[Optional[float]]:
    if len(records) < 2:
        return [None] * len(records)
    params = [r.param for r in records]
    return [None] + conv_order([getattr(r, field) for r in records], params)


def emit_table(records: Iterable[ConvergenceRecord], timing: bool = True) -> str:
    """CSV text of a convergence sweep; CO columns are blank on the first row."""
    recs = list(records)
    if not recs:
        raise ValueError("no records to tabulate")
    co_w, co_p = orders(recs, "err_w"), orders(recs, "err_p")
    lines = [TABLE_HEADER]
    for r, cw, cp in zip(recs, co_w, co_p):
        fields = [
            f"{r.param:.6g}", f"{r.norm_w_exact:.6e}", f"{r.norm_w_h:.6e}",
            f"{r.err_w:.6e}", "" if cw is None else f"{cw:.4f}",
            f"{r.err_p:.6e}", "" if cp is None else f"{cp:.4f}",
            f"{r.cpu_s:.3f}" if timing else "",
        ]
        lines.append(", ".join(fields))
    return "\n".join(lines) + "\n"
