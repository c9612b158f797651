"""Closed-form manufactured solution, derived forcing and interface defects.

The reference solution on ``Omega_f = (0,1)x(1,2)``, ``Omega_p = (0,1)^2``::

    v1  = (x^2 (y-1)^2 + y) cos t
    v2  = (2/3 x (1-y)^3 + 2 - pi sin(pi x)) cos t
    p   = (2 - pi sin(pi x)) sin(pi y / 2) cos t
    phi = (2 - pi sin(pi x)) (1 - y - cos(pi y)) cos t

These fields do not satisfy the homogeneous equations, so the momentum
forcing ``f`` and the porous source ``g0`` are derived from the PDE residuals.
"""
from __future__ import annotations

import numpy as np

from .forms import HydraulicTensor, PhysicalParams
from .mesh import Geometry

PI = np.pi


def _s(x):
    return 2 - PI * np.sin(PI * x)


def _ds(x):
    return -PI ** 2 * np.cos(PI * x)


def _dds(x):
    return PI ** 3 * np.sin(PI * x)


def _r(y):
    return 1 - y - np.cos(PI * y)


def _dr(y):
    return -1 + PI * np.sin(PI * y)


def _ddr(y):
    return PI ** 2 * np.cos(PI * y)


class ExactSolution:
    """Separable fields ``F(x, y) * T(t)`` with analytic derivatives.

    Subclasses provide the spatial parts; the time factor and its derivatives
    come from :meth:`time_factor`.
    """

    def __init__(self, params: PhysicalParams, tensor: HydraulicTensor,
                 geometry: Geometry | None = None):
        self.params = params
        self.tensor = tensor
        self.geometry = geometry or Geometry()

    # -- time factor -------------------------------------------------------
    def time_factor(self, t, k: int = 0):
        """k-th derivative of the time factor."""
        raise NotImplementedError

    # -- spatial parts (override) ------------------------------------------
    def _v(self, x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return np.stack([z, z])

    def _grad_v(self, x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return np.stack([np.stack([z, z]), np.stack([z, z])])

    def _lap_v(self, x, y):
        return self._v(x, y) * 0

    def _p(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def _grad_p(self, x, y):
        return self._v(x, y) * 0

    def _phi(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def _grad_phi(self, x, y):
        return self._v(x, y) * 0

    def _hess_phi(self, x, y):
        return self._grad_v(x, y) * 0

    # -- fields ------------------------------------------------------------
    def velocity(self, x, y, t, k: int = 0):
        """Velocity (or its k-th time derivative), shape ``(2, ...)``."""
        return self._v(x, y) * self.time_factor(t, k)

    def grad_velocity(self, x, y, t):
        """``G[i, j] = d v_i / d x_j``."""
        return self._grad_v(x, y) * self.time_factor(t)

    def laplacian_velocity(self, x, y, t):
        return self._lap_v(x, y) * self.time_factor(t)

    def pressure(self, x, y, t):
        return self._p(x, y) * self.time_factor(t)

    def grad_pressure(self, x, y, t):
        return self._grad_p(x, y) * self.time_factor(t)

    def head(self, x, y, t, k: int = 0):
        return self._phi(x, y) * self.time_factor(t, k)

    def grad_head(self, x, y, t):
        return self._grad_phi(x, y) * self.time_factor(t)

    def div_K_grad_head(self, x, y, t):
        K = self.tensor.matrix
        H = self._hess_phi(x, y)
        return (K[0, 0] * H[0, 0] + K[0, 1] * H[0, 1] + K[1, 0] * H[1, 0]
                + K[1, 1] * H[1, 1]) * self.time_factor(t)

    def divergence(self, x, y, t):
        G = self.grad_velocity(x, y, t)
        return G[0, 0] + G[1, 1]

    # -- derived data ------------------------------------------------------
    def forcing(self, x, y, t):
        """``f = v_t - nu lap v + grad p``."""
        return (self.velocity(x, y, t, 1) - self.params.nu * self.laplacian_velocity(x, y, t)
                + self.grad_pressure(x, y, t))

    def source(self, x, y, t):
        """``g0 = S0 phi_t - div(K grad phi)``."""
        return self.params.S0 * self.head(x, y, t, 1) - self.div_K_grad_head(x, y, t)

    def velocity_rate(self, x, y, t):
        """``nu lap v - grad p + f``: the velocity time derivative implied by the momentum equation."""
        return (self.params.nu * self.laplacian_velocity(x, y, t) - self.grad_pressure(x, y, t)
                + self.forcing(x, y, t))

    def head_rate(self, x, y, t):
        """``(div(K grad phi) + g0) / S0``."""
        return (self.div_K_grad_head(x, y, t) + self.source(x, y, t)) / self.params.S0

    def interface_defects(self, x, y, t):
        """Pointwise defects of the three interface conditions.

        Returns ``(d_force, d_bjs, d_mass)`` with

        * ``d_force = p - nu n_f^T (grad v) n_f - rho g phi``
        * ``d_bjs = nu tau^T (grad v) n_f + alpha / sqrt(tau^T K tau) v.tau``
        * ``d_mass = v.n_f - (K grad phi).n_p / eta``
        """
        prm = self.params
        n_f = np.asarray(self.geometry.normal_fluid)
        n_p = np.asarray(self.geometry.normal_porous)
        tau = np.asarray(self.geometry.tangent)
        v = self.velocity(x, y, t)
        G = self.grad_velocity(x, y, t)
        dvdn = np.einsum("ij...,j->i...", G, n_f)
        Kgrad = np.einsum("ij,j...->i...", self.tensor.matrix, self.grad_head(x, y, t))
        d_force = (self.pressure(x, y, t) - prm.nu * np.einsum("i...,i->...", dvdn, n_f)
                   - prm.rho_g * self.head(x, y, t))
        slip = prm.alpha / np.sqrt(self.tensor.along(tau))
        d_bjs = (prm.nu * np.einsum("i...,i->...", dvdn, tau)
                 + slip * np.einsum("i...,i->...", v, tau))
        d_mass = np.einsum("i...,i->...", v, n_f) - np.einsum("i...,i->...", Kgrad, n_p) / prm.eta
        return d_force, d_bjs, d_mass

    def eval_exact(self, field: str, point, t):
        x, y = float(point[0]), float(point[1])
        g = self.geometry
        fx0, fx1, fy0, fy1 = g.fluid_rect
        px0, px1, py0, py1 = g.porous_rect
        in_fluid = fx0 <= x <= fx1 and fy0 <= y <= fy1
        in_porous = px0 <= x <= px1 and py0 <= y <= py1
        if field == "v":
            if not in_fluid:
                raise ValueError(f"velocity requested outside the fluid region at {point}")
            return self.velocity(x, y, t)
        if field == "p":
            if not in_fluid:
                raise ValueError(f"pressure requested outside the fluid region at {point}")
            return float(self.pressure(x, y, t))
        if field == "phi":
            if not in_porous:
                raise ValueError(f"head requested outside the porous region at {point}")
            return float(self.head(x, y, t))
        raise ValueError(f"unknown field {field!r}")


class ManufacturedSolution(ExactSolution):
    """The reference cosine-in-time solution."""

    def time_factor(self, t, k: int = 0):
        return np.cos(t + k * PI / 2)

    def _v(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([x ** 2 * (y - 1) ** 2 + y, 2 / 3 * x * (1 - y) ** 3 + _s(x)])

    def _grad_v(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([
            np.stack([2 * x * (y - 1) ** 2, 2 * x ** 2 * (y - 1) + 1]),
            np.stack([2 / 3 * (1 - y) ** 3 + _ds(x), -2 * x * (1 - y) ** 2]),
        ])

    def _lap_v(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([2 * (y - 1) ** 2 + 2 * x ** 2, _dds(x) + 4 * x * (1 - y)])

    def _p(self, x, y):
        return _s(x) * np.sin(PI * y / 2)

    def _grad_p(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([_ds(x) * np.sin(PI * y / 2), _s(x) * PI / 2 * np.cos(PI * y / 2)])

    def _phi(self, x, y):
        return _s(x) * _r(y)

    def _grad_phi(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([_ds(x) * _r(y), _s(x) * _dr(y)])

    def _hess_phi(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        xy = _ds(x) * _dr(y)
        return np.stack([np.stack([_dds(x) * _r(y), xy]), np.stack([xy, _s(x) * _ddr(y)])])


class ZeroSolution(ExactSolution):
    """Identically zero data: homogeneous boundary values, no forcing."""

    def time_factor(self, t, k: int = 0):
        return 0.0


def eval_exact(solution: ExactSolution, field: str, point, t):
    return solution.eval_exact(field, point, t)


def eval_forcing(solution: ExactSolution, point, t):
    x, y = point
    return solution.forcing(x, y, t), float(solution.source(x, y, t))


def interface_residuals(solution: ExactSolution, t: float, panels: int = 16):
    """L2(I) norms of the three interface-condition defects at time ``t``."""
    g = solution.geometry
    x0, x1 = g.fluid_rect[0], g.fluid_rect[1]
    s, w = np.polynomial.legendre.leggauss(6)
    edges = np.linspace(x0, x1, panels + 1)
    half = np.diff(edges) / 2
    xs = ((edges[:-1] + edges[1:]) / 2)[:, None] + half[:, None] * s[None, :]
    ws = half[:, None] * w[None, :]
    d = solution.interface_defects(xs, np.full_like(xs, g.interface_y), t)
    return tuple(float(np.sqrt(np.sum(ws * np.asarray(di) ** 2))) for di in d)


class PolynomialSolution(ExactSolution):
    """Fields inside the discrete spaces with a linear time factor ``1 + t``.

    ``v = (x^2 + y, x - 2 x y)`` is divergence free, ``p = x - 1/2`` has zero
    mean over the default fluid block, ``phi = x^2 - x y + y^2``. The scheme
    must reproduce these to solver precision.
    """

    def time_factor(self, t, k: int = 0):
        if k == 0:
            return 1.0 + np.asarray(t, dtype=float)
        return 1.0 if k == 1 else 0.0

    def _v(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([x ** 2 + y, x - 2 * x * y])

    def _grad_v(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        one = np.ones_like(x)
        return np.stack([np.stack([2 * x, one]), np.stack([1 - 2 * y, -2 * x])])

    def _lap_v(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([2 * np.ones_like(x), np.zeros_like(x)])

    def _p(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return x - 0.5

    def _grad_p(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([np.ones_like(x), np.zeros_like(x)])

    def _phi(self, x, y):
        return x ** 2 - x * y + y ** 2

    def _grad_phi(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([2 * x - y, 2 * y - x])

    def _hess_phi(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        o = np.ones_like(x)
        return np.stack([np.stack([2 * o, -o]), np.stack([-o, 2 * o])])
