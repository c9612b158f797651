import numpy as np
import pytest
import sympy as sy

from stokesdarcy.forms import HydraulicTensor, PhysicalParams
from stokesdarcy.mms import (
    ManufacturedSolution,
    PolynomialSolution,
    ZeroSolution,
    eval_exact,
    eval_forcing,
    interface_residuals,
)

X, Y, T = sy.symbols("x y t")


def symbolic_fields():
    s = 2 - sy.pi * sy.sin(sy.pi * X)
    v1 = (X ** 2 * (Y - 1) ** 2 + Y) * sy.cos(T)
    v2 = (sy.Rational(2, 3) * X * (1 - Y) ** 3 + s) * sy.cos(T)
    p = s * sy.sin(sy.pi * Y / 2) * sy.cos(T)
    phi = s * (1 - Y - sy.cos(sy.pi * Y)) * sy.cos(T)
    return v1, v2, p, phi


def symbolic_data(prm, K):
    v1, v2, p, phi = symbolic_fields()
    lap = [sy.diff(v, X, 2) + sy.diff(v, Y, 2) for v in (v1, v2)]
    f1 = sy.diff(v1, T) - prm.nu * lap[0] + sy.diff(p, X)
    f2 = sy.diff(v2, T) - prm.nu * lap[1] + sy.diff(p, Y)
    g = [sy.diff(phi, X), sy.diff(phi, Y)]
    flux = [K[0][0] * g[0] + K[0][1] * g[1], K[1][0] * g[0] + K[1][1] * g[1]]
    g0 = prm.S0 * sy.diff(phi, T) - (sy.diff(flux[0], X) + sy.diff(flux[1], Y))
    return [sy.lambdify((X, Y, T), e, "numpy") for e in (f1, f2, g0)]


@pytest.fixture
def exact(params, tensor):
    return ManufacturedSolution(params, tensor)


def test_point_values(exact):
    assert np.allclose(eval_exact(exact, "v", (0.0, 2.0), 0.0), [2.0, 2.0])
    assert eval_exact(exact, "phi", (0.5, 0.5), 0.0) == pytest.approx((2 - np.pi) * 0.5)
    assert eval_exact(exact, "p", (0.0, 1.0), 0.0) == pytest.approx(2 * np.sin(np.pi / 2))


def test_forcing_example(exact):
    f, _ = eval_forcing(exact, (0.0, 1.0), 0.0)
    assert f[0] == pytest.approx(-np.pi ** 2, rel=1e-14)


@pytest.mark.parametrize("field,point", [("v", (0.5, 0.5)), ("p", (0.5, 0.2)), ("phi", (0.5, 1.5))])
def test_outside_subdomain_raises(exact, field, point):
    with pytest.raises(ValueError):
        eval_exact(exact, field, point, 0.0)


def test_unknown_field(exact):
    with pytest.raises(ValueError):
        eval_exact(exact, "temperature", (0.5, 0.5), 0.0)


@pytest.mark.parametrize("theta", [0.0, 0.37])
def test_forcing_matches_symbolic(params, theta, rng):
    tensor = HydraulicTensor(1.0, 1e-2, theta)
    ex = ManufacturedSolution(params, tensor)
    K = tensor.matrix.tolist()
    f1, f2, g0 = symbolic_data(params, K)
    for t in (np.pi / 2, float(rng.uniform(0, 3))):
        x, y = rng.uniform(0, 1, 20), rng.uniform(1, 2, 20)
        f = ex.forcing(x, y, t)
        assert np.allclose(f[0], f1(x, y, t), rtol=1e-12, atol=1e-12)
        assert np.allclose(f[1], f2(x, y, t), rtol=1e-12, atol=1e-12)
        yp = y - 1
        assert np.allclose(ex.source(x, yp, t), g0(x, yp, t), rtol=1e-12, atol=1e-12)


def test_derivatives_match_finite_differences(exact, rng):
    h = 1e-6
    for _ in range(100):
        x, y, t = rng.uniform(0, 1), rng.uniform(1, 2), rng.uniform(0, 2)
        G = exact.grad_velocity(x, y, t)
        dx = (exact.velocity(x + h, y, t) - exact.velocity(x - h, y, t)) / (2 * h)
        dy = (exact.velocity(x, y + h, t) - exact.velocity(x, y - h, t)) / (2 * h)
        assert np.allclose(G[:, 0], dx, atol=1e-6) and np.allclose(G[:, 1], dy, atol=1e-6)
        gp = exact.grad_pressure(x, y, t)
        assert gp[0] == pytest.approx((exact.pressure(x + h, y, t) - exact.pressure(x - h, y, t)) / (2 * h),
                                      abs=1e-6)
        yp = y - 1
        gh = exact.grad_head(x, yp, t)
        assert gh[1] == pytest.approx((exact.head(x, yp + h, t) - exact.head(x, yp - h, t)) / (2 * h),
                                      abs=1e-6)
        vt = (exact.velocity(x, y, t + h) - exact.velocity(x, y, t - h)) / (2 * h)
        assert np.allclose(exact.velocity(x, y, t, 1), vt, atol=1e-6)


def test_divergence_free(exact, rng):
    x, y = rng.uniform(0, 1, 200), rng.uniform(1, 2, 200)
    assert np.max(np.abs(exact.divergence(x, y, 0.3))) <= 1e-14


def test_interface_defects(params, tensor):
    ex = ManufacturedSolution(params, tensor)
    _, r_bjs, r_mass = interface_residuals(ex, np.pi / 2)
    assert r_bjs < 1e-12
    assert r_mass < 1e-12
    assert interface_residuals(ex, 0.0)[2] < 1e-12
    # the porous flux term scales with 1/eta
    x = np.linspace(0, 1, 7)
    y = np.ones_like(x)
    other = ManufacturedSolution(PhysicalParams(eta=2 * params.eta), tensor)
    vn = -ex.velocity(x, y, 0.4)[1]
    d1, d2 = ex.interface_defects(x, y, 0.4)[2], other.interface_defects(x, y, 0.4)[2]
    assert np.allclose(d2 - vn, (d1 - vn) / 2, atol=1e-13)
    assert np.max(np.abs(d2)) > 0.1


def test_zero_solution(params, tensor):
    z = ZeroSolution(params, tensor)
    x, y = np.linspace(0, 1, 5), np.linspace(1, 2, 5)
    assert not np.any(z.forcing(x, y, 1.0)) and not np.any(z.source(x, y - 1, 1.0))
    assert not any(np.any(d) for d in z.interface_defects(x, np.ones(5), 0.2))


def test_polynomial_solution_consistency(params):
    tensor = HydraulicTensor(1.0, 0.1, 0.5)
    ps = PolynomialSolution(params, tensor)
    x, y = np.linspace(0, 1, 9), np.linspace(1, 2, 9)
    assert np.allclose(ps.divergence(x, y, 0.3), 0.0)
    # f = v_t - nu lap v + grad p for v=(x^2+y, x-2xy)(1+t), p=(x-1/2)(1+t)
    t = 0.3
    f = ps.forcing(x, y, t)
    assert np.allclose(f[0], (x ** 2 + y) - params.nu * 2 * (1 + t) + (1 + t))
    assert np.allclose(f[1], x - 2 * x * y)
    K = tensor.matrix
    div = (2 * K[0, 0] - K[0, 1] - K[1, 0] + 2 * K[1, 1]) * (1 + t)
    yp = y - 1
    assert np.allclose(ps.source(x, yp, t), params.S0 * (x ** 2 - x * yp + yp ** 2) - div)
