import numpy as np
import pytest
import scipy.sparse as sp
import sympy as sy

from stokesdarcy.checks import brute_force_operators
from stokesdarcy.fem import interpolate
from stokesdarcy.forms import (
    HydraulicTensor,
    PhysicalParams,
    apply_dirichlet,
    assemble_interface_load,
    assemble_load,
    assemble_operators,
    bjs_weight,
    build_spaces,
    dirichlet_matrix,
    dump_coo,
    mass_matrix,
)
from stokesdarcy.mesh import Geometry, build_structured


def free_random(spaces, rng):
    z = rng.normal(size=spaces.nw)
    z[spaces.w_dirichlet] = 0.0
    return z


def test_q1_cell_mass_matches_symbolic():
    xs, ys = sy.symbols("x y")
    basis = [(1 - xs) * (1 - ys), xs * (1 - ys), xs * ys, (1 - xs) * ys]
    exact = np.array([[float(sy.integrate(a * b, (xs, 0, 1), (ys, 0, 1))) for b in basis] for a in basis])
    assert np.allclose(exact * 36, [[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]])
    spaces = build_spaces(build_structured(Geometry(), 1), head_element="Q1")
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    order = [int(np.flatnonzero(np.all(spaces.head.coords == c, axis=1))[0]) for c in corners]
    M = mass_matrix(spaces.head).toarray()[np.ix_(order, order)]
    assert np.allclose(M, exact, atol=1e-15)


def test_q1_cell_mass_scales_with_side():
    spaces = build_spaces(build_structured(Geometry(), 2), head_element="Q1")
    M = mass_matrix(spaces.head).toarray()
    corner = int(np.flatnonzero(np.all(spaces.head.coords == [0.0, 0.0], axis=1))[0])
    assert M[corner, corner] == pytest.approx(0.5 ** 2 * 4 / 36, rel=1e-14)
    assert M.sum() == pytest.approx(1.0)


def test_mass_weights(make_ops, params):
    ops = make_ops(2)
    Mh = mass_matrix(ops.spaces.head)
    sl = ops.spaces.sl_head
    assert abs(ops.M[sl, sl] - params.rho_g * params.S0 * Mh).max() < 1e-12
    sv = ops.spaces.sl_vx
    assert abs(ops.M[sv, sv] - params.eta * mass_matrix(ops.spaces.vx)).max() < 1e-18


def test_mass_positive_on_free_dofs(make_ops, rng):
    ops = make_ops(2)
    for _ in range(50):
        z = free_random(ops.spaces, rng)
        assert z @ ops.M @ z > 0


def test_bjs_weight_example():
    p = PhysicalParams(alpha=0.7)
    assert bjs_weight(p, HydraulicTensor(0.01, 1.0), (1.0, 0.0)) == pytest.approx(10 * 0.7)


def test_B_basic_properties(make_ops, rng, params, tensor):
    ops = make_ops(3)
    assert abs(ops.B - ops.B.T).max() < 1e-13 * abs(ops.B).max()
    assert not np.any(ops.B @ np.zeros(ops.spaces.nw))
    kr = tensor.k_min / tensor.k_max
    for _ in range(100):
        z = free_random(ops.spaces, rng)
        assert z @ ops.B @ z >= kr * (z @ ops.G @ z) * (1 - 1e-12)


def test_B_rotated_tensor_symmetric(make_ops):
    ops = make_ops(2, tensor_=HydraulicTensor(1.0, 1e-2, 0.4))
    assert abs(ops.B - ops.B.T).max() < 1e-13 * abs(ops.B).max()


def test_b_constant_velocity_and_linear_field(params):
    spaces = build_spaces(build_structured(Geometry(), 1))
    ops = assemble_operators(spaces, params, HydraulicTensor())
    w = np.zeros(spaces.nw)
    w[spaces.sl_vx] = 1.0
    w[spaces.sl_vy] = -2.0
    assert np.allclose(ops.Bdiv @ w, 0.0, atol=1e-15)
    w[spaces.sl_vx] = interpolate(spaces.vx, lambda x, y: x)
    w[spaces.sl_vy] = 0.0
    q = np.ones(spaces.np_)
    assert q @ ops.Bdiv @ w == pytest.approx(-params.eta * 1.0, rel=1e-13)
    doubled = assemble_operators(spaces, PhysicalParams(eta=2 * params.eta), HydraulicTensor())
    assert q @ doubled.Bdiv @ w == pytest.approx(2 * (q @ ops.Bdiv @ w), rel=1e-13)


def test_bI_skew_and_support(make_ops, rng):
    ops = make_ops(3)
    assert (ops.CI + ops.CI.T).count_nonzero() == 0
    for _ in range(100):
        z = rng.normal(size=ops.spaces.nw)
        assert abs(z @ ops.CI @ z) <= 1e-12 * np.abs(z) @ abs(ops.CI) @ np.abs(z)
    sp_ = ops.spaces
    y = np.concatenate([sp_.vx.coords[:, 1], sp_.vy.coords[:, 1], sp_.head.coords[:, 1]])
    off = ~np.isclose(y, 1.0)
    C = ops.CI.tocoo()
    C = sp.coo_matrix((C.data[C.data != 0], (C.row[C.data != 0], C.col[C.data != 0])))
    assert not np.any(off[C.row]) and not np.any(off[C.col])


def test_bI_single_edge_value(params):
    spaces = build_spaces(build_structured(Geometry(), 1))
    ops = assemble_operators(spaces, params, HydraulicTensor())
    u2 = 0.7
    z = np.zeros(spaces.nw)
    z[spaces.sl_vy] = u2
    w = np.zeros(spaces.nw)
    w[spaces.sl_head] = 1.0
    expect = params.eta * params.rho_g * 1.0 * (-u2)
    assert z @ ops.CI @ w == pytest.approx(expect, rel=1e-13)
    assert w @ ops.CI @ z == pytest.approx(-expect, rel=1e-13)


def test_load_examples(params):
    spaces = build_spaces(build_structured(Geometry(), 1), head_element="Q1")
    zero = assemble_load(spaces, params, lambda x, y, t: np.zeros((2,) + np.shape(x)),
                         lambda x, y, t: 0.0 * x, 0.0)
    assert not np.any(zero)
    F = assemble_load(spaces, params, lambda x, y, t: np.zeros((2,) + np.shape(x)),
                      lambda x, y, t: 1.0 + 0 * x, 0.0)
    assert np.allclose(F[spaces.sl_head], params.rho_g / 4)


def test_load_linear(make_ops, params, rng):
    spaces = make_ops(2).spaces

    def f(x, y, t):
        return np.stack([np.sin(x + t), y * x])

    def g(x, y, t):
        return np.cos(y) + t

    a, b = rng.normal(size=2)
    F1 = assemble_load(spaces, params, f, g, 0.2)
    F2 = assemble_load(spaces, params, lambda x, y, t: a * f(x, y, t), lambda x, y, t: a * g(x, y, t), 0.2)
    assert np.allclose(F2, a * F1, rtol=1e-13, atol=1e-15)
    Fs = assemble_load(spaces, params, lambda x, y, t: f(x, y, t) + b * f(x, y, t),
                       lambda x, y, t: (1 + b) * g(x, y, t), 0.2)
    assert np.allclose(Fs, (1 + b) * F1, rtol=1e-12, atol=1e-14)


def test_interface_load_zero_for_consistent_data(make_ops):
    spaces = make_ops(2).spaces
    p = PhysicalParams()
    F = assemble_interface_load(spaces, p, lambda x, y: (0 * x, 0 * x, 0 * x))
    assert not np.any(F)


def test_dirichlet_homogeneous_and_full(make_ops, rng):
    ops = make_ops(2)
    A = ops.M + ops.B
    D = ops.spaces.w_dirichlet
    Ac, rhs = apply_dirichlet(A, np.zeros(A.shape[0]), D, 0.0)
    assert not np.any(rhs)
    assert abs(Ac - Ac.T).max() < 1e-13 * abs(A).max()
    vals = rng.normal(size=D.size)
    x = sp.linalg.spsolve(apply_dirichlet(A, rng.normal(size=A.shape[0]), D, vals)[0].tocsc(),
                          apply_dirichlet(A, rng.normal(size=A.shape[0]), D, vals)[1])
    assert np.allclose(x[D], vals)
    everything = np.arange(A.shape[0])
    g = rng.normal(size=A.shape[0])
    A2, r2 = apply_dirichlet(A, np.ones(A.shape[0]), everything, g)
    assert abs(A2 - sp.identity(A.shape[0])).max() == 0 and np.array_equal(r2, g)


def test_dirichlet_matrix_independent_of_values(make_ops):
    ops = make_ops(2)
    D = ops.spaces.w_dirichlet
    A1 = apply_dirichlet(ops.B, np.zeros(ops.spaces.nw), D, 1.0)[0]
    assert abs(A1 - dirichlet_matrix(ops.B, D)).max() == 0


def test_dirichlet_rejects_non_finite(make_ops):
    ops = make_ops(1)
    with pytest.raises(ValueError):
        apply_dirichlet(ops.B, np.zeros(ops.spaces.nw), ops.spaces.w_dirichlet, np.nan)


def test_dirichlet_value_of_exact_velocity(params, tensor):
    from stokesdarcy.mms import ManufacturedSolution
    spaces = build_spaces(build_structured(Geometry(), 1))
    ex = ManufacturedSolution(params, tensor)
    vx = interpolate(spaces.vx, lambda x, y: ex.velocity(x, y, 0.0)[0])
    k = int(np.flatnonzero(np.all(np.isclose(spaces.vx.coords, [0.0, 2.0]), axis=1))[0])
    assert k in spaces.vx.dirichlet and vx[k] == pytest.approx(2.0)


@pytest.mark.parametrize("pressure", ["q1", "q1q0"])
def test_assembly_matches_brute_force(pressure, params, tensor):
    geoms = [Geometry(), Geometry((0, 2, 1, 2), (0, 2, 0, 1), 1.0)]
    for geom, n in zip(geoms, (2, 1)):
        ops = assemble_operators(build_spaces(build_structured(geom, n), pressure), params,
                                 HydraulicTensor(1.0, 1e-2, 0.3))
        ref = brute_force_operators(ops)
        for name in ("M", "B", "Bdiv", "CI", "G"):
            A = getattr(ops, name).toarray()
            assert np.allclose(A, ref[name], rtol=0, atol=1e-11 * max(1.0, np.abs(A).max())), name


def test_dump_coo_sorted():
    A = sp.coo_matrix(([3.0, 1.0, 2.0], ([1, 0, 0], [0, 1, 0])), shape=(2, 2))
    assert dump_coo(A) == "0 0 2.0\n0 1 1.0\n1 0 3.0\n"


def test_operators_reject_foreign_spaces(params, tensor):
    a = build_spaces(build_structured(Geometry(), 1))
    b = build_spaces(build_structured(Geometry(), 2))
    mixed = type(a)(a.mesh, b.vx, a.vy, a.head, a.pressure)
    with pytest.raises(ValueError):
        assemble_operators(mixed, params, tensor)


@pytest.mark.parametrize("bad", [{"nu": 0.0}, {"eta": -1.0}, {"S0": float("nan")}])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        PhysicalParams(**bad)
    with pytest.raises(ValueError):
        HydraulicTensor(1.0, 0.0)
