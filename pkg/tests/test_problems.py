import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neardgd.problems import (CompositeQuadratic, StronglyConvexQuadratic, coercivity_check,
                              hoffman_constant, load_problem, make_piecewise_quartic,
                              make_regression, make_structure, project_to_optimal,
                              quartic_du, quartic_u, save_problem)


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), i=st.integers(0, 3))
def test_regression_gradients_match_finite_differences(seed, i):
    pb = make_regression(5, 4, 2, seed=seed)
    x = np.random.default_rng(seed).standard_normal(5)
    g = pb.local_grad(i, x)
    np.testing.assert_allclose(g, fd_grad(lambda z: pb.local_value(i, z), x), rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(pb.grad(x), fd_grad(pb.value, x), rtol=1e-5, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-3, 3).filter(lambda v: abs(abs(v) - 1) > 1e-3))
def test_quartic_derivative(x):
    d = (quartic_u(x + 1e-6) - quartic_u(x - 1e-6)) / 2e-6
    assert quartic_du(x) == pytest.approx(d, abs=1e-6)


def test_quartic_is_C1_at_the_kinks():
    for s in (-1.0, 1.0):
        assert quartic_u(s + 1e-12) == pytest.approx(quartic_u(s - 1e-12), abs=1e-10)
        assert quartic_du(s) == s


def test_regression_rank_truth():
    # ns = 56 > p = 50: generic full column rank, empty kernel
    full = make_regression(50, 8, 7, seed=0).structure
    assert full.rank == 50 and not full.rank_deficient
    deficient = make_regression(50, 8, 5, seed=0).structure
    assert deficient.rank == 40 and deficient.kernel_basis.shape == (50, 10)


def test_min_norm_solution_and_projection():
    pb = make_regression(8, 3, 2, seed=3)
    cs = pb.structure
    H = pb.H_stacked
    y = pb.y.ravel()
    # oracle: pseudoinverse solution of the normal equations
    np.testing.assert_allclose(cs.x_hat, np.linalg.pinv(H) @ y, atol=1e-10)
    z = np.random.default_rng(0).standard_normal(8)
    pz = project_to_optimal(cs, z)
    np.testing.assert_allclose(project_to_optimal(cs, pz), pz, atol=1e-12)
    np.testing.assert_allclose(pb.grad(pz), 0, atol=1e-9)
    # residual lies in the row space of H
    np.testing.assert_allclose(cs.kernel_basis.T @ (z - pz), 0, atol=1e-12)


def test_D_is_zero_for_interpolating_data():
    # ns < p with planted data: every local cost vanishes on X*
    assert make_regression(10, 2, 3, seed=1).structure.D < 1e-10


def test_D_positive_when_agents_disagree():
    pb = make_regression(2, 4, 1, seed=0)
    cs = pb.structure
    assert cs.D > 1e-3
    G = pb.grads(np.broadcast_to(cs.x_hat, (pb.n, pb.p)))
    assert cs.D == pytest.approx(np.linalg.norm(G))


def test_hoffman_constant():
    assert hoffman_constant(np.eye(3)) == pytest.approx(1.0)
    H = np.diag([3.0, 0.5, 0.0])
    assert hoffman_constant(H) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        hoffman_constant(np.zeros((2, 2)))


def test_structure_constants_identity():
    cs = make_structure(np.eye(3), np.ones(3))
    assert cs.C_H == 1.0 and cs.c_H == pytest.approx(1.0)
    assert cs.mu_cap == pytest.approx(0.5)
    assert cs.C2 == pytest.approx(2.0)
    lin = make_structure(2 * np.eye(3), np.ones(3), ch_convention="linear")
    assert lin.C_H == pytest.approx(0.5)
    with pytest.raises(ValueError):
        make_structure(np.eye(2), np.ones(2), ch_convention="cubed")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 500))
def test_composite_coercivity_property(seed):
    pb = make_regression(6, 3, 1, seed=seed)
    x = np.random.default_rng(seed).standard_normal(6) * 4
    assert coercivity_check(pb.structure, pb, x) >= -1e-9


def test_L_dominates_alpha_H_norm():
    pb = make_regression(7, 3, 2, seed=4)
    cs = pb.structure
    assert pb.L >= cs.alpha * cs.H_norm**2 - 1e-12


def test_piecewise_construction():
    pb = make_piecewise_quartic(8, seed=0)
    assert abs(pb.b.sum()) <= 1e-15
    assert np.all(np.abs(pb.b) <= 1.0 + 1e-12)
    assert pb.value(0.0) == 0.0 and pb.f_star == 0.0
    xs = np.linspace(-3, 3, 41)
    agg = [pb.value(x) for x in xs]
    np.testing.assert_allclose(agg, quartic_u(xs), atol=1e-12)
    with pytest.raises(ValueError):
        make_piecewise_quartic(1, seed=0)


def test_piecewise_lipschitz_gradient():
    pb = make_piecewise_quartic(4, seed=2)
    xs = np.linspace(-2.5, 2.5, 401)
    d = np.diff(quartic_du(xs)) / np.diff(xs)
    assert np.max(np.abs(d)) <= pb.L + 1e-9


def test_save_load_roundtrip(tmp_path):
    for pb in (make_regression(4, 3, 2, seed=5), make_piecewise_quartic(5, seed=5)):
        save_problem(pb, tmp_path / "p.json")
        back = load_problem(tmp_path / "p.json")
        X = np.random.default_rng(0).standard_normal((pb.n, pb.p))
        np.testing.assert_array_equal(back.grads(X), pb.grads(X))


def test_bad_shapes():
    with pytest.raises(ValueError):
        CompositeQuadratic(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        CompositeQuadratic(np.ones((2, 3, 1)), np.ones((2, 2)))


def test_strongly_convex_quadratic():
    f = StronglyConvexQuadratic.random(4, np.random.default_rng(0), alpha=0.3, L=5.0)
    assert f.alpha == pytest.approx(0.3) and f.L == pytest.approx(5.0)
    x = np.ones(4)
    np.testing.assert_allclose(f.grad(x), fd_grad(f.value, x), atol=1e-6)
