import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neardgd import net, theory
from neardgd.dynamics import CASES, Schedule, run
from neardgd.problems import StronglyConvexQuadratic, make_regression, make_structure


@pytest.fixture(scope="module")
def preset():
    pb = make_regression(50, 8, 5, seed=0)
    cm = net.consensus_matrix(net.build_circulant(8, 3))
    return pb, cm


def inputs(pb, cm, J=1, A0=3.0, B0=2.0, scale=0.9):
    mu = scale * theory.stepsize_caps(pb.structure, pb.L, cm.beta, J).composite
    return theory.bound_inputs(pb.structure, pb.L, cm.beta, mu, J, A0, B0)


def test_caps_examples():
    cs = make_structure(np.eye(3), np.zeros(3))
    caps = theory.stepsize_caps(cs, 2.0, 0.0, 1)
    assert caps.consensus == math.inf and caps.composite == pytest.approx(0.5)
    assert (caps.convex_bounded, caps.convex_ergodic) == (1.0, 0.5)
    assert math.isnan(theory.stepsize_caps(cs, 2.0, 1.0, 1).consensus)
    assert not theory.stepsize_caps(cs, 2.0, 1.0, 1).admissible(1e-9)["composite_bounds"]
    with pytest.raises(ValueError):
        theory.stepsize_caps(cs, 2.0, 0.5, 0)


@pytest.mark.parametrize("J", [1, 2, 3])
def test_cap_below_direct_admissibility_condition(preset, J):
    pb, cm = preset
    cs = pb.structure
    mu = theory.stepsize_caps(cs, pb.L, cm.beta, J).composite
    gamma = (1 - math.sqrt(1 - cs.C2 * mu)) / (mu * pb.L)
    bJ = cm.beta**J
    assert mu <= gamma * (1 - bJ) / ((1 + gamma) * pb.L * bJ)
    inp = theory.bound_inputs(cs, pb.L, cm.beta, mu, J, 1.0, 1.0)
    assert inp.admissible and inp.R_denominator > 0
    # gamma = C2 / (L (1 + q))
    assert inp.gamma == pytest.approx(cs.C2 / (pb.L * (1 + inp.q)), rel=1e-9)


def test_inadmissible_raises(preset):
    pb, cm = preset
    inp = inputs(pb, cm, scale=2.0)
    assert not inp.admissible
    with pytest.raises(theory.InadmissibleStep):
        theory.bound_fixed_schedule(inp, 5)
    with pytest.raises(theory.InadmissibleStep):
        theory.bound_nondecreasing_schedule(inp, CASES[1], 5)


def test_fixed_bound_zero_start():
    cs = replace(make_structure(np.eye(2), np.zeros(2)), D=0.0)
    inp = theory.bound_inputs(cs, 2.0, 0.3, 0.01, 1, 0.0, 0.0)
    assert inp.D == 0 and inp.R == 0
    assert theory.bound_fixed_schedule(inp, 7) == (0.0, 0.0)


def test_fixed_bound_limit_is_floor(preset):
    pb, cm = preset
    inp = inputs(pb, cm)
    A_far, B_far = theory.bound_fixed_schedule(inp, 1e9)
    b = inp.bJ
    drive = inp.mu * (2 * inp.L * inp.R + inp.D)
    floor = inp.mu * inp.L * b / (1 - b) * (drive / (1 - inp.q) + inp.B0)
    assert A_far == pytest.approx(floor, rel=1e-9)
    assert B_far == pytest.approx(b * drive / (1 - b), rel=1e-9)


def test_fixed_bound_dominates_scalar_recursion(preset):
    # simulate the worst case of the two scalar recursions behind the bound
    pb, cm = preset
    inp = inputs(pb, cm, J=2)
    b, q, mL = inp.bJ, inp.q, inp.mu * inp.L
    drive = inp.mu * (2 * inp.L * inp.R + inp.D)
    A, B = inp.A0, inp.B0
    for k in range(1, 51):
        A, B = q * A + mL * B, b * (B + drive)
        bA, bB = theory.bound_fixed_schedule(inp, k)
        assert A <= bA * (1 + 1e-12) and B <= bB * (1 + 1e-12)
    exact_B = b**50 * inp.B0 + drive * b * (1 - b**50) / (1 - b)
    assert B == pytest.approx(exact_B, rel=1e-12)


def test_nondecreasing_bound_above_fixed_for_constant_schedule(preset):
    pb, cm = preset
    for J in (1, 2, 3):
        inp = inputs(pb, cm, J=J, B0=0.0)
        ks = np.arange(2, 400)
        A24, B24 = theory.bound_fixed_schedule(inp, ks)
        A40, B40 = theory.bound_nondecreasing_schedule(inp, Schedule("constant", J), ks)
        assert np.all(A40 >= A24 * (1 - 1e-12))
        assert np.all(B40 >= B24 * (1 - 1e-12))


def test_nondecreasing_bound_beta_zero():
    cs = replace(make_structure(np.eye(2), np.zeros(2)), D=0.5)
    inp = theory.bound_inputs(cs, 2.0, 0.0, 0.1, 1, 1.5, 0.7)
    for k in (1, 2, 9):
        A, B = theory.bound_nondecreasing_schedule(inp, CASES[5], k)
        assert A == pytest.approx(inp.q ** (k - 1) * (1.5 + 0.2 * 0.7))
        assert B == 0.0


def test_nondecreasing_bound_direct_summation(preset):
    pb, cm = preset
    inp = inputs(pb, cm)
    s = CASES[5]
    q, beta, J, mL = inp.q, inp.beta, inp.J, inp.mu * inp.L
    c = inp.mu * (2 * inp.L * inp.R + inp.D) / (1 - beta**J)
    for k in (1, 2, 3, 10, 31):
        m = k - 1
        h = m // 2
        head = sum(beta ** s(l) for l in range(h))
        headB = sum(beta ** ((l + 1) * J) for l in range(h))
        A = (q**m * (inp.A0 + mL * inp.B0)
             + mL / (1 - q) * (c * beta ** (h + 1) + inp.B0 * beta ** ((h + 1) * J))
             + mL * q**h * (c * head + inp.B0 * headB))
        B = beta ** (k * J) * inp.B0 + c * beta ** (m + 1)
        got = theory.bound_nondecreasing_schedule(inp, s, k)
        assert got[0] == pytest.approx(A, rel=1e-12) and got[1] == pytest.approx(B, rel=1e-12)
    full = theory.bound_nondecreasing_schedule(inp, s, 10)
    printed = theory.bound_nondecreasing_schedule(inp, s, 10, as_printed=True)
    assert printed[0] < full[0] and printed[1] < full[1]


def test_nondecreasing_bound_validation(preset):
    pb, cm = preset
    inp = inputs(pb, cm)
    with pytest.raises(ValueError):
        theory.bound_nondecreasing_schedule(inp, CASES[1], 0)
    with pytest.raises(ValueError):
        theory.bound_nondecreasing_schedule(inp, Schedule("constant", 2), 4)


def test_envelope_terms():
    first, _ = theory.envelope_terms(Schedule("constant", 2), 0.5, 0.1, 0.1, [5, 10, 40])
    np.testing.assert_allclose(first, 0.25)
    T = np.array([3, 4, 10, 11])
    first, second = theory.envelope_terms(CASES[5], 0.5, 0.1, 0.1, T)
    np.testing.assert_allclose(first, 0.5 ** (np.ceil(T / 2) + 1))
    np.testing.assert_allclose(second, 0.99 ** (T / 2))


def test_envelope_fit_stable_case4(preset):
    pb, cm = preset
    mu = 0.99 * theory.stepsize_caps(pb.structure, pb.L, cm.beta, 1).composite
    tr = run(pb, cm, CASES[4], mu, 801)
    fit = theory.bound_main2(tr, cm.beta, pb.structure.C2, [200, 400, 800])
    assert fit.ratios.max() <= 2 * fit.ratios.min()
    assert fit.C == fit.ratios.max()


def test_summable_heuristic():
    beta = 1 / 7
    assert not theory.summable_heuristic(Schedule("constant", 1), beta, 4000)
    assert theory.summable_heuristic(CASES[5], beta, 4000)
    assert theory.summable_heuristic(CASES[3], beta, 4000)
    assert not theory.summable_heuristic(CASES[1], beta, 4000)
    assert theory.summable_heuristic(CASES[1], 0.0, 10)


@settings(max_examples=60)
@given(M=st.lists(st.floats(-5, 5), min_size=4, max_size=4), c=st.floats(0.1, 10))
def test_weighted_norm_matches_scaled_l1_norm(M, c):
    M = np.array(M).reshape(2, 2)
    S = np.diag([1.0, c])
    oracle = np.linalg.norm(S @ M @ np.linalg.inv(S), 1)
    assert theory.weighted_operator_norm(M, c) == pytest.approx(oracle, rel=1e-12, abs=1e-12)


def test_product_bound_examples():
    res = theory.product_bound_check(3.0, np.zeros(10))
    assert res.norm <= 1.0 and res.bound == 1.0 and res.passed
    single = theory.product_bound_check(1.0, [0.5])
    assert single.norm == pytest.approx(1.5) and single.bound == pytest.approx(math.exp(0.5))
    sub = theory.product_bound_check(1.0, [9.0, 0.1, 0.2, 9.0], a=1, b=2)
    assert sub.bound == pytest.approx(math.exp(0.3)) and sub.passed
    with pytest.raises(ValueError):
        theory.product_bound_check(0.0, [0.1])
    with pytest.raises(ValueError):
        theory.product_bound_check(1.0, [-0.1])


@settings(max_examples=50, deadline=None)
@given(r=st.floats(0.01, 5), alphas=st.lists(st.floats(0, 2), min_size=1, max_size=30))
def test_product_bound_property(r, alphas):
    assert theory.product_bound_check(r, alphas).passed


def test_strong_coercivity_equality_and_zero():
    f = StronglyConvexQuadratic(2 * np.eye(3), np.zeros(3))   # ||x||^2
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y = rng.standard_normal((2, 3))
        assert abs(theory.strong_convexity_coercivity_check(f, x, y)) <= 1e-10
    g = StronglyConvexQuadratic.random(4, rng)
    assert theory.strong_convexity_coercivity_check(g, np.ones(4), np.ones(4)) == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(0.05, 1), L=st.floats(1.5, 20))
def test_strong_coercivity_property(seed, a, L):
    rng = np.random.default_rng(seed)
    f = StronglyConvexQuadratic.random(5, rng, alpha=a, L=L)
    x, y = rng.standard_normal((2, 5)) * 5
    assert theory.strong_convexity_coercivity_check(f, x, y) >= -1e-9


@given(a=st.floats(0.01, 0.99), c=st.floats(0, 10), v0=st.floats(0, 10))
def test_scalar_recursion_bound_matches_worst_case(a, c, v0):
    v = v0
    for k in range(1, 40):
        v = a * v + c
        assert v <= theory.scalar_recursion_bound(a, c, v0, k) * (1 + 1e-12) + 1e-12
    with pytest.raises(ValueError):
        theory.scalar_recursion_bound(1.0, c, v0, 1)


def test_decay_rate_recovers_geometric_factor():
    A = 3.0 * 0.9 ** np.arange(300) + 0.0
    assert theory.decay_rate(A) == pytest.approx(0.9, rel=1e-9)
    with pytest.raises(ValueError):
        theory.decay_rate(np.array([1.0, 0.0]))
