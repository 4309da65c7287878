"""Seeded battery that checks every supporting inequality numerically."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import net, theory
from .dynamics import Schedule, run
from .problems import (StronglyConvexQuadratic, coercivity_check, make_regression,
                       project_to_optimal)
from .rng import stream


@dataclass
class BatteryRow:
    name: str
    passed: bool
    detail: str


def _row(name, worst, ok, unit="worst slack"):
    return BatteryRow(name, bool(ok), f"{unit} {worst:.3e}")


def check_assumptions(rng) -> BatteryRow:
    failures = []
    mats = [net.consensus_matrix(net.build_circulant(8, r), s)
            for r in (1, 2, 3) for s in ("lazy-metropolis", "uniform-neighbor")]
    mats += [net.consensus_matrix(net.build_random(int(rng.integers(2, 17)), 0.3, rng))
             for _ in range(20)]
    worst = 0.0
    for cm in mats:
        rep = net.validate_assumptions(cm)
        worst = max(worst, rep.beta)
        if not rep.passed:
            failures.append(cm.scheme)
    return BatteryRow("consensus assumptions", not failures, f"max beta {worst:.4f}")


def check_contraction(rng, trials=100) -> BatteryRow:
    worst = -math.inf
    for _ in range(trials):
        n = int(rng.integers(2, 17))
        cm = net.consensus_matrix(net.build_random(n, float(rng.uniform(0.1, 0.8)), rng))
        x = rng.standard_normal((n, int(rng.integers(1, 5))))
        t = int(rng.integers(0, 8))
        xbar = net.block_average(x)
        lhs = np.linalg.norm(net.apply_consensus(cm, x, t) - xbar)
        worst = max(worst, lhs - cm.beta**t * np.linalg.norm(x - xbar))
    return _row("consensus contraction", worst, worst <= 1e-9, "worst excess")


def _instances(seed, count=10):
    dims = [(6, 2, 2), (10, 3, 2), (8, 2, 3), (12, 4, 2), (5, 1, 3)]
    return [make_regression(*dims[i % len(dims)], seed=seed * 1000 + i) for i in range(count)]


def check_smoothness_vs_H(seed) -> BatteryRow:
    worst = math.inf
    for pb in _instances(seed):
        cs = pb.structure
        worst = min(worst, pb.L - cs.alpha * cs.H_norm**2)
    return _row("L >= alpha ||H||^2", worst, worst >= -1e-9)


def check_D(seed, rng) -> BatteryRow:
    worst = 0.0
    for pb in _instances(seed):
        cs = pb.structure
        K = cs.kernel_basis
        for _ in range(50):
            v = K @ rng.standard_normal(K.shape[1]) * 10 if K.shape[1] else 0.0
            G = pb.grads(np.broadcast_to(cs.x_hat + v, (pb.n, pb.p)))
            worst = max(worst, abs(np.linalg.norm(G) - cs.D) / (1 + cs.D))
    return _row("D finite, constant on X*", worst, worst <= 1e-9, "max rel. deviation")


def check_strong_coercivity(rng) -> BatteryRow:
    worst = math.inf
    for _ in range(10):
        f = StronglyConvexQuadratic.random(int(rng.integers(2, 8)), rng,
                                           alpha=float(rng.uniform(0.1, 1)),
                                           L=float(rng.uniform(2, 10)))
        for _ in range(100):
            x, y = rng.standard_normal((2, f.c.size)) * 3
            worst = min(worst, theory.strong_convexity_coercivity_check(f, x, y))
    return _row("strong-convexity coercivity", worst, worst >= -1e-9)


def check_composite_coercivity(seed, rng) -> BatteryRow:
    worst = math.inf
    for pb in _instances(seed):
        for _ in range(100):
            x = rng.standard_normal(pb.p) * 3
            worst = min(worst, coercivity_check(pb.structure, pb, x))
    return _row("composite coercivity", worst, worst >= -1e-9)


def check_hoffman(seed, rng) -> BatteryRow:
    worst = math.inf
    for pb in _instances(seed):
        cs = pb.structure
        for _ in range(100):
            z = rng.standard_normal(pb.p) * 3
            d = z - project_to_optimal(cs, z)
            mid = np.sum((cs.H @ d) ** 2)
            dd = d @ d
            worst = min(worst, mid - cs.c_H * dd, cs.H_norm**2 * dd - mid)
    return _row("Hoffman sandwich", worst, worst >= -1e-9)


def check_product(rng) -> BatteryRow:
    worst = math.inf
    for _ in range(50):
        alphas = rng.uniform(0, 1, 50) / (1 + np.arange(50)) ** 2
        res = theory.product_bound_check(float(rng.uniform(0.1, 3)), alphas)
        worst = min(worst, res.bound - res.norm)
    return _row("weighted product bound", worst, worst >= 0)


def check_scalar_recursion(rng) -> BatteryRow:
    worst = math.inf
    for _ in range(50):
        a, c, v = rng.uniform(0.05, 0.95), rng.uniform(0, 2), rng.uniform(0, 5)
        v0 = v
        for k in range(1, 60):
            v = a * v + c * rng.uniform(0, 1)
            worst = min(worst, theory.scalar_recursion_bound(a, c, v0, k) - v)
    return _row("scalar recursion bound", worst, worst >= -1e-12)


def check_uniform_boundedness(seed) -> BatteryRow:
    """Bounded metrics along a short admissible run on a well-conditioned instance."""
    pb = make_regression(6, 4, 1, seed=seed, low=-1.0, high=1.0)
    cm = net.consensus_matrix(net.build_circulant(4, 1))
    J = 2
    x0 = stream(seed, "init").uniform(0, 1, (pb.n, pb.p))
    cs = pb.structure
    mu = 0.9 * theory.stepsize_caps(cs, pb.L, cm.beta, J).composite
    traj = run(pb, cm, Schedule("constant", J), mu, 300, init=x0)
    inp = theory.bound_inputs(cs, pb.L, cm.beta, mu, J, traj.A0, traj.B0)
    worst = min(np.min(inp.R - traj.A), np.min(inp.gamma * inp.R - traj.B))
    # gamma = C2 / (L (1 + q)) lies in [C2/(2L), C2/L]
    ok = (worst >= -1e-6 and inp.gamma < 1
          and cs.C2 / (2 * pb.L) <= inp.gamma <= cs.C2 / pb.L)
    return _row("uniform boundedness, gamma < 1", worst, ok)


def run_battery(seed: int = 0) -> list[BatteryRow]:
    rng = stream(seed, "battery")
    return [
        check_assumptions(rng),
        check_contraction(rng),
        check_smoothness_vs_H(seed),
        check_D(seed, rng),
        check_strong_coercivity(rng),
        check_composite_coercivity(seed, rng),
        check_hoffman(seed, rng),
        check_product(rng),
        check_scalar_recursion(rng),
        check_uniform_boundedness(seed),
    ]


def format_battery(rows) -> str:
    width = max(len(r.name) for r in rows)
    return "\n".join(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}"
                     for r in rows)
