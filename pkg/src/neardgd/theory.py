"""Closed-form convergence bounds for composite problems and numerical checks of the supporting inequalities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Schedule, Trajectory
from .problems import CompositeStructure

SQRT2 = math.sqrt(2.0)


class InadmissibleStep(ValueError):
    pass


@dataclass(frozen=True)
class StepsizeCaps:
    coercive: float       # 2 C_H / (L_g + alpha)
    consensus: float      # C2/(C2 + L(1+sqrt2)) * (1 - b)/(L b), b = beta^J
    convex_bounded: float  # 2 / L
    convex_ergodic: float  # 1 / L

    @property
    def composite(self) -> float:
        if math.isnan(self.consensus):
            return math.nan
        return min(self.coercive, self.consensus)

    def admissible(self, mu: float) -> dict[str, bool]:
        return {
            "composite_rate": 0 < mu <= self.coercive,
            "composite_bounds": 0 < mu <= self.composite,
            "convex_bounded": 0 < mu <= self.convex_bounded,
            "convex_ergodic": 0 < mu <= self.convex_ergodic,
        }


def stepsize_caps(cs: CompositeStructure, L: float, beta: float, J: int) -> StepsizeCaps:
    """Step-size caps of the composite and convex theorems.

    The consensus cap is ``inf`` when ``beta^J = 0`` and NaN when ``beta^J = 1``
    (undefined; no step is admissible).
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    bJ = beta**J
    C2 = cs.C2
    if bJ == 0.0:
        cap2 = math.inf
    elif bJ >= 1.0:
        cap2 = math.nan
    else:
        cap2 = C2 / (C2 + L * (1.0 + SQRT2)) * (1.0 - bJ) / (L * bJ)
    return StepsizeCaps(cs.mu_cap, cap2, 2.0 / L, 1.0 / L)


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the explicit composite bounds.

    ``R = max(A0, B0/gamma, mu D b / (gamma - (mu L + gamma (1 + mu L)) b))`` with
    ``b = beta^J`` and ``gamma = (1 - q)/(mu L)``, ``q = sqrt(1 - C2 mu)``.
    """

    A0: float
    B0: float
    mu: float
    L: float
    C2: float
    beta: float
    J: int
    D: float
    caps: StepsizeCaps

    @property
    def q(self) -> float:
        return math.sqrt(max(1.0 - self.C2 * self.mu, 0.0))

    @property
    def gamma(self) -> float:
        return (1.0 - self.q) / (self.mu * self.L)

    @property
    def bJ(self) -> float:
        return self.beta**self.J

    @property
    def R_denominator(self) -> float:
        g, m = self.gamma, self.mu * self.L
        return g - (m + g * (1.0 + m)) * self.bJ

    @property
    def admissible(self) -> bool:
        return (self.caps.admissible(self.mu)["composite_bounds"]
                and self.C2 * self.mu <= 1.0 and self.R_denominator > 0)

    @property
    def R(self) -> float:
        if self.R_denominator <= 0:
            return math.inf
        third = self.mu * self.D * self.bJ / self.R_denominator
        return max(self.A0, self.B0 / self.gamma, third)

    def require_admissible(self):
        if not self.admissible:
            raise InadmissibleStep(
                f"mu={self.mu:g} is not admissible (cap {self.caps.composite:g}, "
                f"R denominator {self.R_denominator:g})"
            )


def bound_inputs(cs: CompositeStructure, L: float, beta: float, mu: float, J: int,
                 A0: float, B0: float) -> BoundInputs:
    return BoundInputs(A0=A0, B0=B0, mu=mu, L=L, C2=cs.C2, beta=beta, J=J, D=cs.D,
                       caps=stepsize_caps(cs, L, beta, J))


def bound_fixed_schedule(inp: BoundInputs, k):
    """Bounds on ``(A_k, B_k)`` under a constant schedule ``t = J``.

    ``A_k <= q^{k-1}(A0 + mu L B0) + mu L b/(1-b) * (mu(2LR + D)/(1-q) + B0)``,
    ``B_k <= b^k B0 + mu b (2LR + D)/(1-b)`` with ``b = beta^J``.
    Accepts scalar or array ``k``.
    """
    inp.require_admissible()
    k = np.asarray(k, dtype=float)
    q, b, mL = inp.q, inp.bJ, inp.mu * inp.L
    drive = inp.mu * (2.0 * inp.L * inp.R + inp.D)
    floor_A = mL * b / (1.0 - b) * (drive / (1.0 - q) + inp.B0)
    A = q ** (k - 1.0) * (inp.A0 + mL * inp.B0) + floor_A
    B = b**k * inp.B0 + b * drive / (1.0 - b)
    return A, B


def bound_nondecreasing_schedule(inp: BoundInputs, schedule: Schedule, k, *,
                                 as_printed: bool = False):
    """Bounds on ``(A_k, B_k)``, ``k >= 1``, for a nondecreasing schedule with ``t(0) = J``.

    With ``m = k - 1`` and ``h = floor(m/2)``::

        A_k <= q^m (A0 + mu L B0)
               + mu L/(1-q) [c beta^{t(h)} + B0 beta^{(h+1)J}]
               + mu L q^h [c sum_{l<h} beta^{t(l)} + B0 sum_{l<h} beta^{(l+1)J}]
        B_k <= beta^{kJ} B0 + c beta^{t(m)}

    where ``c = mu (2LR + D)/(1 - beta^J)``. The factor ``1/(1 - beta^J)`` is
    what the induction produces; ``as_printed=True`` drops it and gives the
    smaller closed form as commonly quoted.
    """
    inp.require_admissible()
    if schedule(0) != inp.J:
        raise ValueError(f"schedule starts at t(0)={schedule(0)}, inputs use J={inp.J}")
    ks = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if np.any(ks < 1):
        raise ValueError("k must be at least 1")
    q, beta, J, mL = inp.q, inp.beta, inp.J, inp.mu * inp.L
    c = inp.mu * (2.0 * inp.L * inp.R + inp.D)
    if not as_printed:
        c /= 1.0 - inp.bJ
    m = ks - 1
    h = m // 2
    top = int(m.max()) + 1
    bt = beta ** schedule.values(top).astype(float)
    S_t = np.concatenate([[0.0], np.cumsum(bt)])
    bl = beta ** (J * np.arange(1, top + 1, dtype=float))
    S_J = np.concatenate([[0.0], np.cumsum(bl)])
    A = (q**m * (inp.A0 + mL * inp.B0)
         + mL / (1.0 - q) * (c * bt[h] + inp.B0 * beta ** ((h + 1) * J))
         + mL * q**h * (c * S_t[h] + inp.B0 * S_J[h]))
    B = beta ** (ks * J) * inp.B0 + c * bt[m]
    if np.ndim(k) == 0:
        return float(A[0]), float(B[0])
    return A, B


def summable_heuristic(schedule: Schedule, beta: float, horizon: int) -> bool:
    """Guess whether ``sum beta^{t(k)}`` converges from the decay of dyadic tail blocks.

    Compares the block sums over ``[K/4, K/2)`` and ``[K/2, K)``; a power law
    ``k^{-a}`` gives ratio ``2^{1-a}``, so a ratio below 0.9 indicates ``a > 1``.
    """
    if beta == 0.0:
        return True
    K = max(int(horizon), 16)
    terms = beta ** schedule.values(K).astype(float)
    early = terms[K // 4:K // 2].sum()
    late = terms[K // 2:].sum()
    return early == 0.0 or late / early < 0.9


def envelope_terms(schedule: Schedule, beta: float, C2: float, mu: float, T):
    """Shape of the qualitative rate: ``max_{ceil(T/2)<=j<=T} beta^{t(j)}`` and ``(1 - C2 mu)^{T/2}``."""
    Ts = np.atleast_1d(np.asarray(T, dtype=np.int64))
    top = int(Ts.max()) + 1
    bt = beta ** schedule.values(top).astype(float)
    first = np.array([bt[-(-Ti // 2):Ti + 1].max() for Ti in Ts])
    second = (1.0 - C2 * mu) ** (Ts / 2.0)
    if np.ndim(T) == 0:
        return float(first[0]), float(second[0])
    return first, second


@dataclass
class EnvelopeFit:
    C: float
    summable: bool
    T: np.ndarray
    ratios: np.ndarray


def bound_main2(traj: Trajectory, beta: float, C2: float, T_values=None) -> EnvelopeFit:
    """Fit the smallest ``C`` with ``||x_{T+1} - [xbar_{T+1}]|| <= C (first + second)``.

    The observed distance is ``sqrt(A^2 + B^2)`` since the consensus error is
    orthogonal to the lifted mean. The constant is reported, never asserted.
    """
    K = len(traj) - 1
    if T_values is None:
        T_values = np.arange(1, K)
    T_values = np.asarray(T_values, dtype=np.int64)
    first, second = envelope_terms(traj.schedule, beta, C2, traj.mu, T_values)
    dist = np.hypot(traj.A[T_values + 1], traj.B[T_values + 1])
    ratios = dist / (first + second)
    return EnvelopeFit(float(ratios.max()), summable_heuristic(traj.schedule, beta, K),
                       T_values, ratios)


def weighted_operator_norm(M: np.ndarray, c: float) -> float:
    """Operator norm of a 2x2 matrix for ``||(x, y)||_c = |x| + c|y|``.

    The unit ball is a rhombus with vertices ``(+-1, 0)`` and ``(0, +-1/c)``;
    the norm is the largest image norm over those vertices.
    """
    M = np.asarray(M, dtype=float)
    col1 = abs(M[0, 0]) + c * abs(M[1, 0])
    col2 = (abs(M[0, 1]) + c * abs(M[1, 1])) / c
    return max(col1, col2)


@dataclass
class ProductCheck:
    norm: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.norm <= self.bound * (1.0 + 1e-12)


def product_bound_check(r: float, alphas, a: int = 0, b: int | None = None) -> ProductCheck:
    """``||M_b ... M_a||_c <= exp(c sum_{k=a..b} alpha_k)`` with ``M_k = [[1, r], [a_k, a_k]]``, ``c = max(r, 1)``."""
    if r <= 0:
        raise ValueError("r must be positive")
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas < 0):
        raise ValueError("alpha_k must be nonnegative")
    if b is None:
        b = len(alphas) - 1
    c = max(r, 1.0)
    P = np.eye(2)
    for ak in alphas[a:b + 1]:
        P = np.array([[1.0, r], [ak, ak]]) @ P
    return ProductCheck(weighted_operator_norm(P, c), math.exp(c * alphas[a:b + 1].sum()))


def strong_convexity_coercivity_check(f, x, y) -> float:
    """Slack of ``<g(x)-g(y), x-y> >= La/(L+a)||x-y||^2 + 1/(a+L)||g(x)-g(y)||^2``.

    ``f`` exposes ``grad``, ``alpha`` and ``L``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a, L = f.alpha, f.L
    d = x - y
    dg = f.grad(x) - f.grad(y)
    return float(d @ dg - L * a / (L + a) * (d @ d) - (dg @ dg) / (a + L))


def scalar_recursion_bound(a: float, c: float, v0: float, k):
    """``v_{k+1} <= a v_k + c`` with ``0 < a < 1`` gives ``v_k <= a^k v0 + c/(1-a)``."""
    if not 0 < a < 1:
        raise ValueError("need 0 < a < 1")
    return a ** np.asarray(k, dtype=float) * v0 + c / (1.0 - a)


def decay_rate(A: np.ndarray, start: int = 0, floor_ratio: float = 1e-10) -> float:
    """Per-step factor from a log-linear fit of ``A_k`` over its pre-floor segment.

    The segment starts at ``start`` and stops where ``A_k`` first drops below
    ``floor_ratio * A_start``.
    """
    A = np.asarray(A, dtype=float)
    seg = A[start:]
    below = np.nonzero(seg < floor_ratio * seg[0])[0]
    if below.size:
        seg = seg[:below[0]]
    seg = seg[seg > 0]
    if seg.size < 3:
        raise ValueError("too few points before the floor to fit a rate")
    slope = np.polyfit(np.arange(seg.size, dtype=float), np.log(seg), 1)[0]
    return float(math.exp(slope))
