"""Local cost oracles and the geometry of composite problems ``f(x) = g(Hx)``.

All problems follow the averaged convention ``f = (1/n) sum_i f_i``. For the
least-squares family ``f_i(x) = ||h_i^T x - y_i||^2`` this means
``f(x) = ||H x / sqrt(n) - y / sqrt(n)||^2``, so the composite structure is
stored for the scaled pair ``(H/sqrt(n), y/sqrt(n))`` with ``g(z) = ||z - y||^2``
and ``alpha = L_g = 2``. Every theory constant is computed for that scaling.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .rng import stream

RANK_RTOL = 1e-10


class Problem:
    """Base class for ``n`` local costs on ``R^p``.

    Subclasses implement the vectorised oracles :meth:`values` and
    :meth:`grads`, which take a stacked state of shape ``(n, p)``.
    """

    kind = "custom"
    n: int
    p: int
    L_local: np.ndarray
    f_star: float
    x_star: np.ndarray
    structure: "CompositeStructure | None" = None

    @property
    def L(self) -> float:
        return float(np.max(self.L_local))

    def values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grads(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def local_value(self, i: int, x) -> float:
        X = np.zeros((self.n, self.p))
        X[i] = x
        return float(self.values(X)[i])

    def local_grad(self, i: int, x) -> np.ndarray:
        X = np.zeros((self.n, self.p))
        X[i] = x
        return self.grads(X)[i]

    def value(self, x) -> float:
        """Aggregate ``f(x) = (1/n) sum_i f_i(x)``."""
        X = np.broadcast_to(np.asarray(x, dtype=float), (self.n, self.p))
        return float(np.mean(self.values(X)))

    def aggregate_values(self, X) -> np.ndarray:
        """``f(x_i)`` for every row ``x_i`` of ``X``."""
        return np.array([self.value(xi) for xi in np.asarray(X)])

    def grad(self, x) -> np.ndarray:
        X = np.broadcast_to(np.asarray(x, dtype=float), (self.n, self.p))
        return self.grads(X).mean(axis=0)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class CompositeStructure:
    """Geometry of ``f = g(Hx)`` with strongly convex, smooth ``g``.

    ``c_H`` is the Hoffman constant (squared smallest nonzero singular value),
    ``C_H`` is ``1/||H||^2`` (or ``1/||H||`` under the ``"linear"``
    convention), ``x_hat`` the minimum-norm minimiser and ``kernel_basis`` an
    orthonormal basis of ``ker(H)`` stored column-wise.
    """

    H: np.ndarray
    y: np.ndarray
    alpha: float
    L_g: float
    c_H: float
    C_H: float
    H_norm: float
    rank: int
    x_hat: np.ndarray
    kernel_basis: np.ndarray
    D: float = float("nan")
    ch_convention: str = "squared"

    @property
    def C2(self) -> float:
        """Contraction constant: ``||x - [x] - mu grad f(x)||^2 <= (1 - C2 mu) ||x - [x]||^2``."""
        return 2.0 * self.L_g * self.alpha * self.c_H / (self.L_g + self.alpha)

    @property
    def mu_cap(self) -> float:
        """Largest step for which the contraction above holds: ``2 C_H / (L_g + alpha)``."""
        return 2.0 * self.C_H / (self.L_g + self.alpha)

    @property
    def rank_deficient(self) -> bool:
        return self.kernel_basis.shape[1] > 0

    def project(self, z) -> np.ndarray:
        return project_to_optimal(self, z)


def hoffman_constant(H) -> float:
    """Squared smallest nonzero singular value of ``H``.

    For an affine optimal set ``x_hat + ker(H)`` the residual ``x - [x]`` lies in
    the row space of ``H``, so this is the best constant in
    ``||Hx - H[x]||^2 >= c_H ||x - [x]||^2``.
    """
    s = np.linalg.svd(np.atleast_2d(np.asarray(H, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("H = 0: every point is optimal and the Hoffman bound is vacuous")
    nz = s[s > RANK_RTOL * s[0]]
    return float(nz[-1] ** 2)


def make_structure(H, y, alpha: float = 2.0, L_g: float = 2.0,
                   ch_convention: str = "squared") -> CompositeStructure:
    """Structure for ``g(z) = ||z - y||^2`` (or any g with the given moduli) at ``H``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    U, s, Vt = np.linalg.svd(H, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("H = 0")
    r = int(np.sum(s > RANK_RTOL * s[0]))
    x_hat = Vt[:r].T @ ((U[:, :r].T @ y) / s[:r])
    kernel = Vt[r:].T.copy()
    H_norm = float(s[0])
    if ch_convention == "squared":
        C_H = 1.0 / H_norm**2
    elif ch_convention == "linear":
        C_H = 1.0 / H_norm
    else:
        raise ValueError(f"unknown C_H convention {ch_convention!r}")
    for a in (H, y, x_hat, kernel):
        a.setflags(write=False)
    return CompositeStructure(H=H, y=y, alpha=float(alpha), L_g=float(L_g),
                              c_H=float(s[r - 1] ** 2), C_H=C_H, H_norm=H_norm, rank=r,
                              x_hat=x_hat, kernel_basis=kernel, ch_convention=ch_convention)


def project_to_optimal(cs: CompositeStructure, z) -> np.ndarray:
    """Orthogonal projection of ``z`` onto ``X* = x_hat + ker(H)``."""
    z = np.asarray(z, dtype=float)
    K = cs.kernel_basis
    d = z - cs.x_hat
    return cs.x_hat + K @ (K.T @ d)


class CompositeQuadratic(Problem):
    """Agents hold ``f_i(x) = ||h_i^T x - y_i||^2`` with ``h_i`` of shape ``(p, s)``."""

    kind = "composite-quadratic"

    def __init__(self, h, y, *, seed: int | None = None, ch_convention: str = "squared"):
        h = np.array(h, dtype=float)
        y = np.array(y, dtype=float)
        if h.ndim != 3:
            raise ValueError("h must have shape (n, p, s)")
        self.n, self.p, self.s = h.shape
        if y.shape != (self.n, self.s):
            raise ValueError(f"y must have shape {(self.n, self.s)}, got {y.shape}")
        h.setflags(write=False)
        y.setflags(write=False)
        self.h, self.y, self.seed = h, y, seed
        self.L_local = np.array([2.0 * np.linalg.norm(hi, 2) ** 2 for hi in h])
        H = np.concatenate([hi.T for hi in h], axis=0)
        self.H_stacked = H
        root_n = np.sqrt(self.n)
        cs = make_structure(H / root_n, y.ravel() / root_n, alpha=2.0, L_g=2.0,
                            ch_convention=ch_convention)
        self.x_star = cs.x_hat
        self.f_star = self.value(cs.x_hat)
        self.structure = replace(cs, D=constant_D(self, cs))

    def values(self, X):
        r = np.einsum("nps,np->ns", self.h, X) - self.y
        return np.sum(r * r, axis=1)

    def grads(self, X):
        r = np.einsum("nps,np->ns", self.h, X) - self.y
        return 2.0 * np.einsum("nps,ns->np", self.h, r)

    def aggregate_values(self, X):
        R = np.asarray(X) @ self.H_stacked.T - self.y.ravel()
        return np.sum(R * R, axis=1) / self.n

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "h": self.h.tolist(),
                "y": self.y.tolist(), "ch_convention": self.structure.ch_convention}


def make_regression(p: int, n: int, s: int, seed: int, *, low: float = 0.0,
                    high: float = 1.0, ch_convention: str = "squared") -> CompositeQuadratic:
    """Random least-squares instance with planted, agent-specific solutions.

    Entries of each ``h_i`` are uniform on ``[low, high]`` (stream ``matrix``);
    each agent gets its own planted ``x~_i`` (stream ``planted``) and
    ``y_i = h_i^T x~_i``.
    """
    if min(p, n, s) < 1:
        raise ValueError("p, n and s must be positive")
    h = stream(seed, "matrix").uniform(low, high, size=(n, p, s))
    planted = stream(seed, "planted").uniform(0.0, 1.0, size=(n, p))
    y = np.einsum("nps,np->ns", h, planted)
    return CompositeQuadratic(h, y, seed=seed, ch_convention=ch_convention)


def constant_D(problem: Problem, cs: CompositeStructure, n_samples: int = 16,
               seed: int = 0) -> float:
    """``sup over X* of (sum_j ||grad f_j(x)||^2)^(1/2)``, evaluated at ``x_hat``.

    Valid when every ``f_j`` is invariant along ``ker(H)``; that is checked on
    random kernel shifts and a violation raises.
    """
    X = np.broadcast_to(cs.x_hat, (problem.n, problem.p))
    G = problem.grads(X)
    K = cs.kernel_basis
    if K.shape[1]:
        rng = np.random.default_rng(seed)
        scale = 1.0 + np.linalg.norm(cs.x_hat)
        for _ in range(n_samples):
            v = K @ rng.standard_normal(K.shape[1]) * scale
            Gv = problem.grads(np.broadcast_to(cs.x_hat + v, X.shape))
            err = np.max(np.abs(Gv - G))
            if err > 1e-8 * (1.0 + np.max(np.abs(G))) * (1.0 + np.linalg.norm(v)):
                raise ValueError(
                    f"local costs are not invariant along ker(H) (gradient shift {err:.3e})"
                )
    return float(np.linalg.norm(G))


def coercivity_check(cs: CompositeStructure, problem: Problem, x) -> float:
    """Slack of the coercivity inequality at ``x`` relative to its projection.

    ``<grad f(x) - grad f([x]), x - [x]> - a ||x - [x]||^2 - b ||grad f(x) - grad f([x])||^2``
    with ``a = L_g alpha c_H / (L_g + alpha)`` and ``b = C_H / (L_g + alpha)``.
    Nonnegative means the inequality holds.
    """
    x = np.asarray(x, dtype=float)
    px = project_to_optimal(cs, x)
    d = x - px
    dg = problem.grad(x) - problem.grad(px)
    denom = cs.L_g + cs.alpha
    return float(d @ dg - cs.L_g * cs.alpha * cs.c_H / denom * (d @ d) - cs.C_H / denom * (dg @ dg))


def quartic_u(x):
    ax = np.abs(x)
    return np.where(ax <= 1.0, 0.25 * x**4, ax - 0.75)


def quartic_du(x):
    return np.where(np.abs(x) <= 1.0, x**3, np.sign(x))


class PiecewiseQuartic(Problem):
    """``f_i(x) = u(x) + b_i x`` on the real line with ``sum b_i = 0``.

    ``u`` is ``x^4/4`` on ``[-1, 1]`` and ``|x| - 3/4`` outside, so ``u'`` is
    3-Lipschitz and the aggregate is ``u`` itself with minimiser 0.
    """

    kind = "piecewise-quartic"

    def __init__(self, b, *, seed: int | None = None):
        b = np.array(b, dtype=float).ravel()
        if b.size < 2:
            raise ValueError("need at least two agents")
        if abs(b.sum()) > 1e-12 * max(1.0, np.abs(b).sum()):
            raise ValueError("offsets must sum to zero")
        b.setflags(write=False)
        self.b, self.seed = b, seed
        self.n, self.p = b.size, 1
        self.L_local = np.full(self.n, 3.0)
        self.f_star = 0.0
        self.x_star = np.zeros(1)

    def values(self, X):
        x = np.asarray(X)[:, 0]
        return quartic_u(x) + self.b * x

    def grads(self, X):
        x = np.asarray(X)[:, 0]
        return (quartic_du(x) + self.b)[:, None]

    def aggregate_values(self, X):
        return quartic_u(np.asarray(X)[:, 0])

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "b": self.b.tolist()}


def make_piecewise_quartic(n: int, seed: int) -> PiecewiseQuartic:
    """Offsets drawn uniform on ``[-1, 1]`` (stream ``matrix``) and recentred."""
    if n < 2:
        raise ValueError("piecewise-quartic problem needs n >= 2")
    b = stream(seed, "matrix").uniform(-1.0, 1.0, size=n)
    b = b - b.mean()
    # recentring leaves rounding residue; push it onto the last offset
    b[-1] = -b[:-1].sum()
    return PiecewiseQuartic(b, seed=seed)


def problem_from_dict(d: dict) -> Problem:
    kind = d.get("kind")
    if kind == CompositeQuadratic.kind:
        return CompositeQuadratic(d["h"], d["y"], seed=d.get("seed"),
                                  ch_convention=d.get("ch_convention", "squared"))
    if kind == PiecewiseQuartic.kind:
        return PiecewiseQuartic(d["b"], seed=d.get("seed"))
    raise ValueError(f"unknown problem kind {kind!r}")


def save_problem(problem: Problem, path) -> None:
    Path(path).write_text(json.dumps(problem.to_dict(), indent=1))


def load_problem(path) -> Problem:
    return problem_from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class StronglyConvexQuadratic:
    """``q(x) = 0.5 (x - c)^T Q (x - c)`` with ``alpha = lambda_min(Q)``, ``L = lambda_max(Q)``."""

    Q: np.ndarray
    c: np.ndarray

    @classmethod
    def random(cls, p: int, rng: np.random.Generator, alpha: float = 0.5,
               L: float = 4.0) -> "StronglyConvexQuadratic":
        """Random rotation of distinct eigenvalues spread over ``[alpha, L]``."""
        Qo, _ = np.linalg.qr(rng.standard_normal((p, p)))
        ev = np.linspace(alpha, L, p)
        return cls((Qo * ev) @ Qo.T, rng.standard_normal(p))

    @property
    def alpha(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[0])

    @property
    def L(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[-1])

    def value(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.c
        return 0.5 * float(d @ self.Q @ d)

    def grad(self, x) -> np.ndarray:
        return self.Q @ (np.asarray(x, dtype=float) - self.c)
