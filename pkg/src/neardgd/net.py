"""Network topologies, doubly-stochastic consensus matrices and their powers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

STOCHASTIC_TOL = 1e-12

# above this many rounds, apply a cached matrix power instead of looping
_LOOP_LIMIT = 32


@dataclass(frozen=True)
class Topology:
    """Undirected graph on ``n`` agents; ``adjacency`` excludes the diagonal."""

    n: int
    adjacency: np.ndarray
    self_loops: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        loops = np.asarray(self.self_loops, dtype=bool)
        if adj.shape != (self.n, self.n):
            raise ValueError(f"adjacency must be {self.n}x{self.n}, got {adj.shape}")
        if loops.shape != (self.n,):
            raise ValueError("self_loops must have one entry per node")
        if np.any(np.diag(adj)):
            raise ValueError("adjacency must not contain the diagonal; use self_loops")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        adj.setflags(write=False)
        loops.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "self_loops", loops)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        k, _ = connected_components(self.adjacency.astype(np.int8), directed=False)
        return k == 1

    def is_regular(self) -> bool:
        d = self.degrees
        return bool(np.all(d == d[0]))


def build_circulant(n: int, radius: int = 1) -> Topology:
    """Ring circulant: node ``i`` is linked to ``i +- 1, ..., i +- radius`` (mod n)."""
    if n < 1:
        raise ValueError("n must be positive")
    if radius < 1:
        raise ValueError("radius must be positive")
    adj = np.zeros((n, n), dtype=bool)
    if n > 1:
        if 2 * radius >= n:
            raise ValueError(
                f"radius {radius} too large for n={n}: need 2*radius < n"
            )
        for i in range(n):
            for r in range(1, radius + 1):
                adj[i, (i + r) % n] = True
                adj[i, (i - r) % n] = True
    return Topology(n, adj, np.ones(n, dtype=bool), name=f"circulant(r={radius})")


def build_complete(n: int) -> Topology:
    if n < 1:
        raise ValueError("n must be positive")
    adj = ~np.eye(n, dtype=bool)
    return Topology(n, adj, np.ones(n, dtype=bool), name="complete")


def build_random(n: int, edge_prob: float, rng: np.random.Generator) -> Topology:
    """Erdos-Renyi edges united with a path, so the result is always connected."""
    upper = np.triu(rng.random((n, n)) < edge_prob, k=1)
    adj = upper | upper.T | build_path(n).adjacency
    return Topology(n, adj, np.ones(n, dtype=bool), name=f"random(p={edge_prob:g})")


def build_path(n: int) -> Topology:
    if n < 1:
        raise ValueError("n must be positive")
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return Topology(n, adj, np.ones(n, dtype=bool), name="path")


@dataclass(frozen=True)
class ConsensusMatrix:
    """Validated doubly-stochastic mixing matrix with its cached spectral gap."""

    W: np.ndarray
    beta: float
    lambda2: float
    scheme: str = "custom"
    _powers: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_array(cls, W, scheme: str = "custom") -> "ConsensusMatrix":
        W = np.array(W, dtype=float)
        beta, lam2 = spectral_gap(W)
        W.setflags(write=False)
        return cls(W, beta, lam2, scheme)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def power(self, t: int) -> np.ndarray:
        """``W**t`` by repeated squaring, cached per ``t``."""
        if t not in self._powers:
            P = np.linalg.matrix_power(self.W, t)
            P.setflags(write=False)
            self._powers[t] = P
        return self._powers[t]


def consensus_matrix(topo: Topology, scheme: str = "lazy-metropolis") -> ConsensusMatrix:
    """Weights supported on the closed neighbourhoods of ``topo``.

    ``uniform-neighbor`` gives every closed neighbour weight ``1/(deg+1)`` and
    is only doubly stochastic on regular graphs. ``lazy-metropolis`` uses
    ``1/(1 + max(deg_i, deg_j))`` off the diagonal; the diagonal takes the rest.
    """
    if not np.all(topo.self_loops):
        raise ValueError("every node needs a self-loop")
    if not topo.is_connected():
        raise ValueError("topology is not connected")
    n = topo.n
    deg = topo.degrees
    if scheme == "uniform-neighbor":
        if not topo.is_regular():
            raise ValueError("uniform-neighbor weights need a regular graph")
        W = (topo.adjacency | np.eye(n, dtype=bool)) / (deg[0] + 1.0)
    elif scheme == "lazy-metropolis":
        W = np.zeros((n, n))
        ii, jj = np.nonzero(topo.adjacency)
        W[ii, jj] = 1.0 / (1.0 + np.maximum(deg[ii], deg[jj]))
        W[np.arange(n), np.arange(n)] = 1.0 - W.sum(axis=1)
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}")
    return ConsensusMatrix.from_array(W, scheme=scheme)


def _stochastic_residual(W: np.ndarray) -> tuple[float, float]:
    return (
        float(np.max(np.abs(W.sum(axis=1) - 1.0))),
        float(np.max(np.abs(W.sum(axis=0) - 1.0))),
    )


def spectral_gap(W) -> tuple[float, float]:
    """Return ``(beta, lambda2)`` with ``beta = ||W - 11^T/n||_2``.

    ``lambda2`` is the second largest eigenvalue of ``W^T W``; for doubly
    stochastic ``W`` it equals ``beta**2`` up to rounding.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"W must be square, got shape {W.shape}")
    if np.any(W < -STOCHASTIC_TOL):
        raise ValueError("W has negative entries")
    rows, cols = _stochastic_residual(W)
    if max(rows, cols) > STOCHASTIC_TOL:
        raise ValueError(
            f"W is not doubly stochastic (row residual {rows:.2e}, column residual {cols:.2e})"
        )
    n = W.shape[0]
    if n == 1:
        return 0.0, 0.0
    # sqrt of an eigenvalue of W^T W would turn 1e-16 rounding into 1e-8 in beta
    beta = float(np.linalg.norm(W - np.full((n, n), 1.0 / n), 2))
    lam2 = float(np.linalg.eigvalsh(W.T @ W)[-2])
    return beta, lam2


@dataclass
class Check:
    name: str
    passed: bool
    residual: float


@dataclass
class ValidationReport:
    checks: list[Check]
    beta: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def table(self) -> str:
        lines = [f"{c.name:<22} {'PASS' if c.passed else 'FAIL'}  residual={c.residual:.3e}"
                 for c in self.checks]
        lines.append(f"beta = {self.beta:.12f}")
        return "\n".join(lines)


def validate_assumptions(W) -> ValidationReport:
    """Check the standing assumptions on a mixing matrix; never raises."""
    W = np.asarray(W.W if isinstance(W, ConsensusMatrix) else W, dtype=float)
    n = W.shape[0]
    rows, cols = _stochastic_residual(W)
    checks = [Check("doubly_stochastic",
                    max(rows, cols) <= STOCHASTIC_TOL and bool(np.all(W >= 0)),
                    max(rows, cols))]

    ncomp, _ = connected_components((W > 0).astype(np.int8), directed=True,
                                    connection="strong")
    checks.append(Check("strongly_connected", ncomp == 1, float(ncomp - 1)))

    diag_min = float(np.min(np.diag(W)))
    checks.append(Check("self_loops", diag_min > 0, diag_min))

    ev = np.linalg.eigvalsh(W.T @ W)
    top = float(ev[-1])
    second = float(ev[-2]) if n > 1 else 0.0
    simple = abs(top - 1.0) <= 1e-10 and second < 1.0 - 1e-10
    checks.append(Check("top_eigenvalue_simple", simple, abs(top - 1.0)))

    beta = float(np.linalg.norm(W - np.full((n, n), 1.0 / n), 2))
    checks.append(Check("beta_below_one", beta < 1.0 - 1e-12, beta))
    return ValidationReport(checks, beta)


def apply_consensus(W, x: np.ndarray, t: int) -> np.ndarray:
    """Return ``(W^t kron I_p) x`` for a stacked state ``x`` of shape ``(n, p)``.

    The Kronecker product is never formed: rows of ``x`` are agent blocks, so
    one consensus round is ``W @ x``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    cm = W if isinstance(W, ConsensusMatrix) else None
    Wa = cm.W if cm is not None else np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != Wa.shape[0]:
        raise ValueError(f"state of shape {x.shape} does not match W of size {Wa.shape[0]}")
    if t == 0:
        return x.copy()
    if t > _LOOP_LIMIT and cm is not None:
        return cm.power(t) @ x
    out = x
    for _ in range(t):
        out = Wa @ out
    return out


def block_average(x: np.ndarray) -> np.ndarray:
    """Lift of the agent mean: every row replaced by the average row."""
    return np.broadcast_to(x.mean(axis=0), x.shape).copy()
