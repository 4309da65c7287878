"""The NEAR-DGD+ recursion ``x_{k+1} = (W^{t(k)} kron I)(x_k - mu grad F(x_k))``.

Stacked states are ``(n, p)`` arrays whose rows are the agents' iterates.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .net import ConsensusMatrix, apply_consensus
from .problems import Problem, project_to_optimal
from .rng import stream

DIVERGENCE_LIMIT = 1e12
DRIFT_TOL = 1e-8
MONITOR_SLACK = 1e-8

CSV_COLUMNS = ("k", "t_k", "A_k", "B_k", "regret", "ergodic_gap", "cum_comm",
               "cum_grad", "cum_cost", "bound_eq_5_24", "bound_eq_5_40")


@dataclass(frozen=True)
class Schedule:
    """Consensus rounds per iteration.

    ``constant(J)``: ``J``; ``log-floor(q)``: ``floor(q ln(k+1)) + 1``;
    ``linear-floor(m)``: ``floor(k/m) + 1``; ``identity``: ``k + 1``.
    """

    kind: str
    param: float | None = None

    KINDS = ("constant", "log-floor", "linear-floor", "identity")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "identity":
            if self.param is not None:
                raise ValueError("identity schedule takes no parameter")
        elif self.param is None or self.param <= 0:
            raise ValueError(f"{self.kind} schedule needs a positive parameter")
        elif self.kind in ("constant", "linear-floor") and int(self.param) != self.param:
            raise ValueError(f"{self.kind} parameter must be an integer")

    def __call__(self, k: int) -> int:
        if self.kind == "constant":
            return int(self.param)
        if self.kind == "log-floor":
            return int(math.floor(self.param * math.log(k + 1))) + 1
        if self.kind == "linear-floor":
            return k // int(self.param) + 1
        return k + 1

    def values(self, K: int) -> np.ndarray:
        return np.array([self(k) for k in range(K)], dtype=np.int64)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __str__(self):
        if self.kind == "identity":
            return "identity"
        p = int(self.param) if float(self.param).is_integer() else self.param
        return f"{self.kind}:{p}"

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        """Parse ``"identity"``, ``"constant:2"``, ``"log-floor:0.5"`` or ``"case:3"``."""
        text = text.strip()
        kind, _, arg = text.partition(":")
        if kind == "case":
            return CASES[int(arg)]
        if kind == "identity":
            return cls("identity")
        if not arg:
            raise ValueError(f"schedule {text!r} needs a parameter")
        value = float(arg)
        return cls(kind, int(value) if kind in ("constant", "linear-floor") else value)


CASES = {
    1: Schedule("log-floor", 0.5),
    2: Schedule("log-floor", 1.0),
    3: Schedule("log-floor", 3.0),
    4: Schedule("linear-floor", 100),
    5: Schedule("identity"),
}


@dataclass
class StackedState:
    x: np.ndarray
    k: int = 0
    comm_rounds: int = 0
    grad_rounds: int = 0

    @property
    def mean(self) -> np.ndarray:
        return self.x.mean(axis=0)


class NonFiniteGradient(FloatingPointError):
    def __init__(self, state: StackedState):
        self.state = state
        super().__init__(f"non-finite gradient at iteration {state.k}; iterate:\n{state.x!r}")


class DivergenceError(RuntimeError):
    pass


def _check_dims(state, W, problem):
    n = W.n if isinstance(W, ConsensusMatrix) else np.shape(W)[0]
    if state.x.shape != (problem.n, problem.p) or n != problem.n:
        raise ValueError(
            f"state {state.x.shape}, W of size {n} and problem (n={problem.n}, p={problem.p}) disagree"
        )


def near_dgd_step(state: StackedState, W, schedule, mu: float, problem: Problem) -> StackedState:
    if mu < 0:
        raise ValueError("step size must be nonnegative")
    _check_dims(state, W, problem)
    g = problem.grads(state.x)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient(state)
    t = schedule(state.k)
    x_new = apply_consensus(W, state.x - mu * g, t)
    return StackedState(x_new, state.k + 1, state.comm_rounds + t, state.grad_rounds + 1)


def averaged_step(xbar, mu: float, problem: Problem, x_full) -> np.ndarray:
    """Mean-iterate update ``xbar - mu (1/n) sum_j grad f_j(x_j)``; a cross-check only."""
    return np.asarray(xbar) - mu * problem.grads(np.asarray(x_full)).mean(axis=0)


def initial_state(problem: Problem, init=None, seed: int = 0) -> StackedState:
    """Explicit ``(n, p)`` blocks, or uniform ``[0, 1]`` entries from stream ``init``."""
    if init is None:
        x0 = stream(seed, "init").uniform(0.0, 1.0, size=(problem.n, problem.p))
    else:
        x0 = np.array(init, dtype=float).reshape(problem.n, problem.p)
    return StackedState(x0)


@dataclass
class MonitorResult:
    name: str
    checked: int = 0
    violations: int = 0
    max_excess: float = -math.inf
    skipped: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def verdict(self) -> str:
        if self.skipped:
            return f"skipped ({self.skipped})"
        return "pass" if self.passed else f"FAIL ({self.violations} violations)"


@dataclass
class TrajectoryRecord:
    k: int
    t_k: int
    A_k: float
    B_k: float
    regret: float
    ergodic_gap: float
    cum_comm: int
    cum_grad: int


@dataclass
class Trajectory:
    """Metrics of the states ``x_0, ..., x_K``.

    Row ``k`` describes ``x_k``; ``t[k]`` is the number of rounds used by the
    step leaving ``x_k`` and ``cum_comm[k]`` counts rounds spent reaching it.
    """

    k: np.ndarray
    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    regret: np.ndarray
    ergodic_gap: np.ndarray
    cum_comm: np.ndarray
    cum_grad: np.ndarray
    final: StackedState
    n: int
    mu: float
    schedule: Schedule
    metric: str
    max_drift: float = 0.0
    drift_flags: int = 0
    means: np.ndarray | None = None
    monitors: list = field(default_factory=list)

    def __len__(self):
        return len(self.k)

    def records(self):
        for i in range(len(self.k)):
            yield TrajectoryRecord(int(self.k[i]), int(self.t[i]), float(self.A[i]),
                                   float(self.B[i]), float(self.regret[i]),
                                   float(self.ergodic_gap[i]), int(self.cum_comm[i]),
                                   int(self.cum_grad[i]))

    @property
    def A0(self) -> float:
        return float(self.A[0])

    @property
    def B0(self) -> float:
        return float(self.B[0])


def optimality_gap(problem: Problem, xbar: np.ndarray, metric: str) -> float:
    """``A_k`` divided by ``sqrt(n)``: distance of the mean iterate to ``X*`` or to ``x*``."""
    if metric == "projection":
        return float(np.linalg.norm(xbar - project_to_optimal(problem.structure, xbar)))
    return float(np.linalg.norm(xbar - problem.x_star))


def run(problem: Problem, W: ConsensusMatrix, schedule: Schedule, mu: float, K: int,
        init=None, *, seed: int = 0, metric: str = "auto", keep_means: bool = False,
        divergence_limit: float = DIVERGENCE_LIMIT) -> Trajectory:
    """Execute ``K`` NEAR-DGD+ steps and record the metrics of every state.

    ``metric`` picks ``A_k``: ``"projection"`` (distance to the optimal set,
    composite problems) or ``"fixed"`` (distance to ``problem.x_star``);
    ``"auto"`` uses the projection whenever a composite structure exists.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if metric == "auto":
        metric = "projection" if problem.structure is not None else "fixed"
    if metric == "projection" and problem.structure is None:
        raise ValueError("projection metric needs a composite problem")
    state = initial_state(problem, init, seed)
    _check_dims(state, W, problem)
    n = problem.n
    root_n = math.sqrt(n)
    rows = K + 1
    A = np.empty(rows)
    B = np.empty(rows)
    regret = np.empty(rows)
    ergodic = np.empty(rows)
    comm = np.empty(rows, dtype=np.int64)
    grad = np.empty(rows, dtype=np.int64)
    means = np.empty((rows, problem.p)) if keep_means else None
    running_sum = np.zeros(problem.p)
    max_drift, flags = 0.0, 0

    for k in range(rows):
        x = state.x
        xbar = x.mean(axis=0)
        if keep_means:
            means[k] = xbar
        A[k] = root_n * optimality_gap(problem, xbar, metric)
        B[k] = np.linalg.norm(x - xbar)
        regret[k] = np.mean(problem.aggregate_values(x)) - problem.f_star
        running_sum += xbar
        ergodic[k] = problem.value(running_sum / (k + 1)) - problem.f_star
        comm[k], grad[k] = state.comm_rounds, state.grad_rounds
        if k == K:
            break
        expected = averaged_step(xbar, mu, problem, x)
        state = near_dgd_step(state, W, schedule, mu, problem)
        drift = float(np.max(np.abs(state.mean - expected)))
        max_drift = max(max_drift, drift)
        if drift > DRIFT_TOL * (1.0 + float(np.max(np.abs(expected)))):
            flags += 1
        size = float(np.linalg.norm(state.x))
        if not math.isfinite(size) or size > divergence_limit:
            raise DivergenceError(
                f"iterate norm {size:.3e} exceeds {divergence_limit:.0e} at iteration {state.k} "
                f"(mu={mu}, L={problem.L:.4g}, schedule={schedule})"
            )

    return Trajectory(k=np.arange(rows), t=np.array([schedule(k) for k in range(rows)]),
                      A=A, B=B, regret=regret, ergodic_gap=ergodic, cum_comm=comm,
                      cum_grad=grad, final=state, n=n, mu=mu, schedule=schedule,
                      metric=metric, max_drift=max_drift, drift_flags=flags, means=means)


def cost(traj: Trajectory, c_c: float, c_g: float, per_agent: bool = False) -> np.ndarray:
    """Cumulative ``c_c * rounds + c_g * gradient evaluations`` spent to reach each state.

    Counts are network-wide; ``per_agent`` multiplies both by ``n``.
    """
    if c_c < 0 or c_g < 0:
        raise ValueError("cost weights must be nonnegative")
    out = c_c * traj.cum_comm.astype(float) + c_g * traj.cum_grad.astype(float)
    return out * traj.n if per_agent else out


def _monitor(name, lhs_A, lhs_B, rhs_A, rhs_B, slack):
    m = MonitorResult(name)
    exA = lhs_A - rhs_A - slack
    exB = lhs_B - rhs_B - slack
    m.checked = len(exA)
    if m.checked:
        m.violations = int(np.sum(exA > 0) + np.sum(exB > 0))
        m.max_excess = float(max(exA.max(), exB.max()))
    return m


def monitor_convex(traj: Trajectory, beta: float, L: float, D: float,
                   slack: float = MONITOR_SLACK) -> MonitorResult:
    """Elementwise check of ``(A, B)_{k+1} <= M_k (A, B)_k + Y_k`` for convex costs.

    ``M_k = [[1, mu L], [mu L b, (1 + mu L) b]]``, ``Y_k = b (0, mu D)`` with
    ``b = beta^{t(k)}`` and ``D = ||grad F(x*)||``. Requires ``mu <= 2/L``.
    """
    mu = traj.mu
    if mu > 2.0 / L:
        return MonitorResult("convex-system", skipped=f"mu={mu:g} > 2/L={2 / L:g}")
    A, B = traj.A, traj.B
    b = beta ** traj.t[:-1].astype(float)
    rhs_A = A[:-1] + mu * L * B[:-1]
    rhs_B = mu * L * b * A[:-1] + (1 + mu * L) * b * B[:-1] + b * mu * D
    return _monitor("convex-system", A[1:], B[1:], rhs_A, rhs_B, slack)


def monitor_composite(traj: Trajectory, beta: float, L: float, C2: float, D: float,
                      mu_cap: float, slack: float = MONITOR_SLACK) -> MonitorResult:
    """Elementwise check of the composite system with contraction ``sqrt(1 - C2 mu)``.

    ``M_k = [[sqrt(1 - C2 mu), mu L], [C0 b, C0 b]]`` with ``C0 = 1 + mu L``,
    ``Y_k = b (0, mu D)``. Requires ``mu <= mu_cap = 2 C_H / (L_g + alpha)``.
    """
    mu = traj.mu
    if traj.metric != "projection":
        return MonitorResult("composite-system", skipped="needs the projection metric")
    if mu > mu_cap:
        return MonitorResult("composite-system", skipped=f"mu={mu:g} > 2C_H/(L_g+alpha)={mu_cap:g}")
    q = math.sqrt(max(1.0 - C2 * mu, 0.0))
    A, B = traj.A, traj.B
    b = beta ** traj.t[:-1].astype(float)
    c0 = 1.0 + mu * L
    rhs_A = q * A[:-1] + mu * L * B[:-1]
    rhs_B = c0 * b * (A[:-1] + B[:-1]) + b * mu * D
    return _monitor("composite-system", A[1:], B[1:], rhs_A, rhs_B, slack)


def monitors_for(traj: Trajectory, problem: Problem, W: ConsensusMatrix) -> list[MonitorResult]:
    """The inequality monitors applicable to ``problem``, plus the averaging cross-check."""
    out = []
    cs = problem.structure
    if cs is not None and traj.metric == "projection":
        out.append(monitor_composite(traj, W.beta, problem.L, cs.C2, cs.D, cs.mu_cap))
    else:
        xs = np.broadcast_to(problem.x_star, (problem.n, problem.p))
        D = float(np.linalg.norm(problem.grads(xs)))
        out.append(monitor_convex(traj, W.beta, problem.L, D))
    drift = MonitorResult("averaging", checked=len(traj) - 1, violations=traj.drift_flags,
                          max_excess=traj.max_drift)
    out.append(drift)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_csv(path, traj: Trajectory, cum_cost: np.ndarray, bound_eq_5_24=None,
              bound_eq_5_40=None) -> None:
    """One row per state in the fixed column order of ``CSV_COLUMNS``.

    Bound columns are left empty where ``None`` or NaN.
    """
    rows = len(traj)
    b24 = bound_eq_5_24 if bound_eq_5_24 is not None else [None] * rows
    b40 = bound_eq_5_40 if bound_eq_5_40 is not None else [None] * rows
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(rows):
            w.writerow([_fmt(v) for v in (
                traj.k[i], traj.t[i], traj.A[i], traj.B[i], traj.regret[i],
                traj.ergodic_gap[i], traj.cum_comm[i], traj.cum_grad[i], cum_cost[i],
                b24[i], b40[i])])
