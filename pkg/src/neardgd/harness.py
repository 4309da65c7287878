"""Experiment configs, presets and the runner that writes trajectory CSVs."""
from __future__ import annotations

import csv
import json
import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import net, theory
from .dynamics import (CASES, DivergenceError, Schedule, Trajectory, cost, initial_state,
                       monitors_for, run, write_csv)
from .problems import Problem, make_piecewise_quartic, make_regression

BOUND_RTOL = 1e-6


class ConfigError(ValueError):
    pass


class AdmissibilityWarning(UserWarning):
    pass


@dataclass
class ProblemSpec:
    kind: str = "regression"   # "regression" or "piecewise"
    p: int = 50
    n: int = 8
    s: int = 5


@dataclass
class GraphSpec:
    topology: str = "circulant"   # "circulant", "complete" or "path"
    radius: int = 3
    scheme: str = "lazy-metropolis"


@dataclass
class CostPair:
    c_g: float
    c_c: float


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a sweep over schedules and cost pairs.

    ``mu`` is a float or ``"auto"``: the composite cap at ``J = t(0)`` (scaled
    by 0.99) for regression, ``1/L`` for the convex problem.
    """

    name: str = "experiment"
    seed: int = 0
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    graph: GraphSpec = field(default_factory=GraphSpec)
    schedules: list[str] = field(default_factory=lambda: [f"case:{c}" for c in CASES])
    mu: float | str = "auto"
    K: int = 10_000
    costs: list[CostPair] = field(default_factory=lambda: [CostPair(1.0, 0.2)])
    per_agent: bool = False
    metric: str = "auto"
    allow_inadmissible: bool = False
    out: str = "results"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        _reject_unknown(cls, d, "config")
        if "problem" in d:
            _reject_unknown(ProblemSpec, d["problem"], "problem")
            d["problem"] = ProblemSpec(**d["problem"])
        if "graph" in d:
            _reject_unknown(GraphSpec, d["graph"], "graph")
            d["graph"] = GraphSpec(**d["graph"])
        if "costs" in d:
            pairs = []
            for c in d["costs"]:
                _reject_unknown(CostPair, c, "cost pair")
                pairs.append(CostPair(float(c["c_g"]), float(c["c_c"])))
            d["costs"] = pairs
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.schedules:
            raise ConfigError("no cases: the schedule list is empty")
        for s in self.schedules:
            Schedule.parse(s)
        if self.problem.kind not in ("regression", "piecewise"):
            raise ConfigError(f"unknown problem kind {self.problem.kind!r}")
        if self.graph.topology not in ("circulant", "complete", "path"):
            raise ConfigError(f"unknown topology {self.graph.topology!r}")
        if self.K < 0:
            raise ConfigError("K must be nonnegative")
        if not self.costs:
            raise ConfigError("at least one cost pair is required")
        if isinstance(self.mu, str) and self.mu != "auto":
            raise ConfigError("mu must be a number or 'auto'")
        if self.metric not in ("auto", "projection", "fixed"):
            raise ConfigError(f"unknown metric {self.metric!r}")

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)


def _reject_unknown(cls, d, what):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be a mapping")
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")


def preset_regression(seed: int = 0) -> ExperimentConfig:
    # s = 5 keeps ns = 40 < p = 50, so H has a genuine kernel
    return ExperimentConfig(
        name="regression", seed=seed,
        problem=ProblemSpec("regression", p=50, n=8, s=5),
        graph=GraphSpec("circulant", radius=3),
        mu="auto",
        costs=[CostPair(1.0, 0.2), CostPair(1.0, 0.02), CostPair(0.02, 1.0)],
    )


def preset_piecewise(seed: int = 0) -> ExperimentConfig:
    # mu = 0.5 exceeds 1/L = 1/3; kept as published, with a warning
    return ExperimentConfig(
        name="piecewise", seed=seed,
        problem=ProblemSpec("piecewise", p=1, n=8, s=1),
        graph=GraphSpec("circulant", radius=3),
        mu=0.5,
        costs=[CostPair(1.0, 0.2)],
        allow_inadmissible=True,
    )


PRESETS = {"regression": preset_regression, "piecewise": preset_piecewise}


def build_problem(cfg: ExperimentConfig) -> Problem:
    ps = cfg.problem
    if ps.kind == "regression":
        return make_regression(ps.p, ps.n, ps.s, seed=cfg.seed)
    if ps.p != 1:
        raise ConfigError("the piecewise-quartic problem is scalar; set p = 1")
    return make_piecewise_quartic(ps.n, seed=cfg.seed)


def build_network(cfg: ExperimentConfig) -> net.ConsensusMatrix:
    g, n = cfg.graph, cfg.problem.n
    if g.topology == "circulant":
        topo = net.build_circulant(n, g.radius)
    elif g.topology == "complete":
        topo = net.build_complete(n)
    else:
        topo = net.build_path(n)
    return net.consensus_matrix(topo, g.scheme)


def resolve_mu(cfg: ExperimentConfig, problem: Problem, W: net.ConsensusMatrix) -> float:
    if cfg.mu != "auto":
        return float(cfg.mu)
    cs = problem.structure
    if cs is None:
        return 1.0 / problem.L
    J = min(Schedule.parse(s)(0) for s in cfg.schedules)
    return 0.99 * theory.stepsize_caps(cs, problem.L, W.beta, J).composite


def check_admissible(cfg, problem, W, schedule, mu) -> bool:
    """Whether the explicit bounds apply; warns or raises on inadmissible ``mu``."""
    cs = problem.structure
    if cs is None:
        if mu > 2.0 / problem.L:
            _complain(cfg, f"mu={mu:g} > 2/L={2 / problem.L:g}: no convergence guarantee")
        elif mu > 1.0 / problem.L:
            warnings.warn(f"mu={mu:g} > 1/L={1 / problem.L:g}: the ergodic rate is not "
                          "guaranteed", AdmissibilityWarning, stacklevel=2)
        return False
    caps = theory.stepsize_caps(cs, problem.L, W.beta, schedule(0))
    if not caps.admissible(mu)["composite_bounds"]:
        _complain(cfg, f"mu={mu:g} exceeds the composite cap {caps.composite:g} "
                       f"for schedule {schedule}")
        return False
    return True


def _complain(cfg, msg):
    if not cfg.allow_inadmissible:
        raise theory.InadmissibleStep(msg + " (set allow_inadmissible to proceed)")
    warnings.warn(msg, AdmissibilityWarning, stacklevel=3)


@dataclass
class CaseResult:
    schedule: Schedule
    label: str
    trajectory: Trajectory | None
    bound_5_24: np.ndarray | None = None
    bound_5_40: np.ndarray | None = None
    bounds_ok: bool | None = None
    rate: float = math.nan
    monitors: list = field(default_factory=list)
    error: str = ""

    @property
    def passed(self) -> bool:
        return (not self.error and all(m.passed for m in self.monitors)
                and self.bounds_ok is not False)


def case_label(schedule: Schedule) -> str:
    for c, s in CASES.items():
        if s == schedule:
            return f"case{c}"
    return re.sub(r"[^A-Za-z0-9.]+", "-", str(schedule))


def bound_columns(problem, W, traj: Trajectory, admissible: bool):
    """``A_k`` bounds of both theorems, NaN where they do not apply."""
    if problem.structure is None or not admissible:
        return None, None
    sched = traj.schedule
    inp = theory.bound_inputs(problem.structure, problem.L, W.beta, traj.mu, sched(0),
                              traj.A0, traj.B0)
    if not inp.admissible:
        return None, None
    b24 = None
    if sched.is_constant:
        b24, _ = theory.bound_fixed_schedule(inp, traj.k)
        b24[0] = np.nan   # the bound is stated for k >= 1
    b40 = np.full(len(traj), np.nan)
    if len(traj) > 1:
        b40[1:], _ = theory.bound_nondecreasing_schedule(inp, sched, traj.k[1:])
    return b24, b40


def _dominates(A, bound, A0):
    mask = np.isfinite(bound)
    return bool(np.all(A[mask] <= bound[mask] + BOUND_RTOL * (1.0 + A0)))


def run_case(cfg, problem, W, schedule: Schedule, mu: float) -> CaseResult:
    res = CaseResult(schedule, case_label(schedule), None)
    admissible = check_admissible(cfg, problem, W, schedule, mu)
    try:
        traj = run(problem, W, schedule, mu, cfg.K, seed=cfg.seed, metric=cfg.metric)
    except DivergenceError as exc:
        res.error = str(exc)
        return res
    res.trajectory = traj
    res.monitors = monitors_for(traj, problem, W)
    res.bound_5_24, res.bound_5_40 = bound_columns(problem, W, traj, admissible)
    checks = [_dominates(traj.A, b, traj.A0)
              for b in (res.bound_5_24, res.bound_5_40) if b is not None]
    res.bounds_ok = all(checks) if checks else None
    try:
        res.rate = theory.decay_rate(traj.A)
    except ValueError:
        pass
    return res


def csv_name(res: CaseResult, pair: CostPair) -> str:
    return f"{res.label}_cg{pair.c_g:g}_cc{pair.c_c:g}.csv"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    mu: float
    cases: list[CaseResult]
    files: list[Path]

    @property
    def exit_code(self) -> int:
        return 0 if all(c.passed for c in self.cases) else 1


def run_experiment(cfg: ExperimentConfig, out=None, max_workers: int | None = None) -> ExperimentResult:
    """Run every schedule concurrently and write one CSV per (schedule, cost pair)."""
    cfg.validate()
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    W = build_network(cfg)
    mu = resolve_mu(cfg, problem, W)
    schedules = [Schedule.parse(s) for s in cfg.schedules]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        cases = list(pool.map(lambda s: run_case(cfg, problem, W, s, mu), schedules))

    files = []
    for res in cases:
        if res.trajectory is None:
            continue
        for pair in cfg.costs:
            path = out / csv_name(res, pair)
            cum = cost(res.trajectory, pair.c_c, pair.c_g, cfg.per_agent)
            write_csv(path, res.trajectory, cum, res.bound_5_24, res.bound_5_40)
            files.append(path)
    result = ExperimentResult(cfg, mu, cases, files)
    write_summary(out / "summary.csv", result)
    return result


SUMMARY_COLUMNS = ("case", "schedule", "final_A", "final_B", "final_regret", "decay_rate",
                   "monitors", "bounds", "error")


def _summary_rows(result: ExperimentResult):
    for c in result.cases:
        tr = c.trajectory
        bounds = {None: "n/a", True: "pass", False: "FAIL"}[c.bounds_ok]
        mons = "; ".join(f"{m.name}: {m.verdict()}" for m in c.monitors)
        if tr is None:
            yield (c.label, str(c.schedule), "", "", "", "", mons, bounds, c.error)
        else:
            yield (c.label, str(c.schedule), f"{tr.A[-1]:.6e}", f"{tr.B[-1]:.6e}",
                   f"{tr.regret[-1]:.6e}", f"{c.rate:.8f}", mons, bounds, c.error)


def write_summary(path, result: ExperimentResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(_summary_rows(result))


def format_summary(result: ExperimentResult) -> str:
    rows = [SUMMARY_COLUMNS[:-1]] + [r[:-1] for r in _summary_rows(result)]
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [f"{result.config.name}: mu={result.mu:.6g}, K={result.config.K}, "
             f"{len(result.files)} CSV files"]
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    lines += [f"{c.label}: {c.error}" for c in result.cases if c.error]
    return "\n".join(lines)


def inspect(cfg: ExperimentConfig) -> str:
    """Problem, network and step-size constants of a config, one per line."""
    cfg.validate()
    problem = build_problem(cfg)
    W = build_network(cfg)
    mu = resolve_mu(cfg, problem, W)
    lines = [f"beta      {W.beta:.12g}", f"L         {problem.L:.12g}", f"mu        {mu:.12g}"]
    cs = problem.structure
    if cs is None:
        xs = np.broadcast_to(problem.x_star, (problem.n, problem.p))
        lines += [f"D         {np.linalg.norm(problem.grads(xs)):.12g}",
                  f"cap 2/L   {2 / problem.L:.12g}", f"cap 1/L   {1 / problem.L:.12g}"]
        return "\n".join(lines)
    lines += [f"alpha     {cs.alpha:.12g}", f"L_g       {cs.L_g:.12g}",
              f"c_H       {cs.c_H:.12g}", f"C_H       {cs.C_H:.12g}",
              f"C_2       {cs.C2:.12g}", f"D         {cs.D:.12g}",
              f"rank H    {cs.rank} of {cs.H.shape[1]} (deficient: {cs.rank_deficient})",
              f"cap coercive  {cs.mu_cap:.12g}"]
    state = initial_state(problem, seed=cfg.seed)
    t0 = run(problem, W, Schedule("constant", 1), mu, 0, init=state.x)
    for s in cfg.schedules:
        sched = Schedule.parse(s)
        inp = theory.bound_inputs(cs, problem.L, W.beta, mu, sched(0), t0.A0, t0.B0)
        lines.append(f"{str(sched):<16} J={inp.J}  cap={inp.caps.composite:.6g}  "
                     f"gamma={inp.gamma:.6g}  R={inp.R:.6g}  admissible={inp.admissible}")
    return "\n".join(lines)
