"""Parameter sweeps over block length, memory, participation, horizon and prediction quality.

Every setting of a sweep is run on the same disturbance realizations (keyed by
seed and horizon), so only the swept parameter changes between settings. The
hindsight comparator is solved once per realization and shared.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .comparator import ComparatorProblem, SolverOptions, default_budget, solve_comparator
from .costs import CostConfig, estimate_constants
from .learner import LearnerConfig, memory_length, prediction_source, run_ogd, run_ogd_p
from .lti import ConfigurationError, DisturbanceParams, default_model, generate_disturbances
from .metrics import comm_blk, regret_bound_rhs, regret_report, theory_constants

KINDS = ("K", "H", "participation", "horizon-scaling", "prediction-mismatch")

DEFAULT_GRIDS = {
    "K": (1, 2, 5, 10, 20, 40, 100, 200),
    "H": (1, 2, 4, 8, 16, 32, 64, 104),
    "participation": (1, 2, 3, 5, 7, 10),
    "horizon-scaling": (200, 400, 800, 1600),
    "prediction-mismatch": (0, 0.1, 0.5, 1, 2, 5),
}

RECORD_COLUMNS = (
    "sweep", "setting", "seed", "T", "K", "H", "m", "N", "eta_B", "final_regret",
    "avg_regret", "comm_total", "comm_over_sqrtT", "pred_mismatch", "comparator_success",
    "runtime_ms",
)

SUMMARY_METRICS = (
    "final_regret", "avg_regret", "comm_total", "comm_over_sqrtT", "pred_mismatch",
    "sampling_variance", "bound",
)


@dataclass(frozen=True)
class RunConfig:
    """One learner configuration; ``H=None`` means the theory-sized memory for ``T``."""

    T: int = 200
    K: int = 10
    H: int | None = None
    eta: float = 0.04
    m: int = 5
    N: int = 10
    alpha: float = 0.2
    beta: float = 0.8
    budget_fraction: float = 0.45
    variant: str = "plain"
    predictions: str = "zero"
    G_P: float | None = None  # None: the audited full-gradient bound G_beta
    u1: tuple | None = None

    def __post_init__(self):
        if self.variant not in ("plain", "prediction"):
            raise ConfigurationError(f"variant must be plain or prediction, got {self.variant!r}")
        if self.budget_fraction < 0:
            raise ConfigurationError("budget fraction must be >= 0")
        if self.T < 1 or self.K < 1 or not 1 <= self.m <= self.N:
            raise ConfigurationError(f"bad T/K/m/N: {self.T}/{self.K}/{self.m}/{self.N}")
        if self.H is not None and self.H < 1:
            raise ConfigurationError(f"H must be >= 1, got {self.H}")

    def memory(self, rho):
        return self.H if self.H is not None else memory_length(self.T, rho)

    def learner(self, rho):
        return LearnerConfig(
            T=self.T, K=self.K, H=self.memory(rho), eta=self.eta, m=self.m, N=self.N, u1=self.u1
        )

    def cost(self):
        return CostConfig(alpha=self.alpha, beta=self.beta, N=self.N)


@dataclass(frozen=True)
class SweepPlan:
    kind: str
    grid: tuple = ()
    seeds: tuple = (0, 1, 2, 3, 4)
    base: RunConfig = field(default_factory=RunConfig)
    model: object = None
    disturbances: DisturbanceParams = field(default_factory=DisturbanceParams)
    solver: SolverOptions = field(default_factory=SolverOptions)
    timing: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown sweep kind {self.kind!r}; expected one of {KINDS}")
        if not self.grid:
            object.__setattr__(self, "grid", DEFAULT_GRIDS[self.kind])
        if len(self.seeds) < 1:
            raise ConfigurationError("need at least one seed")
        if self.model is None:
            object.__setattr__(self, "model", default_model(self.base.N))
        vals = list(self.grid)
        if self.kind == "K" and any(k < 1 or k > self.base.T or int(k) != k for k in vals):
            raise ConfigurationError(f"K values must be integers in [1, T={self.base.T}]")
        if self.kind == "H" and any(h < 1 or int(h) != h for h in vals):
            raise ConfigurationError("H values must be integers >= 1")
        if self.kind == "participation" and any(not 1 <= m <= self.base.N or int(m) != m for m in vals):
            raise ConfigurationError(f"m values must be integers in [1, N={self.base.N}]")
        if self.kind == "horizon-scaling" and (
            any(t < 1 or int(t) != t for t in vals) or vals != sorted(vals)
        ):
            raise ConfigurationError("T grid must be ascending positive integers")
        if self.kind == "prediction-mismatch" and any(s < 0 for s in vals):
            raise ConfigurationError("noise scales must be >= 0")

    def setting(self, value):
        """Resolved (label, RunConfig) for one grid value."""
        b = self.base
        if self.kind == "K":
            cfg = replace(b, K=int(value))
        elif self.kind == "H":
            cfg = replace(b, H=int(value))
        elif self.kind == "participation":
            cfg = replace(b, m=int(value))
        elif self.kind == "horizon-scaling":
            T = int(value)
            cfg = replace(b, T=T, K=math.isqrt(T - 1) + 1, H=None)
        else:
            src = "oracle" if value == 0 else f"noisy:{value:g}"
            cfg = replace(b, variant="prediction", predictions=src)
        return f"{self.kind}={value:g}", cfg


@dataclass(frozen=True)
class SweepRecord:
    sweep: str
    setting: str
    seed: int
    T: int
    K: int
    H: int
    m: int
    N: int
    eta_B: float
    final_regret: float
    avg_regret: float
    comm_total: int
    comm_over_sqrtT: float
    pred_mismatch: float | None
    comparator_success: bool
    runtime_ms: float
    # Not part of the record files; feed the summaries and audits.
    value: float = 0.0
    J_online: float = 0.0
    J_comparator: float = 0.0
    sampling_variance: float = 0.0
    bound: float = 0.0
    max_movement: float = 0.0
    movement_cap: float = 0.0

    def row(self):
        return {c: getattr(self, c) for c in RECORD_COLUMNS}


@dataclass(frozen=True)
class SummaryRow:
    setting: str
    metric: str
    mean: float
    std: float
    n: int


@dataclass(frozen=True, eq=False)
class Realization:
    """Disturbances of one (seed, T) with their comparator solution."""

    d: object
    V_T: float
    solution: object
    diagnostics: object


def realize(model, seed, T, cost, params, fraction, solver):
    d = generate_disturbances(T, model.n_d, seed, params)
    V = default_budget(d, fraction)
    sol, diag = solve_comparator(ComparatorProblem(model, d, cost, V), solver)
    return Realization(d=d, V_T=V, solution=sol, diagnostics=diag)


def run_one(model, cfg, real, seed, solver_ok=True, timing=False):
    """One learner run against a realization; returns the report pieces as a dict."""
    t0 = time.perf_counter()
    cost = cfg.cost()
    lc = cfg.learner(model.rho)
    ac = estimate_constants(model, cost, lc.H, real.d.D_d, real.d)
    G_P = ac.G_beta if cfg.G_P is None else cfg.G_P
    if cfg.variant == "plain":
        res = run_ogd(model, real.d, cost, lc, seed)
    else:
        res = run_ogd_p(model, real.d, cost, lc, prediction_source(cfg.predictions, seed), seed, G_P)
    rep = regret_report(res, real.solution, cost, lc.T, lc.K, lc.m, model.n_u)
    tc = theory_constants(model, replace(ac, G_P=G_P), lc.m, lc.N, real.d.D_d)
    bound = regret_bound_rhs(
        tc, ac.D, real.V_T, lc.eta, lc.K, lc.T, lc.H, model.rho,
        variant=cfg.variant, mismatch=res.pred_mismatch or 0.0,
    ) if lc.eta > 0 else math.inf
    mv = res.movements
    runtime = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    return dict(
        T=lc.T, K=lc.K, H=lc.H, m=lc.m, N=lc.N, eta_B=lc.eta,
        final_regret=rep.regret, avg_regret=rep.avg_regret, comm_total=rep.comm_total,
        comm_over_sqrtT=rep.comm_over_sqrtT, pred_mismatch=rep.pred_mismatch,
        comparator_success=bool(solver_ok), runtime_ms=runtime,
        J_online=rep.J_online, J_comparator=rep.J_comparator,
        sampling_variance=float(np.mean(res.sampling_error)), bound=float(bound),
        max_movement=float(mv.max()) if mv.size else 0.0,
        movement_cap=lc.eta * lc.K * ac.G_loc,
    ), res


def _group_job(args):
    plan, seed, T, items = args
    model, base = plan.model, plan.base
    cost = base.cost()
    real = realize(model, seed, T, cost, plan.disturbances, base.budget_fraction, plan.solver)
    out = []
    for value, label, cfg in items:
        rec, _ = run_one(model, cfg, real, seed, real.diagnostics.success, plan.timing)
        out.append(SweepRecord(sweep=plan.kind, setting=label, seed=seed, value=float(value), **rec))
    return out, real.diagnostics


def run_sweep(plan, jobs=1):
    """All (setting, seed) records of ``plan`` plus comparator diagnostics per realization.

    A comparator failure marks the affected records; the sweep continues.
    """
    groups = {}
    for value in plan.grid:
        label, cfg = plan.setting(value)
        for seed in plan.seeds:
            groups.setdefault((seed, cfg.T), []).append((value, label, cfg))
    tasks = [(plan, seed, T, items) for (seed, T), items in groups.items()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_group_job, tasks))
    else:
        results = [_group_job(t) for t in tasks]
    records, diags = [], []
    for (seed, T), (recs, diag) in zip(groups, results):
        records.extend(recs)
        diags.append(((seed, T), diag))
    return sort_records(records, plan.grid), diags


def sweep_block_length(plan, jobs=1):
    return _typed(plan, "K", jobs)


def sweep_memory(plan, jobs=1):
    return _typed(plan, "H", jobs)


def sweep_participation(plan, jobs=1):
    return _typed(plan, "participation", jobs)


def sweep_horizon_scaling(plan, jobs=1):
    return _typed(plan, "horizon-scaling", jobs)


def sweep_prediction_mismatch(plan, jobs=1):
    return _typed(plan, "prediction-mismatch", jobs)


def _typed(plan, kind, jobs):
    if plan.kind != kind:
        raise ConfigurationError(f"expected a {kind} plan, got {plan.kind}")
    records, diags = run_sweep(plan, jobs)
    return records, aggregate(records), diags


def sort_records(records, grid=None):
    order = {float(v): i for i, v in enumerate(grid)} if grid is not None else {}
    return sorted(records, key=lambda r: (order.get(r.value, len(order)), r.value, r.setting, r.seed))


def aggregate(records):
    """Mean and sample standard deviation (n - 1) of each metric per setting.

    The result does not depend on the order of ``records``.
    """
    if not records:
        raise ConfigurationError("no records to aggregate")
    by = {}
    for r in sorted(records, key=lambda r: (r.value, r.setting, r.seed)):
        by.setdefault((r.value, r.setting), []).append(r)
    rows = []
    for (_, label), recs in by.items():
        for metric in SUMMARY_METRICS:
            vals = [getattr(r, metric) for r in recs]
            if any(v is None for v in vals):
                continue
            x = np.asarray(vals, dtype=float)
            std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
            rows.append(SummaryRow(label, metric, float(np.mean(x)), std, int(x.size)))
    return rows


def summary_table(rows, metric):
    """``{setting: (mean, std, n)}`` for one metric, in row order."""
    return {r.setting: (r.mean, r.std, r.n) for r in rows if r.metric == metric}


def saturation_memory(rows, grid, kind="H", tol=0.01):
    """Smallest H whose mean regret is within ``tol`` (relative) of the largest-H mean."""
    means = summary_table(rows, "avg_regret")
    vals = sorted(grid)
    ref = means[f"{kind}={vals[-1]:g}"][0]
    for h in vals:
        if abs(means[f"{kind}={h:g}"][0] - ref) <= tol * abs(ref):
            return h
    return vals[-1]


def comm_envelope(T, m, n_u):
    """Exact ``(comm / sqrt(T), upper)`` with ``K = ceil(sqrt T)``; upper is ``2 m n_u (1 + 2/sqrt T)``."""
    K = math.isqrt(T - 1) + 1
    c = comm_blk(T, K, m, n_u)
    return c / math.sqrt(T), 2 * m * n_u * (1 + 2 / math.sqrt(T))
