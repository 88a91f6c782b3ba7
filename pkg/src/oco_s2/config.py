"""JSON run configuration: sections ``model``, ``cost``, ``learner``, ``comparator``, ``sweep``, ``output``.

Every field is optional; omitted fields take the default-instance values.
Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .comparator import SolverOptions
from .experiments import DEFAULT_GRIDS, RunConfig, SweepPlan
from .lti import ConfigurationError, DisturbanceParams, SystemModel

SEED_ENV = "OCO_S2_SEED"

SWEEP_ALIASES = {
    "k": "K",
    "h": "H",
    "participation": "participation",
    "scaling": "horizon-scaling",
    "prediction": "prediction-mismatch",
}


@dataclass
class ModelSection:
    n: int = 10
    a: float = 0.95
    b: float = 0.1
    e: float = -0.1
    A: list | None = None
    B: list | None = None
    E: list | None = None
    C_A: float | None = None
    rho: float | None = None
    disturbances: dict = field(default_factory=dict)

    def build(self):
        if self.A is None and self.B is None and self.E is None:
            n = self.n
            C_A = 1.0 if self.C_A is None else self.C_A
            rho = abs(self.a) if self.rho is None else self.rho
            return SystemModel(
                A=self.a * np.eye(n), B=self.b * np.eye(n), E=self.e * np.eye(n), C_A=C_A, rho=rho
            )
        if self.A is None or self.B is None or self.E is None or self.rho is None:
            raise ConfigurationError("explicit matrices need all of A, B, E and rho")
        return SystemModel(
            A=np.array(self.A, dtype=float),
            B=np.array(self.B, dtype=float),
            E=np.array(self.E, dtype=float),
            C_A=1.0 if self.C_A is None else self.C_A,
            rho=self.rho,
        )

    def disturbance_params(self):
        kw = dict(self.disturbances)
        for k in ("amplitude", "frequency"):
            if k in kw:
                kw[k] = tuple(kw[k])
        try:
            return DisturbanceParams(**kw)
        except TypeError as exc:
            raise ConfigurationError(f"model.disturbances: {exc}") from None


@dataclass
class CostSection:
    alpha: float = 0.2
    beta: float = 0.8
    N: int | None = None  # defaults to n_u


@dataclass
class LearnerSection:
    T: int = 200
    K: int = 10
    H: int | None = None
    eta: float = 0.04
    m: int = 5
    u1: list | None = None
    variant: str = "plain"
    predictions: str = "zero"
    G_P: float | None = None
    seed: int = 0
    seeds: int = 5


@dataclass
class ComparatorSection:
    budget_fraction: float = 0.45
    tol: float = 1e-10
    max_iter: int = 100000


@dataclass
class SweepSection:
    kind: str | None = None
    grid: list | None = None


@dataclass
class OutputSection:
    dir: str = "out"
    format: str = "csv"
    svg: bool = False
    timing: bool = False


SECTIONS = {
    "model": ModelSection,
    "cost": CostSection,
    "learner": LearnerSection,
    "comparator": ComparatorSection,
    "sweep": SweepSection,
    "output": OutputSection,
}


@dataclass
class Config:
    model: ModelSection = field(default_factory=ModelSection)
    cost: CostSection = field(default_factory=CostSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    comparator: ComparatorSection = field(default_factory=ComparatorSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: OutputSection = field(default_factory=OutputSection)
    path: str | None = None

    @classmethod
    def from_dict(cls, doc, path=None):
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(doc) - set(SECTIONS)
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, kind in SECTIONS.items():
            sec = doc.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigurationError(f"section {name!r} must be an object")
            allowed = set(kind.__dataclass_fields__)
            bad = set(sec) - allowed
            if bad:
                raise ConfigurationError(f"unknown keys in {name}: {sorted(bad)}")
            parts[name] = kind(**sec)
        return cls(path=path, **parts)

    def to_dict(self):
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    # Resolved objects.

    def system(self):
        return self.model.build()

    def run_config(self, model=None):
        model = model or self.system()
        L = self.learner
        N = self.cost.N if self.cost.N is not None else model.n_u
        return RunConfig(
            T=L.T, K=L.K, H=L.H, eta=L.eta, m=L.m, N=N,
            alpha=self.cost.alpha, beta=self.cost.beta,
            budget_fraction=self.comparator.budget_fraction,
            variant=L.variant, predictions=L.predictions, G_P=L.G_P,
            u1=None if L.u1 is None else tuple(float(x) for x in L.u1),
        )

    def solver(self):
        return SolverOptions(tol=self.comparator.tol, max_iter=self.comparator.max_iter)

    def seeds(self):
        n = self.learner.seeds
        if n < 1:
            raise ConfigurationError("learner.seeds must be >= 1")
        s0 = self.learner.seed
        return tuple(range(s0, s0 + n))

    def plan(self, kind=None, grid=None):
        kind = kind or self.sweep.kind
        if kind is None:
            raise ConfigurationError("no sweep kind given")
        kind = SWEEP_ALIASES.get(kind, kind)
        if kind not in DEFAULT_GRIDS:
            raise ConfigurationError(f"unknown sweep kind {kind!r}")
        grid = grid if grid is not None else self.sweep.grid
        model = self.system()
        return SweepPlan(
            kind=kind,
            grid=tuple(grid) if grid else (),
            seeds=self.seeds(),
            base=self.run_config(model),
            model=model,
            disturbances=self.model.disturbance_params(),
            solver=self.solver(),
            timing=self.output.timing,
        )


def load_config(path=None, seed=None, seeds=None):
    """Read ``path`` (or defaults when None) and apply seed overrides.

    Precedence for the base seed: the ``seed`` argument, then the
    ``OCO_S2_SEED`` environment variable, then the config file.
    """
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    try:
        cfg = Config.from_dict(doc, path=None if path is None else str(path))
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    env = os.environ.get(SEED_ENV)
    if env is not None and seed is None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if seed is not None:
        cfg.learner.seed = int(seed)
    if seeds is not None:
        cfg.learner.seeds = int(seeds)
    return cfg
