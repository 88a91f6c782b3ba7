"""Block online gradient learners with sparse, partially sampled feedback.

Two variants share one block loop: the plain learner deploys its iterate
directly, the prediction-augmented learner deploys an optimistic step
``Pi(q_b - eta M_b)`` from an anchor ``q_b`` and updates the anchor with
the sampled feedback.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._rng import substream
from .costs import Surrogate
from .lti import ConfigurationError, simulate


class PredictionError(ValueError):
    """A block prediction violates ``||M_b|| <= K G_P``."""


def block_count(T, K):
    return -(-T // K)


def block_index_sets(T, K):
    """1-based rounds of every block: ``{(b-1)K+1, ..., min(bK, T)}``."""
    if T < 1 or not 1 <= K:
        raise ConfigurationError(f"need T >= 1 and K >= 1, got T={T}, K={K}")
    return [np.arange(s, min(s + K, T + 1)) for s in range(1, T + 1, K)]


def project_box(v, lo=0.0, hi=1.0):
    return np.clip(np.asarray(v, dtype=float), lo, hi)


def sample_participants(N, m, rng):
    """Uniformly random size-``m`` subset of ``{0..N-1}``, sorted."""
    if not 1 <= m <= N:
        raise ConfigurationError(f"need 1 <= m <= N, got m={m}, N={N}")
    return np.sort(rng.choice(N, size=m, replace=False))


def memory_length(T, rho):
    """Theory-sized memory ``ceil(log T / |log rho|)``, at least 1."""
    return max(1, math.ceil(math.log(T) / abs(math.log(rho))))


def tuned_params(T, K, rho, rule="simple", D=None, Lambda_blk=None):
    """Step size and memory length from one of the two tuning rules.

    ``"simple"`` gives ``eta = 1/sqrt(KT)``; ``"bound-optimal"`` gives
    ``eta = D / (2 sqrt(K T Lambda_blk))`` and needs ``D`` and ``Lambda_blk``.
    """
    if T < 1 or K < 1 or not 0 < rho < 1:
        raise ConfigurationError(f"bad tuning inputs T={T}, K={K}, rho={rho}")
    H = memory_length(T, rho)
    if rule == "simple":
        eta = 1.0 / math.sqrt(K * T)
    elif rule == "bound-optimal":
        if D is None or Lambda_blk is None or Lambda_blk <= 0:
            raise ConfigurationError("bound-optimal rule needs D and a positive Lambda_blk")
        eta = D / (2.0 * math.sqrt(K * T * Lambda_blk))
    else:
        raise ConfigurationError(f"unknown tuning rule {rule!r}")
    return eta, H


@dataclass(frozen=True)
class LearnerConfig:
    T: int = 200
    K: int = 10
    H: int = 104
    eta: float = 0.04
    m: int = 5
    N: int = 10
    u1: tuple | None = None  # None deploys the box center first
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.T < 1 or self.K < 1 or self.H < 1:
            raise ConfigurationError(f"T, K, H must be >= 1, got {self.T}, {self.K}, {self.H}")
        if not self.eta >= 0:
            raise ConfigurationError(f"eta must be >= 0, got {self.eta}")
        if not 1 <= self.m <= self.N:
            raise ConfigurationError(f"need 1 <= m <= N, got m={self.m}, N={self.N}")
        if self.u1 is not None:
            u1 = np.asarray(self.u1, dtype=float)
            if np.any(u1 < self.lo) or np.any(u1 > self.hi):
                raise ConfigurationError("initial point must lie in the box")

    @property
    def B_T(self):
        return block_count(self.T, self.K)

    def initial_point(self, n_u):
        if self.u1 is None:
            return np.full(n_u, 0.5 * (self.lo + self.hi))
        u1 = np.asarray(self.u1, dtype=float)
        if u1.shape != (n_u,):
            raise ConfigurationError(f"u1 must have shape ({n_u},), got {u1.shape}")
        return u1.copy()


@dataclass(frozen=True, eq=False)
class PredictionSequence:
    M: np.ndarray
    G_P: float

    def validate(self, K, n_u=None, B_T=None):
        M = self.M
        if M.ndim != 2 or (n_u is not None and M.shape[1] != n_u):
            raise PredictionError(f"predictions must be B_T x n_u, got shape {M.shape}")
        if B_T is not None and M.shape[0] != B_T:
            raise PredictionError(f"expected {B_T} block predictions, got {M.shape[0]}")
        norms = np.linalg.norm(M, axis=1)
        bad = np.flatnonzero(norms > K * self.G_P)
        if bad.size:
            b = bad[0]
            raise PredictionError(
                f"block {b + 1}: ||M_b|| = {norms[b]:.6g} exceeds K G_P = {K * self.G_P:.6g}"
            )
        return self


def load_predictions(path, K, G_P, n_u=None, B_T=None):
    """Read a JSON array of ``B_T`` prediction vectors and validate the norm bound."""
    with open(path) as fh:
        M = np.array(json.load(fh), dtype=float)
    return PredictionSequence(M=M, G_P=float(G_P)).validate(K, n_u, B_T)


def full_block_gradient(surrogate, rounds, u):
    """``G_b`` as the client average, the same arithmetic the mismatch metric uses."""
    return surrogate.block_local_gradients(rounds, u).mean(axis=0)


class PredictionContext:
    """What a prediction source may look at when forming ``M_b``."""

    def __init__(self, surrogate, eta, K, G_P, lo, hi):
        self.surrogate, self.eta, self.K, self.G_P = surrogate, eta, K, G_P
        self.lo, self.hi = lo, hi
        self.history = []  # (rounds, u_bar) of finished blocks


class ZeroPredictions:
    name = "zero"

    def __call__(self, b, rounds, q, ctx):
        return np.zeros_like(q)


class StaticPredictions:
    name = "static"

    def __init__(self, seq):
        self.seq = seq

    def __call__(self, b, rounds, q, ctx):
        return self.seq.M[b - 1]


class OraclePredictions:
    """Block gradient at the point it deploys; reads the upcoming block, so testing only.

    Iterates ``u <- Pi(q - eta G_b(u))`` to its floating-point limit and returns
    ``(G_b(u), u)``. The map contracts but usually ends in a two-cycle one ulp
    wide, so the deployed ``u`` agrees with ``Pi(q - eta M)`` to round-off while
    ``M = G_b(u)`` holds exactly.
    """

    name = "oracle"
    max_iter = 500

    def __call__(self, b, rounds, q, ctx):
        sur = ctx.surrogate
        u = q
        M = full_block_gradient(sur, rounds, u)
        seen = []
        for _ in range(self.max_iter):
            u = project_box(q - ctx.eta * M, ctx.lo, ctx.hi)
            nxt = full_block_gradient(sur, rounds, u)
            if np.array_equal(nxt, M) or any(np.array_equal(nxt, s) for s in seen):
                return nxt, u
            seen = [M]
            M = nxt
        return nxt, u


class PreviousBlockPredictions:
    """Full block gradient of the previous block at its deployed point."""

    name = "prev"

    def __call__(self, b, rounds, q, ctx):
        if not ctx.history:
            return np.zeros_like(q)
        prev_rounds, prev_u = ctx.history[-1]
        return full_block_gradient(ctx.surrogate, prev_rounds, prev_u)


class NoisyOraclePredictions:
    """Oracle plus isotropic Gaussian noise, rescaled onto ``||M|| <= K G_P`` when needed."""

    def __init__(self, scale, seed=0):
        if scale < 0:
            raise ConfigurationError(f"noise scale must be >= 0, got {scale}")
        self.scale = float(scale)
        self.rng = substream(seed, "predictions")
        self._oracle = OraclePredictions()
        self.name = f"noisy:{scale:g}"

    def __call__(self, b, rounds, q, ctx):
        M, u = self._oracle(b, rounds, q, ctx)
        noise = self.rng.normal(0.0, 1.0, size=M.shape)
        if self.scale == 0:
            return M, u
        M = M + self.scale * noise
        cap = ctx.K * ctx.G_P
        nrm = np.linalg.norm(M)
        if nrm > cap:
            M = M * (cap / nrm)
            while np.linalg.norm(M) > cap:  # rounding can land one ulp outside
                M = M * (1.0 - 2.0**-52)
        return M


def prediction_source(spec, seed=0):
    """Build a source from ``zero | oracle | prev | noisy:<scale>``."""
    if spec == "zero":
        return ZeroPredictions()
    if spec == "oracle":
        return OraclePredictions()
    if spec == "prev":
        return PreviousBlockPredictions()
    if isinstance(spec, str) and spec.startswith("noisy:"):
        try:
            scale = float(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigurationError(f"bad noise scale in {spec!r}") from None
        return NoisyOraclePredictions(scale, seed)
    raise ConfigurationError(f"unknown prediction source {spec!r}")


@dataclass(frozen=True, eq=False)
class RunResult:
    trajectory: object
    iterates: np.ndarray  # (B_T + 1, n_u): u_bar_b for plain, anchors q_b for the P-variant
    deployed: np.ndarray  # (B_T, n_u)
    participants: np.ndarray  # (B_T, m)
    comm_total: int
    J_T: float
    sampling_error: np.ndarray  # ||sampled - full block gradient||^2 per block
    predictions: np.ndarray | None = None
    pred_mismatch: float | None = None
    disturbance_key: str = ""

    @property
    def movements(self):
        """``||u_bar_{b+1} - u_bar_b||`` between consecutive deployed blocks."""
        return np.linalg.norm(np.diff(self.deployed, axis=0), axis=1)


def block_gradient(surrogate, rounds, u_bar, S):
    """Sampled block gradient ``(1/m) sum_{i in S} sum_{t in rounds} grad c_{i,t}(u_bar)``."""
    S = np.asarray(S, dtype=int)
    if S.size == 0:
        raise ConfigurationError("empty participant set")
    grads = surrogate.block_local_gradients(rounds, u_bar)
    return grads[S].sum(axis=0) / S.size


def _run(model, d_seq, cost, cfg, seed, predictor, G_P):
    d = getattr(d_seq, "d", d_seq)
    d = np.asarray(d, dtype=float)
    if d.shape[0] != cfg.T:
        raise ConfigurationError(f"disturbances cover {d.shape[0]} rounds, config says T={cfg.T}")
    if cost.N != cfg.N:
        raise ConfigurationError(f"cost has N={cost.N} clients, learner has N={cfg.N}")
    sur = Surrogate(model, cost, cfg.H, d)
    rng = substream(seed, "participation")
    blocks = block_index_sets(cfg.T, cfg.K)
    n_u = model.n_u

    u = np.zeros((cfg.T, n_u))
    q = cfg.initial_point(n_u)
    iterates = [q]
    deployed, parts, errs, preds = [], [], [], []
    mismatch = 0.0
    ctx = PredictionContext(sur, cfg.eta, cfg.K, G_P, cfg.lo, cfg.hi)

    for b, rounds in enumerate(blocks, start=1):
        if predictor is None:
            ub = q
        else:
            M = predictor(b, rounds, q, ctx)
            ub = None
            if isinstance(M, tuple):
                M, ub = M
            M = np.asarray(M, dtype=float)
            if np.linalg.norm(M) > cfg.K * G_P:
                raise PredictionError(
                    f"block {b}: ||M_b|| = {np.linalg.norm(M):.6g} exceeds K G_P = {cfg.K * G_P:.6g}"
                )
            preds.append(M)
            proj = project_box(q - cfg.eta * M, cfg.lo, cfg.hi)
            if ub is None:
                ub = proj
            elif np.max(np.abs(ub - proj)) > 1e-12:
                raise PredictionError(f"block {b}: proposed point is not Pi(q - eta M)")
        u[rounds - 1] = ub
        S = sample_participants(cfg.N, cfg.m, rng)
        grads = sur.block_local_gradients(rounds, ub)
        g = grads[S].sum(axis=0) / cfg.m
        G = grads.mean(axis=0)  # same arithmetic as full_block_gradient
        errs.append(float(np.sum((g - G) ** 2)))
        if predictor is not None:
            mismatch += float(np.sum((G - M) ** 2))
        q = project_box(q - cfg.eta * g, cfg.lo, cfg.hi)
        iterates.append(q)
        deployed.append(ub)
        parts.append(S)
        ctx.history.append((rounds, ub))

    traj = simulate(model, u, d, cost)
    B = len(blocks)
    key = d_seq.key if hasattr(d_seq, "key") else ""
    return RunResult(
        trajectory=traj,
        iterates=np.array(iterates),
        deployed=np.array(deployed),
        participants=np.array(parts),
        comm_total=2 * cfg.m * n_u * B,
        J_T=float(np.sum(traj.stage_costs)),
        sampling_error=np.array(errs),
        predictions=None if predictor is None else np.array(preds),
        pred_mismatch=None if predictor is None else mismatch,
        disturbance_key=key,
    )


def run_ogd(model, d_seq, cost, cfg, seed):
    """Plain block learner; ``seed`` drives the participation stream only."""
    return _run(model, d_seq, cost, cfg, seed, None, math.inf)


def run_ogd_p(model, d_seq, cost, cfg, predictions, seed, G_P=math.inf):
    """Prediction-augmented block learner.

    ``predictions`` is a :class:`PredictionSequence` (validated up front) or
    a callable source ``(b, rounds, q_b, ctx) -> M_b``; a source may also
    return ``(M_b, u_b)`` when it has settled the deployed point itself, which
    must equal ``Pi(q_b - eta M_b)`` to 1e-12. The mismatch total
    uses the full-population block gradient regardless of sampling.
    """
    if isinstance(predictions, PredictionSequence):
        G_P = predictions.G_P
        predictions.validate(cfg.K, model.n_u, cfg.B_T)
        predictions = StaticPredictions(predictions)
    return _run(model, d_seq, cost, cfg, seed, predictions, G_P)
