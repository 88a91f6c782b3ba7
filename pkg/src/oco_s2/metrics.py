"""Regret and communication metrics, and evaluation of the regret bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lti import ConfigurationError, state_bound


def incurred_cost(trajectory, d_seq, cost):
    """``J_T = sum_t c_t(chi_t, u_t)`` over rounds ``1..T``."""
    d = np.asarray(getattr(d_seq, "d", d_seq), dtype=float)
    T = trajectory.u.shape[0]
    if d.shape[0] != T or trajectory.chi.shape[0] < T:
        raise ConfigurationError("trajectory and disturbances cover different horizons")
    return float(np.sum(cost.stage_costs(trajectory.chi[:T], trajectory.u, d)))


def comm_blk(T, K, m, n_u):
    """Synchronization scalars ``2 m n_u ceil(T / K)``."""
    for name, v in (("T", T), ("K", K), ("m", m), ("n_u", n_u)):
        if int(v) != v or v < 1:
            raise ConfigurationError(f"{name} must be a positive integer, got {v}")
    return 2 * int(m) * int(n_u) * (-(-int(T) // int(K)))


def participation_factor(N, m):
    """Finite-population factor ``(N - m) / (m (N - 1))``; zero under full participation."""
    if not 1 <= m <= N:
        raise ConfigurationError(f"need 1 <= m <= N, got m={m}, N={N}")
    if m == N:
        return 0.0
    return (N - m) / (m * (N - 1))


@dataclass(frozen=True)
class TheoryConstants:
    C_mem: float
    D_chi: float
    Lambda_blk: float
    Lambda_ext: float
    G_ext: float
    participation: float
    # Inputs reused by the bound expressions.
    C_A: float
    rho: float
    G_beta: float
    L_chi: float
    D: float


def theory_constants(model, ac, m, N, D_d):
    """Memory, state-bound and curvature constants of the regret bounds.

    ``ac`` is an :class:`~oco_s2.costs.AssumptionConstants`; ``D_d`` bounds the
    disturbance norms.
    """
    nB = float(np.linalg.norm(model.B, 2))
    C_mem = model.C_A * nB / (1.0 - model.rho) ** 2
    D_chi = state_bound(model, ac.R, D_d)
    part = participation_factor(N, m)
    Lambda_blk = 0.5 * (ac.G_beta**2 + part * ac.sigma_het2) + ac.L_chi * C_mem * ac.G_loc
    G_ext = ac.G_loc + 2.0 * ac.G_P
    Lambda_ext = 0.5 * part * ac.sigma_het2 + 0.5 * ac.L_chi * C_mem * G_ext
    return TheoryConstants(
        C_mem=C_mem,
        D_chi=D_chi,
        Lambda_blk=Lambda_blk,
        Lambda_ext=Lambda_ext,
        G_ext=G_ext,
        participation=part,
        C_A=model.C_A,
        rho=model.rho,
        G_beta=ac.G_beta,
        L_chi=ac.L_chi,
        D=ac.D,
    )


def bound_terms(c, D, V_T, eta, K, T, H, rho, variant="plain", mismatch=0.0):
    """Named terms of the pre-tuning bound; their sum is :func:`regret_bound_rhs`."""
    if not eta > 0:
        raise ConfigurationError(f"eta must be > 0, got {eta}")
    Lam = c.Lambda_blk if variant == "plain" else c.Lambda_ext
    terms = {
        "initial_distance": D**2 / (2.0 * eta),
        "comparator_drift": D / eta * V_T,
        "optimization": 2.0 * eta * K * T * Lam,
        "block_alignment": (c.G_beta * K + c.L_chi * c.C_mem) * V_T,
        "truncation": 2.0 * T * c.L_chi * c.C_A * c.D_chi * rho**H,
    }
    if variant == "prediction":
        terms["prediction_mismatch"] = 0.5 * eta * mismatch
    elif variant != "plain":
        raise ConfigurationError(f"unknown variant {variant!r}")
    return terms


def regret_bound_rhs(c, D, V_T, eta, K, T, H, rho, variant="plain", mismatch=0.0):
    """Expected dynamic-regret bound for either learner at the given step size."""
    return float(sum(bound_terms(c, D, V_T, eta, K, T, H, rho, variant, mismatch).values()))


def regret_bound_tuned(c, D, V_T, K, T):
    """Closed form after tuning ``eta = D / (2 sqrt(K T Lambda_blk))`` and ``H = ceil(log T / |log rho|)``."""
    root = math.sqrt(K * T * c.Lambda_blk)
    return 2.0 * (D + V_T) * root + (c.G_beta * K + c.L_chi * c.C_mem) * V_T + 2.0 * c.L_chi * c.C_A * c.D_chi


def regret_bound_prediction_tuned(c, D, V_T, K, T, mismatch):
    """Prediction bound at ``eta = 1/sqrt(KT)`` with the theory-sized memory."""
    root = math.sqrt(K * T)
    return (
        (0.5 * D**2 + 2.0 * c.Lambda_ext) * root
        + D * V_T * root
        + mismatch / (2.0 * root)
        + (c.G_beta * K + c.L_chi * c.C_mem) * V_T
        + 2.0 * c.L_chi * c.C_A * c.D_chi
    )


@dataclass(frozen=True)
class RegretReport:
    J_online: float
    J_comparator: float
    regret: float
    avg_regret: float
    comm_total: int
    comm_over_sqrtT: float
    pred_mismatch: float | None = None

    def as_dict(self):
        return {
            "J_online": self.J_online,
            "J_comparator": self.J_comparator,
            "final_regret": self.regret,
            "avg_regret": self.avg_regret,
            "comm_total": self.comm_total,
            "comm_over_sqrtT": self.comm_over_sqrtT,
            "pred_mismatch": self.pred_mismatch,
        }


def regret_report(online, comparator, cost, T, K, m, n_u):
    """Assemble the report for one online run against its hindsight comparator."""
    if online.disturbance_key and comparator.key and online.disturbance_key != comparator.key:
        raise ConfigurationError(
            "online run and comparator were computed on different disturbance realizations"
        )
    J_on = float(np.sum(online.trajectory.stage_costs))
    J_cmp = float(np.sum(cost.stage_costs(comparator.chi[:T], comparator.u, online.trajectory.d)))
    reg = J_on - J_cmp
    comm = comm_blk(T, K, m, n_u)
    if online.comm_total != comm:
        raise ConfigurationError(f"run counted {online.comm_total} scalars, expected {comm}")
    return RegretReport(
        J_online=J_on,
        J_comparator=J_cmp,
        regret=reg,
        avg_regret=reg / T,
        comm_total=comm,
        comm_over_sqrtT=comm / math.sqrt(T),
        pred_mismatch=online.pred_mismatch,
    )
