"""Quadratic stage cost, diagonal surrogate cost and its client decomposition.

Client ``i`` (0-based) owns a set of decision coordinates and a set of
state coordinates. Its local cost is ``N`` times its share of the
surrogate cost, so that averaging the ``N`` local costs reproduces the
surrogate exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .lti import (
    ConfigurationError,
    diagonal_surrogate_state,
    state_bound,
)

MAX_CORNER_DIM = 16


@dataclass(frozen=True)
class CostConfig:
    """Weights of ``c_t = alpha/2 ||chi||^2 + beta/2 ||u - d_t||^2`` and client ownership.

    ``ownership[i]`` lists the decision coordinates of client ``i`` and
    ``state_ownership[i]`` its state coordinates. ``None`` means client ``i``
    owns coordinate ``i`` of both.
    """

    alpha: float = 0.2
    beta: float = 0.8
    N: int = 10
    ownership: tuple | None = None
    state_ownership: tuple | None = None

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {v}")
        if self.N < 1:
            raise ConfigurationError(f"N must be >= 1, got {self.N}")
        for name in ("ownership", "state_ownership"):
            own = getattr(self, name)
            if own is not None:
                own = tuple(tuple(int(j) for j in s) for s in own)
                if len(own) != self.N:
                    raise ConfigurationError(f"{name} lists {len(own)} clients, expected N={self.N}")
                object.__setattr__(self, name, own)

    def stage_costs(self, chi, u, d):
        """Vectorized stage costs for aligned ``(T, .)`` arrays."""
        chi, u, d = (np.asarray(a, dtype=float) for a in (chi, u, d))
        return 0.5 * self.alpha * np.sum(chi**2, axis=-1) + 0.5 * self.beta * np.sum(
            (u - d) ** 2, axis=-1
        )

    def masks(self, model):
        """0/1 ownership masks ``(P, Q)`` of shapes ``(N, n_x)`` and ``(N, n_u)``."""
        if model.n_d != model.n_u:
            raise ConfigurationError(
                f"the tracking term needs n_d == n_u, got n_d={model.n_d}, n_u={model.n_u}"
            )
        Q = _partition_mask(self.ownership, self.N, model.n_u, "ownership")
        P = _partition_mask(self.state_ownership, self.N, model.n_x, "state_ownership")
        return P, Q


def _partition_mask(own, N, n, name):
    if own is None:
        if n != N:
            raise ConfigurationError(
                f"default {name} needs one coordinate per client, got n={n}, N={N}"
            )
        return np.eye(N)
    mask = np.zeros((N, n))
    for i, coords in enumerate(own):
        for j in coords:
            if not 0 <= j < n:
                raise ConfigurationError(f"{name}: coordinate {j} out of range for n={n}")
            mask[i, j] += 1
    if not np.array_equal(mask.sum(axis=0), np.ones(n)):
        raise ConfigurationError(f"{name} must partition the {n} coordinates")
    return mask


def stage_cost(chi, u, d_t, cfg):
    chi, u, d_t = (np.asarray(a, dtype=float) for a in (chi, u, d_t))
    if u.shape != d_t.shape:
        raise ConfigurationError(f"u {u.shape} and d_t {d_t.shape} differ")
    return 0.5 * cfg.alpha * float(chi @ chi) + 0.5 * cfg.beta * float((u - d_t) @ (u - d_t))


def diagonal_surrogate_cost(u, d_window, d_t, model, cfg, H=None):
    """``c_t(chibar_t(u), u)`` from a chronological disturbance window."""
    chi = diagonal_surrogate_state(model, u, d_window, H)
    return stage_cost(chi, u, d_t, cfg)


def _client_rows(cfg, model, i):
    if not 0 <= i < cfg.N:
        raise ConfigurationError(f"unknown client {i} (N={cfg.N})")
    P, Q = cfg.masks(model)
    return P[i], Q[i]


def local_surrogate_cost(i, u, d_window, d_t, model, cfg, H=None):
    p, q = _client_rows(cfg, model, i)
    u = np.asarray(u, dtype=float)
    chi = diagonal_surrogate_state(model, u, d_window, H)
    r = u - np.asarray(d_t, dtype=float)
    return cfg.N * (0.5 * cfg.alpha * float(p @ chi**2) + 0.5 * cfg.beta * float(q @ r**2))


def tracking_gain(model, H):
    """``S_H = sum_{i<H} A^i B``, the sensitivity of the surrogate state to ``u``."""
    return np.einsum("ijk,kl->jl", model.powers(H), model.B)


def local_surrogate_gradient(i, u, d_window, d_t, model, cfg, H=None):
    p, q = _client_rows(cfg, model, i)
    u = np.asarray(u, dtype=float)
    dw = np.asarray(d_window, dtype=float)
    chi = diagonal_surrogate_state(model, u, dw, H)
    S = tracking_gain(model, dw.shape[0])
    r = u - np.asarray(d_t, dtype=float)
    return cfg.N * (cfg.alpha * S.T @ (p * chi) + cfg.beta * q * r)


class Surrogate:
    """Precomputed diagonal surrogate for one disturbance realization.

    The surrogate state is affine in the candidate action,
    ``chibar_t(u) = S u + w_t`` with ``w_t = sum_{i<H} A^i E d_{t-1-i}``,
    which makes every local gradient an affine map ``M_i u + c_{i,t}``.
    """

    def __init__(self, model, cfg, H, d):
        if H < 1:
            raise ConfigurationError(f"memory length H must be >= 1, got {H}")
        d = np.asarray(getattr(d, "d", d), dtype=float)
        self.model, self.cfg, self.H = model, cfg, int(H)
        self.P, self.Q = cfg.masks(model)
        self.d = d
        self.T = d.shape[0]
        powers = model.powers(self.H)
        self.S = np.einsum("ijk,kl->jl", powers, model.B)
        AE = np.einsum("ijk,kl->ijl", powers, model.E)
        dpad = np.zeros((self.H + self.T, model.n_d))
        dpad[self.H :] = d
        w = np.zeros((self.T, model.n_x))
        for i in range(self.H):
            w += dpad[self.H - 1 - i : self.H - 1 - i + self.T] @ AE[i].T
        self.w = w
        # Affine pieces of the local gradients; c is (N, T, n_u).
        a, b, N = cfg.alpha, cfg.beta, cfg.N
        self.M = N * (
            a * np.einsum("ji,kj,jl->kil", self.S, self.P, self.S) + b * self.Q[:, None, :] * np.eye(model.n_u)
        )
        self.M_full = a * self.S.T @ self.S + b * np.eye(model.n_u)

    def local_offsets(self, t_idx=None):
        """``c_{i,t}`` for 0-based round indices ``t_idx`` (all rounds by default)."""
        w = self.w if t_idx is None else self.w[t_idx]
        d = self.d if t_idx is None else self.d[t_idx]
        a, b, N = self.cfg.alpha, self.cfg.beta, self.cfg.N
        return N * (a * np.einsum("ki,ti,il->ktl", self.P, w, self.S) - b * self.Q[:, None, :] * d[None])

    def state(self, t, u):
        return self.S @ u + self.w[t - 1]

    def cost(self, t, u):
        u = np.asarray(u, dtype=float)
        return stage_cost(self.state(t, u), u, self.d[t - 1], self.cfg)

    def local_cost(self, i, t, u):
        u = np.asarray(u, dtype=float)
        chi = self.state(t, u)
        r = u - self.d[t - 1]
        a, b = self.cfg.alpha, self.cfg.beta
        return self.cfg.N * (0.5 * a * float(self.P[i] @ chi**2) + 0.5 * b * float(self.Q[i] @ r**2))

    def local_gradients(self, t, u):
        """All clients' gradients at round ``t``, shape ``(N, n_u)``."""
        return self.block_local_gradients([t], u)

    def block_local_gradients(self, rounds, u):
        """Per-client block gradients ``sum_{t in rounds} grad c_{i,t}(u)``, shape ``(N, n_u)``."""
        idx = np.asarray(rounds, dtype=int) - 1
        if idx.size == 0:
            raise ConfigurationError("empty block")
        u = np.asarray(u, dtype=float)
        k = idx.size
        chi_sum = k * (self.S @ u) + self.w[idx].sum(axis=0)
        r_sum = k * u - self.d[idx].sum(axis=0)
        a, b, N = self.cfg.alpha, self.cfg.beta, self.cfg.N
        return N * (a * (self.P * chi_sum) @ self.S + b * self.Q * r_sum)

    def gradient(self, t, u):
        """Gradient of ``c_t(chibar_t(u), u)`` computed directly (not via clients)."""
        u = np.asarray(u, dtype=float)
        return self.cfg.alpha * self.S.T @ self.state(t, u) + self.cfg.beta * (u - self.d[t - 1])

    def block_gradient(self, rounds, u):
        """Full-population block gradient ``G_b``."""
        u = np.asarray(u, dtype=float)
        idx = np.asarray(rounds, dtype=int) - 1
        k = idx.size
        chi_sum = k * (self.S @ u) + self.w[idx].sum(axis=0)
        return self.cfg.alpha * self.S.T @ chi_sum + self.cfg.beta * (k * u - self.d[idx].sum(axis=0))

    def heterogeneity(self, t, u):
        g = self.local_gradients(t, u)
        return float(np.mean(np.sum((g - g.mean(axis=0)) ** 2, axis=1)))


@dataclass(frozen=True)
class AssumptionConstants:
    G_loc: float
    G_beta: float
    L_beta: float
    sigma_het2: float
    L_chi: float
    R: float
    D: float
    G_P: float
    D_chi: float = 0.0
    exact: bool = True


def max_sq_norm_over_box(M, C, lo=0.0, hi=1.0):
    """``max_{u in [lo, hi]^n, c in rows(C)} ||M u + c||^2``.

    The objective is a convex quadratic, so the maximum sits on a vertex.
    Separable cases (``M^T M`` diagonal) are solved coordinate-wise;
    otherwise vertices over the active columns are enumerated.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    G = M.T @ M
    if np.count_nonzero(G - np.diag(np.diag(G))) == 0:
        g = np.diag(G)
        Bc = C @ M
        at_lo = g * lo**2 + 2 * Bc * lo
        at_hi = g * hi**2 + 2 * Bc * hi
        vals = np.sum(C**2, axis=1) + np.sum(np.maximum(at_lo, at_hi), axis=1)
        return float(max(vals.max(), 0.0))
    active = np.flatnonzero(np.any(M != 0, axis=0))
    if active.size > MAX_CORNER_DIM:
        raise ValueError(
            f"vertex enumeration over {active.size} coupled coordinates is unsupported"
        )
    base = np.full(M.shape[1], lo)
    corners = np.array(list(itertools.product((lo, hi), repeat=active.size)))
    MU = (corners - lo) @ M[:, active].T + M @ base
    best = 0.0
    rows = max(1, 2**22 // (MU.size or 1))
    for start in range(0, C.shape[0], rows):
        chunk = C[start : start + rows]
        vals = np.sum((MU[None, :, :] + chunk[:, None, :]) ** 2, axis=2)
        best = max(best, float(vals.max()))
    return best


def box_radius_diameter(n_u, lo=0.0, hi=1.0):
    R = float(np.sqrt(n_u) * max(abs(lo), abs(hi)))
    D = float(np.sqrt(n_u) * (hi - lo))
    return R, D


def estimate_constants(model, cfg, H, D_d, d_seq=None, lo=0.0, hi=1.0):
    """Upper bounds for the gradient, smoothness, heterogeneity and state-Lipschitz constants.

    With ``d_seq`` the maxima are exact over the realized rounds and the box.
    Without it, only ``D_d`` is known and triangle-inequality bounds are used.
    """
    R, D = box_radius_diameter(model.n_u, lo, hi)
    D_chi = state_bound(model, R, D_d)
    L_chi = cfg.alpha * D_chi
    if cfg.alpha == 0 and cfg.beta == 0:
        return AssumptionConstants(0.0, 0.0, 0.0, 0.0, 0.0, R, D, 0.0, D_chi)

    if d_seq is not None:
        sur = Surrogate(model, cfg, H, d_seq)
    else:
        sur = Surrogate(model, cfg, H, np.zeros((1, model.n_d)))
    N = cfg.N
    M = sur.M
    M_bar = M.mean(axis=0)
    L_beta = max(float(np.linalg.norm(M[i], 2)) for i in range(N))

    if d_seq is not None:
        c = sur.local_offsets()  # (N, T, n_u)
        c_bar = c.mean(axis=0)
        G_loc2 = max(max_sq_norm_over_box(M[i], c[i], lo, hi) for i in range(N))
        G_beta2 = max_sq_norm_over_box(M_bar, c_bar, lo, hi)
        # Heterogeneity: stack the centered client maps, scaled by 1/sqrt(N).
        M_het = np.concatenate([(M[i] - M_bar) for i in range(N)]) / np.sqrt(N)
        c_het = np.concatenate([(c[i] - c_bar) for i in range(N)], axis=1) / np.sqrt(N)
        sig2 = max_sq_norm_over_box(M_het, c_het, lo, hi)
        exact = True
    else:
        W = sum(np.linalg.norm(P @ model.E, 2) for P in model.powers(H)) * D_d
        a, b = cfg.alpha, cfg.beta
        zero = np.zeros((1, model.n_u))
        loc_off = [
            N * (a * np.linalg.norm(sur.S.T @ np.diag(sur.P[i]), 2) * W + b * D_d)
            for i in range(N)
        ]
        G_loc2 = max(
            (np.sqrt(max_sq_norm_over_box(M[i], zero, lo, hi)) + loc_off[i]) ** 2 for i in range(N)
        )
        bar_off = a * np.linalg.norm(sur.S, 2) * W + b * D_d
        G_beta2 = (np.sqrt(max_sq_norm_over_box(M_bar, zero, lo, hi)) + bar_off) ** 2
        sig2 = np.mean(
            [
                (np.sqrt(max_sq_norm_over_box(M[i] - M_bar, zero, lo, hi)) + loc_off[i] + bar_off) ** 2
                for i in range(N)
            ]
        )
        exact = False
    G_beta = float(np.sqrt(G_beta2))
    return AssumptionConstants(
        G_loc=float(np.sqrt(G_loc2)),
        G_beta=G_beta,
        L_beta=L_beta,
        sigma_het2=float(sig2),
        L_chi=float(L_chi),
        R=R,
        D=D,
        G_P=G_beta,
        D_chi=float(D_chi),
        exact=exact,
    )
