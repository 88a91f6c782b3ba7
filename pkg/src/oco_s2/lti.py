"""Stable linear dynamics, synthetic disturbances and finite-memory states.

Time indices follow the 1-based convention of the model: round ``t`` runs
over ``1..T``, ``u[t-1]`` holds ``u_t`` and ``chi[t-1]`` holds ``chi_t``.
States are stored for ``t = 1..T+1`` and ``chi_1 = 0`` (zero padding of
every input before round 1).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream


class ConfigurationError(ValueError):
    """Raised for inconsistent dimensions or invalid parameters."""


def _as_matrix(M, name):
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise ConfigurationError(f"{name} must be a 2-D matrix, got shape {M.shape}")
    return M


def _is_diag(M):
    return M.shape[0] == M.shape[1] and np.count_nonzero(M - np.diag(np.diag(M))) == 0


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Plant ``chi_{t+1} = A chi_t + B u_t + E d_t`` with a fading-memory certificate.

    ``C_A`` and ``rho`` certify ``||A^k|| <= C_A rho^k``; the certificate is
    checked numerically for ``k = 0..K_check`` on construction.
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    C_A: float
    rho: float
    K_check: int = 200
    diagonal: bool = field(init=False)

    def __post_init__(self):
        A, B, E = (_as_matrix(M, n) for M, n in ((self.A, "A"), (self.B, "B"), (self.E, "E")))
        if A.shape[0] != A.shape[1]:
            raise ConfigurationError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0] or E.shape[0] != A.shape[0]:
            raise ConfigurationError(
                f"row counts of A {A.shape}, B {B.shape}, E {E.shape} disagree"
            )
        if not self.C_A >= 1.0:
            raise ConfigurationError(f"C_A must be >= 1, got {self.C_A}")
        if not 0.0 < self.rho < 1.0:
            raise ConfigurationError(f"rho must lie in (0, 1), got {self.rho}")
        for M in (A, B, E):
            M.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "diagonal", _is_diag(A) and _is_diag(B) and _is_diag(E))
        k, ratio = self.certificate_violation()
        if ratio > 1.0 + 1e-12:
            raise ConfigurationError(
                f"||A^{k}|| exceeds C_A rho^{k} by a factor {ratio:.6g}"
            )

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_d(self):
        return self.E.shape[1]

    def certificate_violation(self):
        """Worst ``(k, ||A^k|| / (C_A rho^k))`` over ``k = 0..K_check``."""
        P = np.eye(self.n_x)
        worst = (0, 0.0)
        for k in range(self.K_check + 1):
            ratio = np.linalg.norm(P, 2) / (self.C_A * self.rho**k)
            if ratio > worst[1]:
                worst = (k, ratio)
            P = P @ self.A
        return worst

    def powers(self, H):
        """Stack ``A^0, ..., A^{H-1}`` with shape ``(H, n_x, n_x)``."""
        out = np.empty((H, self.n_x, self.n_x))
        P = np.eye(self.n_x)
        for i in range(H):
            out[i] = P
            P = P @ self.A
        return out


def default_model(n=10):
    """The controlled diagonal instance ``A = 0.95 I, B = 0.1 I, E = -0.1 I``."""
    eye = np.eye(n)
    return SystemModel(A=0.95 * eye, B=0.1 * eye, E=-0.1 * eye, C_A=1.0, rho=0.95)


def state_bound(model, R, D_d):
    """Uniform bound ``D_chi = C_A / (1 - rho) (||B|| R + ||E|| D_d)`` on every state."""
    nB = np.linalg.norm(model.B, 2)
    nE = np.linalg.norm(model.E, 2)
    return model.C_A / (1.0 - model.rho) * (nB * R + nE * D_d)


def _matvec(M, x, diagonal):
    if diagonal:
        return np.diag(M) * x
    return M @ x


def _check_vec(x, n, name):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ConfigurationError(f"{name} must have shape ({n},), got {x.shape}")
    return x


def step(model, chi, u, d, *, fast=True):
    """One transition ``A chi + B u + E d``.

    ``fast=False`` forces the dense path even for diagonal models.
    """
    chi = _check_vec(chi, model.n_x, "chi")
    u = _check_vec(u, model.n_u, "u")
    d = _check_vec(d, model.n_d, "d")
    diag = fast and model.diagonal
    return (
        _matvec(model.A, chi, diag)
        + _matvec(model.B, u, diag)
        + _matvec(model.E, d, diag)
    )


@dataclass(frozen=True, eq=False)
class DisturbanceParams:
    """Generator knobs for ``d_{t,j} = a_j sin(2 pi f_j t + phi_j) + s_j(t) + clip(eps)``."""

    amplitude: tuple = (0.1, 0.3)
    frequency: tuple = (1.0 / 40.0, 1.0 / 15.0)
    n_shifts: int = 2
    shift_max: float = 0.2
    noise_std: float = 0.02
    clip: float = 0.05

    def __post_init__(self):
        lo, hi = self.amplitude
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"bad amplitude range {self.amplitude}")
        lo, hi = self.frequency
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"bad frequency range {self.frequency}")
        if self.n_shifts < 0 or self.shift_max < 0 or self.noise_std < 0 or self.clip < 0:
            raise ConfigurationError("shift count, shift size, noise and clip must be >= 0")


@dataclass(frozen=True, eq=False)
class DisturbanceSequence:
    d: np.ndarray
    D_d: float
    params: DisturbanceParams
    seed: int | None = None

    @property
    def T(self):
        return self.d.shape[0]

    @property
    def key(self):
        """Content digest used to guard against comparing runs across realizations."""
        return hashlib.sha256(np.ascontiguousarray(self.d).tobytes()).hexdigest()[:16]


def disturbances_from_array(d, params=None):
    d = np.array(d, dtype=float)
    if d.ndim != 2:
        raise ConfigurationError(f"disturbances must be T x n_d, got shape {d.shape}")
    d.setflags(write=False)
    D_d = float(np.max(np.linalg.norm(d, axis=1))) if d.size else 0.0
    return DisturbanceSequence(d=d, D_d=D_d, params=params or DisturbanceParams())


def generate_disturbances(T, n_d, seed, params=None):
    """Synthetic drifting disturbances, deterministic in ``(seed, T, params)``.

    ``D_d`` is the realized maximum Euclidean norm over the horizon.
    """
    if T < 1 or n_d < 1:
        raise ConfigurationError(f"need T >= 1 and n_d >= 1, got T={T}, n_d={n_d}")
    p = params or DisturbanceParams()
    rng = substream(seed, "disturbances", T)
    shift_rng = substream(seed, "shifts", T)

    amp = rng.uniform(*p.amplitude, size=n_d)
    freq = rng.uniform(*p.frequency, size=n_d)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_d)
    noise = np.clip(rng.normal(0.0, 1.0, size=(T, n_d)) * p.noise_std, -p.clip, p.clip)

    t = np.arange(1, T + 1)[:, None]
    d = amp * np.sin(2.0 * np.pi * freq * t + phase) + noise

    if p.n_shifts and T > 1:
        rounds = shift_rng.integers(2, T + 1, size=p.n_shifts)
        jumps = shift_rng.uniform(-p.shift_max, p.shift_max, size=(p.n_shifts, n_d))
        for r, jump in zip(rounds, jumps):
            d[r - 1 :] += jump

    d.setflags(write=False)
    D_d = float(np.max(np.linalg.norm(d, axis=1)))
    return DisturbanceSequence(d=d, D_d=D_d, params=p, seed=seed)


@dataclass(frozen=True, eq=False)
class Trajectory:
    u: np.ndarray
    chi: np.ndarray
    d: np.ndarray
    stage_costs: np.ndarray | None = None

    @property
    def T(self):
        return self.u.shape[0]

    def residual(self, model):
        """Max-abs recursion residual ``chi_{t+1} - (A chi_t + B u_t + E d_t)``."""
        pred = self.chi[:-1] @ model.A.T + self.u @ model.B.T + self.d @ model.E.T
        return float(np.max(np.abs(self.chi[1:] - pred), initial=0.0))


def _as_d(d_seq):
    return d_seq.d if isinstance(d_seq, DisturbanceSequence) else np.asarray(d_seq, dtype=float)


def simulate(model, u_seq, d_seq, cost=None):
    """Forward recursion from ``chi_1 = 0``.

    When a cost configuration is given, per-round stage costs are filled in.
    """
    u = np.array(u_seq, dtype=float)
    d = np.array(_as_d(d_seq), dtype=float)
    if u.ndim != 2 or u.shape[1] != model.n_u:
        raise ConfigurationError(f"u_seq must be T x {model.n_u}, got {u.shape}")
    if d.ndim != 2 or d.shape[1] != model.n_d:
        raise ConfigurationError(f"d_seq must be T x {model.n_d}, got {d.shape}")
    if u.shape[0] != d.shape[0]:
        raise ConfigurationError(f"u_seq has {u.shape[0]} rounds but d_seq has {d.shape[0]}")
    T = u.shape[0]
    chi = np.zeros((T + 1, model.n_x))
    if model.diagonal:
        a, b, e = np.diag(model.A), np.diag(model.B), np.diag(model.E)
        drive = b * u + e * d
        for t in range(T):
            chi[t + 1] = a * chi[t] + drive[t]
    else:
        drive = u @ model.B.T + d @ model.E.T
        for t in range(T):
            chi[t + 1] = model.A @ chi[t] + drive[t]
    costs = None if cost is None else cost.stage_costs(chi[:T], u, d)
    for arr in (u, chi, d):
        arr.setflags(write=False)
    return Trajectory(u=u, chi=chi, d=d, stage_costs=costs)


def unrolled_state(model, u_seq, d_seq, t):
    """``chi_t = sum_{i=0}^{t-1} A^i (B u_{t-1-i} + E d_{t-1-i})`` by explicit powers."""
    u = np.asarray(u_seq, dtype=float)
    d = _as_d(d_seq)
    x = np.zeros(model.n_x)
    P = np.eye(model.n_x)
    for i in range(t - 1):  # the i = t-1 term reads round 0, which is zero padded
        s = t - 1 - i
        x += P @ (model.B @ u[s - 1] + model.E @ d[s - 1])
        P = P @ model.A
    return x


def window(seq, t, H):
    """Rows for rounds ``t-H .. t-1`` in chronological order, zero padded below round 1."""
    seq = np.asarray(seq, dtype=float)
    out = np.zeros((H, seq.shape[1]))
    lo = t - H
    src_lo = max(lo, 1)
    if t - 1 >= src_lo:
        out[src_lo - lo :] = seq[src_lo - 1 : t - 1]
    return out


def _check_window(w, H, n, name):
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[1] != n:
        raise ConfigurationError(f"{name} must be H x {n}, got shape {w.shape}")
    if H is not None and w.shape[0] != H:
        raise ConfigurationError(f"{name} has {w.shape[0]} rows, expected H={H}")
    if w.shape[0] < 1:
        raise ConfigurationError(f"{name} is empty")
    return w


def finite_window_state(model, u_window, d_window, H=None):
    """State rebuilt from the ``H`` most recent inputs only.

    Windows are chronological: the last row is round ``t-1``.
    """
    uw = _check_window(u_window, H, model.n_u, "u_window")
    dw = _check_window(d_window, H, model.n_d, "d_window")
    if uw.shape[0] != dw.shape[0]:
        raise ConfigurationError("u_window and d_window lengths differ")
    H = uw.shape[0]
    P = model.powers(H)
    drive = uw[::-1] @ model.B.T + dw[::-1] @ model.E.T  # row i is round t-1-i
    return np.einsum("ijk,ik->j", P, drive)


def diagonal_surrogate_state(model, u, d_window, H=None):
    """Finite-window state with every past action replaced by the candidate ``u``."""
    u = _check_vec(u, model.n_u, "u")
    dw = _check_window(d_window, H, model.n_d, "d_window")
    H = dw.shape[0]
    P = model.powers(H)
    drive = model.B @ u + dw[::-1] @ model.E.T
    return np.einsum("ijk,ik->j", P, drive)
