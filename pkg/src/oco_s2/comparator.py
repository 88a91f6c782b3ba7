"""Offline hindsight comparator with a Euclidean path-length budget.

The program is

    min   sum_t c_t(chi_t, u_t)
    s.t.  chi_{t+1} = A chi_t + B u_t + E d_t,  chi_1 = 0
          u_t in [lo, hi]^{n_u}
          sum_{t>=2} ||u_t - u_{t-1}||_2 <= V_T

Substituting the unrolled states leaves a convex quadratic in the decisions
alone. It is solved by ADMM with two splittings: a copy of the decisions
constrained to the box, and the sequence of first differences constrained
to the l1-ball of per-step l2 norms.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import lsq_linear
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .lti import ConfigurationError, simulate

MAX_COMPONENT_VARS = 8000


def path_length(u_seq):
    """``sum_{t=2}^T ||u_t - u_{t-1}||_2``."""
    u = np.asarray(u_seq, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(u, axis=0), axis=1)))


def default_budget(d_seq, fraction=0.45):
    """``fraction * sum_{t=2}^T ||d_t - d_{t-1}||_2``."""
    return fraction * path_length(getattr(d_seq, "d", d_seq))


def project_group_l1_ball(W, radius):
    """Project rows of ``W`` so that the sum of their l2 norms is at most ``radius``.

    Norms are soft-thresholded by the sorted-threshold rule for the
    l1-ball; directions are kept.
    """
    W = np.asarray(W, dtype=float)
    r = np.linalg.norm(W, axis=1)
    if r.sum() <= radius:
        return W.copy()
    if radius <= 0:
        return np.zeros_like(W)
    s = np.sort(r)[::-1]
    cs = np.cumsum(s)
    k = np.arange(1, s.size + 1)
    theta_all = (cs - radius) / k
    rho = np.flatnonzero(s > theta_all)[-1]
    theta = theta_all[rho]
    shrunk = np.maximum(r - theta, 0.0)
    scale = np.divide(shrunk, r, out=np.zeros_like(r), where=r > 0)
    return W * scale[:, None]


@dataclass(frozen=True, eq=False)
class ComparatorProblem:
    model: object
    d: np.ndarray
    cost: object
    V_T: float
    lo: float = 0.0
    hi: float = 1.0
    key: str = ""

    def __post_init__(self):
        d = np.asarray(getattr(self.d, "d", self.d), dtype=float)
        if d.ndim != 2 or d.shape[1] != self.model.n_d:
            raise ConfigurationError(f"d must be T x {self.model.n_d}, got {d.shape}")
        if not self.V_T >= 0:
            raise ConfigurationError(f"V_T must be >= 0, got {self.V_T}")
        if self.model.n_d != self.model.n_u:
            raise ConfigurationError("the tracking term needs n_d == n_u")
        if not self.key and hasattr(self.d, "key"):
            object.__setattr__(self, "key", self.d.key)
        object.__setattr__(self, "d", d)

    @property
    def T(self):
        return self.d.shape[0]


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 100_000
    rho: float | None = None
    relax: float = 1.6
    adapt_every: int = 25
    max_refactor: int = 40
    stall_window: int = 50
    stall_tol: float = 1e-10


@dataclass(frozen=True, eq=False)
class ComparatorSolution:
    u: np.ndarray
    chi: np.ndarray
    objective: float
    iterations: int
    converged: bool
    key: str = ""


@dataclass(frozen=True)
class ComparatorDiagnostics:
    success: bool
    iterations: int
    path_length: float
    budget_slack: float
    max_dynamics_residual: float
    max_box_violation: float
    max_path_budget_violation: float
    max_relative_objective_mismatch: float


DIAGNOSTIC_COLUMNS = [f.name for f in fields(ComparatorDiagnostics)]


class _Block:
    """Dense eliminated dynamics for one decoupled group of states and decisions.

    Groups with identical ``(A_c, B_c)`` share one instance and are solved
    together as multiple right-hand sides.
    """

    def __init__(self, Ac, Bc, T):
        ns, nd = Bc.shape
        self.ns, self.nd = ns, nd
        self.n = T * nd
        if self.n > MAX_COMPONENT_VARS:
            raise ConfigurationError(
                f"coupled block with {self.n} decision variables exceeds the dense limit "
                f"{MAX_COMPONENT_VARS}"
            )
        G = np.zeros((T, ns, nd))  # G[k] = A_c^{k-1} B_c, G[0] = 0
        acc = Bc
        for k in range(1, T):
            G[k] = acc
            acc = Ac @ acc
        t = np.arange(T)[:, None]
        s = np.arange(T)[None, :]
        lag = np.where(s < t, t - s, 0)  # chi_t depends on u_s through A^{t-1-s} B for s < t
        self.Phi = G[lag].transpose(0, 2, 1, 3).reshape(T * ns, T * nd)
        Dt = np.diff(np.eye(T), axis=0)
        self.DtD = np.kron(Dt.T @ Dt, np.eye(nd))
        self.groups = []  # (states, decisions) sharing this structure


class _QP:
    """Dynamics-eliminated quadratic ``alpha/2 ||Phi x + psi||^2 + beta/2 ||x - d||^2``."""

    def __init__(self, problem):
        model, cost = problem.model, problem.cost
        T = problem.T
        self.problem = problem
        self.alpha, self.beta = cost.alpha, cost.beta
        free = simulate(model, np.zeros((T, model.n_u)), problem.d)
        self.psi = np.array(free.chi[:T])
        shared = {}
        for states, decisions in _components(model):
            if not decisions:
                continue
            Ac = model.A[np.ix_(states, states)]
            Bc = model.B[np.ix_(states, decisions)]
            sig = (Ac.shape, Bc.shape, Ac.tobytes(), Bc.tobytes())
            if sig not in shared:
                shared[sig] = _Block(Ac, Bc, T)
            shared[sig].groups.append((states, decisions))
        self.blocks = list(shared.values())
        self._factors = {}

    def _stack(self, arr, blk, which):
        """Columns ``(T * width, n_groups)`` gathering one quantity for every group of ``blk``."""
        T = arr.shape[0]
        cols = [arr[:, g[which]].reshape(T * len(g[which])) for g in blk.groups]
        return np.stack(cols, axis=1)

    def _scatter(self, out, cols, blk, which):
        T = out.shape[0]
        for k, g in enumerate(blk.groups):
            out[:, g[which]] = cols[:, k].reshape(T, len(g[which]))

    def states(self, X):
        """Full state trajectory ``chi_1..chi_T`` implied by decisions ``X``."""
        chi = self.psi.copy()
        for blk in self.blocks:
            delta = blk.Phi @ self._stack(X, blk, 1)
            cur = self._stack(chi, blk, 0)
            self._scatter(chi, cur + delta, blk, 0)
        return chi

    def objective(self, X):
        chi = self.states(X)
        return 0.5 * self.alpha * float(np.sum(chi**2)) + 0.5 * self.beta * float(
            np.sum((X - self.problem.d) ** 2)
        )

    def factor(self, blk, rho):
        key = (id(blk), rho)
        if key not in self._factors:
            Phi = blk.Phi
            K = self.alpha * Phi.T @ Phi + (self.beta + rho) * np.eye(blk.n) + rho * blk.DtD
            self._factors[key] = cho_factor(K, lower=False, check_finite=False)
        return self._factors[key]

    def linear_terms(self):
        return [
            self.alpha * blk.Phi.T @ self._stack(self.psi, blk, 0)
            - self.beta * self._stack(self.problem.d, blk, 1)
            for blk in self.blocks
        ]

    def solve(self, X, R, rho, q_terms):
        """In-place decision update ``X <- K^{-1}(R - q)`` block by block."""
        for blk, q in zip(self.blocks, q_terms):
            cols = cho_solve(self.factor(blk, rho), self._stack(R, blk, 1) - q, check_finite=False)
            self._scatter(X, cols, blk, 1)


def _components(model):
    """Groups ``(states, decisions)`` that interact through ``A`` and ``B``."""
    nx, nu = model.n_x, model.n_u
    adj = np.zeros((nx + nu, nx + nu), dtype=bool)
    adj[:nx, :nx] = model.A != 0
    adj[:nx, nx:] = model.B != 0
    adj |= adj.T
    n, labels = connected_components(csr_matrix(adj), directed=False)
    groups = []
    for c in range(n):
        members = np.flatnonzero(labels == c)
        groups.append(
            ([int(i) for i in members if i < nx], [int(i) - nx for i in members if i >= nx])
        )
    return groups


def _diff(X):
    return X[1:] - X[:-1]


def _diff_T(W, T):
    """Adjoint of the first-difference map."""
    out = np.zeros((T, W.shape[1]))
    out[1:] += W
    out[:-1] -= W
    return out


def _solve_constant(problem):
    """Best constant decision over the box, as a bounded least-squares problem."""
    model, cost, d = problem.model, problem.cost, problem.d
    T = problem.T
    free = simulate(model, np.zeros((T, model.n_u)), d)
    L = np.zeros((T, model.n_x, model.n_u))
    acc = np.zeros((model.n_x, model.n_u))
    for t in range(1, T):
        acc = model.A @ acc + model.B
        L[t] = acc  # chi_{t+1} gains sum_{k<t} A^k B from a constant u
    F = np.concatenate(
        [math.sqrt(cost.alpha) * L.reshape(-1, model.n_u), math.sqrt(cost.beta) * np.tile(np.eye(model.n_u), (T, 1))]
    )
    g = np.concatenate(
        [-math.sqrt(cost.alpha) * free.chi[:T].reshape(-1), math.sqrt(cost.beta) * d.reshape(-1)]
    )
    if not np.any(F):
        u = np.full(model.n_u, problem.lo)
    else:
        res = lsq_linear(F, g, bounds=(problem.lo, problem.hi), method="bvls", tol=1e-15)
        u = np.clip(res.x, problem.lo, problem.hi)
    return np.tile(u, (T, 1))


def _admm(qp, problem, opts):
    T, n_u = problem.T, problem.model.n_u
    lo, hi, V = problem.lo, problem.hi, problem.V_T
    q_terms = qp.linear_terms()
    rho = opts.rho
    if rho is None:
        rho = max(qp.beta, 1e-3) + qp.alpha * max(
            (float(np.mean(np.sum(b.Phi**2, axis=0))) for b in qp.blocks), default=0.0
        )

    Z = np.clip(problem.d, lo, hi)
    W = project_group_l1_ball(_diff(Z), V)
    Y = np.zeros_like(Z)  # scaled duals for x = z
    Yw = np.zeros_like(W)  # scaled duals for Dx = w
    X = Z.copy()
    n_primal = math.sqrt(Z.size + W.size)
    n_dual = math.sqrt(Z.size)
    refactors = 0
    history = []
    converged = False

    it = 0
    for it in range(1, opts.max_iter + 1):
        R = rho * (Z - Y) + rho * _diff_T(W - Yw, T)
        qp.solve(X, R, rho, q_terms)
        DX = _diff(X)
        Xh = opts.relax * X + (1 - opts.relax) * Z
        DXh = opts.relax * DX + (1 - opts.relax) * W
        Z_old, W_old = Z, W
        Z = np.clip(Xh + Y, lo, hi)
        W = project_group_l1_ball(DXh + Yw, V)
        Y = Y + Xh - Z
        Yw = Yw + DXh - W

        r_pri = math.sqrt(float(np.sum((X - Z) ** 2) + np.sum((DX - W) ** 2)))
        r_dual = rho * float(np.linalg.norm(Z - Z_old + _diff_T(W - W_old, T)))
        scale_pri = max(math.sqrt(float(np.sum(X**2) + np.sum(DX**2))), math.sqrt(float(np.sum(Z**2) + np.sum(W**2))))
        scale_dual = rho * float(np.linalg.norm(Y + _diff_T(Yw, T)))
        eps_pri = n_primal * opts.tol + opts.tol * scale_pri
        eps_dual = n_dual * opts.tol + opts.tol * scale_dual
        if r_pri <= eps_pri and r_dual <= eps_dual:
            converged = True
            break

        if it % opts.adapt_every == 0:
            history.append(qp.objective(Z))
            if len(history) * opts.adapt_every >= opts.stall_window * 2 and r_pri <= 10 * eps_pri:
                past = history[-1 - max(1, opts.stall_window // opts.adapt_every)]
                if abs(history[-1] - past) <= opts.stall_tol * max(1.0, abs(past)) and r_dual <= 10 * eps_dual:
                    converged = True
                    break
            if refactors < opts.max_refactor:
                ratio = (r_pri / eps_pri) / max(r_dual / eps_dual, 1e-300)
                if ratio > 10 or ratio < 0.1:
                    new_rho = rho * min(max(math.sqrt(ratio), 0.1), 10.0)
                    Y *= rho / new_rho
                    Yw *= rho / new_rho
                    rho = new_rho
                    refactors += 1
    return Z, it, converged


def _restore_budget(U, V, lo, hi):
    """Pull ``U`` toward a constant sequence until the path budget holds exactly."""
    p = path_length(U)
    if p <= V:
        return U
    c = np.clip(U.mean(axis=0), lo, hi)
    lam = V / p
    out = c + lam * (U - c)
    for _ in range(60):
        if path_length(out) <= V:
            break
        lam *= 1 - 1e-14
        out = c + lam * (U - c)
    return np.clip(out, lo, hi)


def solve_comparator(problem, opts=None):
    """Solve the hindsight program; returns ``(solution, diagnostics)``."""
    opts = opts or SolverOptions()
    qp = _QP(problem)
    T = problem.T
    if T == 1:
        U = np.clip(problem.d, problem.lo, problem.hi)
        iters, converged = 0, True
    elif problem.V_T == 0:
        U = _solve_constant(problem)
        iters, converged = 0, True
    else:
        U, iters, converged = _admm(qp, problem, opts)
        U = _restore_budget(U, problem.V_T, problem.lo, problem.hi)
    chi_T = qp.states(U)
    m = problem.model
    last = m.A @ chi_T[-1] + m.B @ U[-1] + m.E @ problem.d[-1]
    chi = np.vstack([chi_T, last])
    for arr in (U, chi):
        arr.setflags(write=False)
    sol = ComparatorSolution(
        u=U, chi=chi, objective=qp.objective(U), iterations=iters, converged=converged, key=problem.key
    )
    return sol, diagnose(problem, sol)


def diagnose(problem, sol):
    """Recompute residuals and the objective from the returned trajectory alone."""
    m, cost, d = problem.model, problem.cost, problem.d
    U, chi = np.asarray(sol.u), np.asarray(sol.chi)
    pred = chi[:-1] @ m.A.T + U @ m.B.T + d @ m.E.T
    dyn = max(float(np.max(np.abs(chi[1:] - pred), initial=0.0)), float(np.max(np.abs(chi[0]))))
    box = float(max(0.0, np.max(problem.lo - U), np.max(U - problem.hi)))
    p = path_length(U)
    resim = simulate(m, U, d, cost)
    J = float(np.sum(resim.stage_costs))
    mismatch = abs(sol.objective - J) / max(abs(J), 1e-300) if (J or sol.objective) else 0.0
    return ComparatorDiagnostics(
        success=bool(sol.converged),
        iterations=int(sol.iterations),
        path_length=p,
        budget_slack=problem.V_T - p,
        max_dynamics_residual=dyn,
        max_box_violation=box,
        max_path_budget_violation=max(0.0, p - problem.V_T),
        max_relative_objective_mismatch=mismatch,
    )


def aggregate_diagnostics(diags):
    """Summary row: success rate, iteration and path statistics, residual maxima."""
    diags = list(diags)
    if not diags:
        raise ValueError("no diagnostics to aggregate")
    it = np.array([d.iterations for d in diags], dtype=float)
    pl = np.array([d.path_length for d in diags])
    sl = np.array([d.budget_slack for d in diags])
    return {
        "n": len(diags),
        "success_rate": float(np.mean([d.success for d in diags])),
        "solver": "admm",
        "iterations_mean": float(it.mean()),
        "iterations_min": float(it.min()),
        "iterations_max": float(it.max()),
        "path_length_mean": float(pl.mean()),
        "path_length_min": float(pl.min()),
        "path_length_max": float(pl.max()),
        "budget_slack_mean": float(sl.mean()),
        "budget_slack_min": float(sl.min()),
        "budget_slack_max": float(sl.max()),
        "max_dynamics_residual": max(d.max_dynamics_residual for d in diags),
        "max_box_violation": max(d.max_box_violation for d in diags),
        "max_path_budget_violation": max(d.max_path_budget_violation for d in diags),
        "max_relative_objective_mismatch": max(d.max_relative_objective_mismatch for d in diags),
    }


def diagnostics_rows(items):
    """CSV text for ``(setting, seed, diagnostics)`` triples."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "seed", *DIAGNOSTIC_COLUMNS])
    for setting, seed, diag in items:
        row = asdict(diag)
        w.writerow([setting, seed, *(_fmt(row[c]) for c in DIAGNOSTIC_COLUMNS)])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return v
