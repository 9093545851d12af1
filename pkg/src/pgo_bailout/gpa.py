"""Rosen's gradient projection method for linearly constrained maximisation.

Constraints are ``A x >= b`` and ``E x = e``. At each iterate the active
inequality rows plus the equalities span the subspace the search direction
is projected out of; negative multipliers release rows from the active set.
Steps come from a coarse grid on ``[0, lambda_max]`` rather than an exact
line search, which suits objectives only available as a fitted network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InfeasibleStart, RankDeficient, ValidationError

FIRST_IMPROVEMENT = "first"
BEST_OF_GRID = "best"


@dataclass
class LinearConstraints:
    A: np.ndarray
    b: np.ndarray
    E: np.ndarray | None = None
    e: np.ndarray | None = None
    diameter: float | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        k = self.A.shape[1]
        if self.E is None:
            self.E, self.e = np.zeros((0, k)), np.zeros(0)
        self.E = np.asarray(self.E, dtype=float).reshape(-1, k)
        self.e = np.asarray(self.e, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.size or self.E.shape[0] != self.e.size:
            raise DimensionMismatch("constraint matrices and right-hand sides differ in length")

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def slack(self, x) -> np.ndarray:
        return self.A @ x - self.b

    def is_feasible(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        scale = 1.0 + np.abs(self.b)
        ok = np.all(self.slack(x) >= -tol * scale)
        if self.E.shape[0]:
            ok = ok and np.all(np.abs(self.E @ x - self.e) <= tol * (1.0 + np.abs(self.e)))
        return bool(ok)


def bailout_constraints(n: int, tau: float, caps=None) -> LinearConstraints:
    """Budget row ``-1 @ x >= -tau``, nonnegativity, and optional caps ``-x_i >= -cap_i``."""
    rows = [-np.ones((1, n)), np.eye(n)]
    rhs = [np.array([-tau]), np.zeros(n)]
    if caps is not None:
        caps = np.broadcast_to(np.asarray(caps, dtype=float), (n,))
        rows.append(-np.eye(n))
        rhs.append(-caps)
    return LinearConstraints(np.vstack(rows), np.concatenate(rhs),
                             diameter=max(tau, 1e-12) * math.sqrt(2.0))


@dataclass(frozen=True)
class GpaConfig:
    N: int = 50
    epsilon: float = 1e-8
    active_tol: float = 1e-9
    max_iter: int = 500
    step_rule: str = FIRST_IMPROVEMENT
    kkt_tol: float = 1e-6
    max_refine: int = 6
    trust_length: float = 1.0
    widen_limit: float = 1e-3

    def __post_init__(self):
        if self.N < 1 or self.epsilon <= 0:
            raise ValidationError("need N >= 1 and epsilon > 0")
        if self.step_rule not in (FIRST_IMPROVEMENT, BEST_OF_GRID):
            raise ValidationError(f"unknown step rule {self.step_rule!r}")


def independent_rows(M, tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent prefix-greedy subset of rows."""
    keep, basis = [], []
    for i, row in enumerate(np.asarray(M, dtype=float)):
        r = row.copy()
        for q in basis:
            r -= (q @ r) * q
        nr = np.linalg.norm(r)
        if nr > tol * (1.0 + np.linalg.norm(row)):
            basis.append(r / nr)
            keep.append(i)
    return np.array(keep, dtype=int)


def projection_matrix(M) -> np.ndarray:
    """``I - M^T (M M^T)^{-1} M``; identity for an empty ``M``.

    ``M`` must have independent rows (see :func:`independent_rows`).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    k = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(k)
    G = M @ M.T
    try:
        Lc = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("active constraint rows are linearly dependent") from exc
    diag = np.abs(np.diag(Lc))
    if diag.min() < 1e-7 * diag.max():
        raise RankDeficient("active constraint rows are nearly dependent")
    Y = np.linalg.solve(Lc.T, np.linalg.solve(Lc, M))
    return np.eye(k) - M.T @ Y


def _multipliers(M, grad_min):
    return np.linalg.solve(M @ M.T, M @ grad_min)


def max_step(A2, b2, x, d) -> float:
    """Largest ``lam`` keeping ``A2 (x + lam d) >= b2``; ``inf`` if unbounded."""
    A2 = np.atleast_2d(np.asarray(A2, dtype=float))
    if A2.shape[0] == 0:
        return math.inf
    rate = A2 @ d
    slack = np.maximum(A2 @ x - np.asarray(b2, dtype=float), 0.0)
    dec = rate < -1e-15 * (1.0 + np.abs(d).max())
    if not dec.any():
        return math.inf
    return float(np.min(slack[dec] / -rate[dec]))


@dataclass
class GpaResult:
    x: np.ndarray
    value: float
    status: str
    iterations: int
    trajectory: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "kkt"

    @property
    def truncated(self) -> bool:
        return self.status == "truncated"

    def trajectory_csv(self) -> str:
        lines = ["iter,objective_surrogate,step,active_set_size"]
        lines += [f"{t['iter']},{t['objective']!r},{t['step']!r},{t['active']}" for t in self.trajectory]
        return "\n".join(lines) + "\n"


def _direction(cons, x, g, config, tol=None):
    """Projected ascent direction with multiplier-driven row release.

    Rows with slack within ``tol`` (default ``active_tol``) count as active.
    Returns ``(d, n_active, kkt)``.
    """
    A, E = cons.A, cons.E
    tol = config.active_tol if tol is None else tol
    slack = cons.slack(x)
    active = list(np.flatnonzero(np.abs(slack) <= tol * (1.0 + np.abs(cons.b))))
    grad_min = -g
    n_eq = E.shape[0]
    while True:
        rows = np.vstack([E, A[active]]) if active else E
        keep = independent_rows(rows)
        # equalities come first, so a dependent equality is never kept over an inequality
        M = rows[keep]
        ineq_ids = [active[i - n_eq] for i in keep if i >= n_eq]
        P = projection_matrix(M)
        d = -P @ grad_min
        dnorm = np.abs(d).max()
        small = dnorm <= config.kkt_tol * (1.0 + np.abs(g).max())
        if M.shape[0] == 0:
            return d, 0, small
        w = _multipliers(M, grad_min)
        u = w[len(keep) - len(ineq_ids):]
        j = int(np.argmin(u)) if u.size else -1
        release = u.size and u[j] < -config.active_tol and (small or -u[j] > dnorm)
        if release:
            active = [a for a in active if a != ineq_ids[j]]
            continue
        if small:
            return d, M.shape[0], True
        # an active row that was filtered as dependent may still block d
        blocked = [a for a in active if a not in ineq_ids and A[a] @ d < -1e-12 * (1 + dnorm)]
        if blocked:
            # cannot move without leaving the set; treat as stationary on this face
            return np.zeros_like(d), M.shape[0], False
        return d, M.shape[0], False


def gpa_maximize(evaluate, gradient, constraints: LinearConstraints, x0,
                 config: GpaConfig = GpaConfig()) -> GpaResult:
    """Maximise ``evaluate`` over ``constraints`` starting from feasible ``x0``.

    Status is ``"kkt"`` at a Kuhn-Tucker point, ``"stalled"`` when no grid
    step improves by more than ``epsilon``, or ``"truncated"`` at ``max_iter``.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (constraints.dim,):
        raise DimensionMismatch("start point has the wrong dimension")
    if not constraints.is_feasible(x, config.active_tol):
        raise InfeasibleStart("start point violates the constraints")
    fx = float(evaluate(x))
    trajectory = [{"iter": 0, "objective": fx, "step": 0.0, "active": 0}]
    iterates = [x.copy()]
    trust = constraints.diameter if constraints.diameter else config.trust_length
    for k in range(1, config.max_iter + 1):
        g = np.asarray(gradient(x), dtype=float)
        tol = config.active_tol
        while True:
            d, n_act, kkt = _direction(constraints, x, g, config, tol)
            if kkt and tol == config.active_tol:
                return GpaResult(x, fx, "kkt", k, trajectory, iterates)
            step = None if kkt else _try_step(evaluate, constraints, x, d, fx, tol, trust, config)
            if step is not None or tol >= config.widen_limit:
                break
            # a nearly active row blocks every grid point: treat it as active
            tol = min(tol * 100.0, config.widen_limit)
        if step is None:
            return GpaResult(x, fx, "stalled", k, trajectory, iterates)
        lam, f_new = step
        x = x + lam * d
        fx = f_new
        trajectory.append({"iter": k, "objective": fx, "step": lam, "active": n_act})
        iterates.append(x.copy())
    return GpaResult(x, fx, "truncated", config.max_iter, trajectory, iterates)


def _try_step(evaluate, cons, x, d, fx, tol, trust, config):
    dn = np.linalg.norm(d)
    if dn == 0.0:
        return None
    inactive = cons.slack(x) > tol * (1.0 + np.abs(cons.b))
    lam_max = max_step(cons.A[inactive], cons.b[inactive], x, d)
    if not math.isfinite(lam_max):
        lam_max = trust / dn
    return _grid_step(evaluate, x, d, fx, lam_max, config)


def _grid_step(evaluate, x, d, fx, lam_max, config):
    hi = lam_max
    for _ in range(config.max_refine + 1):
        if hi <= 0:
            return None
        grid = hi * np.arange(1, config.N + 1) / config.N
        best = None
        for lam in grid:
            f = float(evaluate(x + lam * d))
            if f - fx > config.epsilon:
                if config.step_rule == FIRST_IMPROVEMENT:
                    return lam, f
                if best is None or f > best[1]:
                    best = (lam, f)
        if best is not None:
            return best
        hi = grid[0]
    return None
