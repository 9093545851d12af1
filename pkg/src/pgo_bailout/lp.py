"""Dense two-phase simplex and the two interbank linear programs.

The solver is a textbook tableau method with Bland's anti-cycling rule. It
is meant as an exact, dependency-free benchmark at the scale of a few
hundred variables, not as a production LP code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import BankingSystem
from .errors import DimensionMismatch, NumericalBreakdown, ValidationError

PIVOT_TOL = 1e-9
BREAKDOWN_TOL = 1e-11
FEAS_TOL = 1e-9
MAX_PIVOTS = 200_000


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LinearProgram:
    """maximize ``c @ x`` s.t. ``A_ub @ x <= b_ub`` and ``lower <= x <= upper``."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        k = self.c.size
        if self.A_ub is None:
            self.A_ub = np.zeros((0, k))
            self.b_ub = np.zeros(0)
        self.A_ub = np.asarray(self.A_ub, dtype=float).reshape(-1, k)
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        self.lower = np.zeros(k) if self.lower is None else np.asarray(self.lower, float).copy()
        self.upper = np.full(k, np.inf) if self.upper is None else np.asarray(self.upper, float).copy()
        if self.A_ub.shape[0] != self.b_ub.size:
            raise DimensionMismatch("A_ub and b_ub row counts differ")
        if self.lower.shape != (k,) or self.upper.shape != (k,):
            raise DimensionMismatch("bounds must match the number of variables")
        for arr in (self.c, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("LP coefficients must be finite")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValidationError("bounds cannot exclude every finite value")
        if np.any(self.lower > self.upper):
            raise ValidationError("a lower bound exceeds its upper bound")

    @property
    def nvars(self) -> int:
        return self.c.size

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        v = [0.0]
        if self.b_ub.size:
            v.append(float(np.max(self.A_ub @ x - self.b_ub)))
        v.append(float(np.max(self.lower - x, initial=-np.inf)))
        v.append(float(np.max(x - self.upper, initial=-np.inf)))
        return max(v)


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None
    objective: float
    pivots: int
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Tableau:
    """Standard-form tableau for ``max c @ x, A x <= b, x >= 0``."""

    def __init__(self, A, b, c):
        m, k = A.shape
        self.m, self.k = m, k
        neg = b < 0
        n_art = int(neg.sum())
        # columns: structural k | slacks m | artificials n_art | rhs
        T = np.zeros((m + 1, k + m + n_art + 1))
        T[:m, :k] = A
        T[:m, k:k + m] = np.eye(m)
        T[:m, -1] = b
        T[:m][neg] *= -1.0
        basis = np.arange(k, k + m)
        art_rows = np.flatnonzero(neg)
        for a, r in enumerate(art_rows):
            T[r, k + m + a] = 1.0
            basis[r] = k + m + a
        self.T = T
        self.basis = basis
        self.n_art = n_art
        self.c = c
        self.pivots = 0

    def _set_objective(self, cost):
        # reduced-cost row for maximisation of cost @ x: z_j - c_j
        T = self.T
        T[-1, :] = 0.0
        T[-1, :cost.size] = -cost
        for r, j in enumerate(self.basis):
            if j < cost.size and cost[j] != 0.0:
                T[-1, :] += cost[j] * T[r, :]

    def _pivot(self, r, e):
        T = self.T
        piv = T[r, e]
        if abs(piv) < BREAKDOWN_TOL:
            raise NumericalBreakdown(f"pivot magnitude {abs(piv):.2e} below {BREAKDOWN_TOL}")
        T[r, :] /= piv
        col = T[:, e].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r, :])
        self.basis[r] = e
        self.pivots += 1
        if self.pivots > MAX_PIVOTS:
            raise NumericalBreakdown("pivot limit exceeded")

    def _run(self, ncols):
        """Bland's rule iterations over the first ``ncols`` columns. Returns False if unbounded."""
        T = self.T
        while True:
            red = T[-1, :ncols]
            cand = np.flatnonzero(red < -PIVOT_TOL)
            if cand.size == 0:
                return True
            e = int(cand[0])
            colv = T[:-1, e]
            rows = np.flatnonzero(colv > PIVOT_TOL)
            if rows.size == 0:
                return False
            ratios = T[rows, -1] / colv[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
            r = int(tied[np.argmin(self.basis[tied])])
            self._pivot(r, e)

    def solve(self):
        k, m = self.k, self.m
        ncols = k + m + self.n_art
        if self.n_art:
            cost = np.zeros(ncols)
            cost[k + m:] = -1.0
            self._set_objective(cost)
            self._run(ncols)
            if self.T[-1, -1] < -FEAS_TOL * (1.0 + np.abs(self.T[:-1, -1]).max(initial=0)):
                return Status.INFEASIBLE
            self._drive_out_artificials(k + m)
        self._set_objective(np.concatenate([self.c, np.zeros(m)]))
        if not self._run(k + m):
            return Status.UNBOUNDED
        return Status.OPTIMAL

    def _drive_out_artificials(self, nreal):
        T = self.T
        keep = np.ones(T.shape[0], dtype=bool)
        for r in range(self.m):
            if self.basis[r] >= nreal:
                row = T[r, :nreal]
                j = np.flatnonzero(np.abs(row) > PIVOT_TOL)
                if j.size:
                    self._pivot(r, int(j[0]))
                else:
                    keep[r] = False  # redundant row
        if not keep.all():
            self.T = T[keep]
            self.basis = self.basis[keep[:-1]]
            self.m = self.T.shape[0] - 1
        # artificial columns are never re-entered: phase two scans only real columns

    def primal(self):
        x = np.zeros(self.k)
        for r, j in enumerate(self.basis):
            if j < self.k:
                x[j] = self.T[r, -1]
        return x


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Two-phase dense simplex with Bland's rule.

    Variable bounds are handled by substitution: finite lower bounds are
    shifted to zero, finite upper bounds become extra rows, free variables
    are split into a difference of two nonnegative parts.
    """
    k = lp.nvars
    cols, shift, sign = [], np.zeros(k), np.ones(k)
    neg_part = {}
    A_rows, b_rows = [], []
    # column map: each original variable -> one or two standard columns
    std_index = []
    for j in range(k):
        lo, up = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            shift[j], sign[j] = lo, 1.0
        elif np.isfinite(up):
            shift[j], sign[j] = up, -1.0
        else:
            shift[j], sign[j] = 0.0, 1.0
        std_index.append(len(cols))
        cols.append(j)
        if not np.isfinite(lo) and not np.isfinite(up):
            neg_part[j] = len(cols)
            cols.append(j)
    K = len(cols)

    def to_std(row):
        out = np.zeros(K)
        for j in range(k):
            out[std_index[j]] = sign[j] * row[j]
            if j in neg_part:
                out[neg_part[j]] = -row[j]
        return out

    if lp.b_ub.size:
        A_std = np.array([to_std(r) for r in lp.A_ub]).reshape(-1, K)
        b_std = lp.b_ub - lp.A_ub @ shift
        A_rows.append(A_std)
        b_rows.append(b_std)
    ub_rows = [j for j in range(k) if np.isfinite(lp.lower[j]) and np.isfinite(lp.upper[j])]
    if ub_rows:
        U = np.zeros((len(ub_rows), K))
        for r, j in enumerate(ub_rows):
            U[r, std_index[j]] = 1.0
        A_rows.append(U)
        b_rows.append(lp.upper[ub_rows] - lp.lower[ub_rows])
    A = np.vstack(A_rows) if A_rows else np.zeros((0, K))
    b = np.concatenate(b_rows) if b_rows else np.zeros(0)
    c_std = to_std(lp.c)

    tab = _Tableau(A, b, c_std)
    status = tab.solve()
    if status is not Status.OPTIMAL:
        return LpSolution(status, None, float("nan"), tab.pivots)
    y = tab.primal()
    x = shift.copy()
    for j in range(k):
        x[j] += sign[j] * y[std_index[j]]
        if j in neg_part:
            x[j] -= y[neg_part[j]]
    x = np.clip(x, lp.lower, lp.upper)
    return LpSolution(status, x, float(lp.c @ x), tab.pivots)


def _clearing_program(system, cash, zeroed, tau=None):
    n = system.n
    nv = n if tau is None else 2 * n
    c = np.zeros(nv)
    c[:n] = 1.0
    lower = np.zeros(nv)
    upper = np.full(nv, np.inf)
    upper[:n] = np.where(zeroed, 0.0, system.lbar)
    live = np.flatnonzero(~zeroed)
    # l_i - (Pi^T l)_i - ctilde_i <= cash_i for every bank still able to pay
    G = np.zeros((live.size, nv))
    G[:, :n] = np.eye(n)[live] - system.Pi.T[live]
    if tau is not None:
        G[np.arange(live.size), n + live] = -1.0
        G = np.vstack([G, np.r_[np.zeros(n), np.ones(n)]])
        rhs = np.r_[cash[live], tau]
    else:
        rhs = cash[live]
    return LinearProgram(c, G, rhs, lower, upper)


def _zero_set_iteration(system, cash, tau=None):
    """Solve the clearing (or bailout) LP with banks of negative cash handled.

    Banks with negative cash start out forced to pay nothing; a bank is
    released once its incoming funds at the current solution are
    nonnegative. Each release keeps the previous solution feasible, so the
    objective climbs monotonically and at most ``n`` rounds are needed.
    """
    n = system.n
    zeroed = cash < 0
    total_pivots, rounds = 0, 0
    while True:
        rounds += 1
        sol = solve_lp(_clearing_program(system, cash, zeroed, tau))
        total_pivots += sol.pivots
        if not sol.optimal:
            sol.pivots = total_pivots
            return sol
        l = sol.x[:n]
        funds = cash + system.Pi.T @ l
        if tau is not None:
            funds = funds + sol.x[n:]
        release = zeroed & (funds >= -1e-12)
        if not release.any():
            sol.pivots = total_pivots
            sol.extra = {"rounds": rounds, "zeroed": np.flatnonzero(zeroed).tolist()}
            return sol
        zeroed = zeroed & ~release


def clearing_lp(system: BankingSystem, cash) -> LpSolution:
    """Greatest clearing vector as a linear program (objective ``1 @ l``).

    Primal is the payment vector. For nonnegative cash this is the classical
    program ``max 1 @ l, cash + Pi^T l >= l, 0 <= l <= lbar``.
    """
    cash = np.asarray(cash, dtype=float)
    if cash.shape != (system.n,):
        raise DimensionMismatch("cash length differs from bank count")
    return _zero_set_iteration(system, cash)


def bailout_lp(system: BankingSystem, cash_post_shock, tau: float) -> LpSolution:
    """Optimal aggregate payments under a cash-injection budget ``tau``.

    Variables are ``(l, ctilde)`` stacked; ``extra['ctilde']`` holds the
    injection. With negative post-shock cash the positive-part clearing rule
    makes the problem nonconvex; the returned value is then the better of
    the zero-set iteration and the fully covering program, both of which
    are attainable bailouts (a lower bound on the true optimum).
    """
    cash = np.asarray(cash_post_shock, dtype=float)
    if cash.shape != (system.n,):
        raise DimensionMismatch("cash length differs from bank count")
    if tau < 0:
        raise ValidationError("budget must be nonnegative")
    n = system.n
    sol = _zero_set_iteration(system, cash, float(tau))
    if np.any(cash < 0):
        covering = solve_lp(_clearing_program(system, cash, np.zeros(n, bool), float(tau)))
        if covering.optimal and (not sol.optimal or covering.objective > sol.objective):
            covering.pivots += sol.pivots
            sol = covering
    if sol.optimal:
        sol.extra = dict(sol.extra, ctilde=sol.x[n:].copy(), lstar=sol.x[:n].copy())
    return sol
