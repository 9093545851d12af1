"""Clearing equilibria by Picard iteration from the top of the lattice.

Both the plain interbank clearing map and the joint payment/price map with
proportional fire sales are monotone, so iterating from ``(lbar, 1)``
produces a non-increasing sequence that converges to the greatest fixed
point. All routines work on a batch of cash vectors at once because the
dataset builder evaluates tens of thousands of bailouts per scenario.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BankingSystem, Shock, effective_cash
from .errors import DimensionMismatch, NoConvergence, ValidationError

DEFAULT_TOL = 1e-10
CHUNK = 4096


def default_max_iter(n: int) -> int:
    return 10 * n + 1000


@dataclass(frozen=True)
class InverseDemandSpec:
    """Per-asset price rule ``f_j(x) = max(p_min_j, exp(-beta_j * x / Q_j))``.

    ``supply`` holds ``Q_j``; when left as ``None`` the clearing routines
    bind it to the system's total holdings of each asset.
    """

    beta: np.ndarray
    p_min: np.ndarray
    supply: np.ndarray | None = None

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        p_min = np.atleast_1d(np.asarray(self.p_min, dtype=float))
        if beta.shape != p_min.shape:
            raise DimensionMismatch("beta and p_min differ in length")
        if np.any(beta < 0) or np.any(p_min < 0) or np.any(p_min > 1):
            raise ValidationError("need beta >= 0 and 0 <= p_min <= 1")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "p_min", p_min)
        if self.supply is not None:
            object.__setattr__(self, "supply", np.asarray(self.supply, dtype=float))

    @classmethod
    def uniform(cls, m: int, beta: float = 0.2, p_min: float = 0.0) -> "InverseDemandSpec":
        return cls(np.full(m, float(beta)), np.full(m, float(p_min)))

    @property
    def m(self) -> int:
        return self.beta.shape[0]

    def bind(self, system: BankingSystem) -> "InverseDemandSpec":
        if self.m != system.m:
            raise DimensionMismatch(f"spec covers {self.m} assets, system has {system.m}")
        if self.supply is not None:
            return self
        return InverseDemandSpec(self.beta, self.p_min, system.asset_supply)

    def price(self, sold) -> np.ndarray:
        sold = np.asarray(sold, dtype=float)
        q = np.ones(self.m) if self.supply is None else self.supply
        rate = np.divide(self.beta, q, out=np.zeros(self.m), where=q > 0)
        return np.maximum(self.p_min, np.exp(-rate * sold))


def price_update(spec: InverseDemandSpec, sold) -> np.ndarray:
    """Prices after ``sold`` units of each asset hit the market."""
    sold = np.asarray(sold, dtype=float)
    if np.any(sold < 0):
        raise ValidationError("sold quantities must be nonnegative")
    return spec.price(sold)


@dataclass(frozen=True)
class ClearingOutcome:
    lstar: np.ndarray
    pstar: np.ndarray
    iterations: int
    residual: float
    trace: list | None = field(default=None, repr=False, compare=False)


def _sale_rate(system, l, p, cash):
    """Fraction of its portfolio each bank must sell, batched over rows."""
    inflow = l @ system.Pi
    shortfall = np.maximum(system.lbar - cash - inflow, 0.0)
    port = p @ system.A.T
    return np.divide(shortfall, port, out=np.zeros_like(shortfall), where=port > 0)


def liquidation(system: BankingSystem, l, p, cash=None) -> np.ndarray:
    """Proportional liquidation matrix ``eta[i, j]`` (units of asset j sold by bank i).

    Banks with a worthless portfolio sell nothing.
    """
    cash = system.c if cash is None else np.asarray(cash, dtype=float)
    rate = _sale_rate(system, np.asarray(l, float), np.asarray(p, float), cash)
    return system.A * rate[:, None]


def _step(system, spec, l, p, cash):
    inflow = l @ system.Pi
    value = inflow + cash
    if system.m:
        value = value + p @ system.A.T
    l_new = np.minimum(np.maximum(value, 0.0), system.lbar)
    if system.m:
        rate = _sale_rate(system, l, p, cash)
        sold = np.minimum(rate, 1.0) @ system.A
        p_new = spec.price(sold)
    else:
        p_new = p
    return l_new, p_new


def _picard(system, cash, spec, tol, max_iter, trace=False):
    cash = np.atleast_2d(np.asarray(cash, dtype=float))
    B, n = cash.shape
    if n != system.n:
        raise DimensionMismatch(f"cash has {n} entries, system has {system.n} banks")
    if system.m and spec is None:
        raise ValidationError("a system with illiquid assets needs an InverseDemandSpec")
    if spec is not None and system.m:
        spec = spec.bind(system)
    l = np.tile(system.lbar, (B, 1))
    p = np.ones((B, system.m))
    iters = np.zeros(B, dtype=int)
    resid = np.full(B, np.inf)
    active = np.arange(B)
    history = [(l[0].copy(), p[0].copy())] if trace else None
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        la, pa = l[active], p[active]
        ln, pn = _step(system, spec, la, pa, cash[active])
        r = np.abs(ln - la).max(axis=1, initial=0.0)
        if system.m:
            r = np.maximum(r, np.abs(pn - pa).max(axis=1, initial=0.0))
        l[active], p[active] = ln, pn
        iters[active] = it
        resid[active] = r
        if trace:
            history.append((ln[0].copy(), pn[0].copy()))
        active = active[r > tol]
    converged = resid <= tol
    return l, p, iters, resid, converged, history


def _single(system, cash, spec, tol, max_iter, trace):
    max_iter = default_max_iter(system.n) if max_iter is None else max_iter
    l, p, iters, resid, conv, hist = _picard(system, cash, spec, tol, max_iter, trace)
    if not conv[0]:
        raise NoConvergence(f"residual {resid[0]:.3e} after {iters[0]} iterations")
    return ClearingOutcome(l[0], p[0], int(iters[0]), float(resid[0]), hist)


def clear_en(system: BankingSystem, cash, tol: float = DEFAULT_TOL,
             max_iter: int | None = None, trace: bool = False) -> ClearingOutcome:
    """Greatest clearing vector of ``l -> (Pi^T l + cash)^+ ^ lbar``.

    Illiquid holdings, if any, are ignored (valued at zero).
    """
    if system.m:
        system = _strip_assets(system)
    return _single(system, cash, None, tol, max_iter, trace)


def clear_extended(system: BankingSystem, cash, spec: InverseDemandSpec,
                   tol: float = DEFAULT_TOL, max_iter: int | None = None,
                   trace: bool = False) -> ClearingOutcome:
    """Greatest joint fixed point of payments and fire-sale prices."""
    if system.m < 1:
        raise ValidationError("extended clearing needs at least one illiquid asset")
    return _single(system, cash, spec, tol, max_iter, trace)


def _strip_assets(system: BankingSystem) -> BankingSystem:
    # frozen dataclass; rebuild a view with an empty asset block
    return BankingSystem(
        L=system.L, b=system.b, A=np.zeros((system.n, 0)), c=system.c,
        lbar=system.lbar, Pi=system.Pi, w0=system.w0, e0=system.e0,
    )


@dataclass(frozen=True)
class BatchOutcome:
    lstar: np.ndarray
    pstar: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    converged: np.ndarray

    def row(self, k: int) -> ClearingOutcome:
        return ClearingOutcome(self.lstar[k], self.pstar[k],
                               int(self.iterations[k]), float(self.residual[k]))


def clear_batch(system: BankingSystem, cash, spec: InverseDemandSpec | None = None,
                tol: float = DEFAULT_TOL, max_iter: int | None = None) -> BatchOutcome:
    """Clear many cash vectors at once; rows that fail are flagged, not raised."""
    cash = np.atleast_2d(np.asarray(cash, dtype=float))
    max_iter = default_max_iter(system.n) if max_iter is None else max_iter
    parts = []
    for start in range(0, cash.shape[0], CHUNK):
        l, p, it, r, conv, _ = _picard(system, cash[start:start + CHUNK], spec, tol, max_iter)
        parts.append((l, p, it, r, conv))
    cols = list(zip(*parts)) if parts else [[np.zeros((0, system.n))], [np.zeros((0, system.m))],
                                             [np.zeros(0, int)], [np.zeros(0)], [np.zeros(0, bool)]]
    return BatchOutcome(*(np.concatenate(c) for c in cols))


class BlackBox:
    """Bailout vector in, clearing outcome out, for one shocked system.

    This is the only doorway through which the optimisation layer sees the
    financial system. ``spec`` is ``None`` for a pure interbank model.
    """

    def __init__(self, system: BankingSystem, shock: Shock,
                 spec: InverseDemandSpec | None = None, tol: float = DEFAULT_TOL):
        if system.m and spec is None:
            raise ValidationError("a system with illiquid assets needs an InverseDemandSpec")
        self.system = system
        self.shock = shock
        self.spec = spec.bind(system) if (spec is not None and system.m) else None
        self.tol = tol
        self.cash = effective_cash(system, shock)
        self.evaluations = 0
        self._baseline = None

    @property
    def baseline(self) -> ClearingOutcome:
        if self._baseline is None:
            self._baseline = self.evaluate(np.zeros(self.system.n), count=False)
        return self._baseline

    def evaluate(self, ctilde, count: bool = True) -> ClearingOutcome:
        cash = self.cash + np.asarray(ctilde, dtype=float)
        if count:
            self.evaluations += 1
        if self.spec is None:
            return clear_en(self.system, cash, tol=self.tol)
        return clear_extended(self.system, cash, self.spec, tol=self.tol)

    def evaluate_batch(self, C) -> BatchOutcome:
        C = np.atleast_2d(np.asarray(C, dtype=float))
        self.evaluations += C.shape[0]
        return clear_batch(self.system, self.cash + C, self.spec, tol=self.tol)
