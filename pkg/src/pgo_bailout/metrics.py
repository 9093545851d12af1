"""Bailout-effect criteria: aggregate payments, loss reductions, efficiency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clearing import ClearingOutcome
from .core import BankingSystem, Shock
from .errors import DimensionMismatch, ZeroBudget

REPORT_COLUMNS = ("tau", "pay_all", "save_in_total", "save_out", "save_all", "ratio")


def pay_all(outcome: ClearingOutcome) -> float:
    return float(np.sum(outcome.lstar))


def _external_weights(system: BankingSystem, mode: str) -> np.ndarray:
    if mode == "row":
        return 1.0 - system.Pi.sum(axis=1)
    if mode == "column":
        return 1.0 - system.Pi.sum(axis=0)
    raise ValueError(f"unknown save_out mode {mode!r}")


def save_components(system: BankingSystem, baseline: ClearingOutcome,
                    rescued: ClearingOutcome, ctilde, mode: str = "row"):
    """``(save_in_total, save_out, save_all)`` of a bailout against the no-bailout state.

    ``mode="row"`` weights each bank's extra payment by the share of its
    obligations held outside the system. ``mode="column"`` is the literal
    column-sum aggregate, kept for comparison only.
    """
    ctilde = np.asarray(ctilde, dtype=float)
    dl = np.asarray(rescued.lstar) - np.asarray(baseline.lstar)
    dp = np.asarray(rescued.pstar) - np.asarray(baseline.pstar)
    if dl.shape != (system.n,) or ctilde.shape != (system.n,) or dp.shape != (system.m,):
        raise DimensionMismatch("outcomes / injection do not match the system")
    save_in = ctilde.sum() + (system.Pi.T @ dl).sum() + (system.A @ dp).sum()
    save_out = float(_external_weights(system, mode) @ dl)
    return float(save_in), save_out, float(save_in + save_out)


def save_all_batch(system: BankingSystem, base_l, base_p, L, P, C, mode: str = "row") -> np.ndarray:
    """Vectorised ``save_all`` over rows of payments ``L``, prices ``P``, injections ``C``."""
    dl = L - base_l
    dp = P - base_p
    inner = C.sum(axis=1) + dl @ system.Pi.sum(axis=1) + dp @ system.A.sum(axis=0)
    return inner + dl @ _external_weights(system, mode)


def ratio(save_all: float, tau: float) -> float:
    if tau <= 0:
        raise ZeroBudget("efficiency is undefined for a zero budget")
    return save_all / tau


def asset_values(system: BankingSystem, outcome: ClearingOutcome, cash) -> np.ndarray:
    return system.Pi.T @ outcome.lstar + system.A @ outcome.pstar + np.asarray(cash, float)


def total_loss(system: BankingSystem, shock_outcome: ClearingOutcome, s) -> float:
    """Asset value destroyed by the shock once the system has cleared (floored at 0)."""
    s = s.s if isinstance(s, Shock) else np.asarray(s, dtype=float)
    w = asset_values(system, shock_outcome, system.c - s)
    return max(0.0, float(system.w0.sum() - w.sum()))


@dataclass(frozen=True)
class BailoutReport:
    tau: float
    pay_all: float
    save_in_total: float
    save_out: float
    save_all: float
    ratio: float
    baseline: ClearingOutcome | None = None
    rescued: ClearingOutcome | None = None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}

    def csv_row(self) -> str:
        return ",".join(repr(float(getattr(self, k))) for k in REPORT_COLUMNS)


def bailout_report(system: BankingSystem, baseline: ClearingOutcome,
                   rescued: ClearingOutcome, ctilde, tau: float,
                   mode: str = "row") -> BailoutReport:
    s_in, s_out, s_all = save_components(system, baseline, rescued, ctilde, mode)
    r = ratio(s_all, tau) if tau > 0 else float("nan")
    return BailoutReport(float(tau), pay_all(rescued), s_in, s_out, s_all, r,
                         baseline, rescued)
