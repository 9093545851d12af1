"""Balance-sheet data model for interbank networks.

A system is parameterised by the nominal liability matrix ``L`` (``L[i, j]``
is what bank ``i`` owes bank ``j``), external debts ``b``, illiquid holdings
``A`` (units of each asset, priced at 1 initially) and cash ``c``. Everything
else (``lbar``, ``Pi``, ``w0``, ``e0``) is derived and validated here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    InitiallyInsolvent,
    NegativeEntry,
    NonzeroDiagonal,
    ValidationError,
)

IDENTITY_RTOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def relative_liabilities(L, b) -> np.ndarray:
    """Row-normalise ``L`` by total obligations; rows with no obligations are zero."""
    L = np.asarray(L, dtype=float)
    b = np.asarray(b, dtype=float)
    lbar = L.sum(axis=1) + b
    Pi = np.zeros_like(L)
    pos = lbar > 0
    Pi[pos] = L[pos] / lbar[pos, None]
    return Pi


@dataclass(frozen=True)
class BankingSystem:
    L: np.ndarray
    b: np.ndarray
    A: np.ndarray
    c: np.ndarray
    lbar: np.ndarray = field(repr=False)
    Pi: np.ndarray = field(repr=False)
    w0: np.ndarray = field(repr=False)
    e0: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def interbank_assets(self) -> np.ndarray:
        return self.L.sum(axis=0)

    @property
    def external_share(self) -> np.ndarray:
        """Fraction of each bank's payment that goes to outside creditors."""
        return 1.0 - self.Pi.sum(axis=1)

    @property
    def asset_supply(self) -> np.ndarray:
        return self.A.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "L": self.L.ravel().tolist(),
            "b": self.b.tolist(),
            "A": self.A.ravel().tolist(),
            "c": self.c.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BankingSystem":
        n, m = int(d["n"]), int(d["m"])
        L = np.asarray(d["L"], dtype=float).reshape(n, n)
        A = np.asarray(d.get("A", []), dtype=float).reshape(n, m)
        return build_system(L, d["b"], A, d["c"])


def build_system(L, b, A, c) -> BankingSystem:
    """Validate raw balance-sheet inputs and derive ``lbar, Pi, w0, e0``.

    ``A`` may be ``None`` or an empty array for a pure interbank system.
    Raises :class:`InitiallyInsolvent` if any bank starts with negative equity.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch(f"L must be square, got shape {L.shape}")
    n = L.shape[0]
    b = np.asarray(b, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    if A is None:
        A = np.zeros((n, 0))
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        A = A.reshape(n, 0)
    if b.shape != (n,) or c.shape != (n,) or A.ndim != 2 or A.shape[0] != n:
        raise DimensionMismatch(
            f"inconsistent shapes: L {L.shape}, b {b.shape}, A {A.shape}, c {c.shape}"
        )
    for name, arr in (("L", L), ("b", b), ("A", A), ("c", c)):
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name} contains non-finite entries")
        if np.any(arr < 0):
            raise NegativeEntry(f"{name} has negative entries")
    if np.any(np.diag(L) != 0):
        raise NonzeroDiagonal("a bank cannot owe itself")

    lbar = L.sum(axis=1) + b
    Pi = relative_liabilities(L, b)
    w0 = Pi.T @ lbar + A.sum(axis=1) + c
    e0 = w0 - lbar
    tol = IDENTITY_RTOL * (1.0 + (w0.max() if n else 0.0))
    if np.any(e0 < -tol):
        bad = np.flatnonzero(e0 < -tol).tolist()
        raise InitiallyInsolvent(f"banks {bad} have negative initial equity")
    return BankingSystem(
        L=_frozen(L), b=_frozen(b), A=_frozen(A), c=_frozen(c),
        lbar=_frozen(lbar), Pi=_frozen(Pi), w0=_frozen(w0), e0=_frozen(e0),
    )


@dataclass(frozen=True)
class Shock:
    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(-1)
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise NegativeEntry("shock entries must be finite and nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @classmethod
    def zero(cls, n: int) -> "Shock":
        return cls(np.zeros(n))


@dataclass(frozen=True)
class BailoutVector:
    """A cash injection together with the feasible region it must respect."""

    ctilde: np.ndarray
    tau: float
    caps: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.ctilde, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "ctilde", x)
        if self.caps is not None:
            caps = np.asarray(self.caps, dtype=float).reshape(-1)
            caps.setflags(write=False)
            object.__setattr__(self, "caps", caps)
        if self.tau < 0:
            raise NegativeEntry("budget must be nonnegative")
        if np.any(x < 0):
            raise NegativeEntry("injections must be nonnegative")
        if x.sum() > self.tau + 1e-9 * (1.0 + self.tau):
            raise ValidationError(f"injection total {x.sum()} exceeds budget {self.tau}")
        if self.caps is not None:
            if self.caps.shape != x.shape:
                raise DimensionMismatch("caps and injection differ in length")
            if np.any(x > self.caps + 1e-9 * (1.0 + self.caps)):
                raise ValidationError("injection exceeds a per-bank cap")

    @classmethod
    def zero(cls, n: int, tau: float = 0.0) -> "BailoutVector":
        return cls(np.zeros(n), tau)


def effective_cash(system: BankingSystem, s, ctilde=None) -> np.ndarray:
    """Post-shock, post-injection cash ``c - s + ctilde``. Not clamped at zero."""
    s = s.s if isinstance(s, Shock) else np.asarray(s, dtype=float)
    if ctilde is None:
        ctilde = np.zeros(system.n)
    elif isinstance(ctilde, BailoutVector):
        ctilde = ctilde.ctilde
    ctilde = np.asarray(ctilde, dtype=float)
    if s.shape[-1] != system.n or ctilde.shape[-1] != system.n:
        raise DimensionMismatch("shock / injection length differs from bank count")
    return system.c - s + ctilde


def save_system(path, system: BankingSystem, shock: Shock | None = None) -> None:
    """Write a system (and optionally its shock) as JSON with full float precision."""
    doc = system.to_dict()
    if shock is not None:
        doc["s"] = shock.s.tolist()
    Path(path).write_text(json.dumps(doc, indent=1))


def load_system(path) -> tuple[BankingSystem, Shock | None]:
    doc = json.loads(Path(path).read_text())
    system = BankingSystem.from_dict(doc)
    shock = Shock(doc["s"]) if "s" in doc else None
    return system, shock
