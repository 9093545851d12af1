"""Random interbank systems and shocks.

The recipe: wealth drawn uniformly, total obligations a fixed fraction of
wealth, an Erdos-Renyi liability graph, a feasibility repair that keeps
interbank claims below 90% of each bank's wealth, and the residual split
between illiquid assets and cash.

The repair scales down the claims held by each over-exposed creditor
(``repair="column"``). ``repair="global"`` shrinks the whole matrix by one
factor instead, which with wealth near zero can all but erase the network.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .clearing import InverseDemandSpec
from .core import BankingSystem, Shock, build_system
from .errors import GenerationFailed, ValidationError

REPAIR_BOUND = 0.9
MAX_REPAIR_ROUNDS = 100


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 10
    m: int = 0
    edge_prob: float = 0.3
    theta: float = 0.7
    lambda_b: float = 0.7
    gamma: float = 0.5
    wealth_low: float = 0.0
    wealth_high: float = 1.0
    beta: float = 0.2
    p_min: float = 0.0
    shock_fraction: float = 0.1
    delta: float = 0.1
    repair: str = "column"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise ValidationError("need n >= 1 and m >= 0")
        for name in ("edge_prob", "lambda_b", "shock_fraction"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValidationError(f"{name} must lie in (0, 1], got {v}")
        if not 0 <= self.gamma <= 1:
            raise ValidationError("gamma must lie in [0, 1]")
        if not 0 < self.theta < 1:
            raise ValidationError("theta must lie in (0, 1)")
        if not self.wealth_low <= self.wealth_high or self.wealth_low < 0:
            raise ValidationError("need 0 <= wealth_low <= wealth_high")
        if self.beta < 0 or not 0 <= self.p_min <= 1 or self.delta < 0:
            raise ValidationError("need beta >= 0, p_min in [0, 1], delta >= 0")
        if self.repair not in ("column", "global"):
            raise ValidationError("repair must be 'column' or 'global'")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def demand_spec(self) -> InverseDemandSpec:
        return InverseDemandSpec.uniform(self.m, beta=self.beta, p_min=self.p_min)


@dataclass(frozen=True)
class GeneratedSystem:
    """A generated system plus what the repair step did to it.

    ``repair_factor`` is the smallest scaling applied to any claim.
    """

    system: BankingSystem
    repair_factor: float
    repair_rounds: int


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**64 - 1), stream])


def generate_system_report(config: ScenarioConfig) -> GeneratedSystem:
    rng = _rng(config.seed, 0)
    n, m = config.n, config.m

    w0 = rng.uniform(config.wealth_low, config.wealth_high, size=n)
    lbar = config.theta * w0
    interbank = config.lambda_b * lbar
    b = (1.0 - config.lambda_b) * lbar

    adj = rng.random((n, n)) < config.edge_prob
    np.fill_diagonal(adj, False)
    outdeg = adj.sum(axis=1)
    L = np.zeros((n, n))
    has_out = outdeg > 0
    L[has_out] = adj[has_out] * (interbank[has_out] / outdeg[has_out])[:, None]
    b = b + np.where(has_out, 0.0, interbank)

    factor, rounds = 1.0, 0
    while True:
        ib = L.sum(axis=0)
        over = ib > REPAIR_BOUND * w0
        if not over.any():
            break
        if rounds >= MAX_REPAIR_ROUNDS:
            raise GenerationFailed("interbank claims could not be brought under the bound")
        scale = np.where(over, REPAIR_BOUND * w0 / np.where(over, ib, 1.0), 1.0)
        if config.repair == "global":
            L = L * scale.min()
        else:
            L = L * scale[None, :]
        factor = min(factor, float(scale.min()))
        rounds += 1

    ib = L.sum(axis=0)
    residual = np.maximum(w0 - ib, 0.0)
    A = np.zeros((n, m))
    if m > 0:
        k = max(1, round(config.gamma * m))
        for i in range(n):
            chosen = rng.choice(m, size=k, replace=False)
            A[i, chosen] = config.gamma * residual[i] / k
        c = (1.0 - config.gamma) * residual
    else:
        c = residual
    return GeneratedSystem(build_system(L, b, A, c), factor, rounds)


def generate_system(config: ScenarioConfig) -> BankingSystem:
    """Deterministic random system for ``config`` (same seed, same bits)."""
    return generate_system_report(config).system


def generate_shock(system: BankingSystem, config: ScenarioConfig) -> Shock:
    """Push ``ceil(shock_fraction * n)`` random banks just past insolvency.

    Each selected bank loses ``(1 + delta)`` times its equity in cash.
    """
    k = math.ceil(config.shock_fraction * system.n - 1e-12)
    k = min(max(k, 1), system.n)
    rng = _rng(config.seed, 1)
    hit = rng.choice(system.n, size=k, replace=False)
    s = np.zeros(system.n)
    s[hit] = (1.0 + config.delta) * system.e0[hit]
    return Shock(s)
