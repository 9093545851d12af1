"""End-to-end experiments: scenario, shock, dataset, surrogate, optimiser, report.

Every metric that ends up in a report is recomputed by clearing the true
system; the surrogate only steers the optimiser. Reports carry no wall
times so that the same configuration always yields the same bytes; timings
are returned separately.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import zlib
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .clearing import BlackBox, ClearingOutcome
from .core import BailoutVector, BankingSystem, Shock, effective_cash
from .errors import SamplingStalled, ValidationError
from .generator import ScenarioConfig, generate_shock, generate_system_report
from .gpa import BEST_OF_GRID, GpaConfig, bailout_constraints, gpa_maximize
from .lp import bailout_lp
from .metrics import BailoutReport, bailout_report, pay_all, save_all_batch, total_loss
from .surrogate import Dataset, Surrogate, TrainingConfig, simulate_dataset

METHODS = ("lp", "pgo_payall", "pgo_saveall", "random_search")


def derive_seed(seed: int, label: str) -> int:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run besides code.

    ``budget`` (absolute) wins over ``budget_frac`` (share of ``tau_max``).
    With ``known_budget`` the dataset spans ``[0, tau]``, otherwise
    ``[0, tau_max]``.
    """

    scenario: ScenarioConfig = ScenarioConfig()
    training: TrainingConfig = TrainingConfig()
    gpa: GpaConfig = GpaConfig(step_rule=BEST_OF_GRID)
    objective: str = "saveall"
    budget: float | None = None
    budget_frac: float = 0.5
    cap_xi: float | None = None
    known_budget: bool = True
    n_random: int = 10000
    n_zero_augmented: int = 25000
    n_starts: int = 5
    random_samples: int | None = None
    save_mode: str = "row"

    def __post_init__(self):
        if self.objective not in ("payall", "saveall"):
            raise ValidationError("objective must be 'payall' or 'saveall'")
        if self.budget is not None and self.budget < 0:
            raise ValidationError("budget must be nonnegative")
        if not 0 <= self.budget_frac <= 1:
            raise ValidationError("budget_frac must lie in [0, 1]")
        if self.cap_xi is not None and self.cap_xi < 1:
            raise ValidationError("cap_xi below 1 cannot spend the whole budget")
        if self.n_random < 0 or self.n_zero_augmented < 0 or self.n_random + self.n_zero_augmented < 1:
            raise ValidationError("the dataset needs at least one row")
        if self.n_starts < 1:
            raise ValidationError("need at least one start point")

    @property
    def seed(self) -> int:
        return self.scenario.seed

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, scenario=replace(self.scenario, seed=seed))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["scenario"] = self.scenario.to_dict()
        d["training"] = asdict(self.training)
        d["gpa"] = asdict(self.gpa)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown experiment fields: {sorted(unknown)}")
        d = dict(d)
        if "scenario" in d:
            d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
        for key, typ in (("training", TrainingConfig), ("gpa", GpaConfig)):
            if key in d:
                sub = d[key]
                bad = set(sub) - {f.name for f in fields(typ)}
                if bad:
                    raise ValidationError(f"unknown {key} fields: {sorted(bad)}")
                d[key] = typ(**sub)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Scenario:
    """A generated system, its shock, and the no-bailout state."""

    config: ScenarioConfig
    system: BankingSystem
    shock: Shock
    box: BlackBox
    tau_max: float
    repair_factor: float
    repair_rounds: int

    @property
    def baseline(self) -> ClearingOutcome:
        return self.box.baseline

    def fingerprint(self) -> dict:
        blob = json.dumps({"system": self.system.to_dict(), "s": self.shock.s.tolist()},
                          sort_keys=True).encode()
        return {"config": self.config.to_dict(), "seed": self.config.seed,
                "repair_factor": self.repair_factor, "repair_rounds": self.repair_rounds,
                "system_sha256": hashlib.sha256(blob).hexdigest()}


def build_scenario(config: ScenarioConfig) -> Scenario:
    gen = generate_system_report(config)
    shock = generate_shock(gen.system, config)
    box = BlackBox(gen.system, shock, config.demand_spec() if config.m else None)
    tau_max = total_loss(gen.system, box.baseline, shock)
    return Scenario(config, gen.system, shock, box, tau_max, gen.repair_factor, gen.repair_rounds)


def resolve_budget(config: ExperimentConfig, tau_max: float, reference: float | None = None,
                   reference_name: str = "tau_max") -> tuple[float, str]:
    """``min(user budget, tau_max)``, or ``budget_frac * reference`` without a user budget.

    ``reference`` defaults to ``tau_max``.
    """
    if config.budget is not None:
        if config.budget > tau_max:
            return tau_max, "user budget capped at tau_max"
        return float(config.budget), "user budget"
    if reference is None:
        reference, reference_name = tau_max, "tau_max"
    return config.budget_frac * min(reference, tau_max), f"budget_frac={config.budget_frac!r} of {reference_name}"


def bank_caps(n: int, tau: float, xi: float | None, n_s: int | None = None):
    """Per-bank caps ``(xi / n_s) * tau``; ``None`` when uncapped."""
    if xi is None:
        return None
    return np.full(n, xi / (n if n_s is None else n_s) * tau)


def _feasible(x, tau, caps, tol=1e-9):
    ok = x.min() >= -tol and x.sum() <= tau + tol * (1 + tau)
    if caps is not None:
        ok = ok and np.all(x <= caps + tol * (1 + caps))
    return bool(ok)


def _clean(x, tau, caps):
    """Remove rounding-level infeasibility from an optimiser output."""
    x = np.maximum(x, 0.0)
    if caps is not None:
        x = np.minimum(x, caps)
    s = x.sum()
    if s > tau:
        x = x * (tau / s)
    return x


@dataclass
class PgoResult:
    ctilde: np.ndarray
    report: BailoutReport
    surrogate_value: float
    statuses: list
    iterations: list
    trajectory_csv: str


def _objective_value(rep: BailoutReport, objective: str) -> float:
    return rep.pay_all if objective == "payall" else rep.save_all


def _scores(scn: Scenario, C, objective: str, save_mode: str) -> np.ndarray:
    out = scn.box.evaluate_batch(C)
    if objective == "payall":
        score = out.lstar.sum(axis=1)
    else:
        base = scn.baseline
        score = save_all_batch(scn.system, base.lstar, base.pstar, out.lstar, out.pstar, C, save_mode)
    return np.where(out.converged, score, -np.inf)


def pgo_optimize(scn: Scenario, surrogate: Surrogate | None, data: Dataset | None, tau: float,
                 caps, objective: str, gpa: GpaConfig, n_starts: int = 5,
                 save_mode: str = "row", selection: str = "path") -> PgoResult:
    """Run the optimiser on the surrogate from several starts, pick by the true objective.

    Starts are the uniform allocation plus the best dataset rows that are
    feasible for ``(tau, caps)``. The optimiser works in the surrogate's
    scaled coordinates. With ``selection="path"`` every accepted iterate
    (never a start point) is cleared on the true system and the best one is
    kept, which guards against the optimiser drifting to where the surrogate
    extrapolates badly; ``"final"`` only clears each run's last iterate.
    """
    if selection not in ("path", "final"):
        raise ValidationError("selection must be 'path' or 'final'")
    n = scn.system.n
    if tau <= 0:
        zero = np.zeros(n)
        rep = bailout_report(scn.system, scn.baseline, scn.baseline, zero, 0.0, save_mode)
        return PgoResult(zero, rep, float("nan"), ["zero-budget"], [0], "")
    k = surrogate.input_scale
    cons = bailout_constraints(n, tau / k, None if caps is None else caps / k)
    starts = [np.full(n, tau / n)]
    if caps is not None:
        starts[0] = np.minimum(starts[0], caps)
    ok = [i for i in np.argsort(-data.targets, kind="stable")[: 50 * n_starts]
          if _feasible(data.inputs[i], tau, caps)]
    starts += [data.inputs[i] for i in ok[: n_starts - 1]]
    best = None
    statuses, iters = [], []
    for x0 in starts:
        res = gpa_maximize(surrogate.value, surrogate.gradient, cons, x0 / k, gpa)
        statuses.append(res.status)
        iters.append(res.iterations)
        path = res.iterates[1:] if selection == "path" and len(res.iterates) > 1 else [res.x]
        C = np.array([_clean(x * k, tau, caps) for x in path])
        score = _scores(scn, C, objective, save_mode)
        j = int(np.argmax(score))
        if best is None or score[j] > best[0]:
            best = (score[j], C[j], res, j)
    _, ct, res, j = best
    rep = bailout_report(scn.system, scn.baseline, scn.box.evaluate(ct), ct, tau, save_mode)
    return PgoResult(ct, rep, surrogate.value(ct / k), statuses, iters, res.trajectory_csv())


def _waterfill(w, total, caps):
    """Scale weights ``w`` to sum ``total`` while respecting ``caps``."""
    x = total * w / w.sum()
    if caps is None:
        return x
    if caps.sum() < total * (1 - 1e-12):
        raise SamplingStalled("caps cannot hold the budget; no feasible full-budget draw")
    fixed = np.zeros(x.size, bool)
    for _ in range(x.size):
        over = (x > caps) & ~fixed
        if not over.any():
            break
        fixed |= over
        rest = total - caps[fixed].sum()
        free = ~fixed
        x = np.where(fixed, caps, 0.0)
        if free.any() and w[free].sum() > 0:
            x[free] = rest * w[free] / w[free].sum()
    return np.minimum(x, caps)


def random_allocations(rng, n: int, count: int, tau: float, caps=None) -> np.ndarray:
    """Full-budget random injections, capped draws rescaled by water-filling."""
    W = rng.random((count, n)) + 1e-300
    if caps is None:
        return tau * W / W.sum(axis=1, keepdims=True)
    return np.array([_waterfill(w, tau, caps) for w in W])


@dataclass
class RandomSearchResult:
    ctilde: np.ndarray
    report: BailoutReport
    n_samples: int


def random_search_baseline(scn: Scenario, tau: float, caps, n_samples: int, seed: int,
                           objective: str = "saveall", save_mode: str = "row") -> RandomSearchResult:
    """Best of ``n_samples`` random full-budget injections, judged on the true system."""
    if n_samples < 1:
        raise ValidationError("need at least one sample")
    n = scn.system.n
    rng = np.random.default_rng(seed)
    C = random_allocations(rng, n, n_samples, tau, caps)
    score = _scores(scn, C, objective, save_mode)
    i = int(np.argmax(score))
    rep = bailout_report(scn.system, scn.baseline, scn.box.evaluate(C[i], count=False), C[i],
                         tau, save_mode)
    return RandomSearchResult(C[i], rep, n_samples)


def _report_dict(rep: BailoutReport, ctilde) -> dict:
    d = rep.row()
    d["ctilde"] = np.asarray(ctilde, dtype=float).tolist()
    return d


@dataclass
class RunReport:
    """Structured outcome of one experiment; see :meth:`to_json`."""

    kind: str
    fingerprint: dict
    experiment: dict
    baseline: dict
    methods: dict = field(default_factory=dict)
    surrogates: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "fingerprint": self.fingerprint,
                "experiment": self.experiment, "baseline": self.baseline,
                "methods": self.methods, "surrogates": self.surrogates, "extra": self.extra}

    def to_json(self) -> str:
        """Canonical JSON (sorted keys, NaN as ``null``); wall times excluded."""
        return json.dumps(_nan_to_none(self.as_dict()), sort_keys=True, indent=2,
                          allow_nan=False) + "\n"

    def timings_json(self) -> str:
        return json.dumps(self.timings, sort_keys=True, indent=2) + "\n"


def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, np.generic):
        return _nan_to_none(obj.item())
    return obj


def _fit(data: Dataset, config: TrainingConfig) -> Surrogate:
    return Surrogate.fit(data, config)


def _surrogate_info(sur: Surrogate) -> dict:
    return {"final_loss": sur.history[-1] if sur.history else None,
            "sizes": sur.net.sizes, "activation": sur.net.activation,
            "epochs": len(sur.history)}


class _Clock:
    def __init__(self):
        self.timings = {}

    def __call__(self, label):
        clock = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                clock.timings[label] = clock.timings.get(label, 0.0) + time.perf_counter() - self.t

        return _T()


def payment_shortfall(scn: Scenario) -> float:
    """Obligations left unpaid without a bailout, ``1 @ (lbar - l)``."""
    return float(scn.system.lbar.sum() - scn.baseline.lstar.sum())


def _prepare(config: ExperimentConfig, shortfall_basis: bool = False):
    scn = build_scenario(config.scenario)
    if shortfall_basis:
        tau, source = resolve_budget(config, scn.tau_max, payment_shortfall(scn), "payment shortfall")
    else:
        tau, source = resolve_budget(config, scn.tau_max)
    base = {"pay_all": pay_all(scn.baseline), "tau_max": scn.tau_max,
            "shortfall": payment_shortfall(scn), "tau": tau, "budget_source": source}
    return scn, tau, base


def _datasets(scn: Scenario, config: ExperimentConfig, upper: float) -> dict:
    return simulate_dataset(scn.box, upper, config.n_random, config.n_zero_augmented,
                            derive_seed(config.seed, "dataset"), save_mode=config.save_mode)


def run_case1(config: ExperimentConfig) -> RunReport:
    """Interbank-only comparison of the LP optimum with PGO on aggregate payments.

    Without a user budget, ``tau`` is ``budget_frac`` of the payment shortfall:
    a budget that is a share of ``tau_max`` usually restores every payment
    and makes the comparison trivial.
    """
    if config.scenario.m != 0:
        raise ValidationError("case 1 needs a scenario without illiquid assets")
    clock = _Clock()
    with clock("scenario"):
        scn, tau, base = _prepare(config, shortfall_basis=True)
    report = RunReport("case1", scn.fingerprint(), config.to_dict(), base)
    with clock("lp"):
        sol = bailout_lp(scn.system, effective_cash(scn.system, scn.shock), tau)
        lp_ct = _clean(sol.extra["ctilde"], tau, None)
        lp_rep = bailout_report(scn.system, scn.baseline, scn.box.evaluate(lp_ct), lp_ct,
                                tau, config.save_mode)
    report.methods["lp"] = dict(_report_dict(lp_rep, lp_ct), lp_objective=sol.objective)
    if tau <= 0:
        pgo = pgo_optimize(scn, None, None, 0.0, None, "payall", config.gpa)
    else:
        with clock("dataset"):
            data = _datasets(scn, config, tau if config.known_budget else scn.tau_max)["payall"]
        with clock("train"):
            sur = _fit(data, config.training)
        report.surrogates["payall"] = _surrogate_info(sur)
        with clock("optimize"):
            pgo = pgo_optimize(scn, sur, data, tau, None, "payall", config.gpa,
                               config.n_starts, config.save_mode)
    report.methods["pgo_payall"] = dict(_report_dict(pgo.report, pgo.ctilde),
                                        gpa_status=pgo.statuses, gpa_iterations=pgo.iterations)
    denom = lp_rep.pay_all
    report.extra["pgo_over_lp"] = pgo.report.pay_all / denom if denom > 0 else 1.0
    report.extra["trajectory_csv"] = pgo.trajectory_csv
    report.timings = clock.timings
    return report


def run_case2(config: ExperimentConfig, with_random: bool = True) -> RunReport:
    """Extended model: PGO on Pay_all and on Save_all, plus a random-search baseline."""
    if config.scenario.m < 1:
        raise ValidationError("case 2 needs a scenario with illiquid assets")
    clock = _Clock()
    with clock("scenario"):
        scn, tau, base = _prepare(config)
    report = RunReport("case2", scn.fingerprint(), config.to_dict(), base)
    caps = bank_caps(scn.system.n, tau, config.cap_xi)
    report.extra["caps"] = None if caps is None else caps.tolist()
    n_eval = config.n_random + config.n_zero_augmented
    if tau <= 0:
        zero = np.zeros(scn.system.n)
        rep = bailout_report(scn.system, scn.baseline, scn.baseline, zero, 0.0, config.save_mode)
        for m in ("pgo_payall", "pgo_saveall", "random_search"):
            report.methods[m] = _report_dict(rep, zero)
        report.timings = clock.timings
        return report
    with clock("dataset"):
        sets = _datasets(scn, config, tau if config.known_budget else scn.tau_max)
    before = scn.box.evaluations
    for obj in ("payall", "saveall"):
        with clock(f"train_{obj}"):
            sur = _fit(sets[obj], config.training)
        report.surrogates[obj] = _surrogate_info(sur)
        with clock(f"optimize_{obj}"):
            pgo = pgo_optimize(scn, sur, sets[obj], tau, caps, obj, config.gpa,
                               config.n_starts, config.save_mode)
        report.methods[f"pgo_{obj}"] = dict(_report_dict(pgo.report, pgo.ctilde),
                                            gpa_status=pgo.statuses, gpa_iterations=pgo.iterations)
        if obj == config.objective:
            report.extra["trajectory_csv"] = pgo.trajectory_csv
    pgo_evals = n_eval + (scn.box.evaluations - before) // 2
    report.extra["pgo_evaluations"] = pgo_evals
    ds = sets["saveall"]
    feas = [i for i in range(len(ds)) if _feasible(ds.inputs[i], tau, caps)]
    if feas:
        i = max(feas, key=lambda j: ds.targets[j])
        report.extra["best_training_save_all"] = float(ds.targets[i])
    else:
        report.extra["best_training_save_all"] = None
    if with_random:
        n_rs = config.random_samples or pgo_evals
        with clock("random_search"):
            rs = random_search_baseline(scn, tau, caps, n_rs, derive_seed(config.seed, "random"),
                                        "saveall", config.save_mode)
        report.methods["random_search"] = dict(_report_dict(rs.report, rs.ctilde), n_samples=n_rs)
    report.timings = clock.timings
    return report


def run_capped(config: ExperimentConfig, xi: float = 1.5) -> RunReport:
    """Same dataset and surrogate, with and without per-bank caps ``(xi / n) * tau``.

    Demonstrates that caps only change the optimiser's constraint rows.
    """
    clock = _Clock()
    with clock("scenario"):
        scn, tau, base = _prepare(config)
    report = RunReport("capped", scn.fingerprint(), config.to_dict(), base)
    caps = bank_caps(scn.system.n, tau, xi)
    report.extra["caps"] = caps.tolist()
    with clock("dataset"):
        data = _datasets(scn, config, tau if config.known_budget else scn.tau_max)["saveall"]
    with clock("train"):
        sur = _fit(data, config.training)
    report.surrogates["saveall"] = _surrogate_info(sur)
    before = scn.box.evaluations
    for label, cp in (("pgo_uncapped", None), ("pgo_capped", caps)):
        with clock(label):
            pgo = pgo_optimize(scn, sur, data, tau, cp, "saveall", config.gpa,
                               config.n_starts, config.save_mode)
        report.methods[label] = dict(_report_dict(pgo.report, pgo.ctilde),
                                     gpa_status=pgo.statuses)
    n_rs = config.random_samples or (len(data) + (scn.box.evaluations - before) // 2)
    with clock("random_search"):
        rs = random_search_baseline(scn, tau, caps, n_rs, derive_seed(config.seed, "random"),
                                    "saveall", config.save_mode)
    report.methods["random_search_capped"] = dict(_report_dict(rs.report, rs.ctilde), n_samples=n_rs)
    report.timings = clock.timings
    return report


def budget_sweep(config: ExperimentConfig, fractions, with_random: bool = False) -> RunReport:
    """One Save_all surrogate over ``[0, tau_max]``, optimised at each ``fraction * tau_max``."""
    fractions = [float(f) for f in fractions]
    if not fractions or any(not 0 < f <= 1 for f in fractions):
        raise ValidationError("fractions must lie in (0, 1]")
    clock = _Clock()
    with clock("scenario"):
        scn, _, base = _prepare(config)
    report = RunReport("sweep", scn.fingerprint(), config.to_dict(), base)
    if scn.tau_max <= 0:
        raise ValidationError("the shock destroys no value; nothing to sweep")
    with clock("dataset"):
        data = _datasets(scn, config, scn.tau_max)["saveall"]
    with clock("train"):
        sur = _fit(data, config.training)
    report.surrogates["saveall"] = _surrogate_info(sur)
    rows = []
    for f in fractions:
        tau = f * scn.tau_max
        caps = bank_caps(scn.system.n, tau, config.cap_xi)
        with clock("optimize"):
            pgo = pgo_optimize(scn, sur, data, tau, caps, "saveall", config.gpa,
                               config.n_starts, config.save_mode)
        row = {"fraction": f, "tau": tau, "ratio": pgo.report.ratio,
               "save_all": pgo.report.save_all, "pay_all": pgo.report.pay_all}
        if with_random:
            n_rs = config.random_samples or len(data)
            with clock("random_search"):
                rs = random_search_baseline(scn, tau, caps, n_rs,
                                            derive_seed(config.seed, f"random{f!r}"),
                                            "saveall", config.save_mode)
            row["random_save_all"] = rs.report.save_all
        rows.append(row)
    report.extra["sweep"] = rows
    report.timings = clock.timings
    return report


def sweep_csv(report: RunReport) -> str:
    rows = report.extra["sweep"]
    cols = list(rows[0])
    lines = [",".join(cols)] + [",".join(repr(float(r[c])) for c in cols) for r in rows]
    return "\n".join(lines) + "\n"
