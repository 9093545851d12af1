"""Command-line entry point.

Each subcommand writes flat files into ``--out``. Exit status is 0 on
success, 2 for invalid input or infeasible problems, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .clearing import BlackBox
from .core import effective_cash, load_system, save_system
from .errors import NumericalError, ValidationError
from .lp import bailout_lp
from .metrics import REPORT_COLUMNS, total_loss
from .pipeline import (ExperimentConfig, budget_sweep, build_scenario, derive_seed,
                       resolve_budget, run_case1, run_case2, sweep_csv)
from .surrogate import Dataset, Surrogate, simulate_dataset

DEFAULT_FRACTIONS = [round(0.1 * k, 1) for k in range(1, 11)]


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    over = {}
    if args.objective:
        over["objective"] = args.objective
    if args.budget is not None:
        over["budget"] = args.budget
    if args.budget_frac is not None:
        over["budget_frac"] = args.budget_frac
    if args.cap_xi is not None:
        over["cap_xi"] = args.cap_xi
    return replace(cfg, **over) if over else cfg


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(path)


def _csv(rows) -> str:
    def fmt(v):
        return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
    return "quantity,index,value\n" + "".join(f"{q},{i},{fmt(v)}\n" for q, i, v in rows)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def cmd_generate(args) -> None:
    cfg = _load_config(args)
    scn = build_scenario(cfg.scenario)
    out = _out(args) / "system.json"
    save_system(out, scn.system, scn.shock)
    print(out)


def _system_and_shock(args):
    if args.system:
        system, shock = load_system(args.system)
        if shock is None:
            raise ValidationError(f"{args.system} carries no shock vector 's'")
        return system, shock, _load_config(args)
    cfg = _load_config(args)
    scn = build_scenario(cfg.scenario)
    return scn.system, scn.shock, cfg


def cmd_clear(args) -> None:
    system, shock, cfg = _system_and_shock(args)
    box = BlackBox(system, shock, cfg.scenario.demand_spec() if system.m else None)
    ct = np.zeros(system.n) if args.ctilde is None else np.array(json.loads(args.ctilde), float)
    res = box.evaluate(ct)
    rows = [("lstar", i, v) for i, v in enumerate(res.lstar)]
    rows += [("pstar", j, v) for j, v in enumerate(res.pstar)]
    rows += [("iterations", "", res.iterations), ("residual", "", res.residual)]
    _write(_out(args) / "clearing.csv", _csv(rows))


def cmd_lp_baseline(args) -> None:
    system, shock, cfg = _system_and_shock(args)
    if system.m:
        raise ValidationError("the bailout LP applies only to systems without illiquid assets")
    box = BlackBox(system, shock)
    tau_max = total_loss(system, box.baseline, shock)
    shortfall = float(system.lbar.sum() - box.baseline.lstar.sum())
    tau, source = resolve_budget(cfg, tau_max, shortfall, "payment shortfall")
    sol = bailout_lp(system, effective_cash(system, shock), tau)
    if not sol.optimal:
        raise NumericalError(f"bailout LP ended with status {sol.status.value}")
    rows = [("status", "", sol.status.value), ("objective", "", sol.objective),
            ("tau", "", tau), ("pivots", "", sol.pivots)]
    rows += [("lstar", i, v) for i, v in enumerate(sol.extra["lstar"])]
    rows += [("ctilde", i, v) for i, v in enumerate(sol.extra["ctilde"])]
    print(f"budget: {source}")
    _write(_out(args) / "lp.csv", _csv(rows))


def cmd_dataset(args) -> None:
    cfg = _load_config(args)
    scn = build_scenario(cfg.scenario)
    tau, _ = resolve_budget(cfg, scn.tau_max)
    upper = tau if cfg.known_budget else scn.tau_max
    sets = simulate_dataset(scn.box, upper, cfg.n_random, cfg.n_zero_augmented,
                            derive_seed(cfg.seed, "dataset"), save_mode=cfg.save_mode)
    out = _out(args) / f"dataset_{cfg.objective}.csv"
    sets[cfg.objective].save_csv(out)
    print(out)


def cmd_train(args) -> None:
    cfg = _load_config(args)
    data = Dataset.load_csv(args.dataset)
    sur = Surrogate.fit(data, cfg.training)
    out = _out(args)
    sur.net.save(out / "surrogate.ckpt")
    _write(out / "surrogate.json", _dump({
        "input_scale": sur.input_scale, "target_mean": sur.target_mean,
        "target_std": sur.target_std, "objective": data.objective,
        "loss_history": sur.history, "sizes": sur.net.sizes}))


def _emit_report(args, report, name: str) -> None:
    out = _out(args)
    _write(out / f"{name}.json", report.to_json())
    _write(out / f"{name}_timings.json", report.timings_json())
    if args.trajectory and report.extra.get("trajectory_csv"):
        _write(out / "trajectory.csv", report.extra["trajectory_csv"])


def cmd_optimize(args) -> None:
    cfg = _load_config(args)
    report = run_case1(cfg) if cfg.scenario.m == 0 else run_case2(cfg)
    _emit_report(args, report, "report")


def cmd_sweep(args) -> None:
    cfg = _load_config(args)
    fractions = args.fractions or DEFAULT_FRACTIONS
    report = budget_sweep(cfg, fractions, with_random=args.with_random)
    _emit_report(args, report, "sweep_report")
    _write(_out(args) / "sweep.csv", sweep_csv(report))


def cmd_report(args) -> None:
    data = json.loads(Path(args.report).read_text())
    methods = data.get("methods", {})
    cols = list(REPORT_COLUMNS)
    lines = [",".join(["method"] + cols)]
    for name in sorted(methods):
        row = methods[name]
        lines.append(",".join([name] + ["" if row.get(c) is None else repr(float(row[c])) for c in cols]))
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(_out(args) / "methods.csv", text)
    else:
        sys.stdout.write(text)


def _common(p: argparse.ArgumentParser, out_default: str | None = "out") -> None:
    p.add_argument("--config", help="experiment configuration (JSON)")
    p.add_argument("--seed", type=int, help="scenario seed (overrides the config)")
    p.add_argument("--objective", choices=("payall", "saveall"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--budget", type=float, help="absolute budget, capped at tau_max")
    g.add_argument("--budget-frac", type=float, dest="budget_frac",
                   help="budget as a share of the reference loss")
    p.add_argument("--cap-xi", type=float, dest="cap_xi",
                   help="per-bank caps (xi / n) * tau")
    p.add_argument("--out", default=out_default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgo-bailout",
                                     description="Optimal bailouts by surrogate-gradient optimisation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random system and shock")
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("clear", help="clear a shocked system, optionally with an injection")
    _common(p)
    p.add_argument("--system", help="system JSON written by 'generate'")
    p.add_argument("--ctilde", help="injection as a JSON list")
    p.set_defaults(func=cmd_clear)

    p = sub.add_parser("lp-baseline", help="exact bailout LP (interbank-only systems)")
    _common(p)
    p.add_argument("--system", help="system JSON written by 'generate'")
    p.set_defaults(func=cmd_lp_baseline)

    p = sub.add_parser("dataset", help="simulate a training dataset")
    _common(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="fit a surrogate to a dataset CSV")
    _common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", help="full experiment; case 1 when m = 0, case 2 otherwise")
    _common(p)
    p.add_argument("--trajectory", action="store_true", help="also write the optimiser trajectory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="optimise at several budget fractions with one surrogate")
    _common(p)
    p.add_argument("--fractions", type=float, nargs="+")
    p.add_argument("--with-random", action="store_true", dest="with_random")
    p.add_argument("--trajectory", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="tabulate a report's methods as CSV")
    p.add_argument("report")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0
