"""Interbank-only networks have an exact optimal bailout; compare it with PGO.

The linear program gives the best achievable total payment for a budget.
PGO never sees the structure: it samples the clearing map, fits a network,
and climbs the network's gradient inside the budget set.

Run: python demos/02_lp_against_pgo.py
"""

from pgo_bailout import ExperimentConfig, ScenarioConfig, TrainingConfig, run_case1

cfg = ExperimentConfig(scenario=ScenarioConfig(n=10, seed=1),
                       training=TrainingConfig(epochs=40))
rep = run_case1(cfg)
print("budget:", round(rep.baseline["tau"], 4), "-", rep.baseline["budget_source"])
print("payments without bailout:", round(rep.baseline["pay_all"], 4))
for name in ("lp", "pgo_payall"):
    m = rep.methods[name]
    print(f"{name:>11}: payments {m['pay_all']:.4f}  injection {[round(v, 3) for v in m['ctilde']]}")
print("PGO reaches", f"{100 * rep.extra['pgo_over_lp']:.2f}%", "of the optimum")
print("optimiser status per start:", rep.methods["pgo_payall"]["gpa_status"])
