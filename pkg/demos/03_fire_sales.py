"""With fire sales the clearing map has no closed form, so only PGO applies.

Two surrogates are trained on the same simulations, one for total payments
and one for total savings. Both are judged on the true system and set
against the best of an equal number of random full-budget injections.

Run: python demos/03_fire_sales.py
"""

from pgo_bailout import ExperimentConfig, ScenarioConfig, run_case2

cfg = ExperimentConfig(scenario=ScenarioConfig(n=10, m=5, seed=2))
rep = run_case2(cfg)
print(f"loss caused by the shock: {rep.baseline['tau_max']:.4f}, budget {rep.baseline['tau']:.4f}")
print(f"{'method':>14} {'Pay_all':>9} {'Save_all':>9} {'Ratio':>7}")
for name, m in sorted(rep.methods.items()):
    print(f"{name:>14} {m['pay_all']:9.4f} {m['save_all']:9.4f} {m['ratio']:7.3f}")
print("best training sample:", round(rep.extra["best_training_save_all"], 4))
print("true evaluations spent by PGO:", rep.extra["pgo_evaluations"])
