"""Per-bank caps and budget sweeps reuse one trained surrogate.

Caps only add rows to the optimiser's constraint set, so nothing is
resimulated. The sweep trains once over the whole budget range and then
optimises at each budget level.

Run: python demos/04_caps_and_budgets.py
"""

from pgo_bailout import ExperimentConfig, ScenarioConfig, budget_sweep, run_capped

cfg = ExperimentConfig(scenario=ScenarioConfig(n=10, m=5, seed=3), budget_frac=0.2,
                       known_budget=False, n_random=4000, n_zero_augmented=6000)
capped = run_capped(cfg, xi=1.5)
print("cap per bank:", round(capped.extra["caps"][0], 4))
for name, m in sorted(capped.methods.items()):
    print(f"{name:>21}: Save_all {m['save_all']:.4f}, largest injection {max(m['ctilde']):.4f}")

sweep = budget_sweep(cfg, [0.1, 0.25, 0.5, 0.75, 1.0])
print("\nshare of tau_max   Save_all   Ratio")
for row in sweep.extra["sweep"]:
    print(f"{row['fraction']:>15.2f} {row['save_all']:10.4f} {row['ratio']:7.3f}")
