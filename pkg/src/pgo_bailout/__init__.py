"""Optimal bailouts in interbank networks via surrogate-gradient optimisation.

A bailout vector goes through the clearing model (the black box), a
network surrogate is fitted to simulated (bailout, effect) pairs, and a
gradient projection method maximises the surrogate under budget and cap
constraints. Every reported effect is recomputed on the true model.
"""

from .clearing import (BlackBox, ClearingOutcome, InverseDemandSpec, clear_batch,
                       clear_en, clear_extended, liquidation, price_update)
from .core import (BailoutVector, BankingSystem, Shock, build_system, effective_cash,
                   load_system, relative_liabilities, save_system)
from .errors import *  # noqa: F401,F403
from .generator import ScenarioConfig, generate_shock, generate_system, generate_system_report
from .gpa import (GpaConfig, GpaResult, LinearConstraints, bailout_constraints, gpa_maximize,
                  max_step, projection_matrix)
from .lp import LinearProgram, LpSolution, bailout_lp, clearing_lp, solve_lp
from .metrics import (BailoutReport, bailout_report, pay_all, ratio, save_components,
                      total_loss)
from .pipeline import (ExperimentConfig, RunReport, budget_sweep, build_scenario,
                       random_search_baseline, run_capped, run_case1, run_case2)
from .surrogate import (Dataset, MlpNetwork, Surrogate, TrainingConfig, generate_dataset,
                        input_gradient, simulate_dataset, train)

__version__ = "0.1.0"
