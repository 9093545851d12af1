"""Clearing a small network and measuring what a bailout saves.

Run: python demos/01_clearing_and_metrics.py
"""

import numpy as np

from pgo_bailout import (InverseDemandSpec, build_system, clear_en, clear_extended,
                         save_components, ratio)

# three banks in a ring, each owes the next 1.0; bank 0 also owes 0.5 outside
L = np.array([[0, 1.0, 0], [0, 0, 1.0], [1.0, 0, 0]])
system = build_system(L, b=[0.5, 0, 0], A=np.zeros((3, 0)), c=[0.6, 0.1, 0.1])
print("nominal obligations:", system.lbar)

# after a shock bank 0 has lost its cash
cash = np.array([0.0, 0.1, 0.1])
out = clear_en(system, cash)
print("clearing payments:", out.lstar.round(4), "after", out.iterations, "iterations")

# one illiquid asset: bank 0 can sell it, but selling depresses the price
system2 = build_system(L, b=[0.5, 0, 0], A=[[1.0], [0.0], [0.0]], c=[0.6, 0.1, 0.1])
spec = InverseDemandSpec.uniform(1, beta=1.0)
fire = clear_extended(system2, cash, spec)
print("with fire sales: payments", fire.lstar.round(4), "price", fire.pstar.round(4))

# inject 0.3 into bank 0 and see how much of the loss disappears
ct = np.array([0.3, 0.0, 0.0])
rescued = clear_extended(system2, cash + ct, spec)
s_in, s_out, s_all = save_components(system2, fire, rescued, ct)
print(f"saved inside {s_in:.4f}, outside {s_out:.4f}, total {s_all:.4f}")
print(f"each unit of budget saves {ratio(s_all, ct.sum()):.3f}")
