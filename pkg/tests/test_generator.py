import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pgo_bailout import ScenarioConfig, generate_shock, generate_system, generate_system_report
from pgo_bailout.errors import ValidationError


def test_two_bank_hand_trace():
    cfg = ScenarioConfig(n=2, m=0, edge_prob=1.0, theta=0.5, lambda_b=1.0,
                         wealth_low=1.0, wealth_high=1.0, seed=4)
    gen = generate_system_report(cfg)
    s = gen.system
    assert np.allclose(s.lbar, [0.5, 0.5])
    assert np.allclose(s.L, [[0, 0.5], [0.5, 0]])
    assert gen.repair_rounds == 0
    assert np.allclose(s.c, [0.5, 0.5]) and np.allclose(s.e0, [0.5, 0.5])


def test_deterministic():
    cfg = ScenarioConfig(n=20, m=4, seed=99)
    a, b = generate_system(cfg), generate_system(cfg)
    for f in ("L", "b", "A", "c"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert np.array_equal(generate_shock(a, cfg).s, generate_shock(b, cfg).s)


def test_ten_percent_shock():
    cfg = ScenarioConfig(n=10, seed=1)
    s = generate_shock(generate_system(cfg), cfg).s
    assert (s > 0).sum() == 1
    assert (s >= 0).all()


def test_shock_size():
    cfg = ScenarioConfig(n=30, seed=2, delta=0.1, shock_fraction=0.2)
    system = generate_system(cfg)
    s = generate_shock(system, cfg).s
    hit = np.flatnonzero(s)
    assert len(hit) <= math.ceil(0.2 * 30)
    assert np.allclose(s[hit], 1.1 * system.e0[hit])
    # equity after the shock is -delta * e0
    assert np.allclose(system.w0[hit] - s[hit] - system.lbar[hit], -0.1 * system.e0[hit])


@given(st.integers(0, 2**32), st.integers(2, 25), st.integers(0, 5),
       st.sampled_from(["column", "global"]))
def test_generated_invariants(seed, n, m, repair):
    cfg = ScenarioConfig(n=n, m=m, seed=seed, repair=repair)
    system = generate_system(cfg)
    assert (system.e0 >= -1e-12).all()
    assert (system.interbank_assets <= 0.9 * system.w0 + 1e-12).all()
    # interbank assets and liabilities are the same money
    assert system.L.sum() == pytest.approx(system.interbank_assets.sum())
    s = generate_shock(system, cfg).s
    hit = s > 0
    assert (system.w0[hit] - s[hit] < system.lbar[hit]).all()


def test_config_validation():
    with pytest.raises(ValidationError):
        ScenarioConfig(theta=1.0)
    with pytest.raises(ValidationError):
        ScenarioConfig(edge_prob=0.0)
    with pytest.raises(ValidationError):
        ScenarioConfig.from_dict({"n": 3, "colour": "red"})
    cfg = ScenarioConfig(n=7, m=2, seed=5)
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
