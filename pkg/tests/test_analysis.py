import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blindcal.analysis import (
    MODEL_SELECTION_SETS, ProbeObjective, ProbeOptimizationConfig, Table, assess, bootstrap_error_bars,
    calibration_error, loglog_slope, model_selection_sweep, normalization_methods, normalized_calibration_error,
    optimize_probe_states, param_count_benchmark, restrict_zeta, sensitivity_correlation, sensitivity_s1,
    sensitivity_s2, shot_scaling_benchmark, td_validity_sweep, zeta_grid,
)
from blindcal.error_models import XI_ACTUAL, CalibrationVector, ErrorModelSpec, PhysicalParams, zeta_to_xi
from blindcal.measurement_map import build_map
from blindcal.operators import pure_density
from blindcal.simulator import (
    NAMED_STATES, CircuitSpec, exact_channel_probabilities, prepare_state, sample_counts, target_state,
)
from blindcal.solver import SolverConfig

FAST = SolverConfig(epsilon=1e-12, max_iters=200, stall_tol=1e-8, restarts=1)


# -- calibration error -------------------------------------------------------

def test_calibration_error_examples(nine_spec):
    tau = zeta_to_xi(nine_spec, XI_ACTUAL)
    assert calibration_error(tau, tau) == 0.0
    assert calibration_error(tau.values + np.r_[5.0, np.full(9, 0.01)], tau) == pytest.approx(0.01)
    ideal = CalibrationVector.ideal(nine_spec)
    hand = (0.01 + 0.0032 + 0.01541 + 0.0017 + 0.0041
            + 0.0256 * (math.cos(math.pi / 4) + math.sin(math.pi / 4))
            + 0.0118 * (math.cos(math.pi / 8) + math.sin(math.pi / 8))) / 9
    assert calibration_error(ideal, tau) == pytest.approx(hand)
    with pytest.raises(ValueError):
        calibration_error(np.ones(3), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_calibration_error_is_metric(seed):
    r = np.random.default_rng(seed)
    a, b, c = (r.normal(size=10) for _ in range(3))
    assert calibration_error(a, b) >= 0
    assert calibration_error(a, b) == pytest.approx(calibration_error(b, a))
    assert calibration_error(a, b) <= calibration_error(a, c) + calibration_error(c, b) + 1e-12


def test_normalized_error(nine_spec):
    tau = zeta_to_xi(nine_spec, XI_ACTUAL)
    ideal = CalibrationVector.ideal(nine_spec)
    assert normalized_calibration_error(ideal, tau) == pytest.approx(1.0)
    assert normalized_calibration_error(tau, ideal) == pytest.approx(calibration_error(tau, ideal))


def test_loglog_slope():
    x = np.array([1e2, 1e3, 1e4])
    assert loglog_slope(x, 3 * x**-0.5) == pytest.approx(-0.5)


# -- assess ------------------------------------------------------------------

def test_assess_candidates(nine_map, nine_spec):
    psi = target_state(NAMED_STATES["OS1"])
    tau = zeta_to_xi(nine_spec, XI_ACTUAL)
    y = exact_channel_probabilities(XI_ACTUAL, pure_density(psi))
    out = assess(nine_map, y, {"direct": tau}, psi, tau=tau)
    assert out["standard"].td_delta == 0.0
    assert out["direct"].td_target < out["standard"].td_target
    assert out["direct"].E == 0.0
    assert out["direct"].dominant_eigenvalue > 0.95
    assert set(out["direct"].to_row()) == {"candidate", "E", "td_target", "td_delta", "dominant_eigenvalue"}


def test_assess_true_calibration_never_hurts(nine_map, nine_spec):
    tau = zeta_to_xi(nine_spec, XI_ACTUAL)
    for name in ("OS1", "OS2", "OS3", "OS4", "OS5", "OS6"):
        psi = target_state(NAMED_STATES[name])
        y = exact_channel_probabilities(XI_ACTUAL, pure_density(psi))
        out = assess(nine_map, y, {"direct": tau}, psi)
        assert out["direct"].td_target <= out["standard"].td_target + 1e-6, name


def test_assess_uncalibrated_data_all_agree(nine_map, nine_spec):
    psi = target_state(NAMED_STATES["OS2"])
    data = sample_counts(exact_channel_probabilities(PhysicalParams(), pure_density(psi)), 2000, seed=1)
    out = assess(nine_map, data, {"direct": CalibrationVector.ideal(nine_spec),
                                  "blind": zeta_to_xi(nine_spec, XI_ACTUAL.scaled(0.1))}, psi)
    tds = [a.td_target for a in out.values()]
    assert max(tds) - min(tds) < 0.02


# -- sensitivities -----------------------------------------------------------

def test_sensitivities_vanish_at_ideal(nine_map, nine_spec):
    rho = pure_density(target_state(NAMED_STATES["OS1"]))
    ideal = CalibrationVector.ideal(nine_spec)
    assert sensitivity_s1(nine_map, ideal, rho) == pytest.approx(0, abs=1e-14)
    s2 = sensitivity_s2(nine_map, ideal, rho)
    assert s2.value == pytest.approx(0, abs=1e-10)
    assert not s2.ill_conditioned


def test_s1_linear_in_errors(nine_map, nine_spec):
    rho = pure_density(target_state(NAMED_STATES["OS1"]))
    tau = zeta_to_xi(nine_spec, XI_ACTUAL).values
    base = np.r_[1.0, np.zeros(9)]
    s = [sensitivity_s1(nine_map, base + c * (tau - base), rho) for c in (1, 2, 4)]
    assert s[1] == pytest.approx(2 * s[0]) and s[2] == pytest.approx(4 * s[0])
    assert sensitivity_s2(nine_map, tau, rho).value > 0


def test_sensitivity_correlation_reports_spearman(nine_spec):
    states = [NAMED_STATES[k] for k in ("OS1", "RP1", "RP2", "+++")]
    table = sensitivity_correlation(nine_spec, states, config=FAST, shots=500)
    assert len(table.rows) == 4
    assert -1 <= table.meta["spearman_s1"] <= 1
    assert -1 <= table.meta["spearman_s2"] <= 1


# -- benchmarks --------------------------------------------------------------

def test_shot_scaling_small_run(tmp_path):
    trials, summary = shot_scaling_benchmark(shot_grid=(200, 2000), trials=2, config=FAST, seed=3)
    assert len(trials.rows) == 4 and len(summary.rows) == 2
    assert all("seed" in r for r in trials.rows)
    assert summary.rows[1]["E_mean"] < summary.rows[0]["E_mean"]
    assert "E_slope" in summary.meta
    csv_path, json_path = summary.write(tmp_path)
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["shots"] == "200"
    assert json.loads(json_path.read_text())["meta"]["E_slope"] == summary.meta["E_slope"]
    with pytest.raises(ValueError):
        shot_scaling_benchmark(shot_grid=(100, 100))


def test_shot_scaling_parallel_matches_serial():
    kw = dict(shot_grid=(300,), trials=2, config=FAST, seed=9)
    serial = shot_scaling_benchmark(jobs=1, **kw)[0].rows
    parallel = shot_scaling_benchmark(jobs=2, **kw)[0].rows
    assert serial == parallel


def test_param_count_rows():
    table = param_count_benchmark(trials=1, config=FAST, levels=(("dark_bright",), ("dark_bright", "spillover")))
    assert [r["k"] for r in table.rows] == [2, 4]


def test_restrict_zeta():
    spec = ErrorModelSpec(3, ("dark_bright", "crosstalk_symmetric"))
    z = restrict_zeta(spec, XI_ACTUAL)
    assert z.xi_or == 0 and z.p_left == 0 and z.p0 == XI_ACTUAL.p0
    mean_cos = 0.5 * (XI_ACTUAL.xi_l * math.cos(XI_ACTUAL.phi_l) + XI_ACTUAL.xi_r * math.cos(XI_ACTUAL.phi_r))
    assert z.xi_l == z.xi_r == pytest.approx(mean_cos)
    full = restrict_zeta(ErrorModelSpec(3), XI_ACTUAL)
    assert full == XI_ACTUAL


def test_normalization_methods_rows():
    table = normalization_methods(trials=1, config=FAST)
    assert sorted(r["normalization"] for r in table.rows) == ["none", "project", "trace"]


def test_td_validity_small():
    table = td_validity_sweep(trials=1, c_grid=(0.0, 1.0, 2.0))
    assert table.meta["argmin_c"] in (0.0, 1.0, 2.0)
    assert len(table.rows) == 3


# -- model selection ---------------------------------------------------------

def test_model_selection_prefers_no_over_rotation():
    zeta = PhysicalParams(p0=0.0032, p1=0.01541, p_left=0.0017, p_right=0.0041, xi_l=0.05, xi_r=0.03,
                          phi_l=math.pi / 4, phi_r=math.pi / 8)
    cal = NAMED_STATES["OS1"]
    cal_data = sample_counts(exact_channel_probabilities(zeta, prepare_state(cal)), 5000, seed=2)
    tests = {}
    for i, name in enumerate(("OS2", "OS3")):
        c = NAMED_STATES[name]
        tests[name] = (sample_counts(exact_channel_probabilities(zeta, prepare_state(c)), 5000, seed=10 + i),
                       target_state(c))
    sets = {k: MODEL_SELECTION_SETS[k] for k in ("set1", "set2", "set5")}
    cfg = SolverConfig(epsilon=1e-12, max_iters=500, stall_tol=1e-10, restarts=2)
    table = model_selection_sweep((cal_data, target_state(cal)), tests, sets, zeta_true=zeta, config=cfg)
    by = {r["set"]: r for r in table.rows}
    assert by["set2"]["td_delta_mean"] <= by["set1"]["td_delta_mean"] + 1e-3
    assert by["set5"]["td_delta_mean"] == max(r["td_delta_mean"] for r in table.rows)
    assert by["set2"]["k"] == 8


# -- bootstrap ---------------------------------------------------------------

def test_bootstrap_exact_data_has_no_spread(nine_map, nine_spec):
    psi = target_state(NAMED_STATES["GHZ"])
    y = exact_channel_probabilities(XI_ACTUAL, pure_density(psi))
    data = sample_counts(y, 0)
    rep = bootstrap_error_bars(nine_map, data, FAST, B=3, target_psi=psi,
                               reported=zeta_to_xi(nine_spec, XI_ACTUAL))
    assert np.all(rep.std < 1e-6)
    rows = rep.rows()
    assert len(rows) == 10 and {"std", "median_offset", "reported"} <= set(rows[0])
    assert isinstance(rep.table(), Table)
    with pytest.raises(ValueError):
        bootstrap_error_bars(nine_map, data, FAST, B=1)


def test_bootstrap_finite_nonnegative(nine_map):
    psi = target_state(NAMED_STATES["GHZ"])
    data = sample_counts(exact_channel_probabilities(XI_ACTUAL, pure_density(psi)), 500, seed=4)
    rep = bootstrap_error_bars(nine_map, data, FAST, B=4, target_psi=psi)
    assert np.all(np.isfinite(rep.std)) and np.all(rep.std >= 0)
    assert np.all(np.isfinite(rep.median_offset))


# -- probe optimization ------------------------------------------------------

TINY_PROBE = dict(params=("xi_l",), grid_points=2,
                  solver=SolverConfig(epsilon=1e-12, max_iters=150, stall_tol=1e-8, restarts=1))


def test_zeta_grid_one_at_a_time():
    grid = zeta_grid(ProbeOptimizationConfig())
    # 7 nonzero magnitudes x 4 nonzero points, the zero point and the joint point
    assert len(grid) == 7 * 4 + 2
    assert XI_ACTUAL in grid


def test_zero_budget_returns_seed():
    seed_state = NAMED_STATES["OS3"]
    out = optimize_probe_states(ProbeOptimizationConfig(budget=0), ErrorModelSpec(3), seed_state)
    assert out[0][0] is seed_state


def test_os1_scores_better_than_ground_state_on_full_model():
    cfg = ProbeOptimizationConfig(grid_points=2, solver=SolverConfig(epsilon=1e-12, max_iters=300,
                                                                     stall_tol=1e-10, restarts=1))
    objective = ProbeObjective(cfg, ErrorModelSpec(3))
    flat = [a for pair in NAMED_STATES["OS1"].angles for a in pair]
    os1 = objective(flat)
    ground = objective([0.0] * 6)
    assert np.isfinite(os1)
    assert os1 < ground


def test_probe_search_respects_budget():
    spec = ErrorModelSpec(3, ("over_rotation",))
    cfg = ProbeOptimizationConfig(budget=4, params=("xi_or",), grid_points=2, solver=TINY_PROBE["solver"])
    ranked = optimize_probe_states(cfg, spec, CircuitSpec.product(0.2, 0.1, 0.3, 0.4, 0.5, 0.6), top=3)
    assert 1 <= len(ranked) <= 3
    scores = [s for _, s in ranked]
    assert scores == sorted(scores)
    assert all(c.kind == "product" for c, _ in ranked)
    with pytest.raises(ValueError):
        optimize_probe_states(cfg, spec, NAMED_STATES["GHZ"])
