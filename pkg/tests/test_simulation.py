import dataclasses

import numpy as np
import pytest

from lpvtube.simulation import compute_metrics, parameter_band, read_csv, run_scenario


def _quiet(cfg, **kw):
    return cfg.replace(mpc=dataclasses.replace(cfg.mpc, delta_unc=0.0), disturbance="off", **kw)


def test_equilibrium_stays_at_zero(cfg, model, gains, rpi):
    c = _quiet(cfg, x0=(0.0, 0.0, 0.0, 0.0), steps=30)
    log = run_scenario(c, gains, rpi, model)
    assert np.abs(log.states).max() <= 1e-10
    assert np.abs(log.col("delta_cmd")).max() <= 1e-10


def test_no_uncertainty_means_exact_parameter(cfg, model, gains, rpi):
    log = run_scenario(_quiet(cfg, steps=10), gains, rpi, model)
    np.testing.assert_array_equal(log.col("p_actual"), log.col("p_nominal"))


def test_plant_follows_first_prediction(cfg, model, gains, rpi):
    # without uncertainty and disturbance the next state is the MPC's one-step
    # nominal prediction, and it lies in the tube section z_1 + alpha_1 S
    log = run_scenario(_quiet(cfg, steps=15), gains, rpi, model)
    names = ("e_y", "de_y", "e_psi", "de_psi")
    X = log.states
    P1 = np.column_stack([log.col(f"xpred_{n}") for n in names])
    np.testing.assert_allclose(X[1:], P1[:-1], atol=1e-10, rtol=0)
    Z1 = np.column_stack([log.col(f"z1_{n}") for n in names])
    a1 = log.col("alpha_1")
    G, h = rpi.H.G, rpi.H.h
    assert np.all((X[1:] - Z1[:-1]) @ G.T <= a1[:-1, None] * h[None, :] + 1e-7)


def test_true_parameter_inside_band(cfg, model, gains, rpi):
    log = run_scenario(cfg.replace(steps=20, seed=3), gains, rpi, model)
    assert np.all(log.col("p_lo") <= log.col("p_actual"))
    assert np.all(log.col("p_actual") <= log.col("p_hi"))
    assert np.all(np.abs(np.column_stack([log.col(f"w_{n}") for n in
                                          ("e_y", "de_y", "e_psi", "de_psi")])) <= 0.01)


def test_parameter_band(model):
    assert parameter_band(0.04, 0.2, model) == pytest.approx((1 / 30, 0.048))
    assert parameter_band(0.05, 0.01, model, "additive") == pytest.approx((0.04, 0.06))


def test_determinism(cfg, model, gains, rpi, tmp_path):
    c = cfg.replace(steps=15, seed=7)
    a = run_scenario(c, gains, rpi, model).to_csv(tmp_path / "a.csv")
    b = run_scenario(c, gains, rpi, model).to_csv(tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_csv_round_trip(cfg, model, gains, rpi, tmp_path):
    log = run_scenario(cfg.replace(steps=5), gains, rpi, model)
    back = read_csv(log.to_csv(tmp_path / "r.csv"))
    assert back.columns == log.columns
    np.testing.assert_array_equal(back.states, log.states)
    assert compute_metrics(back, model) == compute_metrics(log, model)


def test_fault_injection_is_reported(cfg, model, gains, rpi):
    log = run_scenario(cfg.replace(steps=30, w_scale=60.0, disturbance="vertex"), gains, rpi, model)
    met = compute_metrics(log, model)
    assert met["infeasible_steps"] + met["constraint_violations"] > 0


def test_equilibrium_metrics(cfg, model, gains, rpi):
    c = _quiet(cfg, x0=(0.0, 0.0, 0.0, 0.0), v0=18.0, steps=10)
    met = compute_metrics(run_scenario(c, gains, rpi, model), model)
    assert met["settling_time_v"] == 0.0
    assert met["time_to_e_y_band"] == 0.0
    assert met["max_abs_e_y"] <= 1e-12  # solver round-off only
    assert met["infeasible_steps"] == 0
    assert met["constraint_violations"] == 0


def test_speed_settles_like_a_saturated_deceleration(cfg, model, gains, rpi):
    met = compute_metrics(run_scenario(cfg.replace(steps=30), gains, rpi, model), model)
    # 7 m/s at 6 m/s^2 is about 1.2 s, the tail of the approach adds a little
    assert 1.2 <= met["settling_time_v"] <= 1.4


def test_empty_log_rejected(cfg, model, gains, rpi):
    log = run_scenario(cfg.replace(steps=0), gains, rpi, model)
    assert len(log) == 0
    with pytest.raises(ValueError):
        compute_metrics(log, model)


def test_batch_matches_single_runs(cfg, model, gains, rpi):
    from lpvtube.simulation import run_batch
    c = cfg.replace(steps=4)
    logs = run_batch(c, gains, rpi, [2, 3], model, jobs=2)
    for seed, log in zip([2, 3], logs):
        ref = run_scenario(c.replace(seed=seed), gains, rpi, model)
        assert log.data == ref.data
