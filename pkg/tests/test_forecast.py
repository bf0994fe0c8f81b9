import numpy as np
import pytest

from flexagg.errors import DomainError
from flexagg.forecast import (AccuracyMode, ErrorProcess, predict,
                              rank_spread_sigmas, relative_error, step_accuracy)


def make_proc(sigma, mode=AccuracyMode.STATIC, seed=0, bounds=(0.0, 1.0)):
    return ErrorProcess(sigma=sigma, mode=mode, sigma_bounds=bounds, rng_seed=seed)


def test_zero_sigma_reproduces_actual():
    proc = make_proc(0.0)
    actual = np.array([5.0, 0.0, 12.0] * 8)
    assert np.array_equal(predict(actual, proc).predicted, actual)


def test_relative_error_std_matches_sigma():
    proc = make_proc(0.5, seed=42)
    actual = np.full(24, 100.0)
    errs = []
    for _ in range(10_000 // 24 + 1):
        f = predict(actual, proc)
        errs.extend(f.predicted / actual - 1.0)
    assert np.std(errs[:10_000]) == pytest.approx(0.5, rel=0.05)


def test_zero_actual_predicts_zero():
    proc = make_proc(0.7, seed=1)
    f = predict(np.zeros(24), proc)
    assert np.array_equal(f.predicted, np.zeros(24))


def test_predictions_never_negative():
    proc = make_proc(1.0, seed=3, bounds=(0.0, 1.0))
    for _ in range(50):
        f = predict(np.full(24, 10.0), proc)
        assert np.all(f.predicted >= 0.0)


def test_static_step_is_noop():
    proc = make_proc(0.5)
    assert step_accuracy(proc) == 0.5
    assert proc.sigma == 0.5


def test_dynamic_step_moves_by_drift_step():
    proc = ErrorProcess(sigma=0.5, mode=AccuracyMode.DYNAMIC, rng_seed=0)
    step_accuracy(proc)
    assert proc.sigma in (pytest.approx(0.499), pytest.approx(0.501))


def test_bad_predictor_mean_trajectory_decreases():
    finals = []
    for seed in range(30):
        proc = ErrorProcess(sigma=0.9, mode=AccuracyMode.DYNAMIC, rng_seed=seed)
        for _ in range(2000):
            step_accuracy(proc)
        finals.append(proc.sigma)
    assert np.mean(finals) < 0.9 - 0.2


def test_good_predictor_mean_trajectory_increases():
    finals = []
    for seed in range(30):
        proc = ErrorProcess(sigma=0.05, mode=AccuracyMode.DYNAMIC, rng_seed=seed)
        for _ in range(2000):
            step_accuracy(proc)
        finals.append(proc.sigma)
    assert np.mean(finals) > 0.05 + 0.2


def test_sigma_never_exits_bounds():
    proc = ErrorProcess(sigma=0.98, mode=AccuracyMode.DYNAMIC, rng_seed=5,
                        sigma_bounds=(0.01, 1.0))
    lo, hi = proc.sigma_bounds
    for _ in range(5000):
        step_accuracy(proc)
        assert lo <= proc.sigma <= hi


def test_relative_error_hand_values():
    assert relative_error(120.0, 100.0) == pytest.approx(0.2)
    assert relative_error(50.0, 50.0) == 0.0
    assert relative_error(500.0, 100.0) == 1.0  # clamped


def test_relative_error_zero_prediction_rules():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(3.0, 0.0) == 1.0


def test_relative_error_clamp_lower():
    assert relative_error(0.0, 100.0) == -1.0


def test_relative_error_rejects_negative():
    with pytest.raises(DomainError):
        relative_error(-1.0, 10.0)
    with pytest.raises(DomainError):
        relative_error(1.0, -10.0)


def test_relative_error_always_in_unit_interval():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        e = relative_error(rng.uniform(0, 100), rng.uniform(0, 100))
        assert -1.0 <= e <= 1.0


def test_empirical_error_std_converges_over_long_static_run():
    proc = make_proc(0.3, seed=7)
    actual = np.full(24, 50.0)
    errs = []
    for _ in range(500):
        f = predict(actual, proc)
        errs.extend(f.predicted / actual - 1.0)
    assert np.std(errs) == pytest.approx(0.3, rel=0.10)


def test_rank_spread_is_linear():
    sigmas = rank_spread_sigmas(12, (0.01, 1.0))
    assert sigmas[0] == pytest.approx(0.01)
    assert sigmas[-1] == pytest.approx(1.0)
    diffs = np.diff(sigmas)
    assert np.allclose(diffs, diffs[0])


def test_reported_sigma_tracks_misreport_factor():
    proc = ErrorProcess(sigma=0.4, misreport_factor=2.0)
    assert proc.reported_sigma == pytest.approx(0.8)


def test_sigma_outside_bounds_rejected():
    with pytest.raises(DomainError):
        ErrorProcess(sigma=0.005, sigma_bounds=(0.01, 1.0))
