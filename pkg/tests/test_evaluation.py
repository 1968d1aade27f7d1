import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mms_closure import policy as P
from mms_closure.env import default_config, with_max_steps
from mms_closure.evaluation import (
    CURVE_COLUMNS,
    Band,
    EvalRun,
    error_reduction,
    eval_in_distribution,
    eval_out_of_distribution,
    held_out_specs,
    read_curve_csv,
    snapshot_step,
    write_outputs,
)
from mms_closure.ppo import validation_set


def zero_policy(kind):
    params = P.init_params(np.random.default_rng(0), kind, width=4, dilations=(1,))
    params.policy_head.weight[...] = 0.0
    params.policy_head.bias[...] = 0.0
    return params


def test_error_reduction_examples():
    cgs = np.array([1.0, 2.0, 4.0])
    np.testing.assert_array_equal(error_reduction(cgs, cgs), 0)
    np.testing.assert_allclose(error_reduction(cgs, cgs / 2), 0.5)
    np.testing.assert_allclose(error_reduction(cgs, 0.2 * cgs), 0.8)
    np.testing.assert_array_equal(error_reduction([0.0, 1e-15], [3.0, 1.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        error_reduction([1.0], [1.0, 2.0])


@given(arrays(np.float64, (7, 5), elements=st.floats(0, 1e3)))
def test_quantile_ordering(curves):
    band = Band.of(curves)
    assert np.all(band.q25 <= band.median) and np.all(band.median <= band.q75)


def test_quantile_rule_is_linear_interpolation():
    band = Band.of(np.array([[1.0], [2.0], [3.0], [10.0]]))
    assert band.q25[0] == 1.75 and band.median[0] == 2.5 and band.q75[0] == 4.75


def test_snapshot_steps():
    assert snapshot_step(0.25, 5e-3) == 50
    assert snapshot_step(1.0, 5e-3) == 200


def test_held_out_specs_are_disjoint_from_validation():
    cfg = with_max_steps(default_config("burgers1d"), 2)
    val, _ = validation_set(cfg, 5, seed=0)
    test = held_out_specs("burgers1d", 5, seed=0)
    assert not set(val) & set(test)
    assert held_out_specs("burgers1d", 5, seed=0) == test


def test_eval_run_validation():
    with pytest.raises(ValueError):
        EvalRun("burgers1d", samples=0)
    with pytest.raises(ValueError):
        EvalRun("burgers1d", mode="sideways")


@pytest.mark.parametrize("kind", ["burgers1d", "advection2d"])
def test_zero_policy_reproduces_baseline_in_distribution(kind):
    cfg = with_max_steps(default_config(kind), 40)
    stats = eval_in_distribution(zero_policy(kind), cfg, samples=5, seed=1, snapshot_times=(0.0, 0.1))
    np.testing.assert_array_equal(stats.raw_cgs, stats.raw_rl)
    assert np.all(stats.raw_cgs[:, 0] == 0)
    assert np.all(np.diff(stats.cgs_cumulative.median) >= 0)
    assert np.all(np.diff(stats.cgs_cumulative.q25) >= 0)
    assert stats.n_samples == 5 and stats.n_excluded == 0


def test_out_of_distribution_baseline():
    cfg = with_max_steps(default_config("burgers1d"), 20)
    stats = eval_out_of_distribution(zero_policy("burgers1d"), cfg, samples=3, seed=2, snapshot_times=(0.0, 0.05))
    np.testing.assert_array_equal(stats.raw_cgs, stats.raw_rl)
    np.testing.assert_array_equal(stats.snapshots[0.0]["reference"], stats.snapshots[0.0]["cgs"])
    # the coarse homogeneous solution drifts away from the fine one
    assert np.all(stats.raw_cgs[:, 20] > stats.raw_cgs[:, 1])


def test_blown_up_samples_are_excluded(caplog):
    cfg = with_max_steps(default_config("burgers1d"), 10)
    wild = zero_policy("burgers1d")
    wild.policy_head.bias[0] = 1e200
    stats = eval_in_distribution(wild, cfg, samples=3, seed=0, snapshot_times=(0.0,))
    assert stats.n_excluded == 3 and stats.n_samples == 0
    assert "blew up" in caplog.text


def test_write_outputs(tmp_path):
    cfg = with_max_steps(default_config("burgers2d"), 60)
    params = P.init_params(np.random.default_rng(0), "burgers2d", width=4, dilations=(1,))
    stats = eval_in_distribution(params, cfg, samples=3, seed=0, snapshot_times=(0.0, 0.25))
    write_outputs(stats, tmp_path, cfg)
    for name in ("mse.csv", "cumulative.csv"):
        with open(tmp_path / name, newline="") as fh:
            reader = csv.DictReader(fh)
            assert reader.fieldnames == CURVE_COLUMNS
            rows = list(reader)
        assert len(rows) == 61
        assert float(rows[50]["t"]) == pytest.approx(0.25)
    curve = read_curve_csv(tmp_path / "cumulative.csv")
    np.testing.assert_allclose(curve["rl_median"], stats.rl_cumulative.median)
    with open(tmp_path / "reduction.csv", newline="") as fh:
        assert next(csv.reader(fh)) == ["step", "t", "reduction", "cumulative_reduction"]
    for svg in ("mse.svg", "cumulative.svg"):
        assert ET.parse(tmp_path / svg).getroot().tag.endswith("svg")
    with open(tmp_path / "snapshot_t0.25.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        assert reader.fieldnames == ["x", "y", "reference_u", "reference_v", "cgs_u", "cgs_v", "rl_u", "rl_v"]
        assert len(list(reader)) == 32 * 32
