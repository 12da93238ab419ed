"""Error metrics, sweep harness, CSV round trips, limit-check machinery."""

import math

import numpy as np
import pytest

from phaseavg import (
    DegenerateReferenceError,
    ErrorMap,
    ResonantQuadraticModel,
    ResonantTerm,
    SolverSettings,
    Trajectory,
    check_limit_T0,
    check_limit_Tinf,
    exact_baseline,
    l2_relative_error,
    l2_relative_errors,
    run_error_sweep,
)
from phaseavg.diagnostics import read_trajectory_csv, write_trajectory_csv


def _traj(times, states):
    return Trajectory(
        times=times,
        states=states,
        accepted_steps=0,
        rejected_steps=0,
        rhs_evaluations=0,
    )


def test_l2_error_of_identical_trajectories_is_zero():
    times = np.linspace(0.0, 1.0, 101)
    states = np.stack([np.exp(1j * times), np.cos(times) + 0j, times + 0j], axis=1)
    ref = _traj(times, states)
    assert l2_relative_error(ref, ref, 0) == 0.0
    assert np.all(l2_relative_errors(ref, ref) == 0.0)


def test_l2_error_homogeneity():
    times = np.linspace(0.0, 2.0, 201)
    states = np.stack([np.exp(1j * times), np.sin(times) + 0.3j, 1.0 + 0j * times], axis=1)
    ref = _traj(times, states)
    doubled = _traj(times, 2.0 * states)
    for comp in range(3):
        assert l2_relative_error(doubled, ref, comp) == pytest.approx(1.0, rel=1e-13)


def test_l2_error_degenerate_reference():
    times = np.linspace(0.0, 1.0, 11)
    zero = _traj(times, np.zeros((11, 1), dtype=complex))
    one = _traj(times, np.ones((11, 1), dtype=complex))
    with pytest.raises(DegenerateReferenceError):
        l2_relative_error(one, zero, 0)


def test_l2_error_requires_shared_grid():
    a = _traj(np.linspace(0, 1, 11), np.ones((11, 1), dtype=complex))
    b = _traj(np.linspace(0, 1, 21), np.ones((21, 1), dtype=complex))
    with pytest.raises(ValueError, match="grid"):
        l2_relative_error(a, b, 0)


def test_trapezoid_refinement_stability(model, u0):
    # halving the sample spacing changes the reported error by well under 1%
    errs = {}
    for dt in (0.01, 0.005):
        settings = SolverSettings(sample_dt=dt)
        base = exact_baseline(model, u0, 20.0, settings)
        from phaseavg import AveragingConfig, build_tables, integrate_with_reset

        cfg = AveragingConfig(p=2, T=0.1)
        tables = build_tables(cfg, model.frequencies)
        traj = integrate_with_reset(model, cfg, tables, u0, 20.0, 100.0, settings)
        errs[dt] = l2_relative_errors(traj, base)
    assert np.all(np.abs(errs[0.01] - errs[0.005]) <= 0.01 * errs[0.005])


@pytest.fixture(scope="module")
def small_sweep(model, u0):
    settings = SolverSettings()
    emap = run_error_sweep(
        model, u0, [0, 1], [0.1, 0.2], t_final=5.0, reset_dt=100.0, settings=settings
    )
    return emap


def test_sweep_shapes_and_status(small_sweep):
    emap = small_sweep
    assert emap.errors.shape == (3, 2, 2)
    assert np.all(emap.status == "ok")
    assert np.all(np.isfinite(emap.errors))
    assert np.all(emap.errors >= 0.0)
    assert np.all(emap.accepted > 0)
    assert emap.meta["t_final"] == 5.0


def test_sweep_parallel_matches_serial(model, u0, small_sweep):
    emap2 = run_error_sweep(
        model,
        u0,
        [0, 1],
        [0.1, 0.2],
        t_final=5.0,
        reset_dt=100.0,
        settings=SolverSettings(),
        jobs=2,
    )
    assert np.array_equal(emap2.errors, small_sweep.errors)
    assert np.array_equal(emap2.accepted, small_sweep.accepted)


def test_sweep_shared_baseline_equals_recomputed(model, u0, small_sweep):
    settings = SolverSettings()
    base = exact_baseline(model, u0, 5.0, settings)
    emap2 = run_error_sweep(
        model,
        u0,
        [0, 1],
        [0.1, 0.2],
        t_final=5.0,
        reset_dt=100.0,
        settings=settings,
        baseline=base,
    )
    assert np.abs(emap2.errors - small_sweep.errors).max() <= 1e-12


def test_sweep_flags_failed_cells():
    # one-dimensional model with an unbounded resonant self-interaction: the
    # quadratic growth blows up in finite time and the cell is flagged, not
    # fatal; a synthetic baseline keeps the exact run out of the picture
    term = ResonantTerm(0.0, np.ones((1, 1, 1), dtype=complex))
    model = ResonantQuadraticModel(1, np.zeros(1, dtype=complex), (term,), "blowup")
    times = np.arange(201) * 0.01
    baseline = _traj(times, np.ones((201, 1), dtype=complex))
    emap = run_error_sweep(
        model,
        np.array([1.0 + 0j]),
        [0],
        [0.5],
        t_final=2.0,
        reset_dt=100.0,
        settings=SolverSettings(),
        baseline=baseline,
    )
    assert emap.status[0, 0] in ("nonfinite", "underflow")
    assert np.all(np.isnan(emap.errors[:, 0, 0]))


def test_error_map_csv_round_trip(tmp_path, small_sweep):
    path = tmp_path / "emap.csv"
    small_sweep.to_csv(path)
    text = path.read_text().splitlines()
    assert text[0] == "p,T,err_x,err_y,err_z,status,accepted_steps,rejected_steps"
    loaded = ErrorMap.from_csv(path)
    assert np.array_equal(loaded.p_values, small_sweep.p_values)
    assert np.allclose(loaded.T_values, small_sweep.T_values, rtol=0, atol=0)
    assert np.array_equal(loaded.errors, small_sweep.errors)  # 17 digits: exact
    assert np.array_equal(loaded.accepted, small_sweep.accepted)


def test_error_map_csv_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("p,T,err_x\n")
    with pytest.raises(ValueError):
        ErrorMap.from_csv(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("p,T,err_x,err_y,err_z,status,accepted_steps,rejected_steps\n")
    with pytest.raises(ValueError, match="no data"):
        ErrorMap.from_csv(empty)


def test_trajectory_csv_round_trip(tmp_path):
    times = np.arange(5) * 0.01
    states = np.arange(15).reshape(5, 3) * (0.1 - 0.25j)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, times, states)
    t2, s2 = read_trajectory_csv(path)
    assert np.array_equal(t2, times)
    assert np.array_equal(s2, states)
    header = path.read_text().splitlines()[0]
    assert header == "t,re_x,im_x,re_y,im_y,re_z,im_z"


def test_limit_check_results_have_expected_structure(model, u0):
    settings = SolverSettings()
    res = check_limit_T0(model, u0, 2, 0.01, 2.0, settings)
    assert res.discrepancy >= 0.0
    assert res.sensitivity > res.sensitivity_halved > 0.0
    assert res.decoupling_ratio > 1.0
    res0 = check_limit_T0(model, u0, 0, 0.01, 2.0, settings)
    assert res0.sensitivity == 0.0 and math.isinf(res0.decoupling_ratio)

    rinf = check_limit_Tinf(model, u0, 2, 10.0, 5.0, settings)
    assert rinf.discrepancy >= 0.0
    assert rinf.max_higher_block >= 0.0
    assert rinf.v0_scale > 0.0
    rinf0 = check_limit_Tinf(model, u0, 0, 10.0, 5.0, settings)
    assert rinf0.max_higher_block == 0.0
