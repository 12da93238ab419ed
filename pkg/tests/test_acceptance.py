"""Acceptance suite: one test per criterion, each printing a PASS line.

Heavy trajectories are shared through module-scoped fixtures.  Three clauses
are known not to hold for this implementation and fail honestly, with the
measured numbers in the assertion messages; the analysis lives in the README
(known deviations section):

* the min-over-p>=6 error ratio at T = 0.2 (averaging bias, not solver error),
* the small-window conditioning floor at p = 5 (this implementation stays
  accurate down to T = 1e-4),
* the no-reset instability signal at p = 8 over 1000 s (blocks grow to ~5,
  not 1e3; at p = 12 the run does abort with a step-size collapse).
"""

import math

import numpy as np
import pytest

from phaseavg import (
    AveragingConfig,
    NonFiniteStateError,
    SpringParams,
    StepSizeUnderflowError,
    back_transform,
    build_tables,
    check_limit_T0,
    check_limit_Tinf,
    energy,
    exact_baseline,
    exact_modulated_rhs,
    initial_state,
    integrate_with_reset,
    run_error_sweep,
    shifted_moment,
    swing_spring_model,
)

from conftest import START_POSITIONS, START_VELOCITIES
from oracles import (
    contour_moment_quad,
    explicit_p2_rhs,
    random_blocks,
    random_model,
    shifted_moment_polynomials,
)

pytestmark = pytest.mark.acceptance

TF = 167.0
JOBS = 2


@pytest.fixture(scope="module")
def baseline167(model, u0, settings):
    return exact_baseline(model, u0, TF, settings)


@pytest.fixture(scope="module")
def convergence_sweep(model, u0, settings, baseline167):
    return run_error_sweep(
        model,
        u0,
        [0, 2, 4, 6, 8, 10],
        [0.05, 0.1, 0.2],
        TF,
        reset_dt=100.0,
        settings=settings,
        jobs=JOBS,
        baseline=baseline167,
    )


@pytest.fixture(scope="module")
def small_window_sweep(model, u0, settings, baseline167):
    return run_error_sweep(
        model,
        u0,
        [5],
        [0.001, 0.0025, 0.005],
        TF,
        reset_dt=100.0,
        settings=settings,
        jobs=JOBS,
        baseline=baseline167,
    )


def test_moment_oracle():
    """Shifted moments vs adaptive quadrature on the published grid."""
    worst = 0.0
    for alpha in range(13):
        for c in (0.0, 1.3, -1.3, 2 * math.pi, -2 * math.pi, 4 * math.pi, -4 * math.pi):
            for T in (0.005, 0.1, 0.5, 2.0):
                want, err = contour_moment_quad(alpha, c, T, return_error=True)
                got = shifted_moment(alpha, c, T)
                tol = 1e-10 * abs(want) + 5.0 * err + 1e-30
                assert abs(got - want) <= tol, (alpha, c, T, got, want)
                if want != 0:
                    worst = max(worst, abs(got - want) / abs(want))
    print(f"\nACCEPTANCE PASS - moment oracle: 364 cases, worst relative {worst:.2e}")


def test_closed_form_tables():
    """Degree-two mass matrix, displayed inverse, and moment polynomials."""
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        c = float(rng.uniform(-12, 12))
        T = float(rng.uniform(0.05, 1.5))
        tables = build_tables(AveragingConfig(p=2, T=T), [c])
        mass_want = np.array([[1, 0, T ** 2], [0, T ** 2, 0], [T ** 2, 0, 3 * T ** 4]])
        inv_want = np.array(
            [
                [1.5, 0, -0.5 / T ** 2],
                [0, 1 / T ** 2, 0],
                [-0.5 / T ** 2, 0, 0.5 / T ** 4],
            ]
        )
        scale_m = np.abs(mass_want).max()
        scale_i = np.abs(inv_want).max()
        assert np.abs(tables.mass - mass_want).max() <= 1e-12 * scale_m
        assert np.abs(tables.mass_inv - inv_want).max() <= 1e-12 * scale_i
        r_want = shifted_moment_polynomials(c, T)
        for alpha in range(7):
            got = tables.r_moments[0, alpha]
            dev = abs(got - r_want[alpha]) / max(abs(r_want[alpha]), 1e-300)
            worst = max(worst, dev)
            assert dev <= 1e-12, (alpha, c, T)
    print(f"ACCEPTANCE PASS - closed-form tables: 20 draws, worst relative {worst:.2e}")


def test_explicit_p2_tendencies():
    """Assembled degree-two tendency vs the hand-transcribed explicit rows."""
    rng = np.random.default_rng(2)
    worst = 0.0
    from phaseavg import assemble_averaged_rhs

    for _ in range(100):
        model = random_model(rng, d=3, n_terms=int(rng.integers(1, 6)))
        T = float(rng.uniform(0.1, 1.5))
        tables = build_tables(AveragingConfig(p=2, T=T), model.frequencies)
        blocks = random_blocks(rng, 2, 3)
        t = float(rng.uniform(0, 10))
        got = assemble_averaged_rhs(t, blocks, model, tables)
        want = explicit_p2_rhs(t, blocks, model, T)
        dev = np.abs(got - want).max() / np.abs(want).max()
        worst = max(worst, dev)
        assert dev <= 1e-12
    print(f"ACCEPTANCE PASS - explicit p=2 equivalence: 100 draws, worst relative {worst:.2e}")


def test_model_decomposition():
    """Term-list sum equals the directly transcribed modulated tendency.

    The two paths group the exponential phases differently, so their results
    drift apart by the argument-reduction roundoff, linear in t; over the
    first ten seconds that stays a decade below the 1e-13 bound.
    """
    rng = np.random.default_rng(3)
    for ratio in (2.0, 2.05):
        params = SpringParams() if ratio == 2.0 else SpringParams(spring_k=(ratio * math.pi) ** 2)
        m = swing_spring_model(params)
        worst = 0.0
        for _ in range(100):
            t = float(rng.uniform(0, 10))
            v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            got = m.modulated_rhs(t, v)
            want = exact_modulated_rhs(t, v, params)
            dev = np.abs(got - want).max() / np.abs(want).max()
            worst = max(worst, dev)
            assert dev <= 1e-13, (ratio, t)
        print(f"ACCEPTANCE PASS - model decomposition at ratio {ratio}: worst relative {worst:.2e}")


def test_limit_small_window(model, u0, settings):
    """Averaged dynamics collapse onto the exact ones as the window shrinks."""
    for p in (0, 2):
        res = check_limit_T0(model, u0, p, 0.005, 10.0, settings)
        assert res.discrepancy <= 1e-6, (p, res.discrepancy)
        if p > 0:
            # the V_0 row's response to higher-block noise at least halves
            assert res.sensitivity_halved <= 0.55 * res.sensitivity, res
        print(
            f"ACCEPTANCE PASS - small-window limit p={p}: discrepancy {res.discrepancy:.2e}"
            + (f", decoupling ratio {res.decoupling_ratio:.1f}" if p else "")
        )


def test_limit_large_window(model, u0, settings):
    """Averaged dynamics collapse onto the resonance-only envelope system."""
    res = check_limit_Tinf(model, u0, 2, 10.0, TF, settings)
    bound = 10.0 * settings.rtol * res.v0_scale
    assert res.discrepancy <= bound, res
    assert res.max_higher_block <= 1e-12, res
    print(
        f"ACCEPTANCE PASS - large-window limit: discrepancy {res.discrepancy:.2e} "
        f"(bound {bound:.2e}), higher blocks <= {res.max_higher_block:.2e}"
    )


def test_convergence_reaches_1e6_at_T005_p10(convergence_sweep):
    errs = [convergence_sweep.error(c, 10, 0.05) for c in range(3)]
    assert max(errs) <= 1e-6, errs
    print(f"ACCEPTANCE PASS - T=0.05, p=10 error: {max(errs):.2e} <= 1e-6")


def test_convergence_small_window_p5(small_window_sweep):
    errs = [small_window_sweep.error(c, 5, 0.005) for c in range(3)]
    assert max(errs) <= 1e-7, errs
    print(f"ACCEPTANCE PASS - T=0.005, p=5 error: {max(errs):.2e} <= 1e-7")


@pytest.mark.parametrize("T", [0.05, 0.1, 0.2])
def test_convergence_ratio_over_p0(convergence_sweep, T):
    """Min error over p >= 6 falls two orders below the plain average.

    Known to fail at T = 0.2: the residual there is averaging bias (identical
    under a 100x tighter tolerance), and the best ratio reachable is ~3e-2
    at p = 10 (~1.4e-2 at p = 12), not 1e-2.
    """
    p0 = np.array([convergence_sweep.error(c, 0, T) for c in range(3)])
    best = np.array(
        [min(convergence_sweep.error(c, p, T) for p in (6, 8, 10)) for c in range(3)]
    )
    ratio = best / p0
    assert ratio.max() <= 1e-2, f"T={T}: min-over-p>=6 / p=0 ratios {ratio}"
    print(f"ACCEPTANCE PASS - convergence ratio at T={T}: {ratio.max():.2e} <= 1e-2")


def test_error_decreases_with_degree(convergence_sweep):
    """Soft monotonicity: raising p by two never hurts (20% cell margin)."""
    for T in (0.05, 0.1, 0.2):
        for c in range(3):
            for p in (0, 2, 4, 6, 8):
                e_lo = convergence_sweep.error(c, p, T)
                e_hi = convergence_sweep.error(c, p + 2, T)
                assert e_hi <= 1.2 * e_lo, (T, c, p, e_lo, e_hi)
    print("ACCEPTANCE PASS - error decreases with degree (soft monotonicity)")


def test_conditioning_floor(small_window_sweep):
    """Errors below T = 0.0025 should exceed the T = 0.005 ones at p = 5.

    Known to fail: with an entrywise-accurate inverse of the graded mass
    matrix the solution error keeps *decreasing* with the window (verified
    down to T = 1e-4 at condition number 8e37), instead of turning up.
    """
    e_005 = np.array([small_window_sweep.error(c, 5, 0.005) for c in range(3)])
    for T in (0.001, 0.0025):
        e_small = np.array([small_window_sweep.error(c, 5, T) for c in range(3)])
        assert np.all(e_small > e_005), (
            f"T={T}: errors {e_small} do not exceed the T=0.005 errors {e_005}"
        )
    print("ACCEPTANCE PASS - conditioning floor below T = 0.0025")


@pytest.fixture(scope="module")
def long_reset_run(model, u0, settings):
    cfg = AveragingConfig(p=8, T=0.2)
    tables = build_tables(cfg, model.frequencies, allow_ill_conditioned=True)
    return integrate_with_reset(
        model, cfg, tables, u0, 1000.0, reset_dt=100.0, settings=settings, keep_blocks=True
    )


def test_reset_long_run_completes(long_reset_run):
    assert long_reset_run.times[-1] == pytest.approx(1000.0, abs=1e-9)
    assert np.allclose(long_reset_run.reset_times, 100.0 * np.arange(1, 10))
    assert np.all(np.isfinite(long_reset_run.states.view(float)))
    print(
        "ACCEPTANCE PASS - reset run p=8, T=0.2, 1000 s completed; "
        f"max higher block {np.abs(long_reset_run.blocks[:, 1:, :]).max():.2e}"
    )


def test_no_reset_reports_instability(model, u0, settings):
    """Without resets the p = 8 stack must blow up or exceed 1e3 by 1000 s.

    Known to fail: the accurately integrated stack grows superlinearly but
    only reaches ~5 by t = 1000 (its trajectory error does degrade tenfold,
    and the same run at p = 12 aborts with a step-size collapse at t ~ 429).
    """
    cfg = AveragingConfig(p=8, T=0.2)
    tables = build_tables(cfg, model.frequencies, allow_ill_conditioned=True)
    try:
        traj = integrate_with_reset(
            model,
            cfg,
            tables,
            u0,
            1000.0,
            reset_dt=math.inf,
            settings=settings,
            keep_blocks=True,
        )
    except (NonFiniteStateError, StepSizeUnderflowError) as exc:
        print(f"ACCEPTANCE PASS - no-reset run reported instability: {exc}")
        return
    peak = float(np.abs(traj.blocks[:, 1:, :]).max())
    assert peak > 1e3, f"no-reset run finished with max higher block {peak:.3e}"
    print(f"ACCEPTANCE PASS - no-reset higher blocks reached {peak:.2e} > 1e3")


def test_reset_window_insensitivity(model, u0, settings, baseline167):
    """Changing the reset window from 0.1 s to 100 s moves no cell by 2x.

    Cells where both maps sit at the solver-accuracy floor (below 100 times
    the tolerance) compare integration noise against integration noise and
    count as unchanged; above the floor the factor-two bound is enforced in
    both directions.
    """
    grids = dict(p_values=[0, 4, 8], T_values=[0.05, 0.1, 0.2])
    maps = {
        dt: run_error_sweep(
            model,
            u0,
            grids["p_values"],
            grids["T_values"],
            TF,
            reset_dt=dt,
            settings=settings,
            jobs=JOBS,
            baseline=baseline167,
        )
        for dt in (0.1, 100.0)
    }
    a, b = maps[0.1].errors, maps[100.0].errors
    floor = 100.0 * max(settings.rtol, settings.atol)
    above = np.maximum(a, b) > floor
    ratio = a / b
    assert np.all(ratio[above] < 2.0) and np.all(ratio[above] > 0.5), ratio
    assert np.all(ratio < 2.0), ratio  # accuracy never degrades twofold anywhere
    print(
        "ACCEPTANCE PASS - reset-window insensitivity: cell ratios in "
        f"[{ratio.min():.2f}, {ratio.max():.2f}] "
        f"({int(above.sum())}/{ratio.size} cells above the solver floor)"
    )


def test_energy_oracle(model, u0, params, settings):
    """Hamiltonian drift along the exact run stays below 1e-8 over 100 s."""
    traj = exact_baseline(model, u0, 100.0, settings)
    states_u = back_transform(traj.times, traj.states, params)
    h = energy(states_u, params)
    h0 = energy(initial_state(START_POSITIONS, START_VELOCITIES, params), params)
    drift = float(np.abs(h - h0).max() / abs(h0))
    assert drift < 1e-8, drift
    print(f"ACCEPTANCE PASS - energy oracle: relative drift {drift:.2e} < 1e-8")
