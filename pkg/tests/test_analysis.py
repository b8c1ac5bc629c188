import math

import numpy as np
import pytest

from photon_jumps.analysis import (
    FitMethod,
    PrepTarget,
    PreparationSpec,
    decoding_latencies,
    emission_rate_bound,
    ensemble_p1,
    ensemble_progression,
    equilibrium_thermometry,
    first_jump_histogram,
    fit_lifetime_loglinear,
    fit_lifetime_mle,
    invert_thermal_p1,
    prepare_initial,
    thermal_p1,
)
from photon_jumps.detection_chain import AtomStream, DetectorParams, sample_detection_stream
from photon_jumps.errors import DomainError, FitError, InputError, InsufficientDataError
from photon_jumps.field_dynamics import BathParams, FieldTrajectory, JumpEvent, master_equation_evolve, sample_trajectory
from photon_jumps.jump_decoder import decode, expected_p_e, jump_detection_delay, static_error_fraction, vote_latency
from photon_jumps.seeding import DETECTION_STREAM, FIELD_STREAM, make_rng, trajectory_seed


def simulate(n, prep, duration, base_seed, bath, arrivals, detector, table, decoder):
    initial = prepare_initial(prep, bath)
    trajectories, decoded = [], []
    for i in range(n):
        traj = sample_trajectory(initial, duration, bath, trajectory_seed(base_seed, i, FIELD_STREAM))
        stream = sample_detection_stream(traj, arrivals, detector, table,
                                         trajectory_seed(base_seed, i, DETECTION_STREAM))
        trajectories.append(traj)
        decoded.append(decode(stream, decoder))
    return trajectories, decoded


@pytest.fixture(scope="module")
def one_photon_runs(bath, arrivals, detector, table, decoder):
    prep = PreparationSpec(PrepTarget.FOCK_ONE, residual_error=0.0)
    return simulate(1500, prep, 1.0, 101, bath, arrivals, detector, table, decoder)


@pytest.fixture(scope="module")
def vacuum_runs(bath, arrivals, detector, table, decoder):
    prep = PreparationSpec(PrepTarget.THERMAL)
    return simulate(800, prep, 12.0, 202, bath, arrivals, detector, table, decoder)


@pytest.fixture(scope="module")
def decay_runs(bath, arrivals, detector, table, decoder):
    prep = PreparationSpec(PrepTarget.FOCK_ONE)
    return simulate(904, prep, 0.6, 303, bath, arrivals, detector, table, decoder)


@pytest.fixture(scope="module")
def latency(arrivals, detector, table, decoder):
    return jump_detection_delay(expected_p_e(1, detector, table), expected_p_e(0, detector, table),
                                decoder, arrivals.rate)


# --- Preparation ---

def test_vacuum_reset_leaves_residual_photons(bath):
    assert prepare_initial(PreparationSpec(PrepTarget.VACUUM_RESET), bath).mean() == pytest.approx(0.003)


def test_perfect_fock_preparation(bath):
    p = prepare_initial(PreparationSpec(PrepTarget.FOCK_ONE, residual_error=0.0), bath)
    assert p[1] == 1.0
    assert p.mean() == 1.0


def test_thermal_preparation(bath):
    assert prepare_initial(PreparationSpec(PrepTarget.THERMAL), bath).mean() == pytest.approx(0.063, abs=1e-5)


def test_residual_error_bound():
    with pytest.raises(DomainError):
        PreparationSpec(PrepTarget.FOCK_ONE, residual_error=0.5)


# --- Ensemble curves ---

def test_true_mode_curve_at_zero_temperature():
    cold = BathParams(0.129, 0.0)
    trajectories = [sample_trajectory(1, 0.5, cold, trajectory_seed(7, i, 0)) for i in range(2000)]
    grid = np.linspace(0.0, 0.5, 11)
    curve = ensemble_p1(trajectories, grid)
    expected = np.exp(-grid / 0.129)
    sigma = np.sqrt(expected * (1 - expected) / 2000)
    assert np.all(np.abs(curve.mean - expected) <= 4 * sigma + 1e-12)
    assert curve.n_trajectories == 2000


def test_single_trajectory_is_a_staircase():
    traj = FieldTrajectory(1, 1.0, (JumpEvent(0.3, 1, 0), JumpEvent(0.6, 0, 1)))
    curve = ensemble_p1([traj], np.linspace(0.0, 1.0, 21))
    assert set(curve.mean.tolist()) == {0.0, 1.0}
    assert np.all(curve.stderr == 0.0)


def test_mismatched_durations_rejected():
    with pytest.raises(InputError):
        ensemble_p1([FieldTrajectory(1, 1.0), FieldTrajectory(1, 2.0)], [0.0, 0.5])


def test_grid_outside_traces_rejected():
    with pytest.raises(InputError):
        ensemble_p1([FieldTrajectory(1, 1.0)], [0.0, 1.5])


def test_decoded_curve_follows_master_equation(decay_runs, bath, latency):
    _, decoded = decay_runs
    grid = np.linspace(0.02, 0.5, 20)
    curve = ensemble_p1(decoded, grid, latency_correction=latency)
    start = prepare_initial(PreparationSpec(PrepTarget.FOCK_ONE), bath)
    oracle = np.array([p[1] for p in master_equation_evolve(start, bath, np.concatenate(([0.0], grid)))[1:]])
    sigma = np.sqrt(oracle * (1 - oracle) / len(decoded))
    assert np.all(np.abs(curve.mean - oracle) <= 3 * sigma)


def test_measured_and_true_curves_agree(decay_runs, latency):
    trajectories, decoded = decay_runs
    grid = np.linspace(0.02, 0.5, 20)
    measured = ensemble_p1(decoded, grid, latency_correction=latency)
    truth = ensemble_p1(trajectories, grid)
    assert np.max(np.abs(measured.mean - truth.mean)) < 0.05


def test_progression_narrows_with_more_trajectories(decay_runs, bath):
    _, decoded = decay_runs
    grid = np.linspace(0.02, 0.5, 20)
    curves = ensemble_progression(decoded, grid)
    assert sorted(curves) == [1, 5, 15, 904]
    assert set(np.unique(curves[1].mean).tolist()) <= {0.0, 1.0}
    start = prepare_initial(PreparationSpec(PrepTarget.FOCK_ONE), bath)
    oracle = np.array([p[1] for p in master_equation_evolve(start, bath, np.concatenate(([0.0], grid)))[1:]])
    mse = {k: float(np.mean((c.mean - oracle) ** 2)) for k, c in curves.items()}
    assert mse[5] > mse[904]
    assert mse[15] > mse[904]
    assert curves[904].stderr.max() < curves[15].stderr.max()


# --- Lifetime fits ---

def test_mle_recovers_exponential_lifetime():
    durations = make_rng(1).exponential(0.1, 5000)
    fit = fit_lifetime_mle(durations)
    assert fit.method is FitMethod.MLE
    assert fit.tau == pytest.approx(0.1, abs=4 * fit.tau_stderr)
    assert fit.tau_stderr == pytest.approx(fit.tau / math.sqrt(5000))


def test_mle_handles_right_censoring():
    raw = make_rng(2).exponential(0.1, 5000)
    cutoff = 0.15
    events = raw[raw < cutoff]
    censored = np.full(np.count_nonzero(raw >= cutoff), cutoff)
    fit = fit_lifetime_mle(events, censored)
    assert fit.n_events == events.size
    assert fit.tau == pytest.approx(0.1, abs=4 * fit.tau_stderr)


def test_fit_refused_below_ten_events():
    with pytest.raises(FitError):
        fit_lifetime_mle([0.1] * 9)
    with pytest.raises(FitError):
        fit_lifetime_loglinear([0.1] * 9, 0.1)


def test_mle_and_binned_fits_agree():
    durations = make_rng(3).exponential(0.1, 5000)
    mle = fit_lifetime_mle(durations)
    binned = fit_lifetime_loglinear(durations, mle.tau)
    assert binned.method is FitMethod.LOGLINEAR
    combined = math.hypot(mle.tau_stderr, binned.tau_stderr)
    assert abs(mle.tau - binned.tau) < 3 * combined


def test_raw_trajectories_reproduce_holding_time(one_photon_runs, bath):
    trajectories, _ = one_photon_runs
    result = first_jump_histogram(trajectories, PreparationSpec(PrepTarget.FOCK_ONE, 0.0))
    expected = bath.t_cavity / (1 + 3 * bath.n_therm)
    assert result.fit.tau == pytest.approx(expected, abs=4 * expected / math.sqrt(result.fit.n_events))
    edges, counts = result.histogram
    assert edges.size == 21
    assert counts.sum() <= result.fit.n_events


def test_decoded_one_photon_lifetime(one_photon_runs, latency):
    _, decoded = one_photon_runs
    result = first_jump_histogram(decoded, PreparationSpec(PrepTarget.FOCK_ONE, 0.0), latency_correction=latency)
    assert result.fit.n_events >= 903
    assert 0.09 <= result.fit.tau <= 0.11
    assert result.binned_fit is not None


def test_decoded_vacuum_lifetime(vacuum_runs, arrivals, detector, table, decoder):
    trajectories, decoded = vacuum_runs
    delay = jump_detection_delay(expected_p_e(0, detector, table), expected_p_e(1, detector, table),
                                 decoder, arrivals.rate)
    measured = first_jump_histogram(decoded, PreparationSpec(PrepTarget.THERMAL), latency_correction=delay)
    assert measured.fit.n_events >= 338
    assert 1.4 <= measured.fit.tau <= 1.9

    truth = first_jump_histogram(trajectories, PreparationSpec(PrepTarget.THERMAL))
    assert truth.fit.tau == pytest.approx(0.129 / 0.063, abs=4 * truth.fit.tau_stderr)


def test_traces_without_prepared_value_are_skipped():
    traces = [FieldTrajectory(0, 1.0)] + [FieldTrajectory(1, 1.0, (JumpEvent(0.1 * (i + 1) / 12, 1, 0),))
                                          for i in range(12)]
    result = first_jump_histogram(traces, PreparationSpec(PrepTarget.FOCK_ONE))
    assert result.skipped == 1
    assert result.fit.n_events == 12


def test_decoding_latency_statistics(one_photon_runs, arrivals, decoder, latency):
    trajectories, decoded = one_photon_runs
    delays = decoding_latencies(trajectories, decoded, level=1)
    assert delays.size > 1000
    duration, half = vote_latency(decoder, arrivals)
    assert half < delays.mean() < duration
    assert delays.mean() == pytest.approx(latency, abs=1e-3)


# --- Thermometry ---

def test_thermal_law_inversion():
    assert invert_thermal_p1(thermal_p1(0.063)) == pytest.approx(0.063, rel=1e-12)
    assert invert_thermal_p1(0.0) == 0.0
    with pytest.raises(DomainError):
        invert_thermal_p1(0.3)


def test_thermometry_recovers_occupancy(bath, arrivals, detector, table, decoder):
    _, decoded = simulate(560, PreparationSpec(PrepTarget.THERMAL), 2.5, 404,
                          bath, arrivals, detector, table, decoder)
    estimate = equilibrium_thermometry(decoded, detector, decoder)
    assert estimate.total_duration > 1300
    assert estimate.n_estimate == pytest.approx(0.063, abs=0.02)
    assert estimate.n_stderr > 0


def test_thermometry_of_empty_cavity(perfect_detector, exact_table, arrivals, decoder):
    stream = sample_detection_stream(FieldTrajectory(0, 200.0), arrivals, perfect_detector, exact_table, seed=1)
    estimate = equilibrium_thermometry([decode(stream, decoder)], perfect_detector, decoder)
    assert estimate.n_estimate == 0.0


def test_false_positive_correction_removes_bias(decoder):
    noisy = DetectorParams(p_g_given_1=0.13, p_e_given_0=0.25)
    n_atoms = 2_000_000
    bits = make_rng(8).random(n_atoms) < 0.25
    times = np.arange(1, n_atoms + 1) / 900.0
    trace = decode(AtomStream(times, np.zeros(n_atoms, dtype=int), bits, float(times[-1])), decoder)
    estimate = equilibrium_thermometry([trace], noisy, decoder)
    assert estimate.raw_p1 == pytest.approx(static_error_fraction(0.25, decoder), rel=0.3)
    assert abs(estimate.corrected_p1) < 0.1 * estimate.raw_p1


def test_thermometry_refuses_short_traces(arrivals, detector, table, decoder):
    stream = sample_detection_stream(FieldTrajectory(0, 5.0), arrivals, detector, table, seed=1)
    with pytest.raises(InsufficientDataError):
        equilibrium_thermometry([decode(stream, decoder)], detector, decoder)


# --- Emission bound ---

def test_emission_bound_at_experiment_values(bath):
    bound = emission_rate_bound(0.063, 0.049, bath, 900.0)
    assert bound == pytest.approx((0.063 - 0.049) / 0.129 / 900.0, rel=0.02)
    assert 1e-4 < bound < 1.5e-4


def test_no_emission_needed_when_cold_enough(bath):
    assert emission_rate_bound(0.04, 0.049, bath, 900.0) == 0.0
