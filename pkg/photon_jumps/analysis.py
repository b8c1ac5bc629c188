"""Ensemble statistics: preparation, <P1(t)> curves, lifetime fits, thermometry."""

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from photon_jumps.errors import DomainError, FitError, InputError, InsufficientDataError
from photon_jumps.field_dynamics import (
    BathParams,
    FieldTrajectory,
    FockDistribution,
    stationary_distribution,
    stationary_with_pumping,
)
from photon_jumps.jump_decoder import DecodedTrace, static_error_fraction

log = logging.getLogger(__name__)

MIN_FIT_EVENTS = 10
HISTOGRAM_BINS = 20
# Histogram span in units of the MLE lifetime
HISTOGRAM_SPAN = 5.0
MIN_THERMOMETRY_SECONDS = 100.0
# Trace count below which thermometry errors come from time blocks instead
MIN_TRACES_FOR_SPREAD = 10


class PrepTarget(str, Enum):
    VACUUM_RESET = "vacuum_reset"
    FOCK_ONE = "fock_one"
    THERMAL = "thermal"


class FitMethod(str, Enum):
    MLE = "mle_exponential"
    LOGLINEAR = "binned_loglinear"


@dataclass(frozen=True)
class PreparationSpec:
    target: PrepTarget = PrepTarget.THERMAL
    residual_error: float = 0.003

    def __post_init__(self):
        object.__setattr__(self, "target", PrepTarget(self.target))
        if not 0 <= self.residual_error < 0.5:
            raise DomainError(f"residual_error must lie in [0, 0.5), got {self.residual_error}")

    @property
    def prepared_value(self):
        """Projector value the preparation aims at."""
        return 1 if self.target is PrepTarget.FOCK_ONE else 0


@dataclass(frozen=True)
class LifetimeFit:
    tau: float
    tau_stderr: float
    method: FitMethod
    n_events: int

    def as_dict(self):
        return {
            "tau_s": self.tau,
            "tau_stderr_s": self.tau_stderr,
            "method": self.method.value,
            "n_events": self.n_events,
        }


@dataclass
class EnsembleCurve:
    t_grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_trajectories: int

    def write_csv(self, handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("t_s", "mean", "stderr", "n_trajectories"))
        for t, m, s in zip(self.t_grid.tolist(), self.mean.tolist(), self.stderr.tolist()):
            writer.writerow((repr(t), repr(m), repr(s), self.n_trajectories))


@dataclass
class FirstJumpResult:
    """First-jump durations of the prepared state and their exponential fits."""

    event_times: np.ndarray
    censored_times: np.ndarray
    fit: LifetimeFit
    binned_fit: Optional[LifetimeFit]
    skipped: int = 0
    histogram: tuple = field(default_factory=tuple)

    def write_csv(self, handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("duration_s", "censored"))
        for t in self.event_times.tolist():
            writer.writerow((repr(t), 0))
        for t in self.censored_times.tolist():
            writer.writerow((repr(t), 1))

    def write_histogram_csv(self, handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("bin_start_s", "bin_end_s", "count"))
        edges, counts = self.histogram
        for a, b, c in zip(edges[:-1].tolist(), edges[1:].tolist(), counts.tolist()):
            writer.writerow((repr(a), repr(b), c))

    def summary(self):
        return {
            "mle": self.fit.as_dict(),
            "binned": self.binned_fit.as_dict() if self.binned_fit else None,
            "n_censored": int(self.censored_times.size),
            "n_skipped": self.skipped,
        }


@dataclass(frozen=True)
class ThermometryEstimate:
    raw_p1: float
    p1_stderr: float
    corrected_p1: float
    raw_n: float
    n_estimate: float
    n_stderr: float
    false_positive_fraction: float
    false_negative_fraction: float
    total_duration: float
    n_traces: int

    def as_dict(self):
        return dict(self.__dict__)


# --- Preparation ---

def prepare_initial(spec, bath):
    """Initial photon-number distribution for a preparation protocol."""
    if spec.target is PrepTarget.THERMAL:
        return stationary_distribution(bath)
    p = np.zeros(bath.n_max + 1)
    if spec.target is PrepTarget.VACUUM_RESET:
        p[0], p[1] = 1.0 - spec.residual_error, spec.residual_error
    else:
        p[1], p[0] = 1.0 - spec.residual_error, spec.residual_error
    return FockDistribution(p)


# --- Ensemble curves ---

def _trace_duration(trace):
    if isinstance(trace, (FieldTrajectory, DecodedTrace)):
        return float(trace.duration)
    raise InputError(f"Unsupported trace type {type(trace).__name__}")


def _p1_indicator(trace, times, latency_correction):
    if isinstance(trace, FieldTrajectory):
        return trace.state_at(times) == 1
    shifted = np.minimum(np.asarray(times) + latency_correction, trace.duration)
    return trace.value_at(shifted) == 1


def _indicator_matrix(traces, t_grid, latency_correction):
    traces = list(traces)
    if not traces:
        raise InputError("No traces to average")
    durations = np.array([_trace_duration(tr) for tr in traces])
    if not np.allclose(durations, durations[0]):
        raise InputError(f"Traces have mismatched durations ({durations.min()}..{durations.max()} s)")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.min() < 0 or t_grid.max() > durations[0]:
        raise InputError(f"Time grid leaves [0, {durations[0]}] s")
    return t_grid, np.vstack([_p1_indicator(tr, t_grid, latency_correction) for tr in traces])


def _curve(t_grid, indicators):
    n = indicators.shape[0]
    mean = indicators.mean(axis=0)
    stderr = np.sqrt(mean * (1.0 - mean) / n)
    return EnsembleCurve(t_grid, mean, stderr, n)


def ensemble_p1(traces, t_grid, latency_correction=0.0):
    """Pointwise fraction of traces with projector value 1.

    Field trajectories give the ground-truth curve; decoded traces give the
    measured one, optionally read `latency_correction` seconds later to undo
    the vote delay.
    """
    t_grid, indicators = _indicator_matrix(traces, t_grid, latency_correction)
    return _curve(t_grid, indicators)


def ensemble_progression(traces, t_grid, sizes=(1, 5, 15), latency_correction=0.0):
    """Curves averaged over the first k traces for each k in `sizes`, plus all of them."""
    t_grid, indicators = _indicator_matrix(traces, t_grid, latency_correction)
    curves = {k: _curve(t_grid, indicators[:k]) for k in sizes if k <= indicators.shape[0]}
    curves[indicators.shape[0]] = _curve(t_grid, indicators)
    return curves


# --- Lifetimes ---

def fit_lifetime_mle(durations, censored=()):
    """Right-censored exponential MLE: tau = total exposure / number of events."""
    durations = np.asarray(durations, dtype=float)
    censored = np.asarray(censored, dtype=float)
    n_events = durations.size
    if n_events < MIN_FIT_EVENTS:
        raise FitError(f"Only {n_events} events; at least {MIN_FIT_EVENTS} are needed")
    tau = (durations.sum() + censored.sum()) / n_events
    return LifetimeFit(float(tau), float(tau / math.sqrt(n_events)), FitMethod.MLE, int(n_events))


def lifetime_histogram(durations, tau_hint, bins=HISTOGRAM_BINS):
    edges = np.linspace(0.0, HISTOGRAM_SPAN * tau_hint, bins + 1)
    counts, _ = np.histogram(durations, edges)
    return edges, counts


def fit_lifetime_loglinear(durations, tau_hint, bins=HISTOGRAM_BINS):
    """Weighted straight-line fit of log counts over equal bins on [0, 5 tau_hint].

    Empty bins are excluded; weights sqrt(count) match Poisson errors on log counts.
    """
    durations = np.asarray(durations, dtype=float)
    if durations.size < MIN_FIT_EVENTS:
        raise FitError(f"Only {durations.size} events; at least {MIN_FIT_EVENTS} are needed")
    edges, counts = lifetime_histogram(durations, tau_hint, bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    filled = counts > 0
    if filled.sum() < 3:
        raise FitError("Fewer than 3 non-empty histogram bins")
    coef, cov = np.polyfit(
        centers[filled], np.log(counts[filled]), 1, w=np.sqrt(counts[filled]), cov="unscaled"
    )
    slope = coef[0]
    if slope >= 0:
        raise FitError(f"Histogram does not decay (slope {slope:.3g})")
    tau = -1.0 / slope
    tau_stderr = math.sqrt(cov[0, 0]) / slope ** 2
    return LifetimeFit(float(tau), float(tau_stderr), FitMethod.LOGLINEAR, int(counts.sum()))


def _first_sojourn(trace, target, latency_correction):
    """(duration, censored) of the first stay in `target`, or None if never seen."""
    if isinstance(trace, FieldTrajectory):
        levels = trace.levels
        hits = np.flatnonzero(levels == target)
        if hits.size == 0:
            return None
        k = hits[0]
        bounds = np.concatenate(([0.0], trace.jump_times, [trace.duration]))
        start, end = bounds[k], bounds[k + 1]
        return end - start, k == levels.size - 1

    hits = np.flatnonzero(trace.inferred == target)
    if hits.size == 0:
        return None
    i0 = hits[0]
    start = trace.times[i0]
    leave = np.flatnonzero(trace.inferred[i0:] != target)
    if leave.size == 0:
        return trace.duration - start, True
    end = max(trace.times[i0 + leave[0]] - latency_correction, start)
    return end - start, False


def first_jump_histogram(traces, prep, latency_correction=0.0):
    """First-jump durations of the prepared state, with MLE and binned fits.

    A trace starts counting at its first sample showing the prepared value
    (for the vacuum: the first vote with a majority in g).
    """
    target = prep.prepared_value
    events, censored = [], []
    skipped = 0
    for trace in traces:
        sojourn = _first_sojourn(trace, target, latency_correction)
        if sojourn is None:
            skipped += 1
            continue
        duration, is_censored = sojourn
        (censored if is_censored else events).append(duration)
    if skipped:
        log.warning(f"{skipped} traces never showed the prepared value {target}")

    events = np.array(events, dtype=float)
    censored = np.array(censored, dtype=float)
    fit = fit_lifetime_mle(events, censored)
    try:
        binned = fit_lifetime_loglinear(events, fit.tau)
    except FitError as e:
        log.warning(f"Binned lifetime fit refused: {e}")
        binned = None
    return FirstJumpResult(events, censored, fit, binned, skipped, lifetime_histogram(events, fit.tau))


def decoding_latencies(trajectories, decoded, level=1, max_delay=0.05):
    """Delays between the first true jump out of `level` and the matching decoded jump."""
    delays = []
    for traj, trace in zip(trajectories, decoded):
        leaving = [e for e in traj.events if e.from_n == level]
        if not leaving:
            continue
        t_true = leaving[0].time
        from_value = 1 if level == 1 else 0
        for jump in trace.jumps:
            if jump.from_value == from_value and t_true <= jump.time <= t_true + max_delay:
                delays.append(jump.time - t_true)
                break
    return np.array(delays)


# --- Thermometry ---

def thermal_p1(n_mean):
    """One-photon probability of a thermal field with mean occupancy n_mean."""
    return n_mean / (1.0 + n_mean) ** 2


def invert_thermal_p1(p1):
    """Smaller root of p1 = n/(1+n)^2."""
    if p1 < 0 or p1 > 0.25:
        raise DomainError(f"<P1> = {p1} cannot come from a thermal field")
    if p1 == 0:
        return 0.0
    return ((1.0 - 2.0 * p1) - math.sqrt(1.0 - 4.0 * p1)) / (2.0 * p1)


def _time_blocks(trace, n_blocks):
    """Time-weighted P1 averages of a decoded trace over equal time blocks."""
    if len(trace) == 0:
        return []
    start, stop = float(trace.times[0]), float(trace.duration)
    edges = np.linspace(start, stop, n_blocks + 1)
    bounds = np.concatenate((trace.times, [stop]))
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        lo = np.clip(bounds[:-1], a, b)
        hi = np.clip(bounds[1:], a, b)
        weight = hi - lo
        total = weight.sum()
        if total > 0:
            out.append((float(np.dot(trace.inferred, weight) / total), float(total)))
    return out


def equilibrium_thermometry(traces, det, params, min_duration=MIN_THERMOMETRY_SECONDS):
    """Mean thermal occupancy from the time-averaged decoded <P1>.

    The raw average is corrected for the decoder's static false-positive and
    false-negative fractions before inverting the thermal law.
    """
    traces = [tr for tr in traces if len(tr) > 0]
    blocks_per_trace = 1 if len(traces) >= MIN_TRACES_FOR_SPREAD else MIN_TRACES_FOR_SPREAD
    blocks = [b for tr in traces for b in _time_blocks(tr, blocks_per_trace)]
    total = sum(w for _, w in blocks)
    if total < min_duration:
        raise InsufficientDataError(
            f"Thermometry needs {min_duration}s of decoded trace, got {total:.1f}s"
        )
    values = np.array([v for v, _ in blocks])
    weights = np.array([w for _, w in blocks])
    raw = float(np.dot(values, weights) / total)
    k = values.size
    spread = np.sqrt(np.sum((weights * (values - raw)) ** 2) * k / (k - 1)) / total if k > 1 else 0.0

    f0 = static_error_fraction(det.p_e_given_0, params)
    f1 = static_error_fraction(det.p_g_given_1, params)
    scale = 1.0 - f0 - f1
    corrected = min(max((raw - f0) / scale, 0.0), 0.25)
    n_est = invert_thermal_p1(corrected)
    # dn/dp for p = n/(1+n)^2
    slope = (1.0 + n_est) ** 3 / (1.0 - n_est) if n_est < 1 else math.inf
    estimate = ThermometryEstimate(
        raw_p1=raw,
        p1_stderr=float(spread),
        corrected_p1=corrected,
        raw_n=invert_thermal_p1(min(raw, 0.25)),
        n_estimate=n_est,
        n_stderr=float(spread / scale * slope),
        false_positive_fraction=f0,
        false_negative_fraction=f1,
        total_duration=float(total),
        n_traces=len(traces),
    )
    log.info(
        f"Thermometry: <P1> raw {raw:.5f}, corrected {corrected:.5f}, "
        f"n = {n_est:.4f} +/- {estimate.n_stderr:.4f} over {total:.0f}s"
    )
    return estimate


def emission_rate_bound(n_observed, n_thermal, bath, atom_rate):
    """Per-atom emission probability that would lift the occupancy from n_thermal to n_observed."""
    if not atom_rate > 0:
        raise DomainError(f"atom_rate must be positive, got {atom_rate}")
    if n_observed <= n_thermal:
        return 0.0
    reference = BathParams(bath.t_cavity, n_thermal, bath.n_max)

    def excess(pump):
        return stationary_with_pumping(reference, pump).mean() - n_observed

    guess = (n_observed - n_thermal) / bath.t_cavity
    pump = brentq(excess, 0.0, 4.0 * guess, xtol=1e-12)
    return pump / atom_rate
