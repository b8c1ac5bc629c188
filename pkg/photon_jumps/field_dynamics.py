"""Photon-number jump dynamics of a damped cavity mode in a thermal bath.

The photon number is a birth-death Markov chain on 0..n_max with

    down rate  n (1 + n_therm) / t_cavity
    up rate    (n + 1) n_therm / t_cavity   (zero at n_max)

Trajectories are sampled exactly (Gillespie) and ensemble averages come from
the master equation dp/dt = G p, integrated with an adaptive Runge-Kutta
scheme.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import NewType, Optional

import numpy as np
from scipy import constants
from scipy.integrate import solve_ivp
from scipy.linalg import null_space

from photon_jumps.errors import DomainError, NumericalError
from photon_jumps.seeding import SeedRecord, as_seed_record

log = logging.getLogger(__name__)

FockLevel = NewType("FockLevel", int)

# Largest thermal weight allowed above n_max
TRUNCATION_TOLERANCE = 1e-6
NORMALIZATION_TOLERANCE = 1e-12
# Master-equation normalization drift allowed before renormalizing
EVOLUTION_NORM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BathParams:
    """Cavity damping time (s), mean thermal occupancy and Fock truncation."""

    t_cavity: float
    n_therm: float
    n_max: int = 5

    def __post_init__(self):
        if not self.t_cavity > 0:
            raise DomainError(f"t_cavity must be positive, got {self.t_cavity}")
        if not self.n_therm >= 0:
            raise DomainError(f"n_therm must be non-negative, got {self.n_therm}")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise DomainError(f"n_max must be an integer >= 2, got {self.n_max}")
        tail = self.thermal_tail
        if tail >= TRUNCATION_TOLERANCE:
            raise DomainError(
                f"n_max={self.n_max} truncates a thermal weight of {tail:.2e} "
                f"at n_therm={self.n_therm}; it must stay below {TRUNCATION_TOLERANCE:g}"
            )

    @property
    def thermal_tail(self):
        """Thermal probability of finding more than n_max photons."""
        if self.n_therm == 0:
            return 0.0
        ratio = self.n_therm / (1.0 + self.n_therm)
        return ratio ** (self.n_max + 1)

    @property
    def levels(self):
        return np.arange(self.n_max + 1)

    def check_level(self, n):
        if int(n) != n or n < 0 or n > self.n_max:
            raise DomainError(f"Photon number {n} outside 0..{self.n_max}")
        return int(n)


@dataclass(frozen=True)
class JumpEvent:
    time: float
    from_n: int
    to_n: int

    def __post_init__(self):
        if abs(self.to_n - self.from_n) != 1:
            raise DomainError(f"Jump {self.from_n}->{self.to_n} does not change n by one")


@dataclass(frozen=True)
class FieldTrajectory:
    """Piecewise-constant photon-number path on [0, duration]."""

    initial_n: int
    duration: float
    events: tuple = ()
    seed: Optional[SeedRecord] = None

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError(f"Trajectory duration must be positive, got {self.duration}")
        n = self.initial_n
        last_time = 0.0
        for k, event in enumerate(self.events):
            if event.from_n != n:
                raise DomainError(
                    f"Event {k} starts at n={event.from_n} but the chain is at n={n}"
                )
            if event.time < 0 or event.time > self.duration or (k > 0 and event.time <= last_time):
                raise DomainError(f"Event {k} at t={event.time} breaks time ordering")
            last_time = event.time
            n = event.to_n

    @cached_property
    def jump_times(self):
        return np.fromiter((e.time for e in self.events), dtype=float, count=len(self.events))

    @cached_property
    def levels(self):
        """State on each segment: initial_n, then the state after every event."""
        states = np.empty(len(self.events) + 1, dtype=np.int64)
        states[0] = self.initial_n
        if self.events:
            states[1:] = [e.to_n for e in self.events]
        return states

    @property
    def final_n(self):
        return self.events[-1].to_n if self.events else self.initial_n

    def state_at(self, times):
        """Photon number at each of `times` (right-continuous path)."""
        times = np.asarray(times, dtype=float)
        idx = np.searchsorted(self.jump_times, times, side="right")
        return self.levels[idx]

    def segment_durations(self):
        bounds = np.concatenate(([0.0], self.jump_times, [self.duration]))
        return np.diff(bounds)

    def time_average(self):
        """Time-averaged photon number over the whole trajectory."""
        return float(np.dot(self.levels, self.segment_durations()) / self.duration)

    def occupation_fraction(self, level):
        mask = self.levels == level
        return float(self.segment_durations()[mask].sum() / self.duration)


@dataclass
class FockDistribution:
    """Photon-number probabilities indexed by Fock level."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("Fock distribution must be a non-empty vector")
        if np.any(p < 0):
            raise DomainError(f"Negative probability in Fock distribution: {p.min():.3e}")
        total = p.sum()
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise DomainError(f"Fock distribution sums to {total!r}, not 1")
        self.probabilities = p

    @classmethod
    def from_level(cls, n, n_max):
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)

    @property
    def n_max(self):
        return self.probabilities.size - 1

    def __getitem__(self, n):
        return float(self.probabilities[n]) if n <= self.n_max else 0.0

    def mean(self):
        return float(np.dot(np.arange(self.probabilities.size), self.probabilities))

    def sample(self, rng):
        return int(rng.choice(self.probabilities.size, p=self.probabilities))


def _clean_distribution(p):
    """Clips round-off negatives and renormalizes an integrator output."""
    p = np.where(p < 0, 0.0, p)
    return FockDistribution(p / p.sum())


# --- Rates and generator ---

def jump_rates(n, bath):
    """Returns (rate_up, rate_down) in 1/s for photon number n."""
    n = bath.check_level(n)
    rate_down = n * (1 + bath.n_therm) / bath.t_cavity
    if n == bath.n_max:
        rate_up = 0.0
    else:
        rate_up = (n + 1) * bath.n_therm / bath.t_cavity
    return rate_up, rate_down


def generator_matrix(bath, pump_rate=0.0):
    """Rate matrix G with G[m, n] the n -> m rate; columns sum to zero.

    `pump_rate` adds a constant n -> n+1 rate (photons deposited by probe atoms).
    """
    if pump_rate < 0:
        raise DomainError(f"pump_rate must be non-negative, got {pump_rate}")
    size = bath.n_max + 1
    G = np.zeros((size, size))
    for n in range(size):
        up, down = jump_rates(n, bath)
        if n < bath.n_max:
            G[n + 1, n] += up + pump_rate
        if n > 0:
            G[n - 1, n] += down
    G[np.diag_indices(size)] = -G.sum(axis=0)
    return G


# --- Trajectory sampling ---

def sample_trajectory(initial, duration, bath, seed):
    """Samples one exact jump trajectory.

    Args:
        initial: Starting Fock level (int) or a FockDistribution to draw it from.
        duration: Length of the trajectory in seconds.
        bath: BathParams defining the rates.
        seed: int or SeedRecord; the same seed gives the same trajectory bit for bit.

    Returns:
        FieldTrajectory with chronologically ordered JumpEvents.
    """
    if not duration > 0:
        raise DomainError(f"duration must be positive, got {duration}")
    record = as_seed_record(seed)
    rng = record.generator()

    if isinstance(initial, FockDistribution):
        if initial.n_max > bath.n_max:
            raise DomainError(f"Initial distribution exceeds n_max={bath.n_max}")
        n = initial.sample(rng)
    else:
        n = bath.check_level(initial)
    initial_n = n

    events = []
    t = 0.0
    while True:
        rate_up, rate_down = jump_rates(n, bath)
        total = rate_up + rate_down
        if total <= 0:
            break  # absorbing state
        t += rng.exponential(1.0 / total)
        if t >= duration:
            break
        new_n = n + 1 if rng.random() * total < rate_up else n - 1
        events.append(JumpEvent(t, n, new_n))
        n = new_n

    return FieldTrajectory(initial_n, float(duration), tuple(events), record)


def holding_times(trajectory, level):
    """Completed sojourn durations in `level`; the censored final sojourn is dropped."""
    durations = trajectory.segment_durations()[:-1]
    levels = trajectory.levels[:-1]
    return durations[levels == level]


def exit_fractions(trajectories, level):
    """Counts (up, down) of jumps out of `level` across trajectories."""
    up = down = 0
    for traj in trajectories:
        for event in traj.events:
            if event.from_n != level:
                continue
            if event.to_n > level:
                up += 1
            else:
                down += 1
    return up, down


# --- Ensemble averages ---

def master_equation_evolve(p0, bath, t_grid, pump_rate=0.0, rtol=1e-9, atol=1e-12):
    """Integrates dp/dt = G p and returns one FockDistribution per grid time."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or t_grid[0] != 0.0:
        raise DomainError("t_grid must be a non-empty 1-D grid starting at 0")
    if np.any(np.diff(t_grid) <= 0):
        raise DomainError("t_grid must be strictly increasing")
    if p0.n_max != bath.n_max:
        raise DomainError(f"p0 has n_max={p0.n_max}, bath has n_max={bath.n_max}")
    if t_grid.size == 1:
        return [FockDistribution(p0.probabilities.copy())]

    G = generator_matrix(bath, pump_rate)
    sol = solve_ivp(
        lambda t, p: G @ p,
        (0.0, t_grid[-1]),
        p0.probabilities,
        method="DOP853",
        t_eval=t_grid,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise NumericalError(
            "Master equation integration failed",
            {"message": sol.message, "status": sol.status, "nfev": sol.nfev,
             "t_reached": float(sol.t[-1]) if sol.t.size else 0.0},
        )
    log.debug(f"Master equation: {sol.nfev} evaluations over {t_grid[-1]:.4g}s")

    out = []
    for k, column in enumerate(sol.y.T):
        drift = abs(column.sum() - 1.0)
        if drift > EVOLUTION_NORM_TOLERANCE:
            raise NumericalError(
                "Master equation lost normalization",
                {"t": float(t_grid[k]), "drift": float(drift)},
            )
        out.append(_clean_distribution(column))
    return out


def initial_decay_time(p0, bath, level=1, dt=1e-4):
    """Time constant -P(0)/P'(0) of the population of `level`.

    The slope is a Richardson-extrapolated forward difference on the master
    equation, accurate to O(dt^2).
    """
    grid = [0.0, dt / 2, dt]
    p_start, p_half, p_full = (p[level] for p in master_equation_evolve(p0, bath, grid, rtol=1e-12, atol=1e-15))
    slope = 2 * (p_half - p_start) / (dt / 2) - (p_full - p_start) / dt
    if slope >= 0:
        raise DomainError(f"Population of |{level}> is not decaying initially")
    return -p_start / slope


def stationary_distribution(bath):
    """Geometric thermal law renormalized over 0..n_max."""
    if bath.n_therm == 0:
        return FockDistribution.from_level(0, bath.n_max)
    ratio = bath.n_therm / (1.0 + bath.n_therm)
    p = ratio ** bath.levels.astype(float)
    return FockDistribution(p / p.sum())


def stationary_with_pumping(bath, pump_rate):
    """Stationary law of the generator with an extra constant n -> n+1 rate."""
    if pump_rate == 0:
        return stationary_distribution(bath)
    kernel = null_space(generator_matrix(bath, pump_rate))
    if kernel.shape[1] != 1:
        raise NumericalError("Generator null space is not one-dimensional",
                             {"dimension": kernel.shape[1]})
    v = np.abs(kernel[:, 0])
    return FockDistribution(v / v.sum())


def planck_occupation(frequency, temperature):
    """Bose-Einstein occupation of a mode at `frequency` (Hz) and `temperature` (K)."""
    if not frequency > 0 or not temperature > 0:
        raise DomainError(
            f"Frequency and temperature must be positive, got {frequency} Hz, {temperature} K"
        )
    x = constants.h * frequency / (constants.k * temperature)
    # exp(-x)/(1 - exp(-x)) stays finite for x -> inf
    return float(np.exp(-x) / -np.expm1(-x))
