"""Probe-atom detection events generated from a field trajectory.

Atoms arrive in fixed sample slots, each slot holding one detected atom with
probability `occupancy`. Each atom reads the photon number at its slot time
and is detected in g with probability

    P(g|n) = p_g_given_1 + C * P_ideal(g|n),   C = 1 - p_g_given_1 - p_e_given_0.

By default atoms never change the field. With `emission_prob > 0` the coupled
sampler lets each atom deposit a photon.
"""

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from photon_jumps.errors import DomainError, InputError
from photon_jumps.field_dynamics import FieldTrajectory, FockDistribution, JumpEvent, jump_rates
from photon_jumps.probe_physics import ideal_detection_probability
from photon_jumps.seeding import as_seed_record

log = logging.getLogger(__name__)

# Emission probability per atom allowed by run configs
EMISSION_PROB_BOUND = 1e-4
# Allowed mismatch between occupancy/slot_period and a configured atom rate
RATE_CONSISTENCY = 0.05

CSV_HEADER = ("time_s", "true_n", "detected")


class Outcome(str, Enum):
    E = "E"
    G = "G"


@dataclass(frozen=True)
class ArrivalParams:
    """Slotted arrivals: one sample every `slot_period` s, occupied with `occupancy`."""

    slot_period: float
    occupancy: float
    atom_rate: Optional[float] = None

    def __post_init__(self):
        if not self.slot_period > 0:
            raise DomainError(f"slot_period must be positive, got {self.slot_period}")
        if not 0 <= self.occupancy <= 1:
            raise DomainError(f"occupancy must lie in [0, 1], got {self.occupancy}")
        if self.atom_rate is not None:
            derived = self.occupancy / self.slot_period
            if abs(derived - self.atom_rate) > RATE_CONSISTENCY * self.atom_rate:
                raise DomainError(
                    f"occupancy/slot_period = {derived:.1f}/s disagrees with atom_rate = {self.atom_rate}/s"
                )

    @property
    def rate(self):
        """Mean detected-atom rate in 1/s."""
        return self.occupancy / self.slot_period

    def n_slots(self, duration):
        return int(math.floor(duration / self.slot_period + 1e-9))


@dataclass(frozen=True)
class DetectorParams:
    """Readout errors and the optional per-atom emission probability."""

    p_g_given_1: float
    p_e_given_0: float
    emission_prob: float = 0.0

    def __post_init__(self):
        for name in ("p_g_given_1", "p_e_given_0", "emission_prob"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")
        if self.p_g_given_1 + self.p_e_given_0 >= 1:
            raise DomainError("p_g_given_1 + p_e_given_0 must stay below 1 (zero contrast)")

    @property
    def contrast(self):
        return 1.0 - self.p_g_given_1 - self.p_e_given_0


@dataclass(frozen=True)
class AtomRecord:
    time: float
    true_n: int
    detected: Outcome


@dataclass
class AtomStream:
    """Detection events as parallel arrays; iterates as AtomRecord."""

    times: np.ndarray
    true_n: np.ndarray
    detected_e: np.ndarray
    duration: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.true_n = np.asarray(self.true_n, dtype=np.int64)
        self.detected_e = np.asarray(self.detected_e, dtype=bool)
        if not (self.times.shape == self.true_n.shape == self.detected_e.shape):
            raise InputError("Atom stream arrays have different lengths")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise InputError("Atom stream is not chronologically ordered")

    def __len__(self):
        return int(self.times.size)

    def __iter__(self):
        for t, n, e in zip(self.times, self.true_n, self.detected_e):
            yield AtomRecord(float(t), int(n), Outcome.E if e else Outcome.G)

    @classmethod
    def from_records(cls, records, duration=None):
        records = list(records)
        times = [r.time for r in records]
        if duration is None:
            duration = times[-1] if times else 0.0
        return cls(
            np.array(times, dtype=float),
            np.array([r.true_n for r in records], dtype=np.int64),
            np.array([Outcome(r.detected) is Outcome.E for r in records], dtype=bool),
            float(duration),
        )

    def write_csv(self, handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t, n, e in zip(self.times.tolist(), self.true_n.tolist(), self.detected_e.tolist()):
            writer.writerow((repr(t), n, "E" if e else "G"))

    @classmethod
    def read_csv(cls, handle, duration=None):
        """Reads the time_s,true_n,detected schema; true_n may be blank for recorded data (-1)."""
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise InputError(f"Expected CSV header {','.join(CSV_HEADER)}, got {header}")
        times, true_n, detected = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, n, d = (cell.strip() for cell in row)
                times.append(float(t))
                true_n.append(int(n) if n else -1)
                detected.append(Outcome(d.upper()) is Outcome.E)
            except ValueError as e:
                raise InputError(f"Malformed atom record on line {lineno}: {row}") from e
        if duration is None:
            duration = times[-1] if times else 0.0
        return cls(np.array(times), np.array(true_n), np.array(detected, dtype=bool), float(duration))


@dataclass(frozen=True)
class BackactionOutcome:
    n_after: int
    injected: bool
    clamped: bool


@dataclass(frozen=True)
class BackactionReport:
    atoms: int
    injections: int
    clamped: int


# --- Detection model ---

def detection_probability_g(n, det, table):
    """P(g|n) for the affine readout model."""
    return det.p_g_given_1 + det.contrast * ideal_detection_probability(n, table)


def _p_g_lookup(det, table, n_max):
    missing = [n for n in range(n_max + 1) if n not in table.phases]
    if missing:
        raise DomainError(f"Phase table lacks levels {missing}")
    return np.array([detection_probability_g(n, det, table) for n in range(n_max + 1)])


def sample_detection_stream(traj, arr, det, table, seed, duration=None):
    """Samples the atom stream read from a fixed field trajectory.

    The trajectory is only read; atoms never act on it here.
    """
    duration = traj.duration if duration is None else duration
    if duration > traj.duration:
        raise InputError(f"Trajectory covers {traj.duration}s, stream asks for {duration}s")
    rng = as_seed_record(seed).generator()

    n_slots = arr.n_slots(duration)
    occupied = np.flatnonzero(rng.random(n_slots) < arr.occupancy)
    times = occupied * arr.slot_period
    true_n = traj.state_at(times)
    p_g = _p_g_lookup(det, table, int(true_n.max(initial=0)))[true_n]
    detected_e = rng.random(times.size) >= p_g
    return AtomStream(times, true_n, detected_e, float(duration))


# --- Emission back-action ---

def apply_emission_backaction(n, det, bath, rng):
    """Lets one atom deposit a photon with probability emission_prob.

    A deposit at n_max is clamped and reported instead of leaving the basis.
    """
    if det.emission_prob == 0:
        return BackactionOutcome(n, False, False)
    if rng.random() >= det.emission_prob:
        return BackactionOutcome(n, False, False)
    if n >= bath.n_max:
        return BackactionOutcome(n, False, True)
    return BackactionOutcome(n + 1, True, False)


def sample_coupled_stream(initial, duration, bath, arr, det, table, seed):
    """Samples field and atoms together so atoms can inject photons.

    Between atom slots the field follows exact CTMC steps; holding times are
    redrawn after each injection (memoryless).

    Returns:
        (FieldTrajectory, AtomStream, BackactionReport)
    """
    record = as_seed_record(seed)
    rng = record.generator()

    if isinstance(initial, FockDistribution):
        n = initial.sample(rng)
    else:
        n = bath.check_level(initial)
    initial_n = n

    n_slots = arr.n_slots(duration)
    times = np.flatnonzero(rng.random(n_slots) < arr.occupancy) * arr.slot_period
    u_detect = rng.random(times.size)
    p_g = _p_g_lookup(det, table, bath.n_max)

    def next_jump(level, now):
        rate_up, rate_down = jump_rates(level, bath)
        total = rate_up + rate_down
        if total <= 0:
            return math.inf, level
        when = now + rng.exponential(1.0 / total)
        return when, (level + 1 if rng.random() * total < rate_up else level - 1)

    events = []
    true_n = np.empty(times.size, dtype=np.int64)
    injections = clamped = 0
    jump_time, jump_to = next_jump(n, 0.0)

    for k, t_atom in enumerate(times):
        while jump_time <= t_atom:
            events.append(JumpEvent(jump_time, n, jump_to))
            n = jump_to
            jump_time, jump_to = next_jump(n, jump_time)
        true_n[k] = n
        outcome = apply_emission_backaction(n, det, bath, rng)
        if outcome.clamped:
            clamped += 1
        if outcome.injected:
            events.append(JumpEvent(float(t_atom), n, outcome.n_after))
            injections += 1
            n = outcome.n_after
            jump_time, jump_to = next_jump(n, float(t_atom))

    while jump_time < duration:
        events.append(JumpEvent(jump_time, n, jump_to))
        n = jump_to
        jump_time, jump_to = next_jump(n, jump_time)

    if clamped:
        log.warning(f"{clamped} photon injections clamped at n_max={bath.n_max}")
    log.debug(f"Coupled stream: {times.size} atoms, {injections} injections")

    trajectory = FieldTrajectory(initial_n, float(duration), tuple(events), record)
    stream = AtomStream(times, true_n, u_detect >= p_g[true_n], float(duration))
    return trajectory, stream, BackactionReport(int(times.size), injections, clamped)
