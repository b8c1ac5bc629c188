"""Majority-vote reconstruction of the one-photon projector from an atom stream.

At every atom the decoder counts E (codes 1) and G (codes 0) among the last
`window` atoms. A strict majority sets the output; an exact tie keeps the
previous output. Before `window` atoms have arrived, the vote runs over the
atoms available and ties read 0.

The same vote is also modelled exactly as a Markov chain on (window content,
held output) to predict error fractions, false-jump rates and detection delays.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.special import comb
from scipy.stats import binom

from photon_jumps.detection_chain import AtomStream, detection_probability_g
from photon_jumps.errors import DomainError
from photon_jumps.seeding import as_seed_record

log = logging.getLogger(__name__)

# Atoms processed per vectorised block
BLOCK_SIZE = 1 << 20
# Largest window the exact chain is built for (2^16 * 2 states)
MAX_CHAIN_WINDOW = 16


class TieRule(str, Enum):
    HOLD_PREVIOUS = "hold_previous"


class WarmupRule(str, Enum):
    MAJORITY_TIES_TO_ZERO = "majority_of_available_ties_to_zero"


class FalseJumpMethod(str, Enum):
    MONTE_CARLO = "monte_carlo"
    CONDITIONAL = "conditional"


@dataclass(frozen=True)
class DecoderParams:
    window: int = 8
    tie_rule: TieRule = TieRule.HOLD_PREVIOUS
    warmup_rule: WarmupRule = WarmupRule.MAJORITY_TIES_TO_ZERO

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1:
            raise DomainError(f"window must be an integer >= 1, got {self.window}")
        object.__setattr__(self, "window", int(self.window))
        object.__setattr__(self, "tie_rule", TieRule(self.tie_rule))
        object.__setattr__(self, "warmup_rule", WarmupRule(self.warmup_rule))


@dataclass(frozen=True)
class DecodedJump:
    time: float
    from_value: int
    to_value: int


@dataclass
class DecodedTrace:
    """Inferred projector value after every atom, plus the jumps between values."""

    times: np.ndarray
    inferred: np.ndarray
    jumps: tuple = ()
    duration: float = 0.0

    def __len__(self):
        return int(self.times.size)

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.inferred.tolist()))

    def value_at(self, times):
        """Decoded value in force at each of `times`; the first vote back-fills earlier times."""
        if self.times.size == 0:
            raise DomainError("Empty decoded trace has no values")
        idx = np.searchsorted(self.times, np.asarray(times, dtype=float), side="right") - 1
        return self.inferred[np.maximum(idx, 0)]

    def jumps_as_dicts(self):
        return [{"time_s": j.time, "from": j.from_value, "to": j.to_value} for j in self.jumps]

    def write_csv(self, handle):
        handle.write("time_s,inferred\n")
        for t, v in zip(self.times.tolist(), self.inferred.tolist()):
            handle.write(f"{t!r},{v}\n")


@dataclass
class VoteState:
    """What the vote carries from one block of atoms to the next."""

    history: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    held: int = 0
    seen: int = 0

    @classmethod
    def primed(cls, value, window):
        """Steady state after a long run of error-free atoms coding `value`."""
        return cls(np.full(window - 1, bool(value)), int(value), window - 1)


# --- Decoding ---

def vote_block(detected_e, params, state):
    """Votes over one block of atoms.

    Returns:
        (inferred values as int8 array, VoteState to carry into the next block)
    """
    window = params.window
    bits = np.asarray(detected_e, dtype=bool)
    full = np.concatenate((state.history, bits)).astype(np.int32)
    csum = np.concatenate(([0], np.cumsum(full, dtype=np.int64)))
    idx = np.arange(state.history.size, full.size)
    lo = np.maximum(idx - window + 1, 0)
    e_count = csum[idx + 1] - csum[lo]
    available = idx + 1 - lo
    g_count = available - e_count

    decided = np.where(e_count > g_count, 1, np.where(g_count > e_count, 0, -1))
    # warm-up ties read vacuum
    decided[(decided < 0) & (available < window)] = 0

    # hold previous on ties: carry the last decided value forward
    last = np.where(decided >= 0, np.arange(decided.size), -1)
    np.maximum.accumulate(last, out=last)
    inferred = np.where(last >= 0, decided[np.maximum(last, 0)], state.held).astype(np.int8)

    keep = window - 1
    history = full[full.size - keep:].astype(bool) if keep else np.zeros(0, dtype=bool)
    held = int(inferred[-1]) if inferred.size else state.held
    return inferred, VoteState(history, held, state.seen + bits.size)


def _extract_jumps(times, inferred):
    change = np.flatnonzero(np.diff(inferred) != 0) + 1
    return tuple(
        DecodedJump(float(times[i]), int(inferred[i - 1]), int(inferred[i])) for i in change
    )


def decode(stream, params):
    """Decodes an AtomStream (or an ordered list of AtomRecord) into a DecodedTrace."""
    if not isinstance(stream, AtomStream):
        stream = AtomStream.from_records(stream)
    if len(stream) == 0:
        return DecodedTrace(np.zeros(0), np.zeros(0, dtype=np.int8), (), stream.duration)

    state = VoteState()
    blocks = []
    for start in range(0, len(stream), BLOCK_SIZE):
        inferred, state = vote_block(stream.detected_e[start:start + BLOCK_SIZE], params, state)
        blocks.append(inferred)
    inferred = np.concatenate(blocks)
    return DecodedTrace(stream.times, inferred, _extract_jumps(stream.times, inferred), stream.duration)


# --- Analytic vote errors ---

def vote_error_probability(p_flip, window=8):
    """Binomial probability that a full window votes wrong.

    Returns:
        (leading_term, exact_tail): exactly floor(window/2)+1 wrong atoms, and
        at least that many.
    """
    if not 0 <= p_flip <= 1:
        raise DomainError(f"p_flip must lie in [0, 1], got {p_flip}")
    # strict majority: floor(window/2)+1, which is ceil(window/2)+1 only for even windows
    wrong = window // 2 + 1
    leading = comb(window, wrong, exact=True) * p_flip ** wrong * (1 - p_flip) ** (window - wrong)
    tail = float(binom.sf(wrong - 1, window, p_flip))
    return float(leading), tail


def vote_latency(params, arr):
    """Mean span of one vote and the implied detection delay (half of it)."""
    if not arr.occupancy > 0:
        raise DomainError("Vote latency is undefined without atoms (occupancy = 0)")
    duration = (params.window - 1) * arr.slot_period / arr.occupancy
    return duration, duration / 2.0


def _vote_chain(q_e, window):
    """Transition matrix of the vote on (held output, window bits).

    State index is out * 2**window + bits, bit 0 being the newest atom.
    """
    if window > MAX_CHAIN_WINDOW:
        raise DomainError(f"Exact vote chain limited to window <= {MAX_CHAIN_WINDOW}")
    n_win = 1 << window
    mask = n_win - 1
    content = np.arange(n_win)
    ones = np.zeros(n_win, dtype=np.int64)
    for b in range(window):
        ones += (content >> b) & 1

    rows, cols, data = [], [], []
    for out in (0, 1):
        for bit, prob in ((1, q_e), (0, 1.0 - q_e)):
            if prob == 0:
                continue
            nxt = ((content << 1) | bit) & mask
            c = ones[nxt]
            out_next = np.where(2 * c > window, 1, np.where(2 * c < window, 0, out))
            rows.append(out * n_win + content)
            cols.append(out_next * n_win + nxt)
            data.append(np.full(n_win, prob))
    size = 2 * n_win
    P = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    return P, n_win


def _stationary(P):
    size = P.shape[0]
    A = (P.T - sparse.identity(size, format="csr")).tolil()
    A[size - 1, :] = np.ones(size)
    b = np.zeros(size)
    b[-1] = 1.0
    pi = spsolve(A.tocsc(), b)
    pi = np.where(pi < 0, 0.0, pi)
    return pi / pi.sum()


def static_error_fraction(p_flip, params):
    """Long-run fraction of votes that are wrong for a static field."""
    if not 0 <= p_flip <= 1:
        raise DomainError(f"p_flip must lie in [0, 1], got {p_flip}")
    if p_flip == 0:
        return 0.0
    P, n_win = _vote_chain(1.0 - p_flip, params.window)
    pi = _stationary(P)
    return float(pi[:n_win].sum())


def _conditional_rate(p_flip, params, atom_rate):
    # true value 1: a false jump is a 1 -> 0 output change
    P, n_win = _vote_chain(1.0 - p_flip, params.window)
    pi = _stationary(P)
    to_wrong = np.asarray(P[n_win:, :n_win].sum(axis=1)).ravel()
    per_atom = float(pi[n_win:] @ to_wrong)
    return per_atom * atom_rate


def _monte_carlo_rate(p_flip, params, atom_rate, n_atoms, seed):
    rng = as_seed_record(seed).generator()
    state = VoteState.primed(1, params.window)
    spurious = 0
    previous = 1
    done = 0
    while done < n_atoms:
        size = min(BLOCK_SIZE, n_atoms - done)
        bits = rng.random(size) >= p_flip
        inferred, state = vote_block(bits, params, state)
        spurious += int(np.count_nonzero((inferred[1:] == 0) & (inferred[:-1] == 1)))
        spurious += int(previous == 1 and inferred[0] == 0)
        previous = int(inferred[-1])
        done += size
    log.debug(f"Monte Carlo false jumps: {spurious} over {n_atoms} atoms")
    return spurious * atom_rate / n_atoms


def false_jump_rate(p_flip, params, atom_rate, method=FalseJumpMethod.MONTE_CARLO,
                    n_atoms=10_000_000, seed=0):
    """Rate (1/s) of spurious decoded jumps away from a static, correctly read field.

    monte_carlo decodes a long simulated stream and counts correct -> wrong
    output changes. conditional uses the exact vote chain: the stationary
    probability that a vote is wrong while the preceding one is correct,
    times the atom rate.
    """
    if not atom_rate > 0:
        raise DomainError(f"atom_rate must be positive, got {atom_rate}")
    if not 0 <= p_flip <= 1:
        raise DomainError(f"p_flip must lie in [0, 1], got {p_flip}")
    if p_flip == 0:
        return 0.0
    method = FalseJumpMethod(method)
    if method is FalseJumpMethod.CONDITIONAL:
        return _conditional_rate(p_flip, params, atom_rate)
    return _monte_carlo_rate(p_flip, params, atom_rate, int(n_atoms), seed)


def jump_detection_delay(p_e_before, p_e_after, params, atom_rate):
    """Expected time from a true switch to the decoded switch.

    Args:
        p_e_before: Probability an atom reads E before the switch.
        p_e_after: Same after the switch.
        params: DecoderParams.
        atom_rate: Mean atom rate in 1/s.
    """
    if p_e_before == p_e_after:
        raise DomainError("Detection delay needs distinguishable E probabilities")
    old = 0 if p_e_before < p_e_after else 1
    P_before, n_win = _vote_chain(p_e_before, params.window)
    pi = _stationary(P_before)
    old_slice = slice(old * n_win, (old + 1) * n_win)
    start = pi[old_slice]
    if start.sum() <= 0:
        raise DomainError("Decoder never shows the pre-switch value")
    start = start / start.sum()

    P_after, _ = _vote_chain(p_e_after, params.window)
    Q = P_after[old_slice, old_slice]
    steps = spsolve((sparse.identity(n_win, format="csc") - Q.tocsc()), np.ones(n_win))
    return float(start @ steps) / atom_rate


def expected_p_e(n, det, table):
    """Probability that an atom reads E at photon number n."""
    return 1.0 - detection_probability_g(n, det, table)
