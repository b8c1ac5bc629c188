import io
import math

import numpy as np
import pytest

from photon_jumps.detection_chain import AtomRecord, AtomStream, Outcome, sample_detection_stream
from photon_jumps.errors import DomainError
from photon_jumps.field_dynamics import FieldTrajectory, JumpEvent
from photon_jumps.jump_decoder import (
    DecodedTrace,
    DecoderParams,
    FalseJumpMethod,
    VoteState,
    decode,
    expected_p_e,
    false_jump_rate,
    jump_detection_delay,
    static_error_fraction,
    vote_block,
    vote_error_probability,
    vote_latency,
)
from photon_jumps.seeding import make_rng, trajectory_seed


def stream_of(codes, spacing=1e-3):
    bits = np.array([c == "E" for c in codes], dtype=bool)
    times = spacing * np.arange(1, bits.size + 1)
    return AtomStream(times, np.full(bits.size, -1), bits, float(times[-1]) if bits.size else 0.0)


def static_stream(p_flip, n_atoms, seed, value=1):
    rng = make_rng(seed)
    wrong = rng.random(n_atoms) < p_flip
    bits = ~wrong if value == 1 else wrong
    times = np.arange(1, n_atoms + 1) / 900.0
    return AtomStream(times, np.full(n_atoms, value), bits, float(times[-1]))


# --- Vote rule ---

def test_all_g_reads_vacuum(decoder):
    assert decode(stream_of("G" * 20), decoder).inferred.tolist() == [0] * 20


def test_warm_up_majority_of_available_atoms(decoder):
    assert decode(stream_of("EGEEG"), decoder).inferred.tolist() == [1, 0, 1, 1, 1]


def test_tie_holds_previous_output(decoder):
    codes = "E" * 8 + "GGGG" + "G"
    inferred = decode(stream_of(codes), decoder).inferred.tolist()
    assert inferred[:8] == [1] * 8
    # four G among the last eight is a tie: output stays 1
    assert inferred[8:12] == [1, 1, 1, 1]
    assert inferred[12] == 0


def test_tie_after_vacuum_holds_vacuum(decoder):
    codes = "G" * 8 + "EEEE" + "E"
    inferred = decode(stream_of(codes), decoder).inferred.tolist()
    assert inferred[8:12] == [0, 0, 0, 0]
    assert inferred[12] == 1


def test_jumps_are_extracted(decoder):
    trace = decode(stream_of("E" * 10 + "G" * 10 + "E" * 10), decoder)
    assert [(j.from_value, j.to_value) for j in trace.jumps] == [(1, 0), (0, 1)]
    assert trace.jumps[0].time == pytest.approx(15e-3)
    assert trace.jumps[1].time == pytest.approx(25e-3)


def test_blocks_decode_like_one_pass(decoder):
    bits = make_rng(1).random(5000) < 0.4
    whole, _ = vote_block(bits, decoder, VoteState())
    state = VoteState()
    parts = []
    for size in (3, 1, 700, 5, 2000, 2291):
        chunk, bits = bits[:size], bits[size:]
        out, state = vote_block(chunk, decoder, state)
        parts.append(out)
    np.testing.assert_array_equal(np.concatenate(parts), whole)


def test_decode_accepts_records(decoder):
    records = [AtomRecord(0.001 * (i + 1), 1, Outcome.E) for i in range(5)]
    trace = decode(records, decoder)
    assert trace.inferred.tolist() == [1] * 5


def test_empty_stream(decoder):
    trace = decode(AtomStream(np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool), 1.0), decoder)
    assert len(trace) == 0
    assert trace.jumps == ()
    with pytest.raises(DomainError):
        trace.value_at([0.5])


def test_value_at_back_fills_before_first_atom():
    trace = DecodedTrace(np.array([0.1, 0.2, 0.3]), np.array([1, 0, 1], dtype=np.int8), (), 0.4)
    assert trace.value_at([0.0, 0.1, 0.25, 0.4]).tolist() == [1, 1, 0, 1]


def test_decoded_csv(decoder):
    buffer = io.StringIO()
    decode(stream_of("EEG", spacing=0.25), decoder).write_csv(buffer)
    assert buffer.getvalue().splitlines() == ["time_s,inferred", "0.25,1", "0.5,1", "0.75,1"]


def test_window_must_be_positive():
    with pytest.raises(DomainError):
        DecoderParams(window=0)


# --- Analytic errors and latency ---

def test_leading_vote_error_terms():
    assert vote_error_probability(0.13, 8)[0] == pytest.approx(1.4e-3, abs=0.05e-3)
    assert vote_error_probability(0.09, 8)[0] == pytest.approx(2.5e-4, abs=0.1e-4)


def test_exact_tail_exceeds_leading_term():
    leading, tail = vote_error_probability(0.13, 8)
    assert tail > leading
    assert tail < 2 * leading


def test_odd_window_needs_a_strict_majority_of_wrong_atoms():
    leading, tail = vote_error_probability(0.1, 7)
    assert leading == pytest.approx(35 * 0.1 ** 4 * 0.9 ** 3)
    assert tail == pytest.approx(sum(math.comb(7, k) * 0.1 ** k * 0.9 ** (7 - k) for k in range(4, 8)))


def test_vote_error_probability_domain():
    with pytest.raises(DomainError):
        vote_error_probability(1.5)


def test_vote_latency(decoder, arrivals):
    duration, delay = vote_latency(decoder, arrivals)
    assert duration == pytest.approx(7.8e-3, abs=0.1e-3)
    assert delay == pytest.approx(3.9e-3, abs=0.1e-3)


def test_static_error_fraction_bounds(decoder):
    assert static_error_fraction(0.0, decoder) == 0.0
    _, tail = vote_error_probability(0.13, 8)
    assert static_error_fraction(0.13, decoder) >= tail


def test_static_error_fraction_matches_simulation(decoder):
    n_atoms = 2_000_000
    trace = decode(static_stream(0.13, n_atoms, seed=21), decoder)
    observed = np.count_nonzero(trace.inferred[100:] == 0) / (n_atoms - 100)
    assert observed == pytest.approx(static_error_fraction(0.13, decoder), rel=0.15)


def test_chain_window_limit():
    with pytest.raises(DomainError):
        static_error_fraction(0.1, DecoderParams(window=17))


# --- False jumps ---

@pytest.mark.parametrize("p_flip,expected,tolerance", [(0.13, 0.61, 0.20), (0.09, 0.12, 0.25)])
def test_monte_carlo_false_jump_rates(decoder, p_flip, expected, tolerance):
    rate = false_jump_rate(p_flip, decoder, 900.0, n_atoms=10_000_000, seed=trajectory_seed(1, 0, 3))
    assert rate == pytest.approx(expected, rel=tolerance)


@pytest.mark.parametrize("p_flip", [0.13, 0.09])
def test_conditional_rate_agrees_with_monte_carlo(decoder, p_flip):
    exact = false_jump_rate(p_flip, decoder, 900.0, method=FalseJumpMethod.CONDITIONAL)
    simulated = false_jump_rate(p_flip, decoder, 900.0, n_atoms=10_000_000, seed=trajectory_seed(2, 0, 3))
    events = simulated / 900.0 * 10_000_000
    assert simulated == pytest.approx(exact, rel=6 / math.sqrt(events))


def test_no_false_jumps_without_errors(decoder):
    assert false_jump_rate(0.0, decoder, 900.0) == 0.0


def test_false_jump_rate_is_reproducible(decoder):
    a = false_jump_rate(0.13, decoder, 900.0, n_atoms=200_000, seed=5)
    b = false_jump_rate(0.13, decoder, 900.0, n_atoms=200_000, seed=5)
    assert a == b


# --- Detection delay ---

def test_detection_delay_sits_between_half_and_full_vote(decoder, arrivals, detector, table):
    delay = jump_detection_delay(expected_p_e(1, detector, table), expected_p_e(0, detector, table),
                                 decoder, arrivals.rate)
    duration, half = vote_latency(decoder, arrivals)
    assert half < delay < duration
    assert 5e-3 <= delay <= 7e-3


def test_detection_delay_needs_contrast(decoder):
    with pytest.raises(DomainError):
        jump_detection_delay(0.5, 0.5, decoder, 900.0)


def test_simulated_latency_matches_chain(decoder, arrivals, detector, table):
    switch = 0.1
    delays = []
    for i in range(400):
        traj = FieldTrajectory(1, 0.2, (JumpEvent(switch, 1, 0),))
        stream = sample_detection_stream(traj, arrivals, detector, table, trajectory_seed(31, i, 1))
        trace = decode(stream, decoder)
        if trace.value_at([switch])[0] != 1:
            continue
        later = [j.time for j in trace.jumps if j.time >= switch and j.from_value == 1]
        if later:
            delays.append(later[0] - switch)
    delays = np.array(delays)
    assert delays.size > 300
    predicted = jump_detection_delay(expected_p_e(1, detector, table), expected_p_e(0, detector, table),
                                     decoder, arrivals.rate)
    duration, half = vote_latency(decoder, arrivals)
    assert half < delays.mean() < duration
    assert delays.mean() == pytest.approx(predicted, abs=1e-3)
