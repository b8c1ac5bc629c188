import math

import pytest

from photon_jumps.detection_chain import ArrivalParams, DetectorParams
from photon_jumps.field_dynamics import BathParams
from photon_jumps.jump_decoder import DecoderParams
from photon_jumps.probe_physics import PhaseTable, ProbeGeometry, phase_table


@pytest.fixture(scope="session")
def bath():
    return BathParams(t_cavity=0.129, n_therm=0.063, n_max=5)


@pytest.fixture(scope="session")
def geometry():
    return ProbeGeometry(omega0=51e3, waist=6e-3, velocity=250.0, detuning=67e3)


@pytest.fixture(scope="session")
def table(geometry):
    return phase_table(geometry, 5)


@pytest.fixture(scope="session")
def exact_table():
    """Phases with Phi(1) - Phi(0) exactly pi, so a perfect detector never errs on n <= 1."""
    return PhaseTable({0: 0.0, 1: math.pi, 2: 1.88 * math.pi, 3: 2.7 * math.pi,
                       4: 3.5 * math.pi, 5: 4.3 * math.pi})


@pytest.fixture(scope="session")
def arrivals():
    return ArrivalParams(slot_period=70e-6, occupancy=0.063)


@pytest.fixture(scope="session")
def detector():
    return DetectorParams(p_g_given_1=0.13, p_e_given_0=0.09)


@pytest.fixture(scope="session")
def perfect_detector():
    return DetectorParams(p_g_given_1=0.0, p_e_given_0=0.0)


@pytest.fixture(scope="session")
def decoder():
    return DecoderParams(window=8)
