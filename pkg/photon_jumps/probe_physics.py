"""Dispersive physics of one probe atom crossing the Gaussian cavity mode.

Frequencies (omega0, detuning, shifts) are ordinary frequencies in Hz and are
turned into angular frequencies only inside the integrands.
"""

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from photon_jumps.errors import DomainError, NumericalError

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
PHASE_RTOL = 1e-9
# Local error target for the crossing integrator
CROSSING_TOL = 1e-13
NORM_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ProbeGeometry:
    """Atom-mode geometry.

    Attributes:
        omega0: Peak vacuum Rabi frequency Omega_0/2pi in Hz.
        waist: Mode waist w in meters.
        velocity: Atom velocity in m/s.
        detuning: Atom-cavity detuning delta/2pi in Hz.
        z_span: Half-width of the integration window, in waists.
    """

    omega0: float
    waist: float
    velocity: float
    detuning: float
    z_span: float = 5.0

    def __post_init__(self):
        if self.omega0 < 0:
            raise DomainError(f"omega0 must be non-negative, got {self.omega0}")
        if not self.waist > 0 or not self.velocity > 0:
            raise DomainError("waist and velocity must be positive")
        if not self.detuning > 0:
            raise DomainError(f"detuning must be positive, got {self.detuning}")
        if abs(self.detuning) < self.omega0:
            raise DomainError(
                f"|detuning| = {self.detuning} Hz is below omega0 = {self.omega0} Hz; "
                "the probe is outside the dispersive regime"
            )
        if self.z_span < 5:
            raise DomainError(f"z_span must be at least 5 waists, got {self.z_span}")

    @property
    def half_window(self):
        """Half-length of the integration window in meters."""
        return self.z_span * self.waist

    @property
    def crossing_time(self):
        return 2.0 * self.half_window / self.velocity


@dataclass(frozen=True)
class PhaseTable:
    """Ramsey phases Phi(n) for n = 0..n_max and the interferometer reference phase."""

    phases: dict
    reference: float = 0.0

    def relative(self, n):
        if n not in self.phases:
            raise DomainError(f"Phase table has no entry for n={n}")
        return self.phases[n] - self.phases[0] + self.reference

    def increments(self):
        levels = sorted(self.phases)
        return {n: self.phases[n + 1] - self.phases[n] for n in levels[:-1]}

    def as_dict(self):
        levels = sorted(self.phases)
        return {
            "reference_rad": self.reference,
            "phases_rad": {str(n): self.phases[n] for n in levels},
            "phases_over_pi": {str(n): self.phases[n] / math.pi for n in levels},
            "increments_over_pi": {f"{n + 1}-{n}": d / math.pi for n, d in self.increments().items()},
            "ideal_p_g": {str(n): ideal_detection_probability(n, self) for n in levels},
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class CrossingResult:
    """Outcome of a Schrodinger integration across the mode."""

    transition_probability: float
    norm_error: float
    n_steps: int
    nfev: int


# --- Coupling and dressed levels ---

def coupling_at(z, geom):
    """Vacuum Rabi frequency (Hz) at position z (m): Omega_0 exp(-z^2/w^2)."""
    return geom.omega0 * np.exp(-(np.asarray(z) / geom.waist) ** 2)


def _root_excess(delta, x):
    """sqrt(delta^2 + x) - delta without cancellation for delta > 0."""
    root = np.sqrt(delta * delta + x)
    if delta > 0:
        return x / (root + delta)
    return root - delta


def dressed_shifts(n, omega, detuning):
    """Returns (shift_e, shift_g) in Hz of |e,n> and |g,n> at coupling `omega` (Hz)."""
    if detuning == 0:
        raise DomainError("Dressed shifts are undefined at zero detuning")
    omega_sq = np.square(omega)
    shift_e = _root_excess(detuning, (n + 1) * omega_sq) / 2.0
    shift_g = -_root_excess(detuning, n * omega_sq) / 2.0
    return shift_e, shift_g


def phase_integrand(z, n, geom):
    """Phase accumulated per meter of flight (rad/m) at position z."""
    shift_e, shift_g = dressed_shifts(n, coupling_at(z, geom), geom.detuning)
    return TWO_PI * (shift_e - shift_g) / geom.velocity


# --- Ramsey phases ---

def ramsey_phase(n, geom, epsrel=PHASE_RTOL):
    """Dispersive phase Phi(n, delta) in radians, by adaptive quadrature."""
    if n < 0:
        raise DomainError(f"Photon number must be non-negative, got {n}")
    half = geom.half_window
    result = quad(
        phase_integrand, -half, half, args=(n, geom),
        epsabs=1e-14, epsrel=epsrel, limit=200, points=(0.0,), full_output=1,
    )
    value, abserr, info = result[:3]
    if len(result) > 3:
        raise NumericalError(
            "Phase quadrature did not converge",
            {"n": n, "abserr": abserr, "neval": info.get("neval"), "message": result[3]},
        )
    return float(value)


def phase_table(geom, n_max):
    """Phases for n = 0..n_max; the reference makes an empty cavity read g."""
    phases = {n: ramsey_phase(n, geom) for n in range(n_max + 1)}
    log.debug(
        "Phase table: " + ", ".join(f"Phi({n})={p / math.pi:.4f}pi" for n, p in phases.items())
    )
    return PhaseTable(phases=phases, reference=0.0)


def ideal_detection_probability(n, table):
    """Probability of detecting g for an error-free Ramsey interferometer."""
    return (1.0 + math.cos(table.relative(n))) / 2.0


# --- Adiabaticity ---

def propagate_crossing(n, geom, rtol=CROSSING_TOL, atol=CROSSING_TOL):
    """Integrates the two-level Schrodinger equation in {|e,n>, |g,n+1>}.

    H(t) = (delta/2) sigma_z + (Omega(vt) sqrt(n+1)/2) sigma_x, angular units,
    from z = -z_span w to +z_span w, starting in |e,n>.
    """
    delta = TWO_PI * geom.detuning
    scale = TWO_PI * math.sqrt(n + 1)
    t_edge = geom.half_window / geom.velocity

    def rhs(t, psi):
        half_rabi = scale * coupling_at(geom.velocity * t, geom) / 2.0
        e, g = psi
        return np.array([
            -1j * (delta / 2.0 * e + half_rabi * g),
            -1j * (half_rabi * e - delta / 2.0 * g),
        ])

    sol = solve_ivp(
        rhs, (-t_edge, t_edge), np.array([1.0 + 0.0j, 0.0j]),
        method="DOP853", rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise NumericalError(
            "Schrodinger integration failed",
            {"n": n, "message": sol.message, "nfev": sol.nfev},
        )
    norms = np.sum(np.abs(sol.y) ** 2, axis=0)
    norm_error = float(np.max(np.abs(norms - 1.0)))
    if norm_error > NORM_TOLERANCE:
        raise NumericalError(
            "Schrodinger integration lost normalization",
            {"n": n, "norm_error": norm_error, "steps": sol.t.size - 1},
        )
    probability = float(np.abs(sol.y[1, -1]) ** 2)
    log.debug(
        f"Crossing n={n}: P(g,n+1)={probability:.3e}, norm error {norm_error:.1e}, "
        f"{sol.t.size - 1} steps"
    )
    return CrossingResult(probability, norm_error, sol.t.size - 1, sol.nfev)


def adiabatic_transition_probability(n, geom):
    """Final population of |g,n+1> for an atom entering in |e,n>."""
    return propagate_crossing(n, geom).transition_probability
