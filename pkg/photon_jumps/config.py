"""Run configuration: a flat, line-oriented ``key = value`` file.

Every key has a unit suffix and a default equal to the experiment's value.
Precedence is overrides (``--set``) > file > defaults. Unknown keys are
rejected, and invariant violations are reported against the key that caused
them.
"""

import logging
import numbers
import re
from dataclasses import dataclass, field
from enum import Enum

from photon_jumps.analysis import PrepTarget, PreparationSpec
from photon_jumps.detection_chain import EMISSION_PROB_BOUND, ArrivalParams, DetectorParams
from photon_jumps.errors import ConfigError, DomainError
from photon_jumps.field_dynamics import BathParams
from photon_jumps.jump_decoder import DecoderParams, TieRule, WarmupRule
from photon_jumps.probe_physics import ProbeGeometry

log = logging.getLogger(__name__)

MAX_SEED = 2 ** 64 - 1


class Scenario(str, Enum):
    TELEGRAPH = "telegraph"
    FOCK_DECAY = "fock_decay"
    LIFETIME_HISTOGRAMS = "lifetime_histograms"
    THERMOMETRY = "thermometry"
    PHASE_CHECK = "phase_check"
    ADIABATICITY_CHECK = "adiabaticity_check"


# (prep, n_trajectories, duration_s) used when the file leaves them unset
SCENARIO_DEFAULTS = {
    Scenario.TELEGRAPH: (PrepTarget.THERMAL, 1, 2.5),
    Scenario.FOCK_DECAY: (PrepTarget.FOCK_ONE, 904, 0.6),
    Scenario.LIFETIME_HISTOGRAMS: (PrepTarget.FOCK_ONE, 903, 1.0),
    Scenario.THERMOMETRY: (PrepTarget.THERMAL, 560, 2.5),
    Scenario.PHASE_CHECK: (PrepTarget.THERMAL, 1, 1.0),
    Scenario.ADIABATICITY_CHECK: (PrepTarget.THERMAL, 1, 1.0),
}


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true or false, got '{text}'")


def _enum_parser(enum_cls):
    def parse(text):
        try:
            return enum_cls(text.strip())
        except ValueError:
            choices = ", ".join(m.value for m in enum_cls)
            raise ValueError(f"expected one of {choices}, got '{text}'") from None
    return parse


def _optional_float(text):
    text = text.strip()
    return None if text.lower() in ("", "none") else float(text)


def _optional_str(text):
    text = text.strip()
    return None if text.lower() in ("", "none") else text


# key -> (parser, default). None defaults are resolved per scenario.
KEYS = {
    "scenario": (_enum_parser(Scenario), Scenario.TELEGRAPH),
    "t_cavity_s": (float, 0.129),
    "n_therm": (float, 0.063),
    "n_max": (int, 5),
    "omega0_khz": (float, 51.0),
    "waist_mm": (float, 6.0),
    "velocity_m_s": (float, 250.0),
    "detuning_khz": (float, 67.0),
    "z_span": (float, 5.0),
    "slot_period_us": (float, 70.0),
    "occupancy": (float, 0.063),
    "atom_rate_hz": (_optional_float, None),
    "p_g_given_1": (float, 0.13),
    "p_e_given_0": (float, 0.09),
    "emission_prob": (float, 0.0),
    "window": (int, 8),
    "tie_rule": (_enum_parser(TieRule), TieRule.HOLD_PREVIOUS),
    "warmup_rule": (_enum_parser(WarmupRule), WarmupRule.MAJORITY_TIES_TO_ZERO),
    "prep": (_enum_parser(PrepTarget), None),
    "residual_error": (float, 0.003),
    "n_trajectories": (int, None),
    "duration_s": (float, None),
    "vacuum_trajectories": (int, 400),
    "vacuum_duration_s": (float, 12.0),
    "grid_points": (int, 20),
    "latency_correction": (_parse_bool, True),
    "false_jump_atoms": (int, 10_000_000),
    "cavity_frequency_ghz": (float, 51.1),
    "temperature_k": (float, 0.80),
    "base_seed": (int, 20070315),
    "workers": (int, 1),
    "output_dir": (_optional_str, None),
}

# Field names used by the component dataclasses in their diagnostics
_FIELD_NAMES = {
    "t_cavity_s": "t_cavity",
    "omega0_khz": "omega0",
    "waist_mm": "waist",
    "velocity_m_s": "velocity",
    "detuning_khz": "detuning",
    "slot_period_us": "slot_period",
    "atom_rate_hz": "atom_rate",
}

_KIND = {int: "an integer", float: "a number", _optional_float: "a number", _parse_bool: "true or false"}

_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved and validated run configuration."""

    scenario: Scenario
    bath: BathParams
    geom: ProbeGeometry
    arrivals: ArrivalParams
    detector: DetectorParams
    decoder: DecoderParams
    prep: PreparationSpec
    n_trajectories: int
    duration: float
    base_seed: int
    output_dir: str
    vacuum_trajectories: int = 400
    vacuum_duration: float = 12.0
    grid_points: int = 20
    latency_correction: bool = True
    false_jump_atoms: int = 10_000_000
    cavity_frequency: float = 51.1e9
    temperature: float = 0.80
    workers: int = 1
    settings: dict = field(default_factory=dict, compare=False, repr=False)

    def to_text(self):
        """The resolved configuration in the key = value format it was read from."""
        lines = [f"# resolved configuration for scenario {self.scenario.value}"]
        for key in KEYS:
            value = self.settings.get(key)
            if value is None:
                continue
            lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    def as_dict(self):
        return {key: _json_value(value) for key, value in self.settings.items()}


def _format_value(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_value(value):
    if isinstance(value, Enum):
        return value.value
    return value


# --- Parsing ---

def parse_config_text(text):
    """Splits config text into {key: (raw value, line number)}.

    Raises:
        ConfigError: on a malformed line, a repeated key or an unknown key.
    """
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        match = _LINE.match(stripped)
        if not match:
            raise ConfigError(f"expected 'key = value', got '{raw.strip()}'", line=lineno)
        key, value = match.group(1), match.group(2)
        if key not in KEYS:
            raise ConfigError("unknown configuration key", key=key, line=lineno)
        if key in entries:
            raise ConfigError(f"repeated key (first set on line {entries[key][1]})", key=key, line=lineno)
        entries[key] = (value, lineno)
    return entries


def parse_override(text):
    """Splits one ``key=value`` command-line override."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _convert(key, raw, line=None):
    parser, _ = KEYS[key]
    try:
        return parser(raw)
    except ValueError as e:
        raise ConfigError(f"cannot read '{raw}': {e}", key=key, line=line) from e


def _coerce(key, value):
    """Converts an already-typed override, checking it against the key's parser."""
    if isinstance(value, str):
        return _convert(key, value)
    parser, default = KEYS[key]
    if isinstance(value, Enum):
        return _convert(key, str(value.value))
    if value is None and default is None:
        return None
    if isinstance(value, bool):
        if parser is _parse_bool:
            return value
    elif isinstance(value, numbers.Integral):
        if parser is int:
            return int(value)
        if parser in (float, _optional_float):
            return float(value)
    elif isinstance(value, numbers.Real):
        if parser in (float, _optional_float):
            return float(value)
        if parser is int and float(value).is_integer():
            return int(value)
    raise ConfigError(f"cannot read {value!r} as {_KIND.get(parser, 'text')}", key=key)


def _blame(message, keys):
    """Key whose field name appears first in a component diagnostic."""
    best, best_pos = keys[0], None
    for key in keys:
        match = re.search(rf"\b{re.escape(_FIELD_NAMES.get(key, key))}\b", message)
        if match and (best_pos is None or match.start() < best_pos):
            best, best_pos = key, match.start()
    return best


def _build(factory, keys, lines, *args):
    try:
        return factory(*args)
    except DomainError as e:
        key = _blame(str(e), keys)
        raise ConfigError(str(e), key=key, line=lines.get(key)) from e


def validate_config(text="", overrides=None):
    """Parses and validates a run configuration.

    Args:
        text: Contents of the config file (may be empty).
        overrides: Mapping or iterable of (key, value) pairs applied on top of
            the file; values may be strings or already typed.

    Returns:
        ScenarioConfig with every default filled in.

    Raises:
        ConfigError: naming the offending line or key.
    """
    entries = parse_config_text(text or "")
    settings = {key: default for key, (_, default) in KEYS.items()}
    lines = {}
    for key, (raw, lineno) in entries.items():
        settings[key] = _convert(key, raw, lineno)
        lines[key] = lineno

    pairs = overrides.items() if isinstance(overrides, dict) else (overrides or ())
    for key, value in pairs:
        if key not in KEYS:
            raise ConfigError("unknown configuration key", key=key)
        settings[key] = _coerce(key, value)
        lines.pop(key, None)

    scenario = Scenario(settings["scenario"])
    settings["scenario"] = scenario
    prep, n_traj, duration = SCENARIO_DEFAULTS[scenario]
    if settings["prep"] is None:
        settings["prep"] = prep
    if settings["n_trajectories"] is None:
        settings["n_trajectories"] = n_traj
    if settings["duration_s"] is None:
        settings["duration_s"] = duration
    if settings["output_dir"] is None:
        settings["output_dir"] = f"runs/{scenario.value}"

    for key in ("n_trajectories", "vacuum_trajectories", "workers", "false_jump_atoms"):
        if settings[key] < 1:
            raise ConfigError(f"must be at least 1, got {settings[key]}", key=key, line=lines.get(key))
    if settings["grid_points"] < 2:
        raise ConfigError("must be at least 2", key="grid_points", line=lines.get("grid_points"))
    for key in ("duration_s", "vacuum_duration_s", "cavity_frequency_ghz", "temperature_k"):
        if not settings[key] > 0:
            raise ConfigError(f"must be positive, got {settings[key]}", key=key, line=lines.get(key))
    if not 0 <= settings["base_seed"] <= MAX_SEED:
        raise ConfigError("must be a 64-bit unsigned integer", key="base_seed", line=lines.get("base_seed"))
    if settings["emission_prob"] > EMISSION_PROB_BOUND:
        raise ConfigError(
            f"{settings['emission_prob']} exceeds the bound {EMISSION_PROB_BOUND:g} per atom",
            key="emission_prob", line=lines.get("emission_prob"),
        )

    s = settings
    bath = _build(BathParams, ["t_cavity_s", "n_therm", "n_max"], lines,
                  s["t_cavity_s"], s["n_therm"], s["n_max"])
    geom = _build(ProbeGeometry, ["omega0_khz", "waist_mm", "velocity_m_s", "detuning_khz", "z_span"], lines,
                  s["omega0_khz"] * 1e3, s["waist_mm"] * 1e-3, s["velocity_m_s"], s["detuning_khz"] * 1e3,
                  s["z_span"])
    arrivals = _build(ArrivalParams, ["occupancy", "slot_period_us", "atom_rate_hz"], lines,
                      s["slot_period_us"] * 1e-6, s["occupancy"], s["atom_rate_hz"])
    detector = _build(DetectorParams, ["p_g_given_1", "p_e_given_0", "emission_prob"], lines,
                      s["p_g_given_1"], s["p_e_given_0"], s["emission_prob"])
    decoder = _build(DecoderParams, ["window", "tie_rule", "warmup_rule"], lines,
                     s["window"], s["tie_rule"], s["warmup_rule"])
    prep_spec = _build(PreparationSpec, ["prep", "residual_error"], lines, s["prep"], s["residual_error"])

    config = ScenarioConfig(
        scenario=scenario,
        bath=bath,
        geom=geom,
        arrivals=arrivals,
        detector=detector,
        decoder=decoder,
        prep=prep_spec,
        n_trajectories=s["n_trajectories"],
        duration=float(s["duration_s"]),
        base_seed=s["base_seed"],
        output_dir=s["output_dir"],
        vacuum_trajectories=s["vacuum_trajectories"],
        vacuum_duration=float(s["vacuum_duration_s"]),
        grid_points=s["grid_points"],
        latency_correction=s["latency_correction"],
        false_jump_atoms=s["false_jump_atoms"],
        cavity_frequency=s["cavity_frequency_ghz"] * 1e9,
        temperature=s["temperature_k"],
        workers=s["workers"],
        settings=dict(settings),
    )
    log.debug(f"Validated configuration for scenario {scenario.value}")
    return config


def read_config_file(path, overrides=None):
    """Reads a UTF-8 config file and validates it."""
    if path is None:
        return validate_config("", overrides)
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return validate_config(text, overrides)


