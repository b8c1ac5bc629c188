"""Exception hierarchy shared by the simulation, the CLI and the run service."""


class PhotonJumpsError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PhotonJumpsError, ValueError):
    """A physical parameter lies outside the domain of the model."""


class ConfigError(PhotonJumpsError, ValueError):
    """Invalid run configuration.

    Args:
        message: Human readable diagnostic.
        key: Configuration key whose invariant is violated, if known.
        line: 1-based line number in the config text, if known.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if key is not None:
            prefix.append(f"key '{key}'")
        full = f"{', '.join(prefix)}: {message}" if prefix else message
        super().__init__(full)


class NumericalError(PhotonJumpsError, ArithmeticError):
    """An integrator or quadrature failed; `diagnostics` says where and why."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class InputError(PhotonJumpsError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class FitError(PhotonJumpsError):
    """Not enough events to report a lifetime fit."""


class InsufficientDataError(PhotonJumpsError):
    """Traces are too short for the requested estimator."""


class RunCancelled(PhotonJumpsError):
    """A stop signal reached a running scenario."""
