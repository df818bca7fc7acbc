"""Numeric tolerances and the error hierarchy shared by all modules."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace


class NbsigmaError(Exception):
    """Base class for library errors."""


class ConfigError(NbsigmaError):
    """Invalid model, interaction or run configuration."""


class NumericPolicyError(NbsigmaError):
    """A numeric precondition (pole proximity, positivity, stability) failed."""


class ConvergenceError(NbsigmaError):
    """An iterative procedure or truncation did not converge."""


class SizeGuardError(ConfigError):
    """Requested problem size exceeds a memory guard."""


@dataclass(frozen=True)
class NumericPolicy:
    """Centralised tolerances. Override individual fields with ``updated``."""

    residual: float = 1e-10
    hermiticity: float = 1e-12
    stability: float = 1e-10
    pole_tol: float = 1e-8
    root_pair_tol: float = 1e-8
    gbz_match_tol: float = 1e-6
    triple_rel_tol: float = 1e-4
    scf_tol: float = 1e-10
    scf_max_iter: int = 50
    scf_mixing: float = 0.5
    tracking_tol: float = 1e-12
    enforce_positivity: bool = True

    def updated(self, **overrides) -> "NumericPolicy":
        known = {f.name for f in fields(self)}
        bad = set(overrides) - known
        if bad:
            raise ConfigError(f"unknown numeric policy field(s): {sorted(bad)}")
        for key, val in overrides.items():
            want = type(getattr(self, key))
            if want is float and isinstance(val, int) and not isinstance(val, bool):
                overrides[key] = val = float(val)
            if type(val) is not want:
                raise ConfigError(f"numeric policy field '{key}' must be of type {want.__name__}")
        return replace(self, **overrides)


DEFAULT_POLICY = NumericPolicy()
