"""Solver and service configuration.

Solver knobs live in :class:`SolverConfig`. Process-level settings come from
environment variables so the CLI, the Flask app and gunicorn deployments read
them the same way.
"""
import os
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping, Optional

from evsched.errors import InvalidInstanceError

DOMINANCE_MODES = ('set', 'pairwise', 'off')

DEFAULT_DATABASE_URL = 'sqlite:///evsched.db'


def log_level() -> str:
    return os.environ.get('EVCS_LOG', 'WARNING').upper()


def database_url() -> str:
    return os.environ.get('EVCS_DATABASE_URL', DEFAULT_DATABASE_URL)


def default_time_limit() -> float:
    raw = os.environ.get('EVCS_TIME_LIMIT')
    if raw is None:
        return 3600.0
    try:
        return float(raw)
    except ValueError:
        return 3600.0


@dataclass(frozen=True)
class SolverConfig:
    time_limit: float = 3600.0
    gap: float = 1e-4
    # None selects the minimum charger capacity
    nu: Optional[int] = None
    full_pricing_every: int = 10
    heuristic: bool = True
    dive_alpha: float = 0.5
    dive_pool: int = 5
    dominance: str = 'set'
    threads: int = 1
    intermediate_charging: bool = True
    use_potential: bool = True
    label_limit: Optional[int] = None
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.dominance not in DOMINANCE_MODES:
            raise InvalidInstanceError(f"dominance must be one of {DOMINANCE_MODES}, got {self.dominance!r}")
        if self.time_limit <= 0:
            raise InvalidInstanceError("time_limit must be positive")
        if not 0 <= self.gap < 1:
            raise InvalidInstanceError("gap must lie in [0, 1)")
        if self.nu is not None and self.nu < 1:
            raise InvalidInstanceError("nu must be at least 1")
        if self.full_pricing_every < 1:
            raise InvalidInstanceError("full_pricing_every must be at least 1")
        if not 0 <= self.dive_alpha <= 1:
            raise InvalidInstanceError("dive_alpha must lie in [0, 1]")
        if self.dive_pool < 1:
            raise InvalidInstanceError("dive_pool must be at least 1")
        if self.threads < 1:
            raise InvalidInstanceError("threads must be at least 1")

    @classmethod
    def from_mapping(cls, data: Optional[Mapping[str, Any]] = None, **overrides) -> 'SolverConfig':
        """Build a config from request JSON or CLI options; unknown keys are rejected."""
        values = dict(data or {})
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InvalidInstanceError(f"unknown solver option(s): {', '.join(unknown)}")
        if values.get('nu') == 'auto':
            values['nu'] = None
        try:
            return cls(**values)
        except TypeError as e:
            raise InvalidInstanceError(str(e)) from e

    def with_options(self, **changes) -> 'SolverConfig':
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
