"""Exception types shared across the package."""

from __future__ import annotations


class SkillForgeError(Exception):
    """Base class for all package errors."""


class ValidationError(SkillForgeError):
    """Invalid argument or malformed data; the message names the offending field."""


class ConfigError(SkillForgeError):
    """Configuration file or override problem; the message carries the field path."""


class SelectionError(SkillForgeError):
    """Skill selection requested on an empty pool."""


class ProtocolError(SkillForgeError):
    """A backend reply did not follow the expected wire format.

    Carries the raw reply so callers can log or fail safe.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class TransportError(SkillForgeError):
    """HTTP transport failed after the configured retries."""


class CapabilityError(SkillForgeError):
    """The configured backend cannot perform the requested operation."""


class EpisodeError(SkillForgeError):
    """An episode aborted mid-run; carries the partial step list."""

    def __init__(self, message: str, partial_steps=(), episode_index: int | None = None):
        super().__init__(message)
        self.partial_steps = list(partial_steps)
        self.episode_index = episode_index


class GateError(SkillForgeError):
    """Candidate verification could not run (no active steps, or no scoring capability)."""


class GainError(SkillForgeError):
    """Skill gain requested for a skill absent from the trajectory."""


class EvolutionError(SkillForgeError):
    """No parseable candidate could be produced for a skill this batch."""


class MetricError(SkillForgeError):
    """A metric is undefined on the given inputs (empty pool, zero steps, missing prompts)."""


class CapacityError(SkillForgeError):
    """An enumeration would exceed its configured cap."""


class PoolFileError(SkillForgeError):
    """A pool persistence file failed to parse or validate."""
