"""Exception types shared across recshard."""

from __future__ import annotations


class RecshardError(Exception):
    """Base class for all recshard errors."""


class ConfigError(RecshardError):
    """Invalid configuration: bad field values, unknown presets, malformed documents."""


class InvalidTopologyError(ConfigError):
    """Cluster topology inconsistent with the placement plan or sync settings."""


class InfeasibleError(RecshardError):
    """A placement cannot satisfy capacity constraints.

    Carries the number of bytes that could not be placed and the capacity
    that was available when placement failed, so callers can report both.
    """

    def __init__(self, message: str, *, needed: int | float, available: int | float):
        super().__init__(message)
        self.needed = needed
        self.available = available


class TooLargeError(RecshardError):
    """Instance exceeds the bounds of the exhaustive sharding search."""
