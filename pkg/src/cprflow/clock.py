"""Monotonic time sources with virtual and real implementations.

All protocol logic runs on integer monotonic nanoseconds so timers cannot
drift or jump; a wall-clock timestamp is captured alongside every reading
purely for rendering documentation. The virtual source makes whole sessions
deterministic under test.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

NANOS_PER_SECOND = 1_000_000_000

UNIX_EPOCH_UTC = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True, order=True)
class Duration:
    """A non-negative span of time in integer nanoseconds."""

    nanos: int

    def __post_init__(self) -> None:
        if self.nanos < 0:
            raise ValueError(f"Duration cannot be negative: {self.nanos}")

    @classmethod
    def from_seconds(cls, seconds: float | int) -> "Duration":
        return cls(round(seconds * NANOS_PER_SECOND))

    @property
    def seconds(self) -> float:
        return self.nanos / NANOS_PER_SECOND

    @property
    def whole_seconds(self) -> int:
        """Seconds if the duration is an exact number of them, else raises."""
        if self.nanos % NANOS_PER_SECOND != 0:
            raise ValueError(f"Duration is not a whole number of seconds: {self.nanos}ns")
        return self.nanos // NANOS_PER_SECOND

    def __add__(self, other: "Duration") -> "Duration":
        return Duration(self.nanos + other.nanos)


ZERO = Duration(0)


@dataclass(frozen=True)
class Instant:
    """A point in time: monotonic nanoseconds plus the UTC wall clock read
    at the same moment. Ordering and arithmetic use only the monotonic part."""

    monotonic_nanos: int
    wall_time: datetime

    def __post_init__(self) -> None:
        if self.wall_time.tzinfo is None:
            raise ValueError("Instant wall_time must be timezone-aware")

    def plus(self, d: Duration) -> "Instant":
        return Instant(self.monotonic_nanos + d.nanos, self.wall_time + timedelta(microseconds=d.nanos // 1000))

    def elapsed_since(self, earlier: "Instant") -> Duration:
        """Monotonic distance from an earlier instant. Negative gaps are an error."""
        delta = self.monotonic_nanos - earlier.monotonic_nanos
        if delta < 0:
            raise ValueError(
                f"instant {self.monotonic_nanos} is earlier than {earlier.monotonic_nanos}"
            )
        return Duration(delta)

    def __le__(self, other: "Instant") -> bool:
        return self.monotonic_nanos <= other.monotonic_nanos

    def __lt__(self, other: "Instant") -> bool:
        return self.monotonic_nanos < other.monotonic_nanos


class RealTimeSource:
    """Reads the process monotonic clock; nanoseconds count from source creation."""

    def __init__(self) -> None:
        self._origin = time.monotonic_ns()

    def now(self) -> Instant:
        return Instant(
            monotonic_nanos=time.monotonic_ns() - self._origin,
            wall_time=datetime.now(timezone.utc),
        )


class VirtualTimeSource:
    """A manually advanced clock for deterministic runs.

    Starts at monotonic zero with a configurable wall epoch. Advancing is
    serialized so concurrent readers always observe a consistent pair.
    """

    def __init__(self, wall_epoch: datetime = UNIX_EPOCH_UTC) -> None:
        if wall_epoch.tzinfo is None:
            raise ValueError("wall_epoch must be timezone-aware")
        self._lock = threading.Lock()
        self._epoch = wall_epoch
        self._nanos = 0

    def now(self) -> Instant:
        with self._lock:
            return Instant(self._nanos, self._epoch + timedelta(microseconds=self._nanos // 1000))

    def advance(self, d: Duration) -> Instant:
        """Move time forward by exactly `d` and return the new reading."""
        with self._lock:
            self._nanos += d.nanos
        return self.now()
