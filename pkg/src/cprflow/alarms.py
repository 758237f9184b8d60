"""Compression countdown with staged alerts.

A countdown runs for a fixed duration (two minutes by default) and produces
three kinds of alert signals: one audible warning when the remaining time
first reaches the warning threshold, one blink per integer second mark from
the threshold down to zero, and a vibration plus a finished signal at zero.

Ticking is cadence-tolerant: a coarse tick emits every signal that fell into
the gap, in order, so a stalled caller can never swallow an alert stage. The
signal multiset for any schedule that covers the whole window is identical to
a 1 Hz reference run. Ticking twice at the same instant emits nothing new.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .clock import NANOS_PER_SECOND, Duration, Instant

DEFAULT_COMPRESSION_DURATION = Duration.from_seconds(120)
DEFAULT_WARNING_THRESHOLD = Duration.from_seconds(10)


class SignalKind(str, enum.Enum):
    WARNING_SOUND = "WarningSound"
    BLINK = "Blink"
    VIBRATE = "Vibrate"
    FINISHED = "Finished"


@dataclass(frozen=True)
class AlarmSignal:
    kind: SignalKind
    at: Instant
    second_mark: int | None = None


@dataclass(frozen=True)
class Countdown:
    """Immutable countdown state; `tick` returns the successor value."""

    started_at: Instant
    duration: Duration
    warning_threshold: Duration
    last_processed_remaining_second: int | None = None
    warning_emitted: bool = False
    finished: bool = False


def start_countdown(
    now: Instant,
    duration: Duration = DEFAULT_COMPRESSION_DURATION,
    warning_threshold: Duration = DEFAULT_WARNING_THRESHOLD,
) -> Countdown:
    """Begin a countdown at `now`.

    Callers are responsible for ensuring no other countdown is active in the
    same session; the session engine enforces that precondition.
    """
    if not warning_threshold.nanos < duration.nanos:
        raise ValueError("warning_threshold must be shorter than the countdown duration")
    return Countdown(started_at=now, duration=duration, warning_threshold=warning_threshold)


def remaining(cd: Countdown, now: Instant) -> Duration:
    """Time left on the countdown, clamped at zero."""
    elapsed = now.monotonic_nanos - cd.started_at.monotonic_nanos
    return Duration(max(0, cd.duration.nanos - elapsed))


def _current_mark(remaining_nanos: int) -> int:
    # Smallest integer second mark already reached: mark s is hit once the
    # remaining time is <= s seconds (inclusive at the exact boundary).
    return -(-remaining_nanos // NANOS_PER_SECOND)


def tick(cd: Countdown, now: Instant) -> tuple[Countdown, list[AlarmSignal]]:
    """Process the clock reading `now`, emitting all newly due signals.

    Batch order is fixed: warning sound, blinks in descending second marks,
    vibrate, finished.
    """
    if now.monotonic_nanos < cd.started_at.monotonic_nanos:
        raise ValueError("tick observed a time before the countdown started")
    if cd.finished:
        return cd, []

    rem = remaining(cd, now).nanos
    signals: list[AlarmSignal] = []

    warning_emitted = cd.warning_emitted
    if not warning_emitted and rem <= cd.warning_threshold.nanos:
        signals.append(AlarmSignal(SignalKind.WARNING_SOUND, now))
        warning_emitted = True

    top_mark = cd.warning_threshold.nanos // NANOS_PER_SECOND
    mark = _current_mark(rem)
    last = cd.last_processed_remaining_second
    if mark <= top_mark:
        first_new = top_mark if last is None else last - 1
        for s in range(first_new, mark - 1, -1):
            signals.append(AlarmSignal(SignalKind.BLINK, now, second_mark=s))
        last = mark if last is None else min(last, mark)

    finished = cd.finished
    if rem == 0:
        signals.append(AlarmSignal(SignalKind.VIBRATE, now))
        signals.append(AlarmSignal(SignalKind.FINISHED, now))
        finished = True

    updated = replace(
        cd,
        last_processed_remaining_second=last,
        warning_emitted=warning_emitted,
        finished=finished,
    )
    return updated, signals
