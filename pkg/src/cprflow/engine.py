"""Deterministic resuscitation-session state machine.

The engine consumes timestamped commands and emits an ordered stream of
events; session state is a pure fold of that stream, so replaying the events
of any session reproduces the exact same state. All timing decisions use the
monotonic nanoseconds carried inside each command, never an ambient clock.

Protocol rules enforced here:

* one phase active at a time; rhythm choice happens on a dedicated selection
  step and the session only ends from there
* defibrillation only in the VF/VT phase, with a per-session shock counter
* adrenaline doses at least one configured interval apart (240 s default),
  tracked globally across rhythm changes; in VF/VT additionally gated until
  the configured shock count (third defibrillation by default)
* amiodarone with the third defibrillation and every other one after that
  (counts 3, 5, 7, ...), first dose larger than the repeats
* a single compression countdown at a time, whose alert signals become
  ordinary events so they replay like everything else

Commands that are not currently allowed are rejected with a reason and leave
the session untouched apart from the rejection event itself.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Any, Mapping

from . import alarms
from .alarms import Countdown, SignalKind
from .clock import Duration, Instant

REASON_NOT_ENABLED = "not-enabled"
REASON_TERMINAL_PHASE = "terminal-phase"
REASON_NON_MONOTONIC_TIME = "non-monotonic-time"

RHYTHM_ASYSTOLE_PEA = "asystole_pea"
RHYTHM_VF_VT = "vf_vt"


class Phase(str, enum.Enum):
    IDLE = "idle"
    ANALYSIS = "analysis"
    RHYTHM_SELECTION = "rhythm_selection"
    ASYSTOLE_PEA = "asystole_pea"
    VF_VT = "vf_vt"
    ENDED = "ended"


class CommandKind(str, enum.Enum):
    START_SESSION = "StartSession"
    START_COMPRESSION = "StartCompression"
    ANALYZE_RHYTHM = "AnalyzeRhythm"
    SELECT_ASYSTOLE_PEA = "SelectAsystolePea"
    SELECT_VF_VT = "SelectVfVt"
    DEFIBRILLATE = "Defibrillate"
    ADMINISTER_ADRENALINE = "AdministerAdrenaline"
    ADMINISTER_AMIODARONE = "AdministerAmiodarone"
    RETURN_TO_ANALYSIS = "ReturnToAnalysis"
    ADD_NOTE = "AddNote"
    END_SESSION = "EndSession"
    TICK = "Tick"


class EventKind(str, enum.Enum):
    SESSION_STARTED = "SessionStarted"
    COMPRESSION_STARTED = "CompressionStarted"
    COMPRESSION_WARNING = "CompressionWarning"
    COMPRESSION_BLINK = "CompressionBlink"
    COMPRESSION_FINISHED = "CompressionFinished"
    ANALYSIS_OPENED = "AnalysisOpened"
    RHYTHM_SELECTION_OPENED = "RhythmSelectionOpened"
    RHYTHM_SELECTED = "RhythmSelected"
    DEFIBRILLATION_DELIVERED = "DefibrillationDelivered"
    ADRENALINE_GIVEN = "AdrenalineGiven"
    AMIODARONE_GIVEN = "AmiodaroneGiven"
    ADRENALINE_DUE = "AdrenalineDue"
    AMIODARONE_DUE = "AmiodaroneDue"
    NOTE_ADDED = "NoteAdded"
    COMMAND_REJECTED = "CommandRejected"
    SESSION_ENDED = "SessionEnded"


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    at: Instant
    text: str | None = None  # AddNote payload


@dataclass(frozen=True)
class Event:
    seq: int
    at: Instant
    kind: EventKind
    payload: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class DosingConfig:
    """Dose sizes and timing rules. Defaults follow common adult
    resuscitation guidance; every value is overridable per session."""

    adrenaline_dose_mg: Decimal = Decimal(1)
    adrenaline_interval: Duration = Duration.from_seconds(240)
    amiodarone_first_dose_mg: Decimal = Decimal(300)
    amiodarone_repeat_dose_mg: Decimal = Decimal(150)
    compression_duration: Duration = Duration.from_seconds(120)
    warning_threshold: Duration = Duration.from_seconds(10)
    vfvt_adrenaline_min_defibs: int = 3

    def validate(self) -> list[str]:
        """Return the names of invalid fields (empty when the config is usable)."""
        bad = []
        if self.adrenaline_dose_mg <= 0:
            bad.append("adrenaline_dose_mg")
        if self.adrenaline_interval.nanos <= 0:
            bad.append("adrenaline_interval")
        if self.amiodarone_first_dose_mg <= 0:
            bad.append("amiodarone_first_dose_mg")
        if self.amiodarone_repeat_dose_mg <= 0:
            bad.append("amiodarone_repeat_dose_mg")
        if self.compression_duration.nanos <= 0:
            bad.append("compression_duration")
        if self.warning_threshold.nanos <= 0 or self.warning_threshold.nanos >= self.compression_duration.nanos:
            bad.append("warning_threshold")
        if self.vfvt_adrenaline_min_defibs <= 0:
            bad.append("vfvt_adrenaline_min_defibs")
        return bad


@dataclass(frozen=True)
class AdrenalineDose:
    at: Instant
    mg: Decimal


@dataclass(frozen=True)
class AmiodaroneDose:
    at: Instant
    mg: Decimal
    defib_count_at_dose: int


@dataclass(frozen=True)
class Note:
    at: Instant
    text: str


@dataclass(frozen=True)
class SessionState:
    """Complete derived state of one session.

    Values are immutable; `apply` returns a successor. The reminder flags
    track whether a "drug due" event has already been announced for the
    currently-true condition, so reminders stay edge-triggered across replay.
    """

    config: DosingConfig
    phase: Phase = Phase.IDLE
    session_start: Instant | None = None
    defib_count: int = 0
    last_adrenaline_at: Instant | None = None
    adrenaline_doses: tuple[AdrenalineDose, ...] = ()
    amiodarone_doses: tuple[AmiodaroneDose, ...] = ()
    last_amiodarone_defib_count: int | None = None
    active_countdown: Countdown | None = None
    notes: tuple[Note, ...] = ()
    event_seq: int = 1  # next sequence number to assign
    last_event_at: Instant | None = None
    adrenaline_reminder_active: bool = False
    amiodarone_reminder_active: bool = False


def initial_state(config: DosingConfig | None = None) -> SessionState:
    return SessionState(config=config or DosingConfig())


def new_session(
    config: DosingConfig | None = None, start: Instant | None = None
) -> tuple[SessionState, list[Event]]:
    """Create a session and drive it through its start command.

    The returned state is in the analysis phase with a SessionStarted and an
    AnalysisOpened event already emitted.
    """
    if start is None:
        raise ValueError("new_session requires the start instant")
    state = initial_state(config)
    state, events = apply(state, Command(CommandKind.START_SESSION, at=start))
    if events and events[0].kind is EventKind.COMMAND_REJECTED:
        raise ValueError("session could not be started")  # unreachable from IDLE
    return state, events


def adrenaline_due(state: SessionState, now: Instant) -> bool:
    """Spacing rule only: never dosed, or the configured interval has fully
    elapsed since the last dose. Tracked globally across rhythm changes."""
    if state.last_adrenaline_at is None:
        return True
    elapsed = now.monotonic_nanos - state.last_adrenaline_at.monotonic_nanos
    return elapsed >= state.config.adrenaline_interval.nanos


def amiodarone_due(state: SessionState) -> bool:
    """Due at defibrillation counts 3, 5, 7, ... until given for that count."""
    c = state.defib_count
    if c < 3 or c % 2 == 0:
        return False
    return state.last_amiodarone_defib_count != c


def elapsed(state: SessionState, now: Instant) -> Duration:
    """Time since the session started."""
    if state.session_start is None:
        raise ValueError("session has not started")
    if now.monotonic_nanos < state.session_start.monotonic_nanos:
        raise ValueError("now is before the session start")
    return now.elapsed_since(state.session_start)


def _adrenaline_administerable(state: SessionState, now: Instant) -> bool:
    if state.phase is Phase.ASYSTOLE_PEA:
        return adrenaline_due(state, now)
    if state.phase is Phase.VF_VT:
        return (
            adrenaline_due(state, now)
            and state.defib_count >= state.config.vfvt_adrenaline_min_defibs
        )
    return False


def _amiodarone_administerable(state: SessionState) -> bool:
    return state.phase is Phase.VF_VT and amiodarone_due(state)


def enabled_commands(state: SessionState, now: Instant) -> frozenset[CommandKind]:
    """The exact set of command kinds `apply` would accept at `now`."""
    k = CommandKind
    if state.phase is Phase.IDLE:
        return frozenset({k.START_SESSION})
    if state.phase is Phase.ENDED:
        return frozenset()

    enabled = {k.ADD_NOTE, k.TICK}
    no_countdown = state.active_countdown is None
    if state.phase is Phase.ANALYSIS:
        enabled.add(k.ANALYZE_RHYTHM)
        if no_countdown:
            enabled.add(k.START_COMPRESSION)
    elif state.phase is Phase.RHYTHM_SELECTION:
        enabled.update({k.SELECT_ASYSTOLE_PEA, k.SELECT_VF_VT, k.END_SESSION})
    elif state.phase is Phase.ASYSTOLE_PEA:
        enabled.add(k.RETURN_TO_ANALYSIS)
        if no_countdown:
            enabled.add(k.START_COMPRESSION)
        if _adrenaline_administerable(state, now):
            enabled.add(k.ADMINISTER_ADRENALINE)
    elif state.phase is Phase.VF_VT:
        enabled.update({k.DEFIBRILLATE, k.RETURN_TO_ANALYSIS})
        if no_countdown:
            enabled.add(k.START_COMPRESSION)
        if _adrenaline_administerable(state, now):
            enabled.add(k.ADMINISTER_ADRENALINE)
        if _amiodarone_administerable(state):
            enabled.add(k.ADMINISTER_AMIODARONE)
    return frozenset(enabled)


# Commands after which a newly-true due condition is announced. Other
# accepted commands only ever clear the reminder flags (a dose or a phase
# exit makes the condition false); they never raise a new announcement.
_REMINDER_EMITTING = frozenset(
    {
        CommandKind.START_SESSION,
        CommandKind.ANALYZE_RHYTHM,
        CommandKind.SELECT_ASYSTOLE_PEA,
        CommandKind.SELECT_VF_VT,
        CommandKind.RETURN_TO_ANALYSIS,
        CommandKind.END_SESSION,
        CommandKind.DEFIBRILLATE,
        CommandKind.TICK,
    }
)


class _Emitter:
    """Allocates sequence numbers for the events of one apply call."""

    def __init__(self, state: SessionState, at: Instant):
        self.next_seq = state.event_seq
        self.at = at
        self.events: list[Event] = []

    def emit(self, kind: EventKind, **payload: Any) -> None:
        self.events.append(Event(self.next_seq, self.at, kind, dict(payload)))
        self.next_seq += 1


def apply(state: SessionState, cmd: Command) -> tuple[SessionState, list[Event]]:
    """Apply one command, returning the successor state and emitted events.

    Disallowed commands produce a single CommandRejected event and change
    nothing else. Command timestamps must never move backwards; a command
    stamped before the latest event is rejected (and its rejection event is
    stamped at the current log head so the log stays monotone).
    """
    floor = state.last_event_at
    if floor is not None and cmd.at.monotonic_nanos < floor.monotonic_nanos:
        return _reject(state, cmd, REASON_NON_MONOTONIC_TIME, stamp=floor)
    if state.phase is Phase.ENDED:
        return _reject(state, cmd, REASON_TERMINAL_PHASE)
    if cmd.kind not in enabled_commands(state, cmd.at):
        return _reject(state, cmd, REASON_NOT_ENABLED)

    out = _Emitter(state, cmd.at)
    k = cmd.kind

    if k is CommandKind.START_SESSION:
        state = replace(state, phase=Phase.ANALYSIS, session_start=cmd.at)
        out.emit(EventKind.SESSION_STARTED)
        out.emit(EventKind.ANALYSIS_OPENED)
    elif k is CommandKind.ANALYZE_RHYTHM:
        state = replace(state, phase=Phase.RHYTHM_SELECTION)
        out.emit(EventKind.RHYTHM_SELECTION_OPENED)
    elif k is CommandKind.SELECT_ASYSTOLE_PEA:
        state = replace(state, phase=Phase.ASYSTOLE_PEA)
        out.emit(EventKind.RHYTHM_SELECTED, rhythm=RHYTHM_ASYSTOLE_PEA)
    elif k is CommandKind.SELECT_VF_VT:
        state = replace(state, phase=Phase.VF_VT)
        out.emit(EventKind.RHYTHM_SELECTED, rhythm=RHYTHM_VF_VT)
    elif k is CommandKind.RETURN_TO_ANALYSIS:
        state = replace(state, phase=Phase.ANALYSIS)
        out.emit(EventKind.ANALYSIS_OPENED)
    elif k is CommandKind.END_SESSION:
        state = replace(state, phase=Phase.ENDED, active_countdown=None)
        out.emit(EventKind.SESSION_ENDED)
    elif k is CommandKind.DEFIBRILLATE:
        state = replace(state, defib_count=state.defib_count + 1)
        out.emit(EventKind.DEFIBRILLATION_DELIVERED, ordinal=state.defib_count)
    elif k is CommandKind.ADMINISTER_ADRENALINE:
        mg = state.config.adrenaline_dose_mg
        state = replace(
            state,
            last_adrenaline_at=cmd.at,
            adrenaline_doses=state.adrenaline_doses + (AdrenalineDose(cmd.at, mg),),
        )
        out.emit(EventKind.ADRENALINE_GIVEN, mg=mg)
    elif k is CommandKind.ADMINISTER_AMIODARONE:
        first = not state.amiodarone_doses
        mg = state.config.amiodarone_first_dose_mg if first else state.config.amiodarone_repeat_dose_mg
        state = replace(
            state,
            amiodarone_doses=state.amiodarone_doses
            + (AmiodaroneDose(cmd.at, mg, state.defib_count),),
            last_amiodarone_defib_count=state.defib_count,
        )
        out.emit(EventKind.AMIODARONE_GIVEN, mg=mg)
    elif k is CommandKind.START_COMPRESSION:
        cd = alarms.start_countdown(
            cmd.at, state.config.compression_duration, state.config.warning_threshold
        )
        state = replace(state, active_countdown=cd)
        out.emit(EventKind.COMPRESSION_STARTED)
    elif k is CommandKind.ADD_NOTE:
        text = cmd.text or ""
        state = replace(state, notes=state.notes + (Note(cmd.at, text),))
        out.emit(EventKind.NOTE_ADDED, text=text)
    elif k is CommandKind.TICK:
        state = _tick_countdown(state, cmd.at, out)
    else:  # pragma: no cover - the enabled set excludes anything else
        raise AssertionError(f"unhandled command kind {k}")

    state = _refresh_reminders(state, cmd.at, out, announce=k in _REMINDER_EMITTING)
    state = replace(state, event_seq=out.next_seq, last_event_at=cmd.at if out.events else state.last_event_at)
    return state, out.events


def _tick_countdown(state: SessionState, now: Instant, out: _Emitter) -> SessionState:
    cd = state.active_countdown
    if cd is None:
        return state
    cd, signals = alarms.tick(cd, now)
    for sig in signals:
        if sig.kind is SignalKind.WARNING_SOUND:
            out.emit(EventKind.COMPRESSION_WARNING)
        elif sig.kind is SignalKind.BLINK:
            out.emit(EventKind.COMPRESSION_BLINK, second_mark=sig.second_mark)
        elif sig.kind is SignalKind.FINISHED:
            out.emit(EventKind.COMPRESSION_FINISHED)
        # the vibration stage rides on the finished event; clients render it
    return replace(state, active_countdown=None if cd.finished else cd)


def _refresh_reminders(
    state: SessionState, now: Instant, out: _Emitter, announce: bool
) -> SessionState:
    adr = _adrenaline_administerable(state, now)
    ami = _amiodarone_administerable(state)
    adr_flag = state.adrenaline_reminder_active
    ami_flag = state.amiodarone_reminder_active

    if not adr:
        adr_flag = False
    elif announce and not adr_flag:
        out.emit(EventKind.ADRENALINE_DUE)
        adr_flag = True

    if not ami:
        ami_flag = False
    elif announce and not ami_flag:
        out.emit(EventKind.AMIODARONE_DUE)
        ami_flag = True

    if adr_flag == state.adrenaline_reminder_active and ami_flag == state.amiodarone_reminder_active:
        return state
    return replace(
        state,
        adrenaline_reminder_active=adr_flag,
        amiodarone_reminder_active=ami_flag,
    )


def _reject(
    state: SessionState, cmd: Command, reason: str, stamp: Instant | None = None
) -> tuple[SessionState, list[Event]]:
    at = stamp or cmd.at
    payload: dict[str, Any] = {"command": cmd.kind.value, "reason": reason}
    if at.monotonic_nanos != cmd.at.monotonic_nanos:
        # keep the attempted time auditable and the replayed stream identical
        payload["command_monotonic_ns"] = cmd.at.monotonic_nanos
    event = Event(state.event_seq, at, EventKind.COMMAND_REJECTED, payload)
    state = replace(state, event_seq=state.event_seq + 1, last_event_at=at)
    return state, [event]
