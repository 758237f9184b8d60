"""Append-only session log: integrity checking, rendering, persistence, replay.

The event log is the sole source of truth for a session. Files are plain
UTF-8 with one JSON record per line: a header, then the events in sequence
order, then a checksum over every preceding byte so torn writes are detected
on load. Drug amounts travel as decimal strings end to end, so totals never
pick up binary-float noise.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, replace
from datetime import datetime, timezone, tzinfo
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Iterable

from . import engine
from .clock import Duration, Instant
from .engine import Command, CommandKind, DosingConfig, Event, EventKind, SessionState

SCHEMA_VERSION = 1
_CHECKSUM_PREFIX = "sha256:"


class RecordsError(Exception):
    """Base class for log handling failures."""


class IntegrityError(RecordsError):
    """The log violates its structural guarantees (sequence, time, checksum)."""


class ParseError(RecordsError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ReplayDivergenceError(RecordsError):
    """Replaying the log did not regenerate the stored event stream."""

    def __init__(self, message: str, seq: int):
        super().__init__(f"seq {seq}: {message}")
        self.seq = seq


@dataclass(frozen=True)
class EventLog:
    session_id: str
    config: DosingConfig
    events: tuple[Event, ...] = ()
    schema_version: int = SCHEMA_VERSION


@dataclass(frozen=True)
class Summary:
    defibrillation_count: int
    adrenaline_total_mg: Decimal
    cordarone_total_mg: Decimal
    session_duration: Duration
    ended: bool


@dataclass(frozen=True)
class DocumentationLine:
    timestamp_text: str
    description: str

    def __str__(self) -> str:
        return f"{self.description} at {self.timestamp_text}"


def empty_log(session_id: str, config: DosingConfig) -> EventLog:
    return EventLog(session_id=session_id, config=config)


def _check_follows(prev: Event | None, e: Event) -> None:
    expected_seq = 1 if prev is None else prev.seq + 1
    if e.seq != expected_seq:
        raise IntegrityError(f"event seq {e.seq} does not follow {expected_seq - 1}")
    if prev is not None and e.at.monotonic_nanos < prev.at.monotonic_nanos:
        raise IntegrityError(f"event seq {e.seq} moves time backwards")


def append(log: EventLog, e: Event) -> EventLog:
    """Extend the log by one event, enforcing gapless sequence and monotone time."""
    prev = log.events[-1] if log.events else None
    _check_follows(prev, e)
    return replace(log, events=log.events + (e,))


def build_log(session_id: str, config: DosingConfig, events: Iterable[Event]) -> EventLog:
    """Validate a whole event sequence at once (bulk form of `append`)."""
    evs = tuple(events)
    prev = None
    for e in evs:
        _check_follows(prev, e)
        prev = e
    return EventLog(session_id=session_id, config=config, events=evs)


def summarize(log: EventLog) -> Summary:
    defibs = 0
    adrenaline = Decimal(0)
    cordarone = Decimal(0)
    ended = False
    for e in log.events:
        if e.kind is EventKind.DEFIBRILLATION_DELIVERED:
            defibs += 1
        elif e.kind is EventKind.ADRENALINE_GIVEN:
            adrenaline += Decimal(e.payload["mg"])
        elif e.kind is EventKind.AMIODARONE_GIVEN:
            cordarone += Decimal(e.payload["mg"])
        elif e.kind is EventKind.SESSION_ENDED:
            ended = True
    if log.events:
        duration = log.events[-1].at.elapsed_since(log.events[0].at)
    else:
        duration = Duration(0)
    return Summary(defibs, adrenaline, cordarone, duration, ended)


def format_mg(mg: Decimal) -> str:
    """Decimal milligrams without trailing zeros or exponent notation."""
    return format(mg.normalize(), "f")


_VISIBLE_DESCRIPTIONS = {
    EventKind.SESSION_STARTED: lambda e: "session started",
    EventKind.SESSION_ENDED: lambda e: "session ended",
    EventKind.COMPRESSION_STARTED: lambda e: "compression started",
    EventKind.COMPRESSION_FINISHED: lambda e: "compression finished",
    EventKind.RHYTHM_SELECTED: lambda e: (
        "rhythm asystole/PEA selected"
        if e.payload.get("rhythm") == engine.RHYTHM_ASYSTOLE_PEA
        else "rhythm VF/VT selected"
    ),
    EventKind.DEFIBRILLATION_DELIVERED: lambda e: f"defibrillation #{e.payload['ordinal']}",
    EventKind.ADRENALINE_GIVEN: lambda e: f"{format_mg(Decimal(e.payload['mg']))}mg adrenaline",
    EventKind.AMIODARONE_GIVEN: lambda e: f"{format_mg(Decimal(e.payload['mg']))}mg cordarone",
    EventKind.NOTE_ADDED: lambda e: f"note: {e.payload['text']}",
}

_INTERNAL_DESCRIPTIONS = {
    EventKind.ANALYSIS_OPENED: lambda e: "analysis screen opened",
    EventKind.RHYTHM_SELECTION_OPENED: lambda e: "rhythm selection opened",
    EventKind.COMPRESSION_WARNING: lambda e: "compression warning sounded",
    EventKind.COMPRESSION_BLINK: lambda e: f"compression blink {e.payload['second_mark']}s",
    EventKind.ADRENALINE_DUE: lambda e: "adrenaline due",
    EventKind.AMIODARONE_DUE: lambda e: "cordarone due",
    EventKind.COMMAND_REJECTED: lambda e: (
        f"rejected {e.payload['command']} ({e.payload['reason']})"
    ),
}


def _timestamp_text(at: Instant, tz: tzinfo | None) -> str:
    wall = at.wall_time.astimezone(tz) if tz is not None else at.wall_time.astimezone()
    return wall.strftime("%Y-%m-%d %H:%M")


def render_documentation(
    log: EventLog, verbose: bool = False, tz: tzinfo | None = None
) -> list[DocumentationLine]:
    """One line per procedure, in log order, minute-precision local timestamps.

    Internal bookkeeping (blinks, due reminders, rejections, screen changes)
    only appears when `verbose` is set. Pass an explicit `tz` to render in a
    fixed zone instead of the device zone.
    """
    lines = []
    for e in log.events:
        describe = _VISIBLE_DESCRIPTIONS.get(e.kind)
        if describe is None and verbose:
            describe = _INTERNAL_DESCRIPTIONS.get(e.kind)
        if describe is None:
            continue
        lines.append(DocumentationLine(_timestamp_text(e.at, tz), describe(e)))
    return lines


def render_notes(log: EventLog, tz: tzinfo | None = None) -> list[tuple[str, str]]:
    return [
        (_timestamp_text(e.at, tz), str(e.payload["text"]))
        for e in log.events
        if e.kind is EventKind.NOTE_ADDED
    ]


# --- wire / file representation ---------------------------------------------


def _wall_to_rfc3339(wall: datetime) -> str:
    utc = wall.astimezone(timezone.utc)
    return utc.isoformat().replace("+00:00", "Z")


def _wall_from_rfc3339(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


def _payload_to_json(payload: dict[str, Any]) -> dict[str, Any]:
    return {k: (format_mg(v) if isinstance(v, Decimal) else v) for k, v in payload.items()}


def _payload_from_json(payload: dict[str, Any]) -> dict[str, Any]:
    out = dict(payload)
    if "mg" in out:
        out["mg"] = Decimal(out["mg"])
    return out


def event_to_record(e: Event) -> dict[str, Any]:
    return {
        "seq": e.seq,
        "monotonic_ns": e.at.monotonic_nanos,
        "wall_utc": _wall_to_rfc3339(e.at.wall_time),
        "kind": e.kind.value,
        "payload": _payload_to_json(dict(e.payload)),
    }


def event_from_record(rec: dict[str, Any]) -> Event:
    return Event(
        seq=rec["seq"],
        at=Instant(rec["monotonic_ns"], _wall_from_rfc3339(rec["wall_utc"])),
        kind=EventKind(rec["kind"]),
        payload=_payload_from_json(rec.get("payload", {})),
    )


def config_to_record(config: DosingConfig) -> dict[str, Any]:
    return {
        "adrenaline_dose_mg": format_mg(config.adrenaline_dose_mg),
        "adrenaline_interval": config.adrenaline_interval.whole_seconds,
        "amiodarone_first_dose_mg": format_mg(config.amiodarone_first_dose_mg),
        "amiodarone_repeat_dose_mg": format_mg(config.amiodarone_repeat_dose_mg),
        "compression_duration": config.compression_duration.whole_seconds,
        "warning_threshold": config.warning_threshold.whole_seconds,
        "vfvt_adrenaline_min_defibs": config.vfvt_adrenaline_min_defibs,
    }


def config_from_record(rec: dict[str, Any]) -> DosingConfig:
    return DosingConfig(
        adrenaline_dose_mg=Decimal(str(rec["adrenaline_dose_mg"])),
        adrenaline_interval=Duration.from_seconds(rec["adrenaline_interval"]),
        amiodarone_first_dose_mg=Decimal(str(rec["amiodarone_first_dose_mg"])),
        amiodarone_repeat_dose_mg=Decimal(str(rec["amiodarone_repeat_dose_mg"])),
        compression_duration=Duration.from_seconds(rec["compression_duration"]),
        warning_threshold=Duration.from_seconds(rec["warning_threshold"]),
        vfvt_adrenaline_min_defibs=int(rec["vfvt_adrenaline_min_defibs"]),
    )


def dump_line(obj: dict[str, Any]) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def serialize_log(log: EventLog) -> bytes:
    """The canonical byte representation written by `save_session`."""
    header = {
        "schema_version": log.schema_version,
        "session_id": log.session_id,
        "config": config_to_record(log.config),
    }
    body = dump_line(header)
    for e in log.events:
        body += dump_line(event_to_record(e))
    digest = hashlib.sha256(body).hexdigest()
    return body + dump_line({"checksum": _CHECKSUM_PREFIX + digest})


def save_session(log: EventLog, destination: str | Path) -> None:
    """Write the session file durably: temp file in the same directory, fsync,
    then atomic rename. A failed write leaves no partial file behind."""
    dest = Path(destination)
    data = serialize_log(log)
    fd, tmp_name = tempfile.mkstemp(dir=dest.parent, prefix=dest.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, dest)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    dir_fd = os.open(dest.parent, os.O_RDONLY)
    try:
        os.fsync(dir_fd)
    finally:
        os.close(dir_fd)


def parse_session(data: bytes) -> EventLog:
    """Parse and integrity-check serialized session bytes."""
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    if not lines:
        raise ParseError("empty session data", line=1)

    records: list[dict[str, Any]] = []
    for i, raw in enumerate(lines, start=1):
        try:
            rec = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"malformed record: {exc}", line=i) from exc
        if not isinstance(rec, dict):
            raise ParseError("record is not an object", line=i)
        records.append(rec)

    header = records[0]
    if "schema_version" not in header:
        raise ParseError("missing header record", line=1)
    if header["schema_version"] != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {header['schema_version']}", line=1)

    last = records[-1]
    if len(records) < 2 or "checksum" not in last:
        raise ParseError("missing checksum record", line=len(records) + 1)
    checked_bytes = b"\n".join(lines[:-1]) + b"\n"
    digest = _CHECKSUM_PREFIX + hashlib.sha256(checked_bytes).hexdigest()
    if last["checksum"] != digest:
        raise IntegrityError("checksum mismatch: file bytes were altered or truncated")

    try:
        config = config_from_record(header["config"])
    except (KeyError, InvalidOperation, ValueError) as exc:
        raise ParseError(f"bad config record: {exc}", line=1) from exc

    events = []
    for i, rec in enumerate(records[1:-1], start=2):
        try:
            events.append(event_from_record(rec))
        except (KeyError, ValueError, InvalidOperation) as exc:
            raise ParseError(f"bad event record: {exc}", line=i) from exc

    return build_log(str(header.get("session_id", "")), config, events)


def load_session(source: str | Path) -> EventLog:
    with open(source, "rb") as f:
        return parse_session(f.read())


# --- replay ------------------------------------------------------------------

_TICK_PRODUCED = frozenset(
    {
        EventKind.COMPRESSION_WARNING,
        EventKind.COMPRESSION_BLINK,
        EventKind.COMPRESSION_FINISHED,
        EventKind.ADRENALINE_DUE,
        EventKind.AMIODARONE_DUE,
    }
)

_EVENT_IMPLIES_COMMAND = {
    EventKind.SESSION_STARTED: CommandKind.START_SESSION,
    EventKind.RHYTHM_SELECTION_OPENED: CommandKind.ANALYZE_RHYTHM,
    EventKind.ANALYSIS_OPENED: CommandKind.RETURN_TO_ANALYSIS,
    EventKind.SESSION_ENDED: CommandKind.END_SESSION,
    EventKind.DEFIBRILLATION_DELIVERED: CommandKind.DEFIBRILLATE,
    EventKind.ADRENALINE_GIVEN: CommandKind.ADMINISTER_ADRENALINE,
    EventKind.AMIODARONE_GIVEN: CommandKind.ADMINISTER_AMIODARONE,
    EventKind.COMPRESSION_STARTED: CommandKind.START_COMPRESSION,
    EventKind.NOTE_ADDED: CommandKind.ADD_NOTE,
}


def _implied_command(e: Event) -> Command:
    if e.kind in _TICK_PRODUCED:
        return Command(CommandKind.TICK, at=e.at)
    if e.kind is EventKind.RHYTHM_SELECTED:
        kind = (
            CommandKind.SELECT_ASYSTOLE_PEA
            if e.payload.get("rhythm") == engine.RHYTHM_ASYSTOLE_PEA
            else CommandKind.SELECT_VF_VT
        )
        return Command(kind, at=e.at)
    if e.kind is EventKind.COMMAND_REJECTED:
        # re-issue the rejected command at its original time so the same
        # rejection (and reason) regenerates
        at = e.at
        if "command_monotonic_ns" in e.payload:
            at = Instant(int(e.payload["command_monotonic_ns"]), e.at.wall_time)
        kind = CommandKind(e.payload["command"])
        text = "" if kind is CommandKind.ADD_NOTE else None
        return Command(kind, at=at, text=text)
    if e.kind is EventKind.NOTE_ADDED:
        return Command(CommandKind.ADD_NOTE, at=e.at, text=str(e.payload["text"]))
    kind = _EVENT_IMPLIES_COMMAND.get(e.kind)
    if kind is None:
        raise ReplayDivergenceError(f"event {e.kind.value} cannot start a command", seq=e.seq)
    return Command(kind, at=e.at)


def _events_equal(stored: Event, regenerated: Event) -> bool:
    return (
        stored.seq == regenerated.seq
        and stored.at.monotonic_nanos == regenerated.at.monotonic_nanos
        and stored.at.wall_time == regenerated.at.wall_time
        and stored.kind == regenerated.kind
        and dict(stored.payload) == dict(regenerated.payload)
    )


def replay_verify(log: EventLog) -> SessionState:
    """Re-derive the session by folding the commands the log implies back
    through the engine, asserting the regenerated stream matches exactly.

    Returns the final state. Raises ReplayDivergenceError at the first
    sequence number where the streams differ.
    """
    state = engine.initial_state(log.config)
    events = log.events
    i = 0
    while i < len(events):
        head = events[i]
        cmd = _implied_command(head)
        state, regenerated = engine.apply(state, cmd)
        if not regenerated:
            raise ReplayDivergenceError(
                f"implied command {cmd.kind.value} produced no events", seq=head.seq
            )
        for out_event in regenerated:
            if i >= len(events):
                raise ReplayDivergenceError(
                    f"regenerated extra event {out_event.kind.value}", seq=out_event.seq
                )
            if not _events_equal(events[i], out_event):
                raise ReplayDivergenceError(
                    f"stored {events[i].kind.value} != regenerated {out_event.kind.value}",
                    seq=events[i].seq,
                )
            i += 1
    return state
