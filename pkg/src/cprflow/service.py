"""In-process session service: the single writer in front of the engine.

Every command for a session funnels through one lock, gets stamped by the
service clock at that moment, and is applied before the lock is released, so
clients can never race their way into an inconsistent order and client clock
skew cannot corrupt the log. Events fan out to any number of subscribers in
sequence order, and each batch is appended to an on-disk write-ahead file
before the acknowledgment returns.

A background loop injects Tick commands into active sessions once per second
so countdown alarms and dose reminders fire even when every client stalls.
"""

from __future__ import annotations

import logging
import queue
import threading
import uuid
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Iterable

from . import alarms, engine, records
from .clock import Duration, RealTimeSource, VirtualTimeSource
from .engine import Command, CommandKind, DosingConfig, Event, Phase, SessionState

logger = logging.getLogger(__name__)

_ACTIVE_PHASES = frozenset(
    {Phase.ANALYSIS, Phase.RHYTHM_SELECTION, Phase.ASYSTOLE_PEA, Phase.VF_VT}
)

_DURATION_FIELDS = {"adrenaline_interval", "compression_duration", "warning_threshold"}
_DECIMAL_FIELDS = {
    "adrenaline_dose_mg",
    "amiodarone_first_dose_mg",
    "amiodarone_repeat_dose_mg",
}


class UnknownSessionError(KeyError):
    def __init__(self, session_id: str):
        super().__init__(session_id)
        self.session_id = session_id


class ConfigValidationError(ValueError):
    def __init__(self, fields: list[str]):
        super().__init__(f"invalid config fields: {', '.join(fields)}")
        self.fields = fields


@dataclass(frozen=True)
class Ack:
    accepted: bool
    reason: str | None
    events: tuple[Event, ...]
    enabled_commands: tuple[str, ...]


_END_OF_STREAM = object()


class Subscription:
    """A live, ordered event feed for one subscriber.

    `get` returns the next Event, None on timeout, or raises StopIteration
    once the stream has ended (session ended and backlog drained).
    """

    def __init__(self) -> None:
        self._queue: "queue.Queue[Any]" = queue.Queue()
        self.closed = False

    def get(self, timeout: float | None = None) -> Event | None:
        if self.closed:
            raise StopIteration
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is _END_OF_STREAM:
            self.closed = True
            raise StopIteration
        return item

    def _push(self, item: Any) -> None:
        self._queue.put(item)


class _SessionHandle:
    def __init__(self, session_id: str, state: SessionState, wal_path: Path | None):
        self.session_id = session_id
        self.lock = threading.RLock()
        self.state = state
        self.events: list[Event] = []
        self.subscribers: list[Subscription] = []
        self.wal_path = wal_path
        self._wal = None
        if wal_path is not None:
            self._wal = open(wal_path, "ab")

    def persist(self, data: bytes) -> None:
        if self._wal is not None:
            self._wal.write(data)
            self._wal.flush()

    def close(self) -> None:
        if self._wal is not None:
            self._wal.close()
            self._wal = None


def config_with_overrides(base: DosingConfig, overrides: dict[str, Any] | None) -> DosingConfig:
    """Apply wire-format overrides (durations in seconds, doses in decimal mg)."""
    if not overrides:
        return base
    bad = [k for k in overrides if k not in DosingConfig.__dataclass_fields__]
    if bad:
        raise ConfigValidationError(sorted(bad))
    kwargs: dict[str, Any] = {}
    invalid: list[str] = []
    for key, value in overrides.items():
        try:
            if key in _DURATION_FIELDS:
                kwargs[key] = Duration.from_seconds(value)
            elif key in _DECIMAL_FIELDS:
                kwargs[key] = Decimal(str(value))
            else:
                kwargs[key] = int(value)
        except (InvalidOperation, ValueError, TypeError):
            invalid.append(key)
    if invalid:
        raise ConfigValidationError(sorted(invalid))
    config = replace(base, **kwargs)
    problems = config.validate()
    if problems:
        raise ConfigValidationError(problems)
    return config


class SessionService:
    """Hosts independent sessions, each with its own serialized command queue."""

    def __init__(
        self,
        time_source: RealTimeSource | VirtualTimeSource | None = None,
        data_dir: str | Path | None = None,
        default_config: DosingConfig | None = None,
        tick_interval: float = 1.0,
    ):
        self.time_source = time_source or RealTimeSource()
        self.data_dir = Path(data_dir) if data_dir is not None else None
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        self.default_config = default_config or DosingConfig()
        self.tick_interval = tick_interval
        self._sessions: dict[str, _SessionHandle] = {}
        self._sessions_lock = threading.Lock()
        self._ticker: threading.Thread | None = None
        self._stop = threading.Event()

    # -- lifecycle

    def start_ticking(self) -> None:
        if self._ticker is not None:
            return
        self._stop.clear()
        self._ticker = threading.Thread(target=self._tick_loop, daemon=True, name="session-ticker")
        self._ticker.start()

    def close(self) -> None:
        self._stop.set()
        if self._ticker is not None:
            self._ticker.join(timeout=5)
            self._ticker = None
        with self._sessions_lock:
            handles = list(self._sessions.values())
        for handle in handles:
            with handle.lock:
                handle.close()

    def __enter__(self) -> "SessionService":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def _tick_loop(self) -> None:
        while not self._stop.wait(self.tick_interval):
            with self._sessions_lock:
                handles = list(self._sessions.values())
            for handle in handles:
                try:
                    with handle.lock:
                        if handle.state.phase in _ACTIVE_PHASES:
                            self._apply_locked(handle, CommandKind.TICK, None)
                except Exception:  # keep the loop alive; a session bug is not fatal
                    logger.exception("tick failed for session %s", handle.session_id)

    # -- operations

    def create_session(self, overrides: dict[str, Any] | None = None) -> str:
        config = config_with_overrides(self.default_config, overrides)
        session_id = uuid.uuid4().hex
        wal_path = self.data_dir / f"{session_id}.cpr" if self.data_dir else None
        start = self.time_source.now()
        state, events = engine.new_session(config, start)
        handle = _SessionHandle(session_id, state, wal_path)
        header = {
            "schema_version": records.SCHEMA_VERSION,
            "session_id": session_id,
            "config": records.config_to_record(config),
        }
        handle.persist(records.dump_line(header))
        self._broadcast(handle, events)
        with self._sessions_lock:
            self._sessions[session_id] = handle
        return session_id

    def submit_command(
        self, session_id: str, kind: str | CommandKind, payload: dict[str, Any] | None = None
    ) -> Ack:
        handle = self._handle(session_id)
        try:
            command_kind = CommandKind(kind)
        except ValueError:
            raise ValueError(f"unknown command kind: {kind}") from None
        with handle.lock:
            return self._apply_locked(handle, command_kind, payload)

    def _apply_locked(
        self, handle: _SessionHandle, kind: CommandKind, payload: dict[str, Any] | None
    ) -> Ack:
        now = self.time_source.now()
        text = (payload or {}).get("text")
        cmd = Command(kind, at=now, text=text)
        state, events = engine.apply(handle.state, cmd)
        handle.state = state
        self._broadcast(handle, events)
        rejected = bool(events) and events[0].kind is engine.EventKind.COMMAND_REJECTED
        reason = str(events[0].payload["reason"]) if rejected else None
        enabled = sorted(k.value for k in engine.enabled_commands(state, now))
        return Ack(
            accepted=not rejected,
            reason=reason,
            events=tuple(events),
            enabled_commands=tuple(enabled),
        )

    def _broadcast(self, handle: _SessionHandle, events: Iterable[Event]) -> None:
        # caller holds handle.lock (or the handle is not yet registered)
        data = b""
        for e in events:
            handle.events.append(e)
            data += records.dump_line(records.event_to_record(e))
            for sub in handle.subscribers:
                sub._push(e)
            if e.kind is engine.EventKind.SESSION_ENDED:
                for sub in handle.subscribers:
                    sub._push(_END_OF_STREAM)
                handle.subscribers.clear()
        if data:
            handle.persist(data)

    def snapshot(self, session_id: str) -> dict[str, Any]:
        handle = self._handle(session_id)
        with handle.lock:
            state = handle.state
            now = self.time_source.now()
            adr_total = sum((d.mg for d in state.adrenaline_doses), Decimal(0))
            ami_total = sum((d.mg for d in state.amiodarone_doses), Decimal(0))
            if state.active_countdown is not None:
                countdown_ns = alarms.remaining(state.active_countdown, now).nanos
            else:
                countdown_ns = None
            elapsed_ns = (
                engine.elapsed(state, now).nanos if state.session_start is not None else 0
            )
            return {
                "session_id": session_id,
                "phase": state.phase.value,
                "defib_count": state.defib_count,
                "adrenaline_total_mg": records.format_mg(adr_total),
                "cordarone_total_mg": records.format_mg(ami_total),
                "enabled_commands": sorted(k.value for k in engine.enabled_commands(state, now)),
                "countdown_remaining_ns": countdown_ns,
                "elapsed_ns": elapsed_ns,
                "ended": state.phase is Phase.ENDED,
                "last_seq": handle.events[-1].seq if handle.events else 0,
            }

    def subscribe(self, session_id: str, from_seq: int = 1) -> Subscription:
        if from_seq < 1:
            raise ValueError("from_seq must be >= 1")
        handle = self._handle(session_id)
        sub = Subscription()
        with handle.lock:
            for e in handle.events:
                if e.seq >= from_seq:
                    sub._push(e)
            if handle.state.phase is Phase.ENDED:
                sub._push(_END_OF_STREAM)
            else:
                handle.subscribers.append(sub)
        return sub

    def unsubscribe(self, session_id: str, sub: Subscription) -> None:
        handle = self._handle(session_id)
        with handle.lock:
            if sub in handle.subscribers:
                handle.subscribers.remove(sub)

    def export(self, session_id: str) -> bytes:
        handle = self._handle(session_id)
        with handle.lock:
            log = records.build_log(session_id, handle.state.config, handle.events)
        return records.serialize_log(log)

    def event_log(self, session_id: str) -> records.EventLog:
        handle = self._handle(session_id)
        with handle.lock:
            return records.build_log(session_id, handle.state.config, handle.events)

    def _handle(self, session_id: str) -> _SessionHandle:
        with self._sessions_lock:
            handle = self._sessions.get(session_id)
        if handle is None:
            raise UnknownSessionError(session_id)
        return handle
