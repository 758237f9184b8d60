"""Event-sourced engine for guiding and documenting resuscitation sessions."""

from .alarms import AlarmSignal, Countdown, SignalKind, remaining, start_countdown, tick
from .clock import Duration, Instant, RealTimeSource, VirtualTimeSource
from .engine import (
    Command,
    CommandKind,
    DosingConfig,
    Event,
    EventKind,
    Phase,
    SessionState,
    adrenaline_due,
    amiodarone_due,
    apply,
    elapsed,
    enabled_commands,
    new_session,
)
from .records import (
    DocumentationLine,
    EventLog,
    IntegrityError,
    ParseError,
    ReplayDivergenceError,
    Summary,
    append,
    build_log,
    load_session,
    render_documentation,
    render_notes,
    replay_verify,
    save_session,
    serialize_log,
    summarize,
)
from .service import Ack, SessionService, Subscription

__version__ = "0.1.0"

__all__ = [
    "AlarmSignal",
    "Countdown",
    "SignalKind",
    "remaining",
    "start_countdown",
    "tick",
    "Duration",
    "Instant",
    "RealTimeSource",
    "VirtualTimeSource",
    "Command",
    "CommandKind",
    "DosingConfig",
    "Event",
    "EventKind",
    "Phase",
    "SessionState",
    "adrenaline_due",
    "amiodarone_due",
    "apply",
    "elapsed",
    "enabled_commands",
    "new_session",
    "DocumentationLine",
    "EventLog",
    "IntegrityError",
    "ParseError",
    "ReplayDivergenceError",
    "Summary",
    "append",
    "build_log",
    "load_session",
    "render_documentation",
    "render_notes",
    "replay_verify",
    "save_session",
    "serialize_log",
    "summarize",
    "Ack",
    "SessionService",
    "Subscription",
]
