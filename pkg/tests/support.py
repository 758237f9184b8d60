"""Shared test drivers: scripted sessions on a virtual clock and random walks."""

from __future__ import annotations

import random
from datetime import datetime, timezone

from cprflow import engine
from cprflow.clock import Duration, VirtualTimeSource
from cprflow.engine import Command, CommandKind, DosingConfig, Event, SessionState

EPOCH = datetime(2021, 5, 7, 15, 0, tzinfo=timezone.utc)


class Driver:
    """Drives one engine session against a virtual clock, collecting events."""

    def __init__(self, config: DosingConfig | None = None, start: bool = True):
        self.source = VirtualTimeSource(wall_epoch=EPOCH)
        self.config = config or DosingConfig()
        self.events: list[Event] = []
        if start:
            self.state, events = engine.new_session(self.config, self.source.now())
            self.events.extend(events)
        else:
            self.state = engine.initial_state(self.config)

    @property
    def now(self):
        return self.source.now()

    def seconds(self) -> float:
        return self.source.now().monotonic_nanos / 1e9

    def goto(self, offset_s: float) -> None:
        """Advance the clock to an absolute session offset (no ticking)."""
        delta = offset_s * 1e9 - self.source.now().monotonic_nanos
        assert delta >= 0, f"cannot go back to {offset_s}s"
        self.source.advance(Duration(round(delta)))

    def do(self, kind: CommandKind, at_s: float | None = None, text: str | None = None) -> list[Event]:
        if at_s is not None:
            self.goto(at_s)
        self.state, out = engine.apply(
            self.state, Command(kind, at=self.source.now(), text=text)
        )
        self.events.extend(out)
        return out

    def tick_until(self, offset_s: float) -> list[Event]:
        """Issue 1 Hz ticks up to and including the given offset."""
        collected = []
        next_s = int(self.seconds()) + 1
        while next_s <= offset_s:
            collected.extend(self.do(CommandKind.TICK, at_s=next_s))
            next_s += 1
        if self.seconds() < offset_s:
            self.goto(offset_s)
        return collected

    def enabled(self) -> set[CommandKind]:
        return set(engine.enabled_commands(self.state, self.source.now()))


def drive_to_vfvt(d: Driver, defibs: int = 0) -> None:
    d.do(CommandKind.ANALYZE_RHYTHM)
    d.do(CommandKind.SELECT_VF_VT)
    for _ in range(defibs):
        d.do(CommandKind.DEFIBRILLATE)


def drive_to_asystole(d: Driver) -> None:
    d.do(CommandKind.ANALYZE_RHYTHM)
    d.do(CommandKind.SELECT_ASYSTOLE_PEA)


ALL_KINDS = [k for k in CommandKind]

# weights nudge walks toward interesting protocol activity
_WEIGHTS = {
    CommandKind.TICK: 4.0,
    CommandKind.DEFIBRILLATE: 3.0,
    CommandKind.ADMINISTER_ADRENALINE: 3.0,
    CommandKind.ADMINISTER_AMIODARONE: 3.0,
    CommandKind.END_SESSION: 0.2,
}


def random_walk(
    seed: int, max_commands: int = 200, disabled_ratio: float = 0.15
) -> tuple[DosingConfig, list[Command]]:
    """Generate a monotone-timestamped command sequence.

    Commands are mostly drawn from the currently enabled set; a fraction is
    drawn from all kinds so rejections occur. The result replays identically
    because only (config, commands) determine the outcome.
    """
    rng = random.Random(seed)
    source = VirtualTimeSource(wall_epoch=EPOCH)
    config = DosingConfig()
    state, _ = engine.new_session(config, source.now())
    commands: list[Command] = []
    length = rng.randint(1, max_commands)
    for _ in range(length):
        if rng.random() < 0.8:
            source.advance(Duration(rng.randint(0, 30 * 10**9)))
        now = source.now()
        enabled = sorted(engine.enabled_commands(state, now), key=lambda k: k.value)
        if enabled and rng.random() >= disabled_ratio:
            weights = [_WEIGHTS.get(k, 1.0) for k in enabled]
            kind = rng.choices(enabled, weights=weights)[0]
        else:
            kind = rng.choice(ALL_KINDS)
        text = f"note {len(commands)}" if kind is CommandKind.ADD_NOTE else None
        cmd = Command(kind, at=now, text=text)
        commands.append(cmd)
        state, _ = engine.apply(state, cmd)
        if state.phase is engine.Phase.ENDED and rng.random() < 0.7:
            break
    return config, commands


def fold(config: DosingConfig, commands: list[Command], start_at=None) -> tuple[SessionState, list[Event]]:
    """Replay a command list from a fresh session; returns final state and all events."""
    start = start_at if start_at is not None else VirtualTimeSource(wall_epoch=EPOCH).now()
    state, events = engine.new_session(config, start)
    all_events = list(events)
    for cmd in commands:
        state, out = engine.apply(state, cmd)
        all_events.extend(out)
    return state, all_events
