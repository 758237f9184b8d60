"""Scripted scenario execution against a virtual clock.

A scenario file is JSON: a name, optional config overrides, and a list of
steps at offsets (seconds from session start). The runner advances a virtual
clock step by step, injecting Tick commands at every whole second in between
so countdown alarms land in the log exactly as they would live. Identical
scenario input produces byte-identical session files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import engine, records
from .clock import NANOS_PER_SECOND, Duration, VirtualTimeSource
from .engine import Command, CommandKind, DosingConfig, EventKind, Phase, SessionState
from .service import config_with_overrides

DEFAULT_WALL_EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)


class ScenarioError(Exception):
    """The scenario file cannot be used (bad JSON, unknown command, bad offsets)."""


@dataclass(frozen=True)
class Step:
    offset: Duration
    kind: CommandKind
    text: str | None = None
    expect_rejected: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    config: DosingConfig
    steps: tuple[Step, ...]
    wall_epoch: datetime = DEFAULT_WALL_EPOCH
    run_until: Duration | None = None


@dataclass
class RejectionReport:
    offset_s: float
    kind: CommandKind
    reason: str
    expected: bool


@dataclass
class ScenarioResult:
    scenario: Scenario
    log: records.EventLog
    final_state: SessionState
    summary: records.Summary
    rejections: list[RejectionReport] = field(default_factory=list)

    @property
    def unexpected(self) -> list[RejectionReport]:
        wrong = [r for r in self.rejections if not r.expected]
        return wrong + self._missing_expected()

    def _missing_expected(self) -> list[RejectionReport]:
        # a step marked expect_rejected that was in fact accepted is a failure too
        rejected_offsets = {(r.offset_s, r.kind) for r in self.rejections}
        return [
            RejectionReport(s.offset.seconds, s.kind, "expected rejection but accepted", False)
            for s in self.scenario.steps
            if s.expect_rejected and (s.offset.seconds, s.kind) not in rejected_offsets
        ]

    @property
    def ok(self) -> bool:
        return not self.unexpected


def parse_scenario(data: dict[str, Any], name_fallback: str = "scenario") -> Scenario:
    try:
        raw_steps = data["steps"]
    except KeyError:
        raise ScenarioError("scenario has no steps") from None
    if not isinstance(raw_steps, list):
        raise ScenarioError("steps must be a list")

    try:
        config = config_with_overrides(DosingConfig(), data.get("config"))
    except ValueError as exc:
        raise ScenarioError(f"bad config: {exc}") from exc

    steps: list[Step] = []
    previous = -1.0
    for i, raw in enumerate(raw_steps):
        try:
            offset_s = float(raw["at_s"])
            kind = CommandKind(raw["command"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"step {i}: {exc}") from exc
        if offset_s < 0:
            raise ScenarioError(f"step {i}: negative offset")
        if offset_s < previous:
            raise ScenarioError(f"step {i}: offsets must be non-decreasing")
        previous = offset_s
        steps.append(
            Step(
                offset=Duration.from_seconds(offset_s),
                kind=kind,
                text=raw.get("text"),
                expect_rejected=bool(raw.get("expect_rejected", False)),
            )
        )

    epoch = DEFAULT_WALL_EPOCH
    if "wall_epoch" in data:
        epoch = datetime.fromisoformat(str(data["wall_epoch"]).replace("Z", "+00:00"))
        if epoch.tzinfo is None:
            raise ScenarioError("wall_epoch must include a timezone")

    run_until = None
    if "run_until_s" in data:
        run_until = Duration.from_seconds(float(data["run_until_s"]))

    return Scenario(
        name=str(data.get("name", name_fallback)),
        config=config,
        steps=tuple(steps),
        wall_epoch=epoch,
        run_until=run_until,
    )


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: invalid JSON at line {exc.lineno}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{p}: scenario must be a JSON object")
    return parse_scenario(data, name_fallback=p.stem)


def run_scenario(scenario: Scenario) -> ScenarioResult:
    source = VirtualTimeSource(wall_epoch=scenario.wall_epoch)
    state, events = engine.new_session(scenario.config, source.now())
    all_events = list(events)
    rejections: list[RejectionReport] = []

    def apply(cmd: Command, expect_rejected: bool = False, offset_s: float = 0.0) -> None:
        nonlocal state
        state, out = engine.apply(state, cmd)
        all_events.extend(out)
        if out and out[0].kind is EventKind.COMMAND_REJECTED:
            rejections.append(
                RejectionReport(offset_s, cmd.kind, str(out[0].payload["reason"]), expect_rejected)
            )

    tick_ns = NANOS_PER_SECOND  # injected cadence between steps

    def advance_with_ticks(target_nanos: int) -> None:
        now_ns = source.now().monotonic_nanos
        next_tick = (now_ns // tick_ns + 1) * tick_ns
        while next_tick <= target_nanos:
            now = source.advance(Duration(next_tick - source.now().monotonic_nanos))
            if state.phase not in (Phase.ENDED, Phase.IDLE):
                apply(Command(CommandKind.TICK, at=now), offset_s=now.monotonic_nanos / tick_ns)
            next_tick += tick_ns
        remainder = target_nanos - source.now().monotonic_nanos
        if remainder > 0:
            source.advance(Duration(remainder))

    for step in scenario.steps:
        advance_with_ticks(step.offset.nanos)
        now = source.now()
        apply(
            Command(step.kind, at=now, text=step.text),
            expect_rejected=step.expect_rejected,
            offset_s=step.offset.seconds,
        )

    if scenario.run_until is not None:
        advance_with_ticks(scenario.run_until.nanos)

    log = records.build_log(scenario.name, scenario.config, all_events)
    return ScenarioResult(
        scenario=scenario,
        log=log,
        final_state=state,
        summary=records.summarize(log),
        rejections=rejections,
    )
