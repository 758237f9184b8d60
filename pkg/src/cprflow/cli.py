"""Command line driver: run scenarios, replay and inspect session files, serve.

Exit codes: 0 success, 1 verification or rejection failure, 2 parse/IO error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import records, scenario as scenario_mod
from .records import IntegrityError, ParseError, ReplayDivergenceError

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_PARSE_IO = 2


def _summary_line(summary: records.Summary) -> str:
    return (
        f"defibrillations: {summary.defibrillation_count}, "
        f"adrenaline: {records.format_mg(summary.adrenaline_total_mg)}mg, "
        f"cordarone: {records.format_mg(summary.cordarone_total_mg)}mg"
    )


@click.group()
def main() -> None:
    """Resuscitation session engine tools."""


@main.command()
@click.argument("scenario_file", type=click.Path(path_type=Path))
@click.option("--out", "out_file", type=click.Path(path_type=Path), default=None,
              help="Session file to write (default: <scenario name>.cpr).")
def run(scenario_file: Path, out_file: Path | None) -> None:
    """Execute a scripted scenario and write its session file."""
    try:
        scn = scenario_mod.load_scenario(scenario_file)
    except (scenario_mod.ScenarioError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PARSE_IO)

    result = scenario_mod.run_scenario(scn)
    destination = out_file or Path(f"{scn.name}.cpr")
    try:
        records.save_session(result.log, destination)
    except OSError as exc:
        click.echo(f"error: cannot write {destination}: {exc}", err=True)
        sys.exit(EXIT_PARSE_IO)

    click.echo(_summary_line(result.summary))
    for r in result.rejections:
        marker = "expected" if r.expected else "UNEXPECTED"
        click.echo(f"{marker} rejection: {r.kind.value} at {r.offset_s:g}s ({r.reason})")
    for r in result.unexpected:
        if r.reason == "expected rejection but accepted":
            click.echo(f"UNEXPECTED acceptance: {r.kind.value} at {r.offset_s:g}s")
    click.echo(f"wrote {destination}")
    sys.exit(EXIT_OK if result.ok else EXIT_VERIFICATION)


@main.command()
@click.argument("session_file", type=click.Path(path_type=Path))
def replay(session_file: Path) -> None:
    """Re-derive a session from its file and verify the log regenerates exactly."""
    try:
        log = records.load_session(session_file)
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_PARSE_IO)
    except IntegrityError as exc:
        click.echo(f"integrity error: {exc}", err=True)
        sys.exit(EXIT_VERIFICATION)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PARSE_IO)

    try:
        state = records.replay_verify(log)
    except ReplayDivergenceError as exc:
        click.echo(f"replay diverged: {exc}", err=True)
        sys.exit(EXIT_VERIFICATION)
    click.echo(f"replay ok: {len(log.events)} events, final phase {state.phase.value}")
    sys.exit(EXIT_OK)


@main.command()
@click.argument("session_file", type=click.Path(path_type=Path))
@click.option("--view", type=click.Choice(["summary", "documentation", "notes"]),
              required=True, help="Which rendering to print.")
@click.option("--verbose", is_flag=True, help="Include internal events in documentation.")
def show(session_file: Path, view: str, verbose: bool) -> None:
    """Print a rendering of a saved session."""
    try:
        log = records.load_session(session_file)
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_PARSE_IO)
    except IntegrityError as exc:
        click.echo(f"integrity error: {exc}", err=True)
        sys.exit(EXIT_VERIFICATION)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PARSE_IO)

    if view == "summary":
        click.echo(_summary_line(records.summarize(log)))
    elif view == "documentation":
        for line in records.render_documentation(log, verbose=verbose):
            click.echo(str(line))
    else:
        for ts, text in records.render_notes(log):
            click.echo(f"{ts}  {text}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--config", "config_file", type=click.Path(path_type=Path), default=None,
              help="JSON service config: dosing defaults, data_dir, tick_interval.")
def serve(port: int, config_file: Path | None) -> None:
    """Start the local session service (HTTP + event stream)."""
    import uvicorn

    from .api import create_app
    from .service import SessionService, config_with_overrides
    from .engine import DosingConfig

    data_dir = "sessions"
    tick_interval = 1.0
    dosing = DosingConfig()
    host = "127.0.0.1"
    if config_file is not None:
        try:
            raw = json.loads(config_file.read_text(encoding="utf-8"))
            dosing = config_with_overrides(dosing, raw.get("dosing"))
            data_dir = raw.get("data_dir", data_dir)
            tick_interval = float(raw.get("tick_interval", tick_interval))
            host = raw.get("host", host)
        except (OSError, ValueError) as exc:
            click.echo(f"error: bad config file: {exc}", err=True)
            sys.exit(EXIT_PARSE_IO)

    service = SessionService(
        data_dir=data_dir, default_config=dosing, tick_interval=tick_interval
    )
    service.start_ticking()
    frontend = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(service, frontend_dir=frontend if frontend.is_dir() else None)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        service.close()


if __name__ == "__main__":
    main()
