"""Operator command line: serve, sim, exp, verify, export.

Exit codes: 0 success, 1 verification/transport failure, 2 startup failure,
3 not found, 4 validation error.  Every command honors --data-dir and
FPRIG_DATA_DIR identically (flag wins over env over default).
"""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click

from .chain import AttestationStore, verify_chain
from .errors import (
    ConfigurationError,
    FprigError,
    NotFoundError,
    TransportError,
    ValidationError,
)
from .model import load_session, session_dir, timeline_query

EXIT_VERIFY_FAILED = 1
EXIT_STARTUP = 2
EXIT_NOT_FOUND = 3
EXIT_VALIDATION = 4

_data_dir_option = click.option(
    "--data-dir", envvar="FPRIG_DATA_DIR", default="./fprig-data",
    show_default=True, help="Session storage directory.")


def _exit_for(exc: FprigError) -> int:
    if isinstance(exc, (ValidationError, ConfigurationError)):
        return EXIT_VALIDATION
    if isinstance(exc, NotFoundError):
        return EXIT_NOT_FOUND
    return 1


@click.group()
def main():
    """First-person recording rig operator commands."""


@main.command()
@_data_dir_option
@click.option("--port", envvar="FPRIG_PORT", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--attest-url", envvar="FPRIG_ATTEST_URL", default=None,
              help="Remote attestation service; defaults to the in-process store.")
@click.option("--console-dir", envvar="FPRIG_CONSOLE_DIR", default=None,
              help="Built operator console assets to host under /console/.")
def serve(data_dir, port, host, attest_url, console_dir):
    """Run the ingestion + attestation service (and console hosting)."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        click.echo(f"error: cannot bind {host}:{port} ({exc})", err=True)
        sys.exit(EXIT_STARTUP)
    finally:
        probe.close()

    import uvicorn

    from .api import create_app

    app = create_app(data_dir, attest_url=attest_url, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group()
def sim():
    """Sensor simulator."""


@sim.command("run")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=False))
@click.option("--endpoint", default="http://127.0.0.1:8000", show_default=True)
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--session-id", default=None, help="Session id (default: generated).")
def sim_run(scenario_path, endpoint, seed, session_id):
    """Stream a scenario file to a running ingestion service."""
    from .client import HttpIngestClient
    from .model import SessionConfig
    from .sim import Scenario, run_scenario

    try:
        obj = json.loads(Path(scenario_path).read_text("utf-8"))
    except OSError as exc:
        click.echo(f"error: cannot read scenario: {exc}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    except json.JSONDecodeError as exc:
        click.echo(f"error: scenario is not valid JSON: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        scenario = Scenario.from_obj(obj)
        if seed is not None:
            scenario.rng_seed = seed
        scenario.validate()
        config = None
        if session_id is not None:
            config = SessionConfig(session_id=session_id, rng_seed=scenario.rng_seed)
        summary = run_scenario(scenario, HttpIngestClient(endpoint), config)
    except TransportError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except FprigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_for(exc))
    click.echo(json.dumps({
        "session_id": summary.session_id,
        "sent": summary.sent,
        "acked_ok": summary.acked_ok,
        "acked_duplicate": summary.acked_duplicate,
        "des_tones_scheduled": summary.des_tones_scheduled,
        "segment_count": (summary.manifest or {}).get("segment_count"),
    }, indent=2))


@main.group()
def exp():
    """Arousal experiment harness."""


@exp.command("run")
@_data_dir_option
@click.option("--script", "script_path", required=True, type=click.Path())
@click.option("--refs", "refs_path", default=None, type=click.Path(),
              help="Reference CSV (stimulus_id,ref_arousal).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
def exp_run(data_dir, script_path, refs_path, out_dir, seed):
    """Run a stimulus script and emit CSV + plot data."""
    from .experiment import (
        StimulusScript,
        compare_reference,
        emit_results,
        read_reference_csv,
        run_stimulus_session,
    )
    from .service import SessionManager

    try:
        obj = json.loads(Path(script_path).read_text("utf-8"))
        script = StimulusScript.from_obj(obj)
        if refs_path:
            script.references.update(read_reference_csv(refs_path))
        manager = SessionManager(data_dir)
        results = run_stimulus_session(script, seed=seed, manager=manager)
        emit_results(results, out_dir)
        lines = [f"{r.stimulus_id}: mean_arousal={r.mean_arousal:+.3f} n={r.sample_count}"
                 for r in results]
        if sum(1 for r in results if r.ref_arousal is not None) >= 2:
            _, r = compare_reference(results)
            lines.append(f"pearson_r={r:.4f}" if r == r else
                         "pearson_r=nan (measured values have zero variance)")
        click.echo("\n".join(lines))
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    except FprigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_for(exc))


@exp.command("estimate")
@click.option("--gb", required=True, type=float)
@click.option("--mode", required=True, type=click.Choice(["full", "text"]))
def exp_estimate(gb, mode):
    """Estimate recording days for a target corpus size."""
    from .experiment import estimate_recording_days

    try:
        days = estimate_recording_days(gb, mode)
    except FprigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_for(exc))
    click.echo(f"{days:g}")


@main.command()
@_data_dir_option
@click.option("--store", "store_path", default=None,
              help="Attestation store path (default: <data-dir>/attestations.jsonl).")
@click.argument("session_id")
def verify(data_dir, store_path, session_id):
    """Verify a sealed session's tamper-evidence chain."""
    directory = session_dir(data_dir, session_id)
    if not directory.is_dir():
        click.echo(f"error: unknown session {session_id!r}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    store = AttestationStore(store_path or (Path(data_dir) / "attestations.jsonl"))
    try:
        report = verify_chain(directory, store)
    except FprigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_for(exc))
    click.echo(json.dumps(report.to_obj(), indent=2))
    sys.exit(0 if report.verdict == "intact" else EXIT_VERIFY_FAILED)


@main.command()
@_data_dir_option
@click.option("--t0", type=float, default=0.0, show_default=True)
@click.option("--t1", type=float, default=float(2 ** 62))
@click.option("--kinds", default=None, help="Comma-separated record kinds.")
@click.option("--out", "out_path", default="-", show_default=True,
              help="Output JSONL path ('-' for stdout).")
@click.argument("session_id")
def export(data_dir, t0, t1, kinds, out_path, session_id):
    """Export timeline records as JSON lines."""
    try:
        session = load_session(data_dir, session_id)
        kind_list = tuple(k for k in kinds.split(",") if k) if kinds else None
        records = timeline_query(session, t0, t1, kind_list)
    except FprigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_for(exc))
    lines = [json.dumps(r.to_obj(), sort_keys=True) for r in records]
    if out_path == "-":
        for line in lines:
            click.echo(line)
    else:
        Path(out_path).write_text("".join(line + "\n" for line in lines), "utf-8")
    click.echo(f"exported {len(lines)} records", err=True)


if __name__ == "__main__":
    main()
