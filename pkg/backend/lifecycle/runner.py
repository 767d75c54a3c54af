"""CLI for lifecycle tasks: checkpoint GC and training replay.

Usage:
    python -m backend.lifecycle gc --study demo --keep-final
    python -m backend.lifecycle gc --study demo --dry-run
    python -m backend.lifecycle gc --watch --interval 60
    python -m backend.lifecycle replay --study demo --targets 41 --out-study demo-replay \
        --problem problem.json
"""

from __future__ import annotations

import argparse
import logging
import signal
import sys
from pathlib import Path

from rich.console import Console
from rich.table import Table

from backend.api.service import PBTService
from backend.config import DATA_DIR, GC_INTERVAL, SERVICE_URL
from backend.lifecycle.dependency import IncompleteLineageError, InvalidTargetError
from backend.lifecycle.gc import CheckpointCollector, DeletionReport
from backend.lifecycle.replay import replay
from backend.log_setup import setup_logging
from backend.pbt_client import LocalServiceClient, PBTClient, ServiceClient
from backend.worker.problems import ToyProblemSpec

console = Console()

_shutdown_requested = False


def _handle_signal(signum: int, _frame: object) -> None:
    global _shutdown_requested
    sig_name = signal.Signals(signum).name
    logging.getLogger("pbt.gc").info("Received %s, finishing current cycle then exiting", sig_name)
    _shutdown_requested = True


def render_gc_report(reports: list[DeletionReport]) -> Table:
    title = "Checkpoint GC (dry run)" if reports and reports[0].dry_run else "Checkpoint GC"
    table = Table(title=title, show_lines=True)
    table.add_column("Study", style="bold cyan")
    table.add_column("Deleted", justify="right")
    table.add_column("Retained", justify="right")
    table.add_column("Unevaluated", justify="right")
    table.add_column("Freed", justify="right")
    table.add_column("Errors", justify="right")
    for r in reports:
        errors = f"[red]{len(r.errors)}[/]" if r.errors else "0"
        table.add_row(
            r.study_id,
            str(len(r.deleted)),
            str(len(r.retained)),
            str(len(r.unevaluated)),
            f"{r.bytes_freed / 1024:.1f} KiB",
            errors,
        )
    return table


def _cmd_gc(args: argparse.Namespace) -> int:
    collector = CheckpointCollector(args.data_dir, keep_final=args.keep_final, dry_run=args.dry_run)
    if args.watch:
        setup_logging(args.data_dir, "gc")
        signal.signal(signal.SIGINT, _handle_signal)
        signal.signal(signal.SIGTERM, _handle_signal)
        collector.run_forever(args.interval, should_stop=lambda: _shutdown_requested)
        return 0

    reports = collector.run_once([args.study] if args.study else None)
    console.print(render_gc_report(reports))
    if args.verbose:
        for r in reports:
            for path in r.deleted:
                console.print(f"  [red]-[/] {path}")
    return 1 if any(r.errors for r in reports) else 0


def _cmd_replay(args: argparse.Namespace) -> int:
    client: ServiceClient
    if args.local:
        client = LocalServiceClient(PBTService(args.data_dir))
    else:
        client = PBTClient(args.service_url)
    problem = ToyProblemSpec.model_validate_json(args.problem.read_text())
    try:
        status = replay(
            client, args.study, args.targets, args.out_study, problem, args.data_dir,
            workers=args.workers, reseed=args.reseed,
        )
    except (InvalidTargetError, IncompleteLineageError) as exc:
        console.print(f"[bold red]Cannot replay:[/] {exc}")
        return 2

    trials = client.list_trials(args.out_study).trials
    table = Table(title=f"Replay {args.study} -> {args.out_study}", show_lines=True)
    table.add_column("Source", justify="right", style="bold cyan")
    table.add_column("Replayed", justify="right")
    table.add_column("Gen", justify="right")
    table.add_column("Final objective", justify="right")
    for t in sorted(trials, key=lambda t: t.trial_id):
        objective = t.last_objectives
        table.add_row(
            str(t.source_trial_id),
            str(t.trial_id),
            str(t.generation),
            ", ".join(f"{v:.6g}" for v in objective if v is not None) if objective else "-",
        )
    console.print(table)
    console.print(f"Study complete: {status.study_complete}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="PBT lifecycle tools")
    parser.add_argument("--data-dir", default=DATA_DIR, type=Path, help="Data root")
    sub = parser.add_subparsers(dest="command", required=True)

    gc = sub.add_parser("gc", help="Delete evaluated checkpoints")
    gc.add_argument("--study", default=None, help="Only this study (default: all)")
    gc.add_argument("--keep-final", action="store_true", help="Keep every trial's final checkpoint")
    gc.add_argument("--dry-run", action="store_true", help="Report without deleting")
    gc.add_argument("--watch", action="store_true", help="Run periodically until signalled")
    gc.add_argument("--interval", type=float, default=GC_INTERVAL, help="Seconds between scans")
    gc.add_argument("-v", "--verbose", action="store_true", help="List deleted paths")

    rp = sub.add_parser("replay", help="Re-run the lineage of target trials")
    rp.add_argument("--study", required=True, help="Source study id")
    rp.add_argument("--targets", required=True, type=int, nargs="+", help="Target trial ids")
    rp.add_argument("--out-study", required=True, help="Id of the replay study")
    rp.add_argument("--problem", required=True, type=Path, help="ToyProblemSpec JSON file")
    rp.add_argument("--workers", type=int, default=1, help="Local workers to run")
    rp.add_argument("--reseed", action="store_true", help="Draw fresh trainer noise")
    rp.add_argument("--service-url", default=SERVICE_URL, help="PBT service address")
    rp.add_argument("--local", action="store_true", help="Use an in-process service on --data-dir")

    args = parser.parse_args(argv)
    if args.command == "gc":
        return _cmd_gc(args)
    return _cmd_replay(args)


if __name__ == "__main__":
    sys.exit(main())
