"""Worker runner: entry point for one training worker.

Usage:
    python -m backend.worker --study demo --problem problem.json
    python -m backend.worker --study demo --problem problem.json --worker-id w3 --max-trials 10
    python -m backend.worker --study demo --problem problem.json --create-study study.json
"""

from __future__ import annotations

import argparse
import logging
import signal
import sys
from pathlib import Path

from backend.api.errors import PBTServiceError
from backend.config import DATA_DIR, SERVICE_URL
from backend.log_setup import setup_logging
from backend.models.study import StudyConfig
from backend.pbt_client import PBTClient
from backend.worker.problems import ToyProblemSpec
from backend.worker.trainer import Worker

__version__ = "0.1.0"

_shutdown_requested = False


def _handle_signal(signum: int, _frame: object) -> None:
    global _shutdown_requested
    sig_name = signal.Signals(signum).name
    logging.getLogger("pbt.worker").info("Received %s, finishing current trial then exiting", sig_name)
    _shutdown_requested = True


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="PBT toy-problem worker")
    parser.add_argument("--service-url", default=SERVICE_URL, help="PBT service address")
    parser.add_argument("--study", required=True, help="Study id to work on")
    parser.add_argument("--problem", required=True, type=Path, help="ToyProblemSpec JSON file")
    parser.add_argument("--worker-id", default="worker-0", help="Name reported to the service")
    parser.add_argument("--data-dir", default=DATA_DIR, type=Path, help="Checkpoint root")
    parser.add_argument("--max-trials", type=int, default=None, help="Exit after N trials")
    parser.add_argument("--poll-early-stops", action="store_true", help="Honor early-stop decisions")
    parser.add_argument(
        "--create-study", type=Path, default=None,
        help="StudyConfig JSON to create (idempotent) before working",
    )
    args = parser.parse_args(argv)

    setup_logging(args.data_dir, f"worker-{args.worker_id}", stream=sys.stdout)
    logger = logging.getLogger("pbt.worker")

    signal.signal(signal.SIGINT, _handle_signal)
    signal.signal(signal.SIGTERM, _handle_signal)

    problem = ToyProblemSpec.model_validate_json(args.problem.read_text())
    client = PBTClient(args.service_url)
    if args.create_study is not None:
        config = StudyConfig.model_validate_json(args.create_study.read_text())
        if config.study_id != args.study:
            parser.error(f"--create-study defines {config.study_id!r}, not {args.study!r}")
        try:
            client.create_study(config)
        except PBTServiceError as exc:
            logger.error("Could not create study %s: %s", config.study_id, exc)
            return 1

    worker = Worker(
        client,
        args.study,
        problem,
        args.data_dir,
        worker_id=args.worker_id,
        poll_early_stops=args.poll_early_stops,
    )

    logger.info(
        "Worker %s v%s starting: study=%s problem=%s service=%s",
        args.worker_id, __version__, args.study, problem.kind, args.service_url,
    )
    try:
        summary = worker.run(max_trials=args.max_trials, should_stop=lambda: _shutdown_requested)
    except PBTServiceError as exc:
        # The current trial stays pending; recover_study will stop it.
        logger.error("Aborting: %s", exc)
        return 1

    logger.info(
        "Worker %s stopped cleanly: completed=%d stopped=%d study_complete=%s",
        args.worker_id, summary.completed, summary.stopped, summary.study_complete,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
