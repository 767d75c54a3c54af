"""Entry point: python -m backend.api.run

Starts the PBT service on the configured address.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

import uvicorn

from backend.api.server import create_app
from backend.config import API_HOST, API_PORT, DATA_DIR, LOG_LEVEL


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="PBT service")
    parser.add_argument("--host", default=API_HOST, help="Listen address")
    parser.add_argument("--port", type=int, default=API_PORT, help="Listen port")
    parser.add_argument("--data-dir", default=DATA_DIR, help="Study logs and checkpoints root")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="debug, info, warning, error")
    args = parser.parse_args(argv)

    log_level = args.log_level.lower()
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format="%(asctime)s  %(name)-18s  %(levelname)-7s  %(message)s",
        datefmt="%H:%M:%S",
    )
    logger = logging.getLogger("pbt.api")

    data_dir = Path(args.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    logger.info("Starting PBT service on %s:%d (data: %s)", args.host, args.port, data_dir)
    logger.info("Docs: http://%s:%d/docs", args.host, args.port)

    uvicorn.run(
        create_app(data_dir),
        host=args.host,
        port=args.port,
        log_level=log_level,
    )


if __name__ == "__main__":
    main()
