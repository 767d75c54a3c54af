"""Verify the PBT service end to end. Starts a real uvicorn server on a
scratch data directory, runs a small study with two workers over HTTP and
checks the error surface.

Usage: python -m scripts.verify_server
"""

from __future__ import annotations

import json
import tempfile
import threading
import time
from pathlib import Path
from typing import Any

import httpx
import uvicorn

from backend.api.errors import InvalidStateError, MeasurementOrderError, StudyNotFoundError
from backend.api.server import create_app
from backend.models.study import Measurement, ParameterSpec, StudyConfig
from backend.pbt_client import PBTClient
from backend.worker.problems import ToyProblemSpec
from backend.worker.trainer import Worker

PORT = 18321
BASE = f"http://localhost:{PORT}"

STUDY = StudyConfig(
    study_id="verify",
    specs=[ParameterSpec(name="lr", kind="float", bounds=(1e-3, 1.0), scale="log")],
    population_size=4,
    worker_budget=2,
    steps_per_trial=400,
    max_generations=3,
    seed=7,
)
PROBLEM = ToyProblemSpec(kind="lr_quadratic", dimension=4, eval_every=200)


def _pp(label: str, resp: httpx.Response) -> dict[str, Any]:
    print(f"\n{'='*65}")
    print(f"  {label}")
    print(f"  Status: {resp.status_code}")
    print(f"{'='*65}")
    data = resp.json()
    text = json.dumps(data, indent=2, default=str)
    if len(text) > 2000:
        text = text[:2000] + "\n  ... (truncated)"
    print(text)
    return data


def run_tests(data_dir: Path) -> None:
    c = httpx.Client(base_url=BASE, timeout=30)
    client = PBTClient(BASE)

    # 1) Health
    r = c.get("/api/health")
    data = _pp("GET /api/health", r)
    assert r.status_code == 200
    assert data["status"] == "ok"

    # 2) Create study (twice: idempotent)
    status = client.create_study(STUDY)
    again = client.create_study(STUDY)
    assert status.budget_mode and again.trial_counts == status.trial_counts
    print(f"\n  Study {status.study_id}: budget_mode={status.budget_mode}  [OK]")

    # 3) Two workers run the study to completion
    workers = [
        Worker(PBTClient(BASE), STUDY.study_id, PROBLEM, data_dir, worker_id=f"w{i}",
               sleep=lambda s: time.sleep(min(s, 0.05)))
        for i in range(2)
    ]
    threads = [threading.Thread(target=w.run) for w in workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=120)

    final = client.get_study(STUDY.study_id)
    trials = client.list_trials(STUDY.study_id).trials
    print(f"\n  Trials: {len(trials)}  counts={final.trial_counts}  "
          f"complete={final.study_complete}  [OK]")
    assert final.study_complete
    for trial in trials:
        assert [m.step for m in trial.measurements] == [200, 400]

    # 4) Error cases
    print(f"\n{'='*65}")
    print("  Error handling")
    print(f"{'='*65}")

    r = c.post("/api/get-study", json={"study_id": "missing"})
    assert r.status_code == 404 and r.json()["reason"] == "not_found"
    print(f"  Unknown study:        {r.status_code}  [OK]")

    try:
        client.get_study("missing")
    except StudyNotFoundError:
        print("  Client maps 404:      StudyNotFoundError  [OK]")

    done = trials[0]
    m = Measurement(step=600, objectives=(1.0,), checkpoint_path="x")
    try:
        client.report_measurement(STUDY.study_id, done.trial_id, m)
    except InvalidStateError:
        print("  Report on completed:  InvalidStateError  [OK]")

    bad = STUDY.model_copy(update={"worker_budget": 9})
    r = c.post("/api/create-study", json={"config": bad.model_dump(mode="json")})
    assert r.status_code == 422 and r.json()["reason"] == "invalid_config"
    print(f"  Invalid config:       {r.status_code}  [OK]")

    assert MeasurementOrderError.status_code == 409
    c.close()


def main() -> None:
    print("PBT Service Verification")
    print("=" * 65)

    with tempfile.TemporaryDirectory() as tmp:
        data_dir = Path(tmp)
        app = create_app(data_dir)
        config = uvicorn.Config(app, host="127.0.0.1", port=PORT, log_level="warning")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()

        for _ in range(30):
            try:
                httpx.get(f"{BASE}/api/health", timeout=1)
                break
            except Exception:
                time.sleep(0.2)
        else:
            print("ERROR: Server failed to start")
            return

        print(f"  Server running on port {PORT}, data in {data_dir}")
        try:
            run_tests(data_dir)
        finally:
            server.should_exit = True
            thread.join(timeout=3)

    print(f"\n{'='*65}")
    print("  All checks passed.")
    print(f"{'='*65}")


if __name__ == "__main__":
    main()
