from __future__ import annotations

import json

import numpy as np
import pytest

from backend.store.checkpoints import CheckpointStore, checkpoint_exists
from backend.store.study_log import StudyLog, UnknownStudyError, fold_records
from tests.conftest import make_config


def _trial(trial_id: int, **extra):
    return {"trial_id": trial_id, "study_id": "s1", "hparams": {"lr": 0.1}, **extra}


def _measurement(step: int, value: float) -> dict:
    return {"step": step, "objectives": [value], "checkpoint_path": f"ck/{step}"}


# ── Study log ─────────────────────────────────────────────────────────

def test_log_folds_transitions(tmp_path):
    log = StudyLog(tmp_path, fsync=False)
    log.create(make_config())
    log.append("s1", "trial_suggested", trial=_trial(1), rng_cursor=1, tournament=None)
    log.append("s1", "measurement_reported", trial_id=1, measurement=_measurement(200, 0.5))
    log.append("s1", "trial_completed", trial_id=1, final_checkpoint_path="ck/200",
               completion_index=0)

    record = log.load("s1")
    trial = record.trial(1)
    assert trial.status == "completed"
    assert trial.final_checkpoint_path == "ck/200"
    assert [m.step for m in trial.measurements] == [200]
    assert record.completion_counter == 1
    assert record.rng_cursor == 1
    assert record.last_seq == 4


def test_second_reader_sees_same_snapshot(tmp_path):
    writer = StudyLog(tmp_path, fsync=False)
    writer.create(make_config())
    writer.append("s1", "trial_suggested", trial=_trial(1), rng_cursor=1, tournament=None)

    reader = StudyLog(tmp_path, fsync=False)
    assert reader.load("s1") == writer.load("s1")

    writer.append("s1", "measurement_reported", trial_id=1, measurement=_measurement(200, 0.5))
    assert len(reader.load("s1").trial(1).measurements) == 1
    assert fold_records(reader.read_records("s1")) == reader.load("s1")


def test_stopped_child_returns_reproduction(tmp_path):
    log = StudyLog(tmp_path, fsync=False)
    log.create(make_config())
    log.append("s1", "trial_suggested", trial=_trial(1), rng_cursor=1)
    log.append("s1", "measurement_reported", trial_id=1, measurement=_measurement(200, 0.5))
    log.append("s1", "trial_completed", trial_id=1, final_checkpoint_path="ck", completion_index=0)
    log.append("s1", "trial_suggested", rng_cursor=2,
               trial=_trial(2, generation=1, parent_trial_id=1, initiator_parent_trial_id=1))
    assert log.load("s1").trial(1).initiated_reproduction

    log.append("s1", "trial_stopped", trial_id=2, completion_index=1, reason="requested")
    record = log.load("s1")
    assert not record.trial(1).initiated_reproduction
    assert record.trial(2).status == "stopped"


def test_torn_tail_is_ignored_and_repaired(tmp_path):
    log = StudyLog(tmp_path, fsync=False)
    log.create(make_config())
    with open(log.path("s1"), "ab") as f:
        f.write(b'{"seq": 2, "kind": "trial_sugg')

    fresh = StudyLog(tmp_path, fsync=False)
    assert fresh.load("s1").trials == []

    fresh.append("s1", "trial_suggested", trial=_trial(1), rng_cursor=1)
    reread = StudyLog(tmp_path, fsync=False).load("s1")
    assert [t.trial_id for t in reread.trials] == [1]


def test_unknown_study_and_duplicate_create(tmp_path):
    log = StudyLog(tmp_path, fsync=False)
    with pytest.raises(UnknownStudyError):
        log.load("missing")
    log.create(make_config())
    with pytest.raises(FileExistsError):
        log.create(make_config())
    assert log.study_ids() == ["s1"]


def test_unknown_record_kind_rejected(tmp_path):
    log = StudyLog(tmp_path, fsync=False)
    log.create(make_config())
    with pytest.raises(ValueError):
        log.append("s1", "trial_exploded", trial_id=1)


# ── Checkpoints ───────────────────────────────────────────────────────

def test_checkpoint_save_and_load(tmp_path):
    store = CheckpointStore(tmp_path)
    theta = np.arange(4, dtype=np.float64)
    path = store.save("s1", 3, 1400, {"theta": theta})

    assert path.endswith("ckpt-1400")
    assert checkpoint_exists(path)
    manifest = json.loads((tmp_path / "checkpoints/s1/3/ckpt-1400/manifest.json").read_text())
    assert manifest["variables"]["theta"] == {"file": "theta.npy", "shape": [4], "dtype": "float64"}

    loaded = store.load(path)
    assert loaded.step == 1400 and loaded.trial_id == 3
    np.testing.assert_array_equal(loaded.variables["theta"], theta)
    assert loaded.shapes == {"theta": (4,)}


def test_checkpoint_list_and_delete(tmp_path):
    store = CheckpointStore(tmp_path)
    paths = [store.save("s1", 1, step, {"theta": np.zeros(2)}) for step in (200, 400)]
    assert store.list_checkpoints("s1") == sorted(paths)
    assert store.list_checkpoints("other") == []

    assert store.delete(paths[0]) > 0
    assert not checkpoint_exists(paths[0])
    assert store.delete(paths[0]) == 0

    store.delete(paths[1])
    assert not (tmp_path / "checkpoints/s1/1").exists()


def test_checkpoint_exists_handles_empty_paths(tmp_path):
    assert not checkpoint_exists(None)
    assert not checkpoint_exists("")
    assert not checkpoint_exists(tmp_path / "nowhere")
