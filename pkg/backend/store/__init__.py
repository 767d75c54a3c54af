from backend.store.checkpoints import Checkpoint, CheckpointStore, checkpoint_exists
from backend.store.study_log import StudyLog, StudyRecord, UnknownStudyError, fold_records

__all__ = [
    "Checkpoint",
    "CheckpointStore",
    "StudyLog",
    "StudyRecord",
    "UnknownStudyError",
    "checkpoint_exists",
    "fold_records",
]
