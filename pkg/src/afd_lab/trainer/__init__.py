"""训练编排：状态、四阶段训练步、检查点、运行目录与基座预训练。"""

from .checkpoint import CHECKPOINT_VERSION, load_checkpoint, read_meta, save_checkpoint
from .loop import PHASES, RunSummary, StepRecord, Trainer, run_training
from .metrics import EVAL_COLUMNS, METRIC_COLUMNS, CsvLog, read_csv
from .pretrain import PretrainResult, pretrain_base, save_base, source_teacher
from .state import TrainState, ema_distance, ema_update, initial_state

__all__ = [
    "CHECKPOINT_VERSION",
    "EVAL_COLUMNS",
    "METRIC_COLUMNS",
    "PHASES",
    "CsvLog",
    "PretrainResult",
    "RunSummary",
    "StepRecord",
    "TrainState",
    "Trainer",
    "ema_distance",
    "ema_update",
    "initial_state",
    "load_checkpoint",
    "pretrain_base",
    "read_csv",
    "run_training",
    "save_base",
    "save_checkpoint",
    "source_teacher",
]
