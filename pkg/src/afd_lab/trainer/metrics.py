"""运行目录里的 CSV 日志：metrics.csv（每步一行）与 eval.csv（按评估节奏）。

浮点数用 repr 写出，两次相同配置 + 种子的运行逐字节一致。
不适用的列（例如 sft 臂的 nft_loss）写空串。
"""

from __future__ import annotations

import csv
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

from ..errors import InputError

METRIC_COLUMNS = (
    "step",
    "arm",
    "disc_loss",
    "student_loss",
    "nft_loss",
    "prior_loss",
    "mean_reward",
    "mean_w",
    "paired_w",
    "grad_norm_student",
    "grad_norm_disc",
    "teacher_queries",
)

EVAL_COLUMNS = ("step", "arm", "policy", "sliced_wasserstein", "physics_residual", "mean_w", "paired_w")


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


class CsvLog:
    """只追加的 CSV；resume_step 给定时先丢掉 step >= resume_step 的旧行。"""

    def __init__(self, path: Path, columns: Sequence[str], *, resume_step: int | None = None) -> None:
        self.path = path
        self.columns = tuple(columns)
        kept: list[dict[str, str]] = []
        if resume_step is not None and path.exists():
            kept = [r for r in read_csv(path) if int(r["step"]) < resume_step]
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.columns, lineterminator="\n")
            writer.writeheader()
            writer.writerows(kept)

    def append(self, row: Mapping[str, Any]) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise InputError(f"{self.path.name}: 缺少列 {sorted(missing)}")
        with self.path.open("a", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([_format(row[c]) for c in self.columns])


def read_csv(path: Path) -> list[dict[str, str]]:
    if not path.exists():
        raise InputError(f"CSV 不存在: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def column(rows: Sequence[Mapping[str, str]], name: str) -> list[float]:
    """取出一列并转成 float（空串跳过）。"""

    return [float(r[name]) for r in rows if r.get(name, "") != ""]
