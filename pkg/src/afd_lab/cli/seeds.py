"""多种子汇总：同一配置在若干种子上的运行取中位数。

目录约定
    <out>/<label>/seed=<s>/      每个种子一个完整运行目录
    <out>/<label>/summary.json   中位数汇总（MEDIAN_KEYS 逐项取中位数）
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from ..errors import InputError
from ..trainer.metrics import read_csv
from .report import RunRow, load_run

MEDIAN_KEYS = ("sliced_wasserstein", "physics_residual", "terminal_paired_w")


def seed_label(seed: int) -> str:
    return f"seed={seed}"


def _median(values: Sequence[float | None]) -> float | None:
    kept = [v for v in values if v is not None]
    if not kept:
        return None
    return float(np.median(kept))


def median_summary(run_dirs: Sequence[Path]) -> dict[str, Any]:
    if not run_dirs:
        raise InputError("median_summary: 至少需要一个运行目录")
    rows: list[RunRow] = [load_run(d) for d in run_dirs]
    arms = {r.arm for r in rows}
    if len(arms) != 1:
        raise InputError(f"中位数汇总的运行 arm 不一致: {sorted(arms)}")
    return {
        "arm": rows[0].arm,
        "seeds": [r.seed for r in rows],
        "runs": [str(d) for d in run_dirs],
        "median": {key: _median([getattr(r, key) for r in rows]) for key in MEDIAN_KEYS},
    }


def write_median_summary(run_dirs: Sequence[Path], out_dir: Path) -> dict[str, Any]:
    summary = median_summary(run_dirs)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("中位数汇总: {} seeds={} {}", out_dir, summary["seeds"], summary["median"])
    return summary


def load_median_summary(out_dir: Path) -> dict[str, Any]:
    path = out_dir / "summary.json"
    if not path.exists():
        raise InputError(f"缺少中位数汇总: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if "median" not in data:
        raise InputError(f"{path} 不是中位数汇总")
    return data


def median_trajectory(run_dirs: Sequence[Path], column: str, file: str = "metrics.csv") -> tuple[list[int], list[float]]:
    """逐 step 取各种子的中位数；只保留所有种子都有值的 step。"""

    if not run_dirs:
        raise InputError("median_trajectory: 至少需要一个运行目录")
    tables = [
        {int(r["step"]): float(r[column]) for r in read_csv(d / file) if r.get(column, "") != ""} for d in run_dirs
    ]
    steps = sorted(set(tables[0]).intersection(*tables[1:]))
    return steps, [float(np.median([t[s] for t in tables])) for s in steps]
