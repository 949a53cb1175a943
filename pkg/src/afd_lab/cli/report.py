"""对比报告：arm × 指标表格（Markdown + CSV）与奖励 / 损失 / 距离曲线（SVG）。"""

from __future__ import annotations

import csv
import json
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

from loguru import logger

from ..errors import InputError
from ..trainer.metrics import read_csv
from .svg import Series, line_plot, series_from_columns

TABLE_COLUMNS = (
    "run",
    "arm",
    "seed",
    "steps",
    "sliced_wasserstein",
    "physics_residual",
    "terminal_paired_w",
    "teacher_queries",
)


@dataclass(frozen=True, slots=True)
class RunRow:
    run: str
    arm: str
    seed: int
    steps: int
    sliced_wasserstein: float | None
    physics_residual: float | None
    terminal_paired_w: float
    teacher_queries: int


def run_label(run_dir: Path) -> str:
    """多种子运行目录名都是 seed=<s>，带上上一级的分组名。"""

    if run_dir.name.startswith("seed=") and run_dir.parent.name:
        return f"{run_dir.parent.name}/{run_dir.name}"
    return run_dir.name


def load_run(run_dir: Path) -> RunRow:
    path = run_dir / "summary.json"
    if not path.exists():
        raise InputError(f"运行目录缺少 summary.json: {run_dir}")
    data = json.loads(path.read_text(encoding="utf-8"))
    final = data.get("final") or {}
    return RunRow(
        run=run_label(run_dir),
        arm=data["arm"],
        seed=int(data.get("seed", 0)),
        steps=int(data["steps"]),
        sliced_wasserstein=final.get("sliced_wasserstein"),
        physics_residual=final.get("physics_residual"),
        terminal_paired_w=float(data["terminal_paired_w"]),
        teacher_queries=int(data["teacher_queries"]),
    )


def _cell(v: object) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def markdown_table(rows: Sequence[RunRow]) -> str:
    lines = ["| " + " | ".join(TABLE_COLUMNS) + " |", "|" + "---|" * len(TABLE_COLUMNS)]
    for r in rows:
        d = asdict(r)
        lines.append("| " + " | ".join(_cell(d[c]) for c in TABLE_COLUMNS) + " |")
    return "\n".join(lines) + "\n"


def write_table_csv(rows: Sequence[RunRow], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: "" if v is None else v for k, v in asdict(r).items()})


def curves(run_dirs: Sequence[Path], file: str, y: str, x: str = "step") -> list[Series]:
    return [series_from_columns(read_csv(d / file), x, y, run_label(d)) for d in run_dirs]


def write_report(run_dirs: Sequence[Path], out_dir: Path) -> list[Path]:
    """返回写出的文件列表。"""

    if not run_dirs:
        raise InputError("report: 至少需要一个运行目录")
    rows = [load_run(d) for d in run_dirs]
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "table.md", out_dir / "table.csv"]
    written[0].write_text(markdown_table(rows), encoding="utf-8")
    write_table_csv(rows, written[1])

    plots = {
        "reward.svg": ("metrics.csv", "paired_w", "paired w (student vs teacher under D)"),
        "student_loss.svg": ("metrics.csv", "student_loss", "student loss"),
        "disc_loss.svg": ("metrics.csv", "disc_loss", "discriminator loss"),
        "sliced_wasserstein.svg": ("eval.csv", "sliced_wasserstein", "sliced Wasserstein to teacher"),
    }
    for name, (file, column, ylabel) in plots.items():
        series = [s for s in curves(run_dirs, file, column) if len(s.x)]
        if not series:
            continue
        path = out_dir / name
        path.write_text(line_plot(series, title=ylabel, xlabel="step", ylabel=column), encoding="utf-8")
        written.append(path)
    logger.info("报告已写入: {} ({} 个运行)", out_dir, len(rows))
    return written
