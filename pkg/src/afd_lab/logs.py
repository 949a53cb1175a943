"""日志初始化（loguru）。

其他模块统一 `from loguru import logger`，这里只负责安装 sink：
- stderr：按 level 输出
- run.log：训练/扫描运行目录下的完整 DEBUG 日志
"""

from __future__ import annotations

import sys
from typing import TYPE_CHECKING

from loguru import logger

if TYPE_CHECKING:
    from pathlib import Path

_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {name}:{line} - {message}"

_file_sinks: dict[str, int] = {}


def setup_logging(level: str = "INFO", run_dir: Path | None = None) -> None:
    """安装 stderr sink；给定 run_dir 时额外写入 run_dir/run.log。"""

    logger.remove()
    _file_sinks.clear()
    logger.add(sys.stderr, level=level.upper(), format=_FORMAT)
    if run_dir is not None:
        attach_run_log(run_dir)


def attach_run_log(run_dir: Path) -> None:
    """为一个运行目录挂上文件 sink（重复调用幂等）。"""

    key = str(run_dir.resolve())
    if key in _file_sinks:
        return
    run_dir.mkdir(parents=True, exist_ok=True)
    _file_sinks[key] = logger.add(
        run_dir / "run.log",
        level="DEBUG",
        format="{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <7} | {name}:{line} - {message}",
        encoding="utf-8",
    )


def detach_run_log(run_dir: Path) -> None:
    sink_id = _file_sinks.pop(str(run_dir.resolve()), None)
    if sink_id is not None:
        logger.remove(sink_id)
