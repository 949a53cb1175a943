"""测试公共夹具：小尺寸运行配置与教师。"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import pytest

from afd_lab.config import RunConfig, parse_run_config

TINY_RUN: dict[str, Any] = {
    "schema_version": 1,
    "run": {
        "seed": 3,
        "steps": 4,
        "arm": "afd",
        "batch_size": 4,
        "checkpoint_every": 2,
        "eval_every": 2,
        "log_every": 1,
    },
    "teacher": {"kind": "physics", "pool_size": 16},
    "student": {
        "n_blocks": 3,
        "dim": 2,
        "n_prompts": 2,
        "hidden": 8,
        "layers": 1,
        "t_embed": 4,
        "enc_width": 4,
        "prompt_width": 2,
        "steps": 2,
    },
    "discriminator": {"enc_width": 4, "prompt_width": 2, "hidden": 8, "layers": 1},
    "optim": {"lr_student": 1e-3, "lr_disc": 1e-3},
    "pretrain": {"steps": 5, "batch_size": 8},
    "eval": {"samples": 16, "projections": 4},
}


def tiny_config(out_dir: Path, **run: Any) -> RunConfig:
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in TINY_RUN.items()}
    data["run"].update(out_dir=str(out_dir), **run)
    return parse_run_config(data)


def write_tiny_toml(path: Path, out_dir: Path, **run: Any) -> Path:
    """把小尺寸配置写成 TOML 文件（CLI 测试用）。"""

    cfg = tiny_config(out_dir, **run)
    lines = [f"schema_version = {cfg.schema_version}", ""]
    sections = {
        "run": {k: v for k, v in TINY_RUN["run"].items()} | {"out_dir": str(out_dir), **run},
        "teacher": TINY_RUN["teacher"],
        "student": TINY_RUN["student"],
        "discriminator": TINY_RUN["discriminator"],
        "optim": TINY_RUN["optim"],
        "pretrain": TINY_RUN["pretrain"],
        "eval": TINY_RUN["eval"],
    }
    for name, body in sections.items():
        lines.append(f"[{name}]")
        for key, value in body.items():
            if isinstance(value, bool):
                lines.append(f"{key} = {'true' if value else 'false'}")
            elif isinstance(value, str):
                lines.append(f'{key} = "{value}"')
            else:
                lines.append(f"{key} = {value!r}")
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


@pytest.fixture
def tiny_cfg(tmp_path: Path) -> RunConfig:
    return tiny_config(tmp_path / "run")
