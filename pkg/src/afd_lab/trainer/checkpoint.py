"""训练状态检查点：一个 npz 文件，恢复后与不间断运行逐位一致。

键前缀：
    student/  ema/  ref/  disc/       参数
    opt_student/  opt_disc/           AdamW 矩估计与步数
    __meta__                          JSON：格式版本、步数、RNG 状态、奖励统计、教师查询数、几何、arm
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from ..autodiff.params import ParamStore
from ..config import RunConfig
from ..discriminator.model import DiscGeometry, Discriminator
from ..discriminator.reward_stats import RewardNormalizer
from ..errors import CheckpointError
from ..student.field import FieldGeometry, VelocityField
from .state import TrainState, make_optimizers

CHECKPOINT_FORMAT = "afd-lab/train-state"
CHECKPOINT_VERSION = 1

_STORES = ("student/", "ema/", "ref/", "disc/")


def save_checkpoint(state: TrainState, path: Path, *, arm: str) -> Path:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": state.step,
        "arm": arm,
        "teacher_queries": state.teacher_queries,
        "rng": state.rng.bit_generator.state,
        "normalizer": state.normalizer.to_state(),
        "field_geometry": state.field.geometry.to_header(),
        "field_prefix": state.field.prefix,
        "disc_geometry": state.disc.geometry.to_header(),
        "disc_prefix": state.disc.prefix,
    }
    arrays: dict[str, np.ndarray] = {}
    arrays.update(state.field.params.to_arrays("student/"))
    arrays.update(state.ema.to_arrays("ema/"))
    arrays.update(state.ref.to_arrays("ref/"))
    arrays.update(state.disc.params.to_arrays("disc/"))
    arrays.update(state.opt_student.state_arrays("opt_student/"))
    arrays.update(state.opt_disc.state_arrays("opt_disc/"))

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    tmp.replace(path)
    logger.debug("检查点已写入: {} (step={})", path, state.step)
    return path


def read_meta(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise CheckpointError(f"检查点不存在: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data.files:
            raise CheckpointError(f"缺少元数据: {path}")
        meta = json.loads(str(data["__meta__"]))
    if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"训练检查点版本不匹配: {meta.get('format')} v{meta.get('version')}")
    return meta


def load_checkpoint(path: Path, cfg: RunConfig) -> TrainState:
    """按 cfg 的几何恢复状态；几何不符抛 CheckpointError。

    arm 不要求一致：sft 检查点可以接着跑 afd（持续适配）。
    """

    meta = read_meta(path)
    field_geometry = FieldGeometry.from_header(meta["field_geometry"])
    disc_geometry = DiscGeometry.from_header(meta["disc_geometry"])
    if field_geometry != cfg.field_geometry():
        raise CheckpointError(f"学生几何不匹配: 检查点 {field_geometry}，配置 {cfg.field_geometry()}")
    if disc_geometry != cfg.disc_geometry():
        raise CheckpointError(f"判别器几何不匹配: 检查点 {disc_geometry}，配置 {cfg.disc_geometry()}")

    with np.load(path, allow_pickle=False) as data:
        arrays = {k: np.array(data[k]) for k in data.files if k != "__meta__"}
    stores = {prefix: ParamStore.from_arrays(arrays, prefix) for prefix in _STORES}

    field = VelocityField(field_geometry, stores["student/"], prefix=meta["field_prefix"])
    expected = VelocityField(field_geometry, prefix=field.prefix).params.shapes()
    for prefix in ("student/", "ema/", "ref/"):
        if stores[prefix].shapes() != expected:
            raise CheckpointError(f"{path}: {prefix} 参数布局与学生几何不一致")
    disc = Discriminator(disc_geometry, stores["disc/"], prefix=meta["disc_prefix"])
    if disc.params.shapes() != Discriminator(disc_geometry, prefix=disc.prefix).params.shapes():
        raise CheckpointError(f"{path}: disc/ 参数布局与判别器几何不一致")

    opt_student, opt_disc = make_optimizers(cfg)
    try:
        opt_student.load_state_arrays(arrays, "opt_student/")
        opt_disc.load_state_arrays(arrays, "opt_disc/")
    except KeyError as exc:
        raise CheckpointError(f"{path}: 缺少优化器状态 {exc}") from exc

    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = meta["rng"]
    state = TrainState(
        field=field,
        ema=stores["ema/"],
        ref=stores["ref/"],
        disc=disc,
        opt_student=opt_student,
        opt_disc=opt_disc,
        rng=rng,
        normalizer=RewardNormalizer.from_state(meta["normalizer"]),
        step=int(meta["step"]),
        teacher_queries=int(meta["teacher_queries"]),
    )
    logger.info("已从检查点恢复: {} (step={} arm={})", path, state.step, meta["arm"])
    return state
