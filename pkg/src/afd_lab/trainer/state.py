"""训练状态 TrainState - 一次蒸馏运行的全部可变状态

这个模块的作用:
1. 把 θ、θ̄(EMA)、冻结参考 θ_ref、φ、两套 AdamW 矩估计、步数、RNG、奖励统计收拢到一个对象
2. 按运行配置构造初始状态(可选从预训练基座加载 θ)
3. 提供 EMA 更新与 EMA 距离

状态的生命周期:
- step 0: θ̄ ← θ,θ_ref ← θ(先验项的参考场在整次运行中保持冻结)
- 每个训练步: 训练循环按阶段修改 φ → θ → θ̄,最后 step += 1
- 断点: 检查点模块把这里的每个字段都写入 npz,恢复后逐位一致

随机数:
- 初始化 θ / φ 各用一条 SeedSequence 子流
- 训练循环只使用 rng 这一条流(prompt 抽样、教师池下标、展开噪声、加噪 t 与 ε)
- 评估使用独立派生的流,不推进 rng,因此评估节奏不影响训练轨迹

EMA 的写法:
    θ̄ ← θ̄ + (1 − γ)(θ − θ̄)
与 γθ̄ + (1−γ)θ 数学上相同,但 θ 与 θ̄ 逐位相等时结果逐位不变(学习率为 0 的对照组依赖这一点)。
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from ..autodiff.optim import AdamW
from ..autodiff.params import ParamStore
from ..config import RunConfig
from ..discriminator.model import Discriminator
from ..discriminator.reward_stats import RewardNormalizer
from ..errors import CheckpointError
from ..student.field import VelocityField


@dataclass
class TrainState:
    field: VelocityField
    ema: ParamStore
    ref: ParamStore
    disc: Discriminator
    opt_student: AdamW
    opt_disc: AdamW
    rng: np.random.Generator
    normalizer: RewardNormalizer
    step: int = 0
    teacher_queries: int = 0

    @property
    def ema_field(self) -> VelocityField:
        return self.field.with_params(self.ema)

    @property
    def ref_field(self) -> VelocityField:
        return self.field.with_params(self.ref)


def optimizer_kwargs(cfg: RunConfig) -> dict[str, Any]:
    o = cfg.optim
    return {"betas": o.betas, "eps": o.eps, "weight_decay": o.weight_decay, "max_grad_norm": o.max_grad_norm}


def make_optimizers(cfg: RunConfig) -> tuple[AdamW, AdamW]:
    common = optimizer_kwargs(cfg)
    return AdamW(cfg.optim.lr_student, **common), AdamW(cfg.optim.lr_disc, **common)


def make_normalizer(cfg: RunConfig) -> RewardNormalizer:
    return RewardNormalizer(decay=cfg.afd.normalizer_decay, warmup=cfg.afd.normalizer_warmup)


def initial_state(cfg: RunConfig, base: VelocityField | None = None) -> TrainState:
    """按配置构造 step 0 的状态；base 给定时 θ 从基座拷贝。"""

    field_seq, disc_seq, loop_seq = np.random.SeedSequence(cfg.run.seed).spawn(3)
    geometry = cfg.field_geometry()
    if base is None and cfg.run.base_checkpoint:
        base = VelocityField.load(Path(cfg.run.base_checkpoint), expected=geometry)
        logger.info("已加载基座学生: {}", cfg.run.base_checkpoint)
    if base is None:
        student = VelocityField(geometry, rng=np.random.default_rng(field_seq))
    elif base.geometry != geometry:
        raise CheckpointError(f"基座几何 {base.geometry} 与配置 {geometry} 不一致")
    else:
        student = VelocityField(geometry, base.params.copy(), prefix=base.prefix)
    disc = Discriminator(
        cfg.disc_geometry(), rng=np.random.default_rng(disc_seq), zero_init=cfg.discriminator.zero_init
    )
    opt_student, opt_disc = make_optimizers(cfg)
    return TrainState(
        field=student,
        ema=student.params.copy(),
        ref=student.params.copy(),
        disc=disc,
        opt_student=opt_student,
        opt_disc=opt_disc,
        rng=np.random.default_rng(loop_seq),
        normalizer=make_normalizer(cfg),
    )


def ema_update(ema: ParamStore, params: ParamStore, decay: float) -> None:
    for name, value in params.items():
        current = ema.get(name)
        ema.set(name, current + (1.0 - decay) * (value - current))


def ema_distance(ema: ParamStore, params: ParamStore) -> float:
    return float(np.linalg.norm(ema.flat() - params.flat()))
