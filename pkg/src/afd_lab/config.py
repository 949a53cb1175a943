"""配置管理模块 - 运行配置与校验配置的加载和验证

这个模块的作用:
1. 定义运行配置(RunConfig)与校验套件配置(VerifyConfig)的数据结构
2. 从 TOML 文件加载配置,命令行参数可以显式覆盖少数字段
3. 提供默认值、类型检查、取值范围检查和字段间矛盾检查

配置加载机制(新手必读):
- 配置来源(按优先级从低到高):
  1. 代码中的默认值(各 Section 类中的 default)
  2. TOML 文件中的对应段: [run] [teacher] [student] [discriminator] [afd] [optim] [pretrain] [eval]
  3. 命令行参数 --seed / --steps / --arm / --out
- 不读取环境变量:消融实验之间的差异必须全部写在配置文件里
- schema_version 必填,且必须等于 SCHEMA_VERSION
- 未知键直接拒绝(extra="forbid"),防止拼写错误悄悄变成默认值

校验失败时抛出 ConfigurationError,消息逐字段列出:
    student.hidden: Input should be greater than or equal to 1
    run: arm=sft 是离策略基线,不能同时设置 on_policy=true

使用方式:
```python
from afd_lab.config import load_run_config

cfg = load_run_config(Path("configs/desk_oscillator.toml"), overrides={"seed": 7})
geometry = cfg.field_geometry()
```

关键概念:
- Pydantic: 数据验证库,提供类型检查和数据转换
- Field: 字段定义,设置默认值与取值范围(ge/gt/le/lt)
- model_validator: 整个模型校验完之后再检查字段之间的矛盾
"""

from __future__ import annotations

import tomllib
from collections.abc import Mapping
from enum import StrEnum
from pathlib import Path
from typing import Any, Literal

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .afd.objective import AFDConfig
from .discriminator.losses import DiscLoss
from .discriminator.model import DiscGeometry
from .errors import ConfigurationError
from .student.field import FieldGeometry

# 配置文件格式版本,结构有不兼容变化时递增
SCHEMA_VERSION = 1


class Arm(StrEnum):
    """训练臂: AFD 本身或某个对照组。"""

    AFD = "afd"
    BASE = "base"
    SFT = "sft"
    GAN = "gan"
    DMD_SCAFFOLD = "dmd_scaffold"


class TeacherKind(StrEnum):
    PHYSICS = "physics"
    SHIFTED_PHYSICS = "shifted_physics"
    MIXTURE = "mixture"
    HIDDEN_FLOW = "hidden_flow"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(_Section):
    """[run] 段: 随机种子、步数、训练臂、输出目录与节奏。"""

    seed: int = Field(default=0, ge=0)
    steps: int = Field(default=2000, ge=0)
    arm: Arm = Arm.AFD

    # 每步的 prompt 数(= 每步教师查询数)
    batch_size: int = Field(default=16, ge=2)

    out_dir: str = "runs/desk"
    checkpoint_every: int = Field(default=500, ge=0)
    eval_every: int = Field(default=100, ge=0)
    log_every: int = Field(default=50, ge=1)

    # live: 用当前 θ 采集数据; ema: 用 θ̄ 采集数据
    rollout_policy: Literal["live", "ema"] = "live"

    # 仅用于显式声明;与 sft 同时出现视为矛盾
    on_policy: bool | None = None

    # 预训练基座学生检查点;缺省时从随机初始化开始
    base_checkpoint: str | None = None


class TeacherSection(_Section):
    """[teacher] 段: 教师族与其参数。"""

    kind: TeacherKind = TeacherKind.PHYSICS
    pool_size: int = Field(default=256, ge=1)
    seed: int = Field(default=0, ge=0)

    # 物理教师
    omega_range: tuple[float, float] = (1.0, 3.0)
    zeta: float = Field(default=0.1, ge=0.0)
    dt: float = Field(default=0.25, gt=0.0)
    sigma_obs: float = Field(default=0.05, gt=0.0)
    init_radius: float = 1.0
    init_std: float = Field(default=0.1, gt=0.0)

    # 偏移域教师
    warp: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.3), (0.0, 1.2))
    offset: tuple[float, float] = (0.5, -0.25)
    noise_scale: float = Field(default=2.0, gt=0.0)

    # 混合教师
    mixture_spread: float = Field(default=1.5, gt=0.0)
    mixture_std: float = Field(default=0.3, gt=0.0)
    mixture_weight: float = Field(default=0.5, gt=0.0, lt=1.0)

    # 隐藏流教师
    checkpoint: str | None = None
    hidden: int = Field(default=96, ge=1)
    layers: int = Field(default=2, ge=1)
    teacher_steps: int = Field(default=64, ge=1)
    train_steps: int = Field(default=2000, ge=1)


class StudentSection(_Section):
    """[student] 段: 学生几何与采样步数。"""

    n_blocks: int = Field(default=8, ge=1)
    dim: int = Field(default=2, ge=1)
    n_prompts: int = Field(default=8, ge=1)
    hidden: int = Field(default=128, ge=1)
    layers: int = Field(default=3, ge=1)
    t_embed: int = Field(default=16, ge=2)
    enc_width: int = Field(default=16, ge=1)
    prompt_width: int = Field(default=8, ge=1)
    activation: Literal["silu", "tanh"] = "silu"

    # M_S: 学生少步采样器的 Euler 步数
    steps: int = Field(default=4, ge=1)
    schedule: str = "rectified_flow"

    @field_validator("t_embed")
    @classmethod
    def _even(cls, v: int) -> int:
        if v % 2:
            raise ValueError("t_embed 必须是偶数")
        return v


class DiscriminatorSection(_Section):
    """[discriminator] 段: warmup_steps > 0 时在第 0 步之前用 warmup_lr 预热判别器。"""

    loss: DiscLoss = DiscLoss.BT
    enc_width: int = Field(default=16, ge=1)
    prompt_width: int = Field(default=8, ge=1)
    hidden: int = Field(default=128, ge=1)
    layers: int = Field(default=2, ge=1)
    zero_init: bool = False
    warmup_steps: int = Field(default=0, ge=0)
    warmup_lr: float = Field(default=1e-3, gt=0.0)


class AFDSection(_Section):
    """[afd] 段: 默认值对应训练超参表(β=0.1, λ_prior=1e-4, clip 5.0, EMA 0.99)。"""

    beta: float = Field(default=0.1, gt=0.0, le=1.0)
    lambda_prior: float = Field(default=1e-4, ge=0.0)
    clip_max: float = Field(default=5.0, gt=0.0)
    ema_decay: float = Field(default=0.99, ge=0.0, lt=1.0)
    normalizer_decay: float = Field(default=0.99, ge=0.0, lt=1.0)
    normalizer_warmup: int = Field(default=10, ge=0)


class OptimSection(_Section):
    lr_student: float = Field(default=1e-5, ge=0.0)
    lr_disc: float = Field(default=1e-5, ge=0.0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    max_grad_norm: float = Field(default=1.0, gt=0.0)


class PretrainSection(_Section):
    """[pretrain] 段: 在错配振子上预训练"基座"学生。"""

    source_frequency_scale: float = Field(default=0.6, gt=0.0)
    steps: int = Field(default=3000, ge=1)
    lr: float = Field(default=1e-3, ge=0.0)
    batch_size: int = Field(default=64, ge=1)


class EvalSection(_Section):
    samples: int = Field(default=256, ge=2)
    projections: int = Field(default=64, ge=1)


class RunConfig(_Section):
    schema_version: int
    run: RunSection = Field(default_factory=RunSection)
    teacher: TeacherSection = Field(default_factory=TeacherSection)
    student: StudentSection = Field(default_factory=StudentSection)
    discriminator: DiscriminatorSection = Field(default_factory=DiscriminatorSection)
    afd: AFDSection = Field(default_factory=AFDSection)
    optim: OptimSection = Field(default_factory=OptimSection)
    pretrain: PretrainSection = Field(default_factory=PretrainSection)
    eval: EvalSection = Field(default_factory=EvalSection)

    @field_validator("schema_version")
    @classmethod
    def _schema(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"不支持的 schema_version={v}(当前版本 {SCHEMA_VERSION})")
        return v

    @model_validator(mode="after")
    def _contradictions(self) -> RunConfig:
        if self.run.arm is Arm.SFT and self.run.on_policy:
            raise ValueError("run: arm=sft 是离策略基线,不能同时设置 on_policy=true")
        if self.run.on_policy is False and self.run.arm is not Arm.SFT:
            raise ValueError(f"run: arm={self.run.arm} 必须在策略采集,不能设置 on_policy=false")
        if self.teacher.kind in (TeacherKind.PHYSICS, TeacherKind.SHIFTED_PHYSICS) and self.student.dim != 2:
            raise ValueError(f"student.dim: 物理教师的块是二维状态,收到 dim={self.student.dim}")
        return self

    # ---------- 转换为各模块使用的轻量配置 ----------

    def field_geometry(self) -> FieldGeometry:
        s = self.student
        return FieldGeometry(
            n_blocks=s.n_blocks,
            dim=s.dim,
            n_prompts=s.n_prompts,
            hidden=s.hidden,
            layers=s.layers,
            t_embed=s.t_embed,
            enc_width=s.enc_width,
            prompt_width=s.prompt_width,
            activation=s.activation,
        )

    def disc_geometry(self) -> DiscGeometry:
        d, s = self.discriminator, self.student
        return DiscGeometry(
            n_blocks=s.n_blocks,
            dim=s.dim,
            n_prompts=s.n_prompts,
            enc_width=d.enc_width,
            prompt_width=d.prompt_width,
            hidden=d.hidden,
            layers=d.layers,
            activation=s.activation,
        )

    def afd_config(self) -> AFDConfig:
        a = self.afd
        return AFDConfig(beta=a.beta, lambda_prior=a.lambda_prior, clip_max=a.clip_max, ema_decay=a.ema_decay)


class VerifyConfig(_Section):
    """校验套件配置: 每项检查的容差与训练预算。"""

    schema_version: int = SCHEMA_VERSION
    seed: int = Field(default=0, ge=0)

    ratio_tol: float = Field(default=0.1, gt=0.0)
    identical_tol: float = Field(default=0.05, gt=0.0)
    mixture_tol: float = Field(default=0.15, gt=0.0)
    ratio_steps: int = Field(default=3000, ge=1)
    ratio_batch: int = Field(default=1024, ge=2)

    tilted_tv: float = Field(default=0.05, gt=0.0)
    tilted_steps: int = Field(default=3000, ge=1)
    tilted_batch: int = Field(default=512, ge=2)

    velocity_tol: float = Field(default=0.05, gt=0.0)
    velocity_steps: int = Field(default=3000, ge=1)

    reverse_kl_tv: float = Field(default=1e-3, gt=0.0)
    gradcheck_tol: float = Field(default=1e-4, gt=0.0)
    algebra_tol: float = Field(default=1e-12, gt=0.0)

    @field_validator("schema_version")
    @classmethod
    def _schema(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"不支持的 schema_version={v}(当前版本 {SCHEMA_VERSION})")
        return v


def format_validation_error(exc: ValidationError) -> str:
    """把 pydantic 的错误列表整理成 `section.field: message` 逐行格式。"""

    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)


def _read_toml(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise ConfigurationError(f"配置文件不存在: {path}")
    try:
        return tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: TOML 解析失败: {exc}") from exc


# 命令行可以覆盖的 [run] 字段
OVERRIDABLE = ("seed", "steps", "arm", "out_dir")


def parse_run_config(data: Mapping[str, Any], overrides: Mapping[str, Any] | None = None) -> RunConfig:
    raw = {k: dict(v) if isinstance(v, Mapping) else v for k, v in data.items()}
    for key, value in (overrides or {}).items():
        if key not in OVERRIDABLE:
            raise ConfigurationError(f"不支持覆盖字段: {key}")
        if value is not None:
            raw.setdefault("run", {})[key] = value
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(format_validation_error(exc)) from exc


def load_run_config(path: Path, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    cfg = parse_run_config(_read_toml(path), overrides)
    logger.info(
        "运行配置加载完成: arm={} teacher={} geometry=K{}xd{} prompts={} seed={} config_file={}",
        cfg.run.arm,
        cfg.teacher.kind,
        cfg.student.n_blocks,
        cfg.student.dim,
        cfg.student.n_prompts,
        cfg.run.seed,
        path,
    )
    return cfg


def load_verify_config(path: Path | None = None) -> VerifyConfig:
    data: dict[str, Any] = {} if path is None else _read_toml(path)
    try:
        cfg = VerifyConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(format_validation_error(exc)) from exc
    logger.debug("校验配置加载完成: seed={} config_file={}", cfg.seed, path or "默认值")
    return cfg
