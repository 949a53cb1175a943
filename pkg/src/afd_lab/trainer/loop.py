"""训练循环：每步固定四个阶段 collect → discriminate → student → ema。

warm-up       （可选，只在第 0 步之前）判别器单独预热 warmup_steps 步，学生不动
collect       抽 B 个 prompt，向教师查询 B 个视频，学生在策略展开 B 个视频
discriminate  判别器一步更新；在更新后的判别器上计算基线、优势与权重 w_i，
              以及以同 prompt 教师样本为基线的 paired_w（奖励饱和 / 压制的监控量）
student       按 arm 更新 θ（afd / sft / gan / dmd_scaffold；base 只记录损失）
ema           θ̄ ← θ̄ + (1 − γ)(θ − θ̄)

任何阶段出现非有限数值都会以 TrainingAborted(phase, step) 中止，不跳过。
"""

from __future__ import annotations

import json
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, NoReturn

import numpy as np
from loguru import logger

from ..afd.objective import afd_loss
from ..baselines.arms import GraphRollout, dmd_scaffold_step, gan_step, graph_rollout, sft_step
from ..config import Arm, RunConfig
from ..autodiff.optim import AdamW
from ..discriminator.advantage import advantage, paired_weights, weights_of
from ..discriminator.training import disc_step
from ..errors import InputError, NumericalError, TrainingAborted
from ..eval.metrics import Metric, physics_residual, sliced_wasserstein
from ..flow.path import fm_loss
from ..flow.schedules import get_schedule
from ..logs import attach_run_log, detach_run_log
from ..student.field import VelocityField
from ..student.rollout import noised_rollout_states, rollout
from ..student.video import VideoBatch
from ..teachers.base import TeacherChannel, TeacherHandle, sample_batch
from .checkpoint import load_checkpoint, save_checkpoint
from .metrics import EVAL_COLUMNS, METRIC_COLUMNS, CsvLog, column, read_csv
from .state import TrainState, ema_distance, ema_update, initial_state, optimizer_kwargs

PHASES = ("collect", "discriminate", "student", "ema")


@dataclass(frozen=True, slots=True)
class StepRecord:
    step: int
    arm: str
    disc_loss: float
    student_loss: float
    nft_loss: float | None
    prior_loss: float | None
    mean_reward: float
    mean_w: float
    paired_w: float
    grad_norm_student: float
    grad_norm_disc: float
    teacher_queries: int

    def row(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, slots=True)
class StudentOutcome:
    loss: float
    grad_norm: float
    nft: float | None = None
    prior: float | None = None


@contextmanager
def _phase(name: str, step: int) -> Iterator[None]:
    logger.debug("step={} phase={}", step, name)
    try:
        yield
    except TrainingAborted:
        raise
    except NumericalError as exc:
        raise TrainingAborted(str(exc), phase=name, step=step) from exc


def _finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NumericalError(f"{what} 非有限: {value}", tag=what)
    return value


class Trainer:
    """持有配置、教师通道与训练状态，逐步推进。"""

    def __init__(self, cfg: RunConfig, teacher: TeacherHandle, state: TrainState) -> None:
        self.cfg = cfg
        self.arm = cfg.run.arm
        self.state = state
        self.sched = get_schedule(cfg.student.schedule)
        self.afd_cfg = cfg.afd_config()
        self.teacher = teacher
        self.channel = TeacherChannel(teacher, pool_size=cfg.teacher.pool_size, seed=cfg.run.seed)
        self.channel.queries = state.teacher_queries

    def _collect_field(self) -> VelocityField:
        if self.cfg.run.rollout_policy == "ema":
            return self.state.ema_field
        return self.state.field

    def _collect(
        self, step: int, *, differentiable: bool = True
    ) -> tuple[VideoBatch, VideoBatch, GraphRollout | None]:
        s, cfg = self.state, self.cfg
        B, K, M = cfg.run.batch_size, cfg.student.n_blocks, cfg.student.steps
        ids = s.rng.integers(0, cfg.student.n_prompts, size=B)
        before = self.channel.queries
        teacher_videos = self.channel.query(ids, s.rng)
        graph = None
        if self.arm is Arm.GAN and differentiable:
            # 生成器损失要穿过展开求导，只能用当前 θ 的叶子展开
            graph = graph_rollout(s.field, ids, K, M, s.rng)
            student_videos = graph.videos
        else:
            student_videos = rollout(self._collect_field(), ids, K, M, s.rng)
        if self.channel.queries - before != B:
            raise InputError(f"step={step}: 教师查询数 {self.channel.queries - before} != B={B}")
        return teacher_videos, student_videos, graph

    def warm_up(self) -> float | None:
        """第 0 步之前单独训练判别器 warmup_steps 步（独立的 AdamW，学习率 warmup_lr）。

        学生与 EMA 不动；教师查询计入预算。返回最后一步的判别器损失。
        """

        s, d = self.state, self.cfg.discriminator
        if d.warmup_steps == 0 or s.step != 0:
            return None
        opt = AdamW(d.warmup_lr, **optimizer_kwargs(self.cfg))
        loss = float("nan")
        with _phase("warmup", 0):
            for _ in range(d.warmup_steps):
                teacher_videos, student_videos, _ = self._collect(0, differentiable=False)
                loss = _finite(disc_step(s.disc, teacher_videos, student_videos, opt, d.loss).loss, "disc_loss")
        s.teacher_queries = self.channel.queries
        logger.info("判别器预热完成: steps={} lr={:g} disc_loss={:.5f}", d.warmup_steps, d.warmup_lr, loss)
        return loss

    def train_step(self) -> StepRecord:
        s, cfg = self.state, self.cfg
        step = s.step
        with _phase("collect", step):
            teacher_videos, student_videos, graph = self._collect(step)

        with _phase("discriminate", step):
            d = disc_step(s.disc, teacher_videos, student_videos, s.opt_disc, cfg.discriminator.loss)
            _finite(d.loss, "disc_loss")
            advs = advantage(s.disc, student_videos, clip_max=self.afd_cfg.clip_max, normalizer=s.normalizer)
            w = weights_of(advs)
            paired = paired_weights(s.disc, teacher_videos, student_videos)
            mean_reward = float(np.mean([a.score for a in advs]))
            logger.debug(
                "step={} disc_loss={:.6f} mean_reward={:.4f} mean_w={:.4f} paired_w={:.4f}",
                step,
                d.loss,
                mean_reward,
                w.mean(),
                paired.mean(),
            )

        with _phase("student", step):
            out = self._student_update(teacher_videos, student_videos, w, graph)
            _finite(out.loss, "student_loss")
            logger.debug("step={} student_loss={:.6f} grad_norm={:.4f}", step, out.loss, out.grad_norm)

        with _phase("ema", step):
            ema_update(s.ema, s.field.params, self.afd_cfg.ema_decay)
            logger.debug("step={} ema_distance={:.6g}", step, ema_distance(s.ema, s.field.params))

        s.step += 1
        s.teacher_queries = self.channel.queries
        return StepRecord(
            step=step,
            arm=str(self.arm),
            disc_loss=d.loss,
            student_loss=out.loss,
            nft_loss=out.nft,
            prior_loss=out.prior,
            mean_reward=mean_reward,
            mean_w=float(w.mean()),
            paired_w=float(paired.mean()),
            grad_norm_student=out.grad_norm,
            grad_norm_disc=d.grad_norm,
            teacher_queries=s.teacher_queries,
        )

    def _student_update(
        self,
        teacher_videos: VideoBatch,
        student_videos: VideoBatch,
        w: np.ndarray,
        graph: GraphRollout | None,
    ) -> StudentOutcome:
        s = self.state
        match self.arm:
            case Arm.AFD:
                states = noised_rollout_states(student_videos, self.sched, s.rng)
                leaves = s.field.params.leaves()
                loss = afd_loss(s.field, s.ref_field, states, states.video_weights(w), self.afd_cfg, leaves)
                loss.total.backward()
                norm = s.opt_student.step(s.field.params, s.field.params.grads_of(leaves))
                return StudentOutcome(loss.total.item(), norm, loss.nft.item(), loss.prior.item())
            case Arm.SFT:
                r = sft_step(s.field, teacher_videos, s.opt_student, self.sched, s.rng)
                return StudentOutcome(r.loss, r.grad_norm)
            case Arm.GAN:
                assert graph is not None
                r = gan_step(s.field, s.disc.score_blocks, graph, s.opt_student)
                return StudentOutcome(r.loss, r.grad_norm)
            case Arm.DMD_SCAFFOLD:
                states = noised_rollout_states(student_videos, self.sched, s.rng)
                r = dmd_scaffold_step(s.field, states, states.video_weights(w), s.opt_student)
                return StudentOutcome(r.loss, r.grad_norm)
            case Arm.BASE:
                states = noised_rollout_states(student_videos, self.sched, s.rng)
                return StudentOutcome(fm_loss(s.field, states).item(), 0.0)
        raise AssertionError(f"未处理的 arm: {self.arm}")

    # ---------- 评估 ----------

    def evaluate(self, policy: str = "ema") -> dict[str, Any]:
        """用独立随机流比较学生与教师；不推进训练 rng。指标非有限时抛 NumericalError。"""

        s, cfg = self.state, self.cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.run.seed, 0x6576616C, s.step]))
        n = cfg.eval.samples
        ids = rng.integers(0, cfg.student.n_prompts, size=n)
        field = s.ema_field if policy == "ema" else s.field
        student = rollout(field, ids, cfg.student.n_blocks, cfg.student.steps, rng)
        teacher = sample_batch(self.teacher, ids, rng)
        sw = sliced_wasserstein(student.flat(), teacher.flat(), cfg.eval.projections, rng)
        dynamics = getattr(self.teacher, "dynamics", None)
        residual = physics_residual(student, dynamics) if dynamics is not None else None
        w = weights_of(advantage(s.disc, student, clip_max=self.afd_cfg.clip_max))
        paired = paired_weights(s.disc, teacher, student)
        arm = str(self.arm)
        metrics = [
            Metric("sliced_wasserstein", sw, s.step, arm),
            Metric("mean_w", float(w.mean()), s.step, arm),
            Metric("paired_w", float(paired.mean()), s.step, arm),
        ]
        if residual is not None:
            metrics.append(Metric("physics_residual", residual, s.step, arm))
        row: dict[str, Any] = {"step": s.step, "arm": arm, "policy": policy, "physics_residual": None}
        row.update((m.name, m.value) for m in metrics)
        return row


# ==================== 运行目录 ====================


@dataclass(frozen=True, slots=True)
class RunSummary:
    run_dir: Path
    arm: str
    steps: int
    teacher_queries: int
    final: dict[str, Any]
    terminal_paired_w: float
    aborted: str | None = None


def _summary(trainer: Trainer, run_dir: Path, final: dict[str, Any], aborted: str | None) -> RunSummary:
    rows = read_csv(run_dir / "metrics.csv")
    # 监控量取最后 25% 步的 paired_w 均值
    paired = column(rows, "paired_w")
    tail = paired[len(paired) - max(1, len(paired) // 4) :] if paired else []
    summary = RunSummary(
        run_dir=run_dir,
        arm=str(trainer.arm),
        steps=trainer.state.step,
        teacher_queries=trainer.state.teacher_queries,
        final=final,
        terminal_paired_w=float(np.mean(tail)) if tail else float("nan"),
        aborted=aborted,
    )
    payload = asdict(summary)
    payload["run_dir"] = str(run_dir)
    payload["seed"] = trainer.cfg.run.seed
    (run_dir / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return summary


def _abort(trainer: Trainer, run_dir: Path, exc: TrainingAborted) -> NoReturn:
    logger.error("训练中止: {}", exc)
    _summary(trainer, run_dir, {}, aborted=f"{exc.phase}@{exc.step}")
    raise exc


def run_training(
    cfg: RunConfig,
    teacher: TeacherHandle,
    run_dir: Path,
    *,
    resume: Path | None = None,
    base: VelocityField | None = None,
) -> RunSummary:
    """跑满 cfg.run.steps 步，写 config.json / metrics.csv / eval.csv / checkpoints / summary.json。

    resume 给定时从检查点恢复，并丢弃运行目录里 step 不早于恢复点的旧行。
    中途数值中止时已写出的行与检查点保留，异常继续向上抛出。
    """

    run_dir.mkdir(parents=True, exist_ok=True)
    attach_run_log(run_dir)
    try:
        (run_dir / "config.json").write_text(cfg.model_dump_json(indent=2), encoding="utf-8")
        state = load_checkpoint(resume, cfg) if resume is not None else initial_state(cfg, base)
        resume_step = state.step if resume is not None else None
        trainer = Trainer(cfg, teacher, state)
        metrics = CsvLog(run_dir / "metrics.csv", METRIC_COLUMNS, resume_step=resume_step)
        # eval 行以步后计数标记，恢复点那一行保留
        evals = CsvLog(run_dir / "eval.csv", EVAL_COLUMNS, resume_step=None if resume_step is None else resume_step + 1)
        ckpt_dir = run_dir / "checkpoints"
        run = cfg.run
        logger.info("开始训练: arm={} steps={} B={} run_dir={}", run.arm, run.steps, run.batch_size, run_dir)

        try:
            if resume is None:
                trainer.warm_up()
            if state.step == 0 and run.eval_every:
                evals.append(trainer.evaluate())
        except TrainingAborted as exc:
            _abort(trainer, run_dir, exc)
        while state.step < run.steps:
            try:
                record = trainer.train_step()
            except TrainingAborted as exc:
                _abort(trainer, run_dir, exc)
            metrics.append(record.row())
            if state.step % run.log_every == 0:
                logger.info(
                    "step={} disc_loss={:.5f} student_loss={:.5f} paired_w={:.3f}",
                    state.step,
                    record.disc_loss,
                    record.student_loss,
                    record.paired_w,
                )
            if run.eval_every and state.step % run.eval_every == 0:
                evals.append(trainer.evaluate())
            if run.checkpoint_every and state.step % run.checkpoint_every == 0:
                save_checkpoint(state, ckpt_dir / f"step_{state.step:06d}.npz", arm=str(run.arm))

        save_checkpoint(state, ckpt_dir / "final.npz", arm=str(run.arm))
        final = trainer.evaluate()
        summary = _summary(trainer, run_dir, final, aborted=None)
        logger.info(
            "训练完成: steps={} sw={:.4f} paired_w={:.3f}", state.step, final["sliced_wasserstein"], summary.terminal_paired_w
        )
        return summary
    finally:
        detach_run_log(run_dir)
