"""afd-lab 命令行入口。

子命令
    pretrain          在错配振子上预训练基座学生（--hidden-flow 改为训练隐藏流教师）
    distill           按配置跑一个 arm（--seeds 时每个种子一次，写中位数汇总）
    compare-arms      afd / base / sft 同预算对比，按中位数检查蒸馏判据
    ablate-disc-lr    判别器学习率扫描，输出 paired_w 轨迹 CSV、叠加图与学习率区间判据
    ablate-disc-loss  BT 与 GAN 判别器损失对比
    verify            解析校验套件
    report            多个运行目录的对比表与曲线

训练类命令都接受 --seeds s1 s2 s3 与 --jobs；多种子时判据作用在中位数上。

退出码：0 成功，1 配置 / 输入 / 检查点错误，2 数值中止，3 校验失败。
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

from loguru import logger
from pydantic import ValidationError

from ..config import Arm, RunConfig, format_validation_error, load_run_config, load_verify_config
from ..discriminator.losses import DiscLoss
from ..errors import (
    CapabilityError,
    CheckpointError,
    ConfigurationError,
    InputError,
    NumericalError,
    VerificationFailed,
)
from ..eval.oracles import OracleReport
from ..eval.suite import check_names, failures, run_suite
from ..logs import setup_logging
from ..teachers.factory import build_teacher, physics_teacher
from ..teachers.hidden_flow import train_hidden_flow
from ..trainer.loop import run_training
from ..trainer.pretrain import pretrain_base, save_base
from .criteria import check_disc_loss, check_distillation, check_lr_regimes
from .report import write_report
from .seeds import load_median_summary, median_summary, median_trajectory, seed_label, write_median_summary
from .svg import Series, line_plot

DEFAULT_RATES = (0.0, 1e-6, 5e-6, 1e-5, 5e-5)


# ==================== 配置 ====================


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "seed": getattr(args, "seed", None),
        "steps": getattr(args, "steps", None),
        "arm": getattr(args, "arm", None),
        "out_dir": getattr(args, "out", None),
    }


def _load(args: argparse.Namespace) -> RunConfig:
    return load_run_config(Path(args.config), _overrides(args))


def _replace(cfg: RunConfig, section: str, **fields: Any) -> RunConfig:
    """返回替换了某一段若干字段的新配置（重新校验）。"""

    data = cfg.model_dump(mode="json")
    data[section].update(fields)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(format_validation_error(exc)) from exc


# ==================== 扫描 ====================


def _run_one(payload: tuple[str, str]) -> str:
    """子进程入口：配置以 JSON 传入，返回运行目录。"""

    cfg_json, run_dir = payload
    cfg = RunConfig.model_validate_json(cfg_json)
    run_training(cfg, build_teacher(cfg), Path(run_dir))
    return run_dir


def run_sweep(runs: Sequence[tuple[str, RunConfig]], out: Path, jobs: int = 1) -> list[Path]:
    """按给定顺序跑一组配置；jobs > 1 时用进程池，结果仍按输入顺序返回。"""

    payloads = [(cfg.model_dump_json(), str(out / label)) for label, cfg in runs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_one, payloads))
    else:
        done = [_run_one(p) for p in payloads]
    return [Path(d) for d in done]


def rate_label(rate: float) -> str:
    return f"lr_disc={rate:g}"


def run_seeded(
    runs: Sequence[tuple[str, RunConfig]], out: Path, seeds: Sequence[int] | None, jobs: int = 1
) -> list[list[Path]]:
    """每个 (label, cfg) 在各种子上各跑一次；返回按 label 分组的运行目录。

    seeds 为空时每组只有 out/label 这一个目录；否则为 out/label/seed=<s>，
    并在 out/label/summary.json 写出中位数汇总。
    """

    if not seeds:
        return [[d] for d in run_sweep(runs, out, jobs)]
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError(f"seeds 不能重复: {list(seeds)}")
    expanded = [
        (str(Path(label) / seed_label(s)), _replace(cfg, "run", seed=s)) for label, cfg in runs for s in seeds
    ]
    dirs = run_sweep(expanded, out, jobs)
    groups = [dirs[i * len(seeds) : (i + 1) * len(seeds)] for i in range(len(runs))]
    for (label, _), group in zip(runs, groups, strict=True):
        write_median_summary(group, out / label)
    return groups


def write_reward_trajectories(
    groups: Sequence[Sequence[Path]], labels: Sequence[str], out: Path
) -> tuple[Path, Path, list[list[float]]]:
    """每组一列 paired_w（多种子时逐 step 取中位数），按 step 对齐；另画一张叠加图。"""

    trajectories = [median_trajectory(group, "paired_w") for group in groups]
    steps = sorted({s for xs, _ in trajectories for s in xs})
    by_run = [dict(zip(xs, ys, strict=True)) for xs, ys in trajectories]
    csv_path = out / "reward_trajectories.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", *labels])
        for s in steps:
            writer.writerow([s, *(repr(m[s]) if s in m else "" for m in by_run)])
    series = [Series(label, xs, ys) for (xs, ys), label in zip(trajectories, labels, strict=True)]
    svg_path = out / "reward_overlay.svg"
    svg_path.write_text(
        line_plot(series, title="discriminator learning-rate sweep", xlabel="step", ylabel="paired w"),
        encoding="utf-8",
    )
    return csv_path, svg_path, [ys for _, ys in trajectories]


def reports_json(reports: Sequence[OracleReport]) -> str:
    return json.dumps(
        [{"name": r.name, "observed": r.observed, "tolerance": r.tolerance, "passed": r.passed, **r.details} for r in reports],
        indent=2,
    )


def write_criteria(reports: Sequence[OracleReport], out: Path) -> Path:
    """判据结果写到 criteria.json；未通过只记日志，不改变退出码。"""

    for rep in reports:
        (logger.info if rep.passed else logger.warning)(rep.summary())
    path = out / "criteria.json"
    path.write_text(reports_json(reports), encoding="utf-8")
    return path


# ==================== 子命令 ====================


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out_dir = Path(cfg.run.out_dir)
    if args.hidden_flow:
        t = cfg.teacher
        teacher = train_hidden_flow(
            physics_teacher(cfg),
            hidden=t.hidden,
            layers=t.layers,
            steps=t.train_steps,
            teacher_steps=t.teacher_steps,
            seed=cfg.run.seed,
        )
        path = Path(args.checkpoint) if args.checkpoint else out_dir / "hidden_teacher.npz"
        teacher.save(path)
        logger.info("隐藏流教师已保存: {}", path)
        return 0
    result = pretrain_base(cfg)
    save_base(result, Path(args.checkpoint) if args.checkpoint else out_dir / "base.npz")
    return 0


def cmd_distill(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = Path(cfg.run.out_dir)
    if args.seeds:
        if args.resume:
            raise ConfigurationError("--resume 与 --seeds 不能同时使用")
        run_seeded([("", cfg)], out, args.seeds, args.jobs)
        print(json.dumps(load_median_summary(out), default=str))
        return 0
    teacher = build_teacher(cfg)
    resume = Path(args.resume) if args.resume else None
    summary = run_training(cfg, teacher, out, resume=resume)
    print(json.dumps({"run_dir": str(summary.run_dir), "steps": summary.steps, **summary.final}, default=str))
    return 0


def cmd_compare_arms(args: argparse.Namespace) -> int:
    cfg = _load(args)
    arms = (Arm.AFD, Arm.BASE, Arm.SFT)
    runs = [(f"arm={a}", _replace(cfg, "run", arm=str(a), on_policy=None)) for a in arms]
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = run_seeded(runs, out, args.seeds, args.jobs)
    afd, base, sft = (median_summary(group) for group in groups)
    if afd["median"]["physics_residual"] is not None:
        write_criteria(check_distillation(afd, base, sft), out)
    write_report([d for group in groups for d in group], out / "report")
    return 0


def cmd_ablate_disc_lr(args: argparse.Namespace) -> int:
    cfg = _load(args)
    rates = list(args.rates) if args.rates else list(DEFAULT_RATES)
    if any(r < 0 for r in rates):
        raise ConfigurationError(f"rates: 学习率必须 >= 0: {rates}")
    runs = [(rate_label(r), _replace(cfg, "optim", lr_disc=r)) for r in rates]
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = run_seeded(runs, out, args.seeds, args.jobs)
    _, _, trajectories = write_reward_trajectories(groups, [label for label, _ in runs], out)
    if len(rates) >= 3 and 0.0 in rates:
        write_criteria(check_lr_regimes(dict(zip(rates, trajectories, strict=True))), out)
    write_report([d for group in groups for d in group], out / "report")
    return 0


def cmd_ablate_disc_loss(args: argparse.Namespace) -> int:
    cfg = _load(args)
    runs = [(f"disc_loss={k}", _replace(cfg, "discriminator", loss=str(k))) for k in DiscLoss]
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = run_seeded(runs, out, args.seeds, args.jobs)
    bt, gan = (median_summary(group) for group in groups)
    if bt["median"]["physics_residual"] is not None:
        write_criteria(check_disc_loss(bt, gan), out)
    write_report([d for group in groups for d in group], out / "report")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = load_verify_config(Path(args.config) if args.config else None)
    selector = [name for item in (args.suite or []) for name in item.split(",") if name]
    reports = run_suite(cfg, selector or None)
    for rep in reports:
        print(rep.summary())
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(reports_json(reports), encoding="utf-8")
    failed = failures(reports)
    if failed:
        raise VerificationFailed(", ".join(f"{r.name} ({r.observed:.3g} > {r.tolerance:.3g})" for r in failed))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    dirs = [Path(d) for d in args.runs]
    missing = [d for d in dirs if not d.is_dir()]
    if missing:
        raise InputError(f"运行目录不存在: {[str(d) for d in missing]}")
    for path in write_report(dirs, Path(args.out)):
        print(path)
    return 0


# ==================== 参数解析 ====================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afd-lab", description="Adversarial flow distillation desk lab.")
    parser.add_argument("--log-level", default="INFO", help="stderr log level")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parent = argparse.ArgumentParser(add_help=False)
    run_parent.add_argument("--config", required=True, help="run configuration (TOML)")
    run_parent.add_argument("--seed", type=int, default=None, help="override run.seed")
    run_parent.add_argument("--out", default=None, help="override run.out_dir")
    run_parent.add_argument("--steps", type=int, default=None, help="override run.steps")
    run_parent.add_argument("--arm", choices=[a.value for a in Arm], default=None, help="override run.arm")

    p = sub.add_parser("pretrain", parents=[run_parent], help="pretrain the base student on a mismatched oscillator")
    p.add_argument("--hidden-flow", action="store_true", help="train a hidden-flow teacher instead")
    p.add_argument("--checkpoint", default=None, help="output checkpoint path")
    p.set_defaults(func=cmd_pretrain)

    seeds_parent = argparse.ArgumentParser(add_help=False)
    seeds_parent.add_argument("--seeds", type=int, nargs="+", default=None, help="run once per seed and take medians")
    seeds_parent.add_argument("--jobs", type=int, default=1, help="parallel processes")

    p = sub.add_parser("distill", parents=[run_parent, seeds_parent], help="run one training arm")
    p.add_argument("--resume", default=None, help="resume from a training checkpoint")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("compare-arms", parents=[run_parent, seeds_parent], help="afd vs base vs sft on one budget")
    p.set_defaults(func=cmd_compare_arms)

    p = sub.add_parser(
        "ablate-disc-lr", parents=[run_parent, seeds_parent], help="sweep the discriminator learning rate"
    )
    p.add_argument("--rates", type=float, nargs="+", default=None, help=f"default: {list(DEFAULT_RATES)}")
    p.set_defaults(func=cmd_ablate_disc_lr)

    p = sub.add_parser(
        "ablate-disc-loss", parents=[run_parent, seeds_parent], help="compare BT and GAN discriminator losses"
    )
    p.set_defaults(func=cmd_ablate_disc_loss)

    p = sub.add_parser("verify", help="run the analytic verification suite")
    p.add_argument("--config", default=None, help="verification configuration (TOML)")
    p.add_argument("--suite", action="append", default=None, help=f"checks to run: {', '.join(check_names())}")
    p.add_argument("--out", default=None, help="write a JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="comparison tables and curves for finished runs")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.func(args)
    except (ConfigurationError, InputError, CheckpointError, CapabilityError) as exc:
        logger.error("{}: {}", type(exc).__name__, exc)
        return 1
    except NumericalError as exc:
        logger.error("数值中止: {}", exc)
        return 2
    except VerificationFailed as exc:
        logger.error("校验失败: {}", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
