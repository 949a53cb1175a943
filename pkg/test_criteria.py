#!/usr/bin/env python3
"""测试多种子中位数汇总与验收判据

测试目标:
1. 中位数汇总与逐 step 中位数轨迹
2. 蒸馏判据、学习率区间判据、判别器损失判据的边界
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from afd_lab.cli.criteria import check_disc_loss, check_distillation, check_lr_regimes
from afd_lab.cli.report import run_label
from afd_lab.cli.seeds import (
    load_median_summary,
    median_summary,
    median_trajectory,
    write_median_summary,
)
from afd_lab.errors import InputError


def _run(root: Path, seed: int, sw: float, paired: list[float], arm: str = "afd") -> Path:
    run_dir = root / f"seed={seed}"
    run_dir.mkdir(parents=True)
    summary = {
        "arm": arm,
        "seed": seed,
        "steps": len(paired),
        "teacher_queries": 4 * len(paired),
        "terminal_paired_w": paired[-1],
        "final": {"sliced_wasserstein": sw, "physics_residual": sw / 10},
    }
    (run_dir / "summary.json").write_text(json.dumps(summary), encoding="utf-8")
    lines = ["step,paired_w", *(f"{i},{v!r}" for i, v in enumerate(paired))]
    (run_dir / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return run_dir


def _median(sw: float | None, res: float | None = None) -> dict:
    return {"median": {"sliced_wasserstein": sw, "physics_residual": res, "terminal_paired_w": 0.5}}


# ==================== 中位数 ====================


def test_median_summary_over_three_seeds(tmp_path: Path) -> None:
    dirs = [_run(tmp_path, 1, 0.3, [0.5, 0.6]), _run(tmp_path, 2, 0.1, [0.5, 0.4]), _run(tmp_path, 3, 0.2, [0.5, 0.9])]
    summary = write_median_summary(dirs, tmp_path)
    assert summary["seeds"] == [1, 2, 3]
    assert summary["median"]["sliced_wasserstein"] == pytest.approx(0.2)
    assert summary["median"]["physics_residual"] == pytest.approx(0.02)
    assert summary["median"]["terminal_paired_w"] == pytest.approx(0.6)
    assert load_median_summary(tmp_path) == summary


def test_median_summary_rejects_mixed_arms_and_empty_input(tmp_path: Path) -> None:
    dirs = [_run(tmp_path, 1, 0.3, [0.5]), _run(tmp_path, 2, 0.1, [0.5], arm="sft")]
    with pytest.raises(InputError):
        median_summary(dirs)
    with pytest.raises(InputError):
        median_summary([])
    with pytest.raises(InputError):
        load_median_summary(tmp_path / "absent")


def test_median_trajectory_keeps_common_steps(tmp_path: Path) -> None:
    dirs = [_run(tmp_path, 1, 0.3, [0.5, 0.7, 0.9]), _run(tmp_path, 2, 0.1, [0.5, 0.3])]
    steps, values = median_trajectory(dirs, "paired_w")
    assert steps == [0, 1]
    assert values == pytest.approx([0.5, 0.5])


def test_run_label_includes_group_for_seed_dirs(tmp_path: Path) -> None:
    assert run_label(tmp_path / "lr_disc=0" / "seed=3") == "lr_disc=0/seed=3"
    assert run_label(tmp_path / "plain") == "plain"


# ==================== 判据 ====================


def test_distillation_criteria_pass_and_fail() -> None:
    passed = check_distillation(_median(0.15, 0.04), _median(0.30, 0.07), _median(0.20, 0.01))
    assert [r.name for r in passed] == ["distill_sw_reduction", "distill_residual_reduction", "distill_afd_below_sft"]
    assert all(r.passed for r in passed)
    assert passed[0].observed == pytest.approx(0.5)

    failed = check_distillation(_median(0.46, 0.09), _median(0.31, 0.07), _median(0.10, 0.01))
    assert not any(r.passed for r in failed)


def test_distillation_needs_physics_residual() -> None:
    with pytest.raises(InputError):
        check_distillation(_median(0.1), _median(0.3), _median(0.2))


def test_lr_regimes_on_three_clean_trajectories() -> None:
    steps = 20
    reports = check_lr_regimes(
        {
            0.0: [0.5 + 0.4 * i / steps for i in range(steps)],
            1e-3: [0.5] * steps,
            1e-1: [0.5 - 0.4 * i / steps for i in range(steps)],
        }
    )
    assert {r.name: r.passed for r in reports} == {
        "lr_frozen_saturates": True,
        "lr_largest_suppresses": True,
        "lr_intermediate_balanced": True,
    }


def test_lr_regimes_balanced_band_must_hold_on_every_tail_step() -> None:
    reports = check_lr_regimes({0.0: [0.9] * 8, 1e-3: [0.5] * 7 + [0.7], 1e-1: [0.1] * 8})
    balanced = reports[-1]
    assert not balanced.passed
    assert balanced.details == {"lr_disc=0.001": 0.0}


def test_lr_regimes_need_zero_and_three_rates() -> None:
    with pytest.raises(InputError):
        check_lr_regimes({0.0: [0.5], 1e-3: [0.5]})
    with pytest.raises(InputError):
        check_lr_regimes({1e-4: [0.5], 1e-3: [0.5], 1e-2: [0.5]})


def test_disc_loss_criterion() -> None:
    assert check_disc_loss(_median(0.1, 0.02), _median(0.1, 0.03))[0].passed
    assert not check_disc_loss(_median(0.1, 0.05), _median(0.1, 0.03))[0].passed
