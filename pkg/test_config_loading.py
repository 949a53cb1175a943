#!/usr/bin/env python3
"""测试配置加载：TOML 解析、默认值、覆盖规则与矛盾检查"""

from __future__ import annotations

from pathlib import Path

import pytest

from afd_lab.config import (
    Arm,
    DiscriminatorSection,
    RunConfig,
    TeacherKind,
    load_run_config,
    load_verify_config,
    parse_run_config,
)
from afd_lab.errors import ConfigurationError
from afd_lab.paths import configs_dir
from conftest import TINY_RUN, tiny_config


def _data(**sections: dict) -> dict:
    data: dict = {"schema_version": 1}
    data.update(sections)
    return data


def test_defaults_follow_hyperparameter_table() -> None:
    cfg = parse_run_config(_data())
    assert cfg.run.arm is Arm.AFD
    assert cfg.run.batch_size == 16
    assert cfg.teacher.kind is TeacherKind.PHYSICS
    assert (cfg.afd.beta, cfg.afd.lambda_prior, cfg.afd.clip_max, cfg.afd.ema_decay) == (0.1, 1e-4, 5.0, 0.99)
    assert (cfg.optim.lr_student, cfg.optim.lr_disc) == (1e-5, 1e-5)


@pytest.mark.parametrize(
    "data",
    [
        {"schema_version": 2},
        {},
        _data(run={"stepz": 10}),
        _data(unknown={}),
        _data(run={"batch_size": 1}),
        _data(run={"arm": "ppo"}),
        _data(student={"t_embed": 5}),
        _data(afd={"beta": 0.0}),
        _data(optim={"lr_disc": -1e-5}),
    ],
)
def test_invalid_configs_are_rejected(data: dict) -> None:
    with pytest.raises(ConfigurationError):
        parse_run_config(data)


def test_sft_with_on_policy_is_a_contradiction() -> None:
    with pytest.raises(ConfigurationError, match="on_policy"):
        parse_run_config(_data(run={"arm": "sft", "on_policy": True}))
    with pytest.raises(ConfigurationError, match="on_policy"):
        parse_run_config(_data(run={"arm": "afd", "on_policy": False}))
    assert parse_run_config(_data(run={"arm": "sft", "on_policy": False})).run.arm is Arm.SFT


def test_physics_teacher_needs_two_dimensional_blocks() -> None:
    with pytest.raises(ConfigurationError, match="student.dim"):
        parse_run_config(_data(student={"dim": 3}))
    cfg = parse_run_config(_data(teacher={"kind": "mixture"}, student={"dim": 3}))
    assert cfg.student.dim == 3


def test_validation_message_names_the_field() -> None:
    with pytest.raises(ConfigurationError) as info:
        parse_run_config(_data(student={"hidden": 0}))
    assert "student.hidden" in str(info.value)


def test_overrides_replace_run_fields(tmp_path: Path) -> None:
    cfg = tiny_config(tmp_path)
    data = cfg.model_dump(mode="json")
    out = parse_run_config(data, {"seed": 11, "steps": 9, "arm": "gan", "out_dir": "elsewhere"})
    assert (out.run.seed, out.run.steps, out.run.arm, out.run.out_dir) == (11, 9, Arm.GAN, "elsewhere")
    # None 表示命令行没给，保持文件中的值
    same = parse_run_config(data, {"seed": None})
    assert same.run.seed == TINY_RUN["run"]["seed"]


def test_non_overridable_field_is_rejected() -> None:
    with pytest.raises(ConfigurationError):
        parse_run_config(_data(), {"batch_size": 8})


def test_config_is_frozen() -> None:
    cfg = parse_run_config(_data())
    with pytest.raises(Exception):  # noqa: B017, PT011
        cfg.run.seed = 5  # type: ignore[misc]


def test_load_run_config_from_toml(tmp_path: Path) -> None:
    path = tmp_path / "run.toml"
    path.write_text('schema_version = 1\n[run]\narm = "base"\nsteps = 3\n', encoding="utf-8")
    cfg = load_run_config(path, {"seed": 4})
    assert (cfg.run.arm, cfg.run.steps, cfg.run.seed) == (Arm.BASE, 3, 4)


def test_missing_and_malformed_files(tmp_path: Path) -> None:
    with pytest.raises(ConfigurationError):
        load_run_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("schema_version = \n[run", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_run_config(bad)


@pytest.mark.parametrize("name", ["config.example.toml", "desk_oscillator.toml", "pretrain_base.toml"])
def test_shipped_run_configs_load(name: str) -> None:
    cfg = load_run_config(configs_dir() / name)
    assert isinstance(cfg, RunConfig)


def test_shipped_desk_config_matches_pretrain_geometry() -> None:
    desk = load_run_config(configs_dir() / "desk_oscillator.toml")
    base = load_run_config(configs_dir() / "pretrain_base.toml")
    assert desk.field_geometry() == base.field_geometry()


def test_desk_config_warms_up_the_discriminator() -> None:
    desk = load_run_config(configs_dir() / "desk_oscillator.toml")
    assert desk.discriminator.warmup_steps > 0
    assert not desk.discriminator.zero_init
    assert desk.optim.lr_disc == 1e-5
    assert desk.optim.lr_student < desk.discriminator.warmup_lr


def test_discriminator_defaults_are_random_without_warm_up() -> None:
    section = DiscriminatorSection()
    assert (section.zero_init, section.warmup_steps, section.warmup_lr) == (False, 0, 1e-3)


def test_verify_config_defaults_and_file() -> None:
    default = load_verify_config(None)
    assert (default.ratio_tol, default.identical_tol, default.reverse_kl_tv) == (0.1, 0.05, 1e-3)
    shipped = load_verify_config(configs_dir() / "verify.toml")
    assert shipped == default


def test_verify_config_rejects_unknown_keys(tmp_path: Path) -> None:
    path = tmp_path / "verify.toml"
    path.write_text("schema_version = 1\nratio_toll = 0.2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_verify_config(path)
