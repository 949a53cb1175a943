"""校验套件：按名字注册的检查项，逐项给出 observed / tolerance / 是否通过。

检查项
- v_pm_identities  v± 的值与梯度恒等式
- nft_neutrality   权重全为 0.5 时 NFT 梯度恒为 0
- grad_checks      所有可训练损失的有限差分梯度检查
- ratio_*          BT 判别器恢复解析密度比
- tilted_law       离散玩具上的倾斜分布
- conditional_velocity  穷举贝叶斯 vs 收敛后的加权 NFT 速度场（真实 VelocityField）
- reverse_kl       反向 KL 等价与单纯形上的最大值点
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from loguru import logger

from ..afd.objective import AFDConfig, afd_loss, nft_loss, prior_loss, v_minus, v_plus
from ..autodiff.engine import Node, mean, sq_norm
from ..autodiff.gradcheck import grad_check
from ..autodiff.params import ParamStore
from ..baselines.arms import GraphRollout, dmd_scaffold_loss, generator_loss
from ..config import VerifyConfig
from ..discriminator.losses import bt_loss, gan_loss
from ..discriminator.model import DiscGeometry, Discriminator
from ..errors import ConfigurationError
from ..flow.path import NoisedStates, fm_loss, make_noised_states
from ..flow.schedules import RECTIFIED_FLOW
from ..student.field import FieldGeometry, VelocityField
from ..student.rollout import rollout, rollout_graph
from ..student.video import Source, VideoBatch
from .oracles import (
    GaussianDensity,
    GaussianMixtureDensity,
    OracleReport,
    train_nft_field,
    train_ratio_logit,
    train_tabular_logits,
    verify_conditional_velocity,
    verify_ratio_recovery,
    verify_reverse_kl,
    verify_tilted_law,
    verify_zero_logit,
)
from .toys import load_discrete_toys, load_velocity_supports

CheckFn = Callable[[VerifyConfig], list[OracleReport]]

_CHECKS: dict[str, CheckFn] = {}


def register_check(name: str) -> Callable[[CheckFn], CheckFn]:
    def wrap(fn: CheckFn) -> CheckFn:
        if name in _CHECKS:
            raise ConfigurationError(f"检查项重名: {name}")
        _CHECKS[name] = fn
        return fn

    return wrap


def check_names() -> list[str]:
    return list(_CHECKS)


def _rng(cfg: VerifyConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, *key])


# ==================== 小尺寸实例 ====================

TINY_FIELD = FieldGeometry(n_blocks=2, dim=2, n_prompts=2, hidden=8, layers=1, t_embed=4, enc_width=3, prompt_width=2)
TINY_DISC = DiscGeometry(n_blocks=2, dim=2, n_prompts=2, enc_width=3, prompt_width=2, hidden=8, layers=1)
TINY_BATCH = 3
TINY_STEPS = 2


@dataclass
class TinyProblem:
    """梯度检查与代数恒等式共用的一组小模型与数据。"""

    field: VelocityField
    ref: VelocityField
    disc: Discriminator
    teacher: VideoBatch
    student: VideoBatch
    states: NoisedStates
    teacher_states: NoisedStates
    weights: np.ndarray


def tiny_problem(seed: int = 0) -> TinyProblem:
    rng = np.random.default_rng(seed)
    field = VelocityField(TINY_FIELD, rng=rng)
    ref = VelocityField(TINY_FIELD, rng=rng)
    disc = Discriminator(TINY_DISC, rng=rng)

    ids = np.array([0, 1, 1])
    teacher = VideoBatch(
        blocks=rng.normal(size=(TINY_BATCH, TINY_FIELD.n_blocks, TINY_FIELD.dim)),
        prompt_ids=ids,
        source=Source.TEACHER,
    )
    student = rollout(field, ids, TINY_FIELD.n_blocks, TINY_STEPS, rng)
    states = make_noised_states(student.blocks, ids, RECTIFIED_FLOW, rng)
    teacher_states = make_noised_states(teacher.blocks, ids, RECTIFIED_FLOW, rng)
    weights = rng.uniform(0.05, 0.95, len(states))
    return TinyProblem(field, ref, disc, teacher, student, states, teacher_states, weights)


def _grad_of(store: ParamStore, loss_fn: Callable[[dict[str, Node]], Node]) -> np.ndarray:
    leaves = store.leaves()
    loss_fn(leaves).backward()
    return np.concatenate([g.ravel() for g in store.grads_of(leaves).values()])


# ==================== 代数恒等式 ====================


@register_check("v_pm_identities")
def check_v_pm_identities(cfg: VerifyConfig, beta: float = 0.1) -> list[OracleReport]:
    prob = tiny_problem(cfg.seed)
    field, states = prob.field, prob.states
    v_theta = field.velocity_on(states)
    value_err = max(
        float(np.abs(v_plus(v_theta, beta).value - v_theta.value).max()),
        float(np.abs(v_minus(v_theta, beta).value - v_theta.value).max()),
    )

    def branch(op: Callable[[Node, float], Node] | None) -> Callable[[dict[str, Node]], Node]:
        def loss(p: dict[str, Node]) -> Node:
            v = field.velocity_on(states, p)
            return mean(sq_norm((v if op is None else op(v, beta)) - states.v))

        return loss

    g = _grad_of(field.params, branch(None))
    g_plus = _grad_of(field.params, branch(v_plus))
    g_minus = _grad_of(field.params, branch(v_minus))
    scale = max(float(np.abs(beta * g).max()), 1e-300)
    grad_err = max(
        float(np.abs(g_plus - beta * g).max()) / scale,
        float(np.abs(g_minus + beta * g).max()) / scale,
    )
    # 浮点舍入：梯度比较用相对误差，放宽到 algebra_tol 的 1e3 倍
    return [
        OracleReport("v_pm_values", value_err, 0.0, value_err == 0.0),
        OracleReport("v_pm_gradients", grad_err, cfg.algebra_tol * 1e3, grad_err <= cfg.algebra_tol * 1e3),
    ]


@register_check("nft_neutrality")
def check_nft_neutrality(cfg: VerifyConfig, beta: float = 0.1) -> list[OracleReport]:
    prob = tiny_problem(cfg.seed)
    half = np.full(len(prob.states), 0.5)
    g = _grad_of(prob.field.params, lambda p: nft_loss(prob.field, prob.states, half, beta, p))
    norm = float(np.linalg.norm(g))
    return [OracleReport("nft_neutrality", norm, cfg.algebra_tol, norm < cfg.algebra_tol)]


# ==================== 梯度检查 ====================


def gradcheck_losses(prob: TinyProblem, beta: float = 0.1) -> dict[str, tuple[ParamStore, Callable[[dict[str, Node]], Node]]]:
    """名字 → (被检查的参数, 以参数叶子为输入的确定性损失)。"""

    field, disc = prob.field, prob.disc
    afd_cfg = AFDConfig(beta=beta, lambda_prior=0.5)

    def generator(p: dict[str, Node]) -> Node:
        ids = prob.student.prompt_ids
        blocks = rollout_graph(field, ids, TINY_FIELD.n_blocks, TINY_STEPS, np.random.default_rng(5), p)
        return generator_loss(disc.score_blocks, GraphRollout(p, blocks, ids))

    return {
        "bt": (disc.params, lambda p: bt_loss(disc, prob.teacher, prob.student, p)),
        "gan": (disc.params, lambda p: gan_loss(disc, prob.teacher, prob.student, p)),
        "fm": (field.params, lambda p: fm_loss(field, prob.states, p)),
        "nft": (field.params, lambda p: nft_loss(field, prob.states, prob.weights, beta, p)),
        "prior": (field.params, lambda p: prior_loss(field, prob.ref, prob.states, prob.weights, p)),
        "afd": (field.params, lambda p: afd_loss(field, prob.ref, prob.states, prob.weights, afd_cfg, p).total),
        "sft": (field.params, lambda p: fm_loss(field, prob.teacher_states, p)),
        "gan_generator": (field.params, generator),
        "dmd_scaffold": (field.params, lambda p: dmd_scaffold_loss(field, prob.states, prob.weights, p)),
    }


@register_check("grad_checks")
def check_gradients(cfg: VerifyConfig) -> list[OracleReport]:
    prob = tiny_problem(cfg.seed)
    reports = []
    for name, (store, loss_fn) in gradcheck_losses(prob).items():
        rep = grad_check(loss_fn, store, tol=cfg.gradcheck_tol, max_entries=8, rng=_rng(cfg, 17))
        reports.append(
            OracleReport(
                f"grad_check[{name}]",
                rep.max_rel_error,
                cfg.gradcheck_tol,
                rep.passed,
                {"checked": float(rep.n_checked)},
            )
        )
    return reports


# ==================== 密度比 ====================


def _ratio_case(
    cfg: VerifyConfig,
    name: str,
    teacher: GaussianDensity | GaussianMixtureDensity,
    student: GaussianDensity,
    grid: np.ndarray,
    tol: float,
    key: int,
) -> OracleReport:
    rng = _rng(cfg, key)
    logit = train_ratio_logit(teacher, student, steps=cfg.ratio_steps, batch=cfg.ratio_batch, rng=rng)
    return verify_ratio_recovery(teacher, student, logit, grid[:, None], tol=tol, rng=rng, name=name)


@register_check("ratio_recovery")
def check_ratio_recovery(cfg: VerifyConfig) -> list[OracleReport]:
    grid = np.linspace(-2.0, 3.0, 101)
    return [_ratio_case(cfg, "ratio_recovery", GaussianDensity((1.0,)), GaussianDensity((0.0,)), grid, cfg.ratio_tol, 1)]


@register_check("ratio_identical")
def check_ratio_identical(cfg: VerifyConfig) -> list[OracleReport]:
    """教师与学生同分布时，原始 logit 本身（不扣常数）应处处接近 0。"""

    density = GaussianDensity((0.0,))
    logit = train_ratio_logit(density, density, steps=cfg.ratio_steps, batch=cfg.ratio_batch, rng=_rng(cfg, 2), lr=2e-3)
    return [verify_zero_logit(logit, np.linspace(-2.0, 2.0, 81)[:, None], tol=cfg.identical_tol)]


@register_check("ratio_mixture")
def check_ratio_mixture(cfg: VerifyConfig) -> list[OracleReport]:
    teacher = GaussianMixtureDensity(((-1.0,), (1.5,)), std=0.8, weight=0.4)
    grid = np.linspace(-2.0, 2.5, 91)
    return [_ratio_case(cfg, "ratio_mixture", teacher, GaussianDensity((0.0,), 1.2), grid, cfg.mixture_tol, 3)]


# ==================== 离散玩具 ====================


@register_check("tilted_law")
def check_tilted_law(cfg: VerifyConfig) -> list[OracleReport]:
    reports = []
    for i, toy in enumerate(load_discrete_toys().values()):
        logits = train_tabular_logits(toy, steps=cfg.tilted_steps, batch=cfg.tilted_batch, rng=_rng(cfg, 100 + i))
        reports.append(verify_tilted_law(toy, logits, tol=cfg.tilted_tv))
    return reports


@register_check("conditional_velocity")
def check_conditional_velocity(cfg: VerifyConfig) -> list[OracleReport]:
    reports = []
    for support in load_velocity_supports().values():
        values = train_nft_field(support, RECTIFIED_FLOW, steps=cfg.velocity_steps, seed=cfg.seed)
        reports.append(verify_conditional_velocity(support, RECTIFIED_FLOW, values, tol=cfg.velocity_tol))
    return reports


@register_check("reverse_kl")
def check_reverse_kl(cfg: VerifyConfig) -> list[OracleReport]:
    reports = []
    for i, toy in enumerate(load_discrete_toys().values()):
        for shift in (0.0, 3.0):
            rep = verify_reverse_kl(toy, tol=cfg.reverse_kl_tv, rng=_rng(cfg, 200 + i), shift=shift)
            if shift:
                rep = OracleReport(f"{rep.name}+shift", rep.observed, rep.tolerance, rep.passed, rep.details)
            reports.append(rep)
    return reports


# ==================== 入口 ====================


def run_suite(cfg: VerifyConfig, selector: Sequence[str] | None = None) -> list[OracleReport]:
    names = list(selector) if selector else check_names()
    unknown = [n for n in names if n not in _CHECKS]
    if unknown:
        raise ConfigurationError(f"未知检查项: {unknown}（可选: {check_names()}）")
    reports: list[OracleReport] = []
    for name in names:
        logger.info("开始校验: {}", name)
        for rep in _CHECKS[name](cfg):
            (logger.info if rep.passed else logger.error)(rep.summary())
            reports.append(rep)
    return reports


def failures(reports: Sequence[OracleReport]) -> list[OracleReport]:
    return [r for r in reports if not r.passed]
