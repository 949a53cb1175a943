"""解析校验：密度比恢复、倾斜分布、条件平均速度、反向 KL 等价。

每个校验的"真值"一侧都用闭式或穷举（贝叶斯枚举、凸优化）得到，
不复用被检验的训练例程；被检验的一侧（训练好的判别器 logit、NFT 收敛后的速度）
由调用方传入或由本模块的小型训练函数产生。

BT 的最优 logit 只确定到一个加性常数。比较前用归一化条件 E_{π_θ}[exp ρ] = 1 固定这个常数。
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, rel_entr, softmax
from scipy.stats import norm

from ..autodiff.engine import Node, constant, take_rows
from ..autodiff.optim import AdamW
from ..autodiff.params import ParamStore
from ..afd.objective import nft_from_velocity
from ..discriminator.losses import DiscLoss, bt_loss_from_logits
from ..discriminator.model import DiscGeometry, Discriminator
from ..discriminator.training import disc_step
from ..errors import CapabilityError, InputError
from ..flow.schedules import Schedule
from ..student.field import FieldGeometry, VelocityField
from ..student.video import Source, VideoBatch
from .toys import DiscreteToy, VelocitySupport

LogitFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OracleReport:
    name: str
    observed: float
    tolerance: float
    passed: bool
    details: dict[str, float] = field(default_factory=dict)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: observed={self.observed:.3g} tol={self.tolerance:.3g}"


# ==================== 解析密度 ====================


@runtime_checkable
class AnalyticDensity(Protocol):
    dim: int

    def logpdf(self, x: np.ndarray) -> np.ndarray: ...

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...


class Sampler(Protocol):
    dim: int

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianDensity:
    mean: tuple[float, ...]
    std: float = 1.0

    @property
    def dim(self) -> int:
        return len(self.mean)

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return norm.logpdf(x, loc=np.asarray(self.mean), scale=self.std).sum(axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.mean) + self.std * rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class GaussianMixtureDensity:
    means: tuple[tuple[float, ...], tuple[float, ...]]
    std: float = 1.0
    weight: float = 0.5

    @property
    def dim(self) -> int:
        return len(self.means[0])

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        comps = [
            np.log(w) + norm.logpdf(x, loc=np.asarray(m), scale=self.std).sum(axis=-1)
            for w, m in zip((self.weight, 1.0 - self.weight), self.means, strict=True)
        ]
        return logsumexp(np.stack(comps), axis=0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = (rng.uniform(size=n) >= self.weight).astype(np.int64)
        means = np.asarray(self.means)[comp]
        return means + self.std * rng.standard_normal((n, self.dim))


def _cosine_lr(base: float, step: int, total: int) -> float:
    return base * 0.5 * (1.0 + np.cos(np.pi * step / total))


# ==================== 密度比恢复 ====================


def train_ratio_logit(
    teacher: Sampler,
    student: Sampler,
    *,
    steps: int,
    batch: int,
    rng: np.random.Generator,
    lr: float = 1e-2,
    hidden: int = 32,
) -> LogitFn:
    """用训练循环里的 disc_step（BT 损失）在新鲜样本上训练一个判别器，返回冻结后的 logit 函数。

    样本当作单块视频：K=1、d=dim、只有 prompt 0。输出层零初始化，起点 logit ≡ 0。
    """

    geometry = DiscGeometry(
        n_blocks=1,
        dim=teacher.dim,
        n_prompts=1,
        enc_width=hidden,
        prompt_width=1,
        hidden=hidden,
        layers=1,
        activation="tanh",
    )
    disc = Discriminator(geometry, rng=rng, zero_init=True)
    opt = AdamW(lr, weight_decay=0.0)
    ids = np.zeros(batch, dtype=np.int64)
    for s in range(steps):
        opt.lr = _cosine_lr(lr, s, steps)
        t = VideoBatch(teacher.sample(batch, rng)[:, None, :], ids, Source.TEACHER)
        x = VideoBatch(student.sample(batch, rng)[:, None, :], ids, Source.STUDENT)
        disc_step(disc, t, x, opt, DiscLoss.BT)

    def logit(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return disc.log_ratio(VideoBatch(x[:, None, :], np.zeros(len(x), dtype=np.int64), Source.STUDENT))

    return logit


def gauge_offset(logit: LogitFn, student: Sampler, rng: np.random.Generator, n: int = 100_000) -> float:
    """c 使得 E_{π_θ}[exp(ρ − c)] = 1。"""

    rho = logit(student.sample(n, rng))
    return float(logsumexp(rho) - np.log(n))


def verify_ratio_recovery(
    teacher: object,
    student: object,
    logit: LogitFn,
    grid: np.ndarray,
    *,
    tol: float,
    rng: np.random.Generator,
    density_floor: float = 1e-3,
    name: str = "ratio_recovery",
) -> OracleReport:
    if not isinstance(teacher, AnalyticDensity) or not isinstance(student, AnalyticDensity):
        raise CapabilityError("密度比校验需要教师与学生都有解析密度")
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if grid.shape[1] != teacher.dim:
        grid = grid.reshape(-1, teacher.dim)
    lt, ls = teacher.logpdf(grid), student.logpdf(grid)
    mask = (np.exp(lt) > density_floor) & (np.exp(ls) > density_floor)
    if not mask.any():
        raise InputError("网格上没有两侧密度都超过阈值的点")
    offset = gauge_offset(logit, student, rng)
    err = np.abs(logit(grid) - offset - (lt - ls))[mask]
    observed = float(err.max())
    return OracleReport(
        name,
        observed,
        tol,
        observed <= tol,
        {"gauge_offset": offset, "grid_points": float(mask.sum()), "mean_abs_error": float(err.mean())},
    )


def verify_zero_logit(logit: LogitFn, grid: np.ndarray, *, tol: float, name: str = "ratio_identical") -> OracleReport:
    """两侧分布相同时真实对数比恒为 0；直接检查原始 logit，不做常数校正。"""

    raw = np.abs(logit(np.atleast_2d(np.asarray(grid, dtype=np.float64))))
    observed = float(raw.max())
    return OracleReport(name, observed, tol, observed <= tol, {"mean_abs_logit": float(raw.mean())})


# ==================== 倾斜分布 ====================


def tilt(pi_theta: np.ndarray, r: np.ndarray) -> np.ndarray:
    """π⁺ ∝ r·π_θ。"""

    w = np.asarray(r, dtype=np.float64) * np.asarray(pi_theta, dtype=np.float64)
    return w / w.sum()


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


def train_tabular_logits(
    toy: DiscreteToy,
    *,
    steps: int,
    batch: int,
    rng: np.random.Generator,
    lr: float = 5e-2,
) -> np.ndarray:
    """每个离散结果一个 logit，用 BT 损失在类别样本上训练。"""

    store = ParamStore()
    store.add("phi", np.zeros(toy.size))
    opt = AdamW(lr, weight_decay=0.0)
    outcomes = np.arange(toy.size)
    for s in range(steps):
        opt.lr = _cosine_lr(lr, s, steps)
        a = rng.choice(outcomes, size=batch, p=toy.pi_teacher)
        b = rng.choice(outcomes, size=batch, p=toy.pi_theta)
        p = store.leaves()
        loss = bt_loss_from_logits(take_rows(p["phi"], a), take_rows(p["phi"], b))
        loss.backward()
        opt.step(store, store.grads_of(p))
    return store.get("phi").copy()


def verify_tilted_law(
    toy: DiscreteToy,
    logits: np.ndarray | None,
    *,
    tol: float,
    exact_tol: float = 1e-12,
) -> OracleReport:
    """(a) 精确密度比的倾斜等于 π_T；(b) exp(训练 logit) 的倾斜与 π_T 的 TV 距离。"""

    exact = tilt(toy.pi_theta, toy.pi_teacher / toy.pi_theta)
    exact_err = float(np.abs(exact - toy.pi_teacher).max())
    details = {"exact_max_error": exact_err}
    observed = 0.0
    if logits is not None:
        logits = np.asarray(logits, dtype=np.float64)
        trained = tilt(toy.pi_theta, np.exp(logits - logits.max()))
        observed = total_variation(trained, toy.pi_teacher)
        details["tv_trained"] = observed
    passed = exact_err <= exact_tol and observed <= tol
    return OracleReport(f"tilted_law[{toy.name}]", observed, tol, passed, details)


# ==================== 条件平均速度 ====================


def _coefficients(t: float, sched: Schedule) -> tuple[float, float, float, float]:
    tt = np.float64(t)
    a, s = float(sched.alpha(tt)), float(sched.sigma(tt))
    if s <= 0.0:
        raise InputError(f"t={t} 处 σ=0，后验无定义")
    return a, s, float(sched.alpha_dot(tt)), float(sched.sigma_dot(tt))


def posterior(points: np.ndarray, prior: np.ndarray, x_t: np.ndarray, t: float, sched: Schedule) -> np.ndarray:
    """p(x0_j | x_t) ∝ prior_j · N(x_t; α x0_j, σ² I)。"""

    a, s, _, _ = _coefficients(t, sched)
    loglik = norm.logpdf(np.asarray(x_t)[None, :], loc=a * points, scale=s).sum(axis=-1)
    logw = np.log(prior) + loglik
    return np.exp(logw - logsumexp(logw))


def conditional_targets(points: np.ndarray, x_t: np.ndarray, t: float, sched: Schedule) -> np.ndarray:
    """每个支撑点在 x_t 处的前向速度 v_j = α̇ x0_j + σ̇ ε_j，ε_j = (x_t − α x0_j)/σ。"""

    a, s, a_dot, s_dot = _coefficients(t, sched)
    eps = (np.asarray(x_t)[None, :] - a * points) / s
    return a_dot * points + s_dot * eps


def tilted_velocity(support: VelocitySupport, x_t: np.ndarray, t: float, sched: Schedule) -> np.ndarray:
    """v⁺(x_t, t) = Σ_j p⁺(x0_j | x_t)·v_j，p⁺ 来自倾斜先验 r·π_θ。"""

    prior = tilt(support.pi_theta, support.ratio)
    q = posterior(support.points, prior, x_t, t, sched)
    return q @ conditional_targets(support.points, x_t, t, sched)


def tilted_marginal(support: VelocitySupport, x_t: np.ndarray, t: float, sched: Schedule) -> float:
    """倾斜后的加噪边缘密度 π⁺_t(x_t) = Σ_j π⁺_j N(x_t; α x0_j, σ² I)。"""

    a, s, _, _ = _coefficients(t, sched)
    prior = tilt(support.pi_theta, support.ratio)
    loglik = norm.logpdf(np.asarray(x_t)[None, :], loc=a * support.points, scale=s).sum(axis=-1)
    return float(np.exp(logsumexp(np.log(prior) + loglik)))


def grid_points(support: VelocitySupport) -> list[tuple[np.ndarray, float]]:
    return [(np.full(support.dim, x), float(t)) for t in support.grid_t for x in support.grid_x]


def nft_weights(support: VelocitySupport) -> np.ndarray:
    """w_j = ½(1 + r_j / max r)：2w−1 ∝ r，带符号 FM 的不动点恰为倾斜条件速度。"""

    r = support.ratio
    return 0.5 * (1.0 + r / r.max())


def train_nft_field(
    support: VelocitySupport,
    sched: Schedule,
    *,
    beta: float = 0.1,
    steps: int = 3000,
    lr: float = 1e-2,
    hidden: int = 64,
    seed: int = 0,
) -> np.ndarray:
    """在网格上训练真实的 VelocityField（K=1、单 prompt），按 π_θ 的精确后验质量做加权 NFT。

    每个网格点 (x_t, t) 展开成 n 行：目标 u_j、权重 w_j、质量 p_θ(j | x_t) / |grid|。
    返回收敛后速度场在网格上的取值，形状 (|grid|, d)。
    """

    pts = grid_points(support)
    n = support.points.shape[0]
    x_grid = np.stack([x for x, _ in pts])
    t_grid = np.array([t for _, t in pts])
    targets, mass = [], []
    for x_t, t in pts:
        targets.append(conditional_targets(support.points, x_t, t, sched))
        mass.append(posterior(support.points, support.pi_theta, x_t, t, sched) / len(pts))
    target = np.concatenate(targets)
    row_mass = np.concatenate(mass)
    row_grid = np.repeat(np.arange(len(pts)), n)
    weights = np.tile(nft_weights(support), len(pts))

    geometry = FieldGeometry(
        n_blocks=1, dim=support.dim, n_prompts=1, hidden=hidden, layers=2, enc_width=1, prompt_width=1
    )
    net = VelocityField(geometry, rng=np.random.default_rng(seed))
    ids = np.zeros(len(pts), dtype=np.int64)
    opt = AdamW(lr, weight_decay=0.0, max_grad_norm=None)

    def on_grid(p: Mapping[str, Node] | None = None) -> Node:
        h = net.history_summary([], len(pts), p)
        return net.velocity(constant(x_grid), t_grid, h, ids, p)

    for s in range(steps):
        opt.lr = _cosine_lr(lr, s, steps)
        p = net.params.leaves()
        loss = nft_from_velocity(take_rows(on_grid(p), row_grid), target, weights, beta, mass=row_mass)
        loss.backward()
        opt.step(net.params, net.params.grads_of(p))
    return on_grid().value.copy()


def verify_conditional_velocity(
    support: VelocitySupport,
    sched: Schedule,
    field_values: np.ndarray,
    *,
    tol: float,
) -> OracleReport:
    pts = grid_points(support)
    field_values = np.asarray(field_values, dtype=np.float64).reshape(len(pts), support.dim)
    brute = np.stack([tilted_velocity(support, x, t, sched) for x, t in pts])
    marginals = np.array([tilted_marginal(support, x, t, sched) for x, t in pts])
    err = np.abs(field_values - brute).max(axis=-1)
    observed = float(err.max())
    return OracleReport(
        f"conditional_velocity[{support.name}]",
        observed,
        tol,
        observed <= tol,
        {"mean_abs_error": float(err.mean()), "min_tilted_marginal": float(marginals.min())},
    )


# ==================== 反向 KL ====================


def kl(p: np.ndarray, q: np.ndarray) -> float:
    return float(rel_entr(p, q).sum())


def reverse_kl_objective(pi: np.ndarray, rho: np.ndarray, pi_old: np.ndarray) -> float:
    """J(π) = E_π[ρ] − KL(π ‖ π_old)。"""

    return float(pi @ rho) - kl(pi, pi_old)


def maximize_on_simplex(objective: Callable[[np.ndarray], float], n: int) -> np.ndarray:
    """在概率单纯形上最大化（softmax 参数化 + BFGS）。"""

    result = minimize(lambda z: -objective(softmax(z)), np.zeros(n), method="BFGS", options={"gtol": 1e-10})
    return softmax(result.x)


def verify_reverse_kl(
    toy: DiscreteToy,
    *,
    tol: float,
    rng: np.random.Generator,
    shift: float = 0.0,
    n_draws: int = 64,
) -> OracleReport:
    """π_old = π_θ、ρ = log(π_T/π_θ) 时 J(π) = −KL(π‖π_T) + 常数，最大值点为 π_T。"""

    rho = toy.log_ratio + shift
    argmax = maximize_on_simplex(lambda pi: reverse_kl_objective(pi, rho, toy.pi_theta), toy.size)
    tv = total_variation(argmax, toy.pi_teacher)
    draws = rng.dirichlet(np.ones(toy.size), size=n_draws)
    gaps = [reverse_kl_objective(pi, rho, toy.pi_theta) + kl(pi, toy.pi_teacher) for pi in draws]
    spread = float(np.max(gaps) - np.min(gaps))
    return OracleReport(
        f"reverse_kl[{toy.name}]",
        tv,
        tol,
        tv <= tol and spread <= 1e-9,
        {"constant_spread": spread, "constant": float(np.mean(gaps))},
    )
