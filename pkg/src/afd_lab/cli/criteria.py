"""桌面实验的验收判据，作用在多种子中位数上。

distillation  AFD 相对基座：切片 Wasserstein 至少降 40%，物理残差至少降 30%，且严格低于 SFT
lr_regimes    判别器学习率扫描：η_D=0 末段 paired_w > 0.7，最大学习率 < 0.3，
              至少一个中间学习率在最后 25% 的步里始终落在 [0.35, 0.65]
disc_loss     BT 判别器的最终物理残差不高于 GAN 判别器

每条判据给出一个或多个 OracleReport，与 verify 的输出格式一致。
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np

from ..errors import InputError
from ..eval.oracles import OracleReport

SW_REDUCTION = 0.4
RESIDUAL_REDUCTION = 0.3
SATURATED = 0.7
SUPPRESSED = 0.3
BALANCED = (0.35, 0.65)


def _value(summary: Mapping, key: str, who: str) -> float:
    value = summary["median"].get(key)
    if value is None:
        raise InputError(f"{who} 的中位数汇总缺少 {key}")
    return float(value)


def check_distillation(afd: Mapping, base: Mapping, sft: Mapping) -> list[OracleReport]:
    afd_sw = _value(afd, "sliced_wasserstein", "afd")
    base_sw = _value(base, "sliced_wasserstein", "base")
    sft_sw = _value(sft, "sliced_wasserstein", "sft")
    afd_res, base_res = _value(afd, "physics_residual", "afd"), _value(base, "physics_residual", "base")
    sw_gain = 1.0 - afd_sw / base_sw
    res_gain = 1.0 - afd_res / base_res
    return [
        OracleReport(
            "distill_sw_reduction", sw_gain, SW_REDUCTION, sw_gain >= SW_REDUCTION, {"afd": afd_sw, "base": base_sw}
        ),
        OracleReport(
            "distill_residual_reduction",
            res_gain,
            RESIDUAL_REDUCTION,
            res_gain >= RESIDUAL_REDUCTION,
            {"afd": afd_res, "base": base_res},
        ),
        OracleReport("distill_afd_below_sft", afd_sw - sft_sw, 0.0, afd_sw < sft_sw, {"afd": afd_sw, "sft": sft_sw}),
    ]


def _tail(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise InputError("奖励轨迹为空")
    return v[v.size - max(1, v.size // 4) :]


def check_lr_regimes(trajectories: Mapping[float, Sequence[float]]) -> list[OracleReport]:
    """trajectories: η_D → 中位数 paired_w 轨迹（按 step 排好）。"""

    rates = sorted(trajectories)
    if len(rates) < 3 or rates[0] != 0.0:
        raise InputError(f"学习率扫描至少要有 0、一个中间值和一个最大值: {rates}")
    frozen = float(_tail(trajectories[rates[0]]).mean())
    largest = float(_tail(trajectories[rates[-1]]).mean())
    lo, hi = BALANCED
    balanced: dict[float, bool] = {}
    for rate in rates[1:-1]:
        tail = _tail(trajectories[rate])
        balanced[rate] = bool(np.all((tail >= lo) & (tail <= hi)))
    return [
        OracleReport("lr_frozen_saturates", frozen, SATURATED, frozen > SATURATED),
        OracleReport("lr_largest_suppresses", largest, SUPPRESSED, largest < SUPPRESSED, {"rate": rates[-1]}),
        OracleReport(
            "lr_intermediate_balanced",
            float(sum(balanced.values())),
            1.0,
            any(balanced.values()),
            {f"lr_disc={r:g}": float(ok) for r, ok in balanced.items()},
        ),
    ]


def check_disc_loss(bt: Mapping, gan: Mapping) -> list[OracleReport]:
    bt_res, gan_res = _value(bt, "physics_residual", "bt"), _value(gan, "physics_residual", "gan")
    return [
        OracleReport("disc_loss_bt_not_worse", bt_res - gan_res, 0.0, bt_res <= gan_res, {"bt": bt_res, "gan": gan_res})
    ]
