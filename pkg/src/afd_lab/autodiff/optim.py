"""AdamW 优化器 + 全局梯度范数裁剪。

默认超参与训练配置表一致：β1=0.9, β2=0.999, ε=1e-8, weight_decay=1e-4, max_grad_norm=1.0。
lr == 0 时整步跳过（参数与矩估计逐位不变），用于冻结判别器 / 学生的对照组。
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from ..errors import ConfigurationError, NumericalError
from .params import ParamStore


class AdamW:
    """解耦权重衰减的 Adam。"""

    def __init__(
        self,
        lr: float,
        *,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
        max_grad_norm: float | None = 1.0,
    ) -> None:
        if lr < 0:
            raise ConfigurationError(f"学习率必须 >= 0: {lr}")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    @staticmethod
    def global_norm(grads: Mapping[str, np.ndarray]) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))

    def step(self, store: ParamStore, grads: Mapping[str, np.ndarray]) -> float:
        """执行一步更新，返回裁剪前的全局梯度范数。"""

        norm = self.global_norm(grads)
        if not np.isfinite(norm):
            raise NumericalError("梯度范数非有限", tag="adamw")
        if self.lr == 0.0:
            return norm

        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)

        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, grad in grads.items():
            g = grad * scale
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None or v is None:
                m = np.zeros_like(g)
                v = np.zeros_like(g)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            p = store.get(name)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps) + self.weight_decay * p
            store.set(name, p - self.lr * update)
        return norm

    # ---------- 检查点 ----------

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}m/{k}": v for k, v in self.m.items()}
        out.update({f"{prefix}v/{k}": v for k, v in self.v.items()})
        out[f"{prefix}t"] = np.array(self.t, dtype=np.int64)
        return out

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray], prefix: str) -> None:
        self.m = {k[len(prefix) + 2 :]: np.array(v) for k, v in arrays.items() if k.startswith(f"{prefix}m/")}
        self.v = {k[len(prefix) + 2 :]: np.array(v) for k, v in arrays.items() if k.startswith(f"{prefix}v/")}
        self.t = int(arrays[f"{prefix}t"])

    def moments_equal(self, other: AdamW) -> bool:
        if self.t != other.t or self.m.keys() != other.m.keys():
            return False
        return all(
            np.array_equal(self.m[k], other.m[k]) and np.array_equal(self.v[k], other.v[k])
            for k in self.m
        )
