"""奖励尺度跟踪 - 全局标准差 + 按 prompt 追踪

这个模块的作用:
1. 为每个 prompt 维护优势值 A 的二阶矩滑动估计(指数衰减 0.99)
2. 同时维护一个全局估计,在某个 prompt 观测数不足时作为回退
3. 给出每个 prompt 当前的尺度 s(y),优势值除以 s(y) 之后再裁剪

为什么用二阶矩而不是方差?
- A 已经减过基线,按构造均值为 0
- E[A²] 的平方根就是标准差,少维护一个均值

回退规则:
- 某 prompt 累计观测数 < warmup(默认 10) 时使用全局尺度
- 全局也没有观测时尺度为 1
- 尺度下限 min_scale,避免全部优势为 0 时除以 0

调用顺序:
- 每个训练步先 observe(本批优势),再 scale(按更新后的统计)
- 学习率为 0 时它仍然更新:这是数据统计,不是可学习参数

使用方式:
```python
stats = RewardNormalizer(decay=0.99, warmup=10)
stats.observe(prompt_ids, raw_advantages)
s = stats.scales(prompt_ids)  # 与 prompt_ids 同形状
```

状态可序列化为 JSON(to_state / from_state),断点续训逐位一致。
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from ..errors import CheckpointError, ConfigurationError


@dataclass
class MomentState:
    """单个作用域(某个 prompt 或全局)的二阶矩估计。"""

    # E[A²] 的指数滑动估计
    second_moment: float = 0.0

    # 累计观测到的样本数
    count: int = 0

    def update(self, value: float, n: int, decay: float) -> None:
        if self.count == 0:
            self.second_moment = value
        else:
            self.second_moment = decay * self.second_moment + (1.0 - decay) * value
        self.count += n


class RewardNormalizer:
    """按 prompt 跟踪优势尺度,观测不足时回退到全局。"""

    def __init__(self, *, decay: float = 0.99, warmup: int = 10, min_scale: float = 1e-6) -> None:
        if not 0.0 <= decay < 1.0:
            raise ConfigurationError(f"normalizer decay 必须位于 [0, 1): {decay}")
        if warmup < 0:
            raise ConfigurationError(f"normalizer warmup 必须 >= 0: {warmup}")
        self.decay = decay
        self.warmup = warmup
        self.min_scale = min_scale
        self.global_state = MomentState()
        self._per_prompt: dict[int, MomentState] = {}

    def observe(self, prompt_ids: np.ndarray, advantages: np.ndarray) -> None:
        ids = np.asarray(prompt_ids, dtype=np.int64)
        adv = np.asarray(advantages, dtype=np.float64)
        if ids.shape != adv.shape or ids.size == 0:
            return
        sq = adv * adv
        self.global_state.update(float(np.mean(sq)), int(sq.size), self.decay)
        # 按 prompt 升序更新,保证与批内顺序无关
        for y in np.unique(ids):
            mask = ids == y
            state = self._per_prompt.setdefault(int(y), MomentState())
            state.update(float(np.mean(sq[mask])), int(mask.sum()), self.decay)

    def scale(self, prompt: int) -> float:
        state = self._per_prompt.get(int(prompt))
        if state is None or state.count < self.warmup:
            state = self.global_state
        if state.count == 0:
            return 1.0
        return max(float(np.sqrt(state.second_moment)), self.min_scale)

    def scales(self, prompt_ids: np.ndarray) -> np.ndarray:
        return np.array([self.scale(int(y)) for y in np.asarray(prompt_ids)], dtype=np.float64)

    def tracked(self) -> dict[int, MomentState]:
        return dict(self._per_prompt)

    # ---------- 序列化 ----------

    def to_state(self) -> dict[str, Any]:
        return {
            "decay": self.decay,
            "warmup": self.warmup,
            "min_scale": self.min_scale,
            "global": asdict(self.global_state),
            "per_prompt": {str(k): asdict(v) for k, v in sorted(self._per_prompt.items())},
        }

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> RewardNormalizer:
        try:
            out = cls(decay=state["decay"], warmup=state["warmup"], min_scale=state["min_scale"])
            out.global_state = MomentState(**state["global"])
            out._per_prompt = {int(k): MomentState(**v) for k, v in state["per_prompt"].items()}
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"奖励统计状态无法解析: {exc}") from exc
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RewardNormalizer):
            return NotImplemented
        return self.to_state() == other.to_state()

    __hash__ = None  # type: ignore[assignment]
