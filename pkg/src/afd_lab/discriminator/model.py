"""提示条件判别器 D_φ(x_0, y)。

结构：与学生相同的逐块仿射编码器（同结构、独立参数）→ 激活 → K 段拼接 ⊕ prompt 嵌入 → MLP → 标量 logit。
输出层默认随机初始化；zero_init=True 时输出层为 0，初始 logit 恒为 0（所有样本权重 0.5）。
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from ..autodiff.engine import Node, concat, constant, take_rows
from ..autodiff.nn import ACTIVATIONS, MLP, Affine
from ..autodiff.params import ParamStore
from ..errors import CheckpointError, ConfigurationError, InputError
from ..student.video import VideoBatch

Params = Mapping[str, Node] | None


@dataclass(frozen=True, slots=True)
class DiscGeometry:
    n_blocks: int = 8
    dim: int = 2
    n_prompts: int = 8
    enc_width: int = 16
    prompt_width: int = 8
    hidden: int = 128
    layers: int = 2
    activation: str = "silu"

    def __post_init__(self) -> None:
        for name in ("n_blocks", "dim", "n_prompts", "enc_width", "prompt_width", "hidden", "layers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"discriminator.{name} 必须 >= 1")

    def to_header(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_header(cls, header: Mapping[str, Any]) -> DiscGeometry:
        try:
            return cls(**dict(header))
        except TypeError as exc:
            raise CheckpointError(f"判别器几何信息无法解析: {exc}") from exc


class Discriminator:
    def __init__(
        self,
        geometry: DiscGeometry,
        params: ParamStore | None = None,
        *,
        prefix: str = "d",
        rng: np.random.Generator | None = None,
        zero_init: bool = False,
    ) -> None:
        self.geometry = geometry
        self.prefix = prefix
        g = geometry
        self.encoder = Affine(f"{prefix}.enc", g.dim, g.enc_width)
        self.mlp = MLP.build(
            f"{prefix}.mlp", g.n_blocks * g.enc_width + g.prompt_width, g.hidden, g.layers, 1, g.activation
        )
        self._prompt = f"{prefix}.prompt"
        if params is None:
            params = ParamStore()
            rng = rng or np.random.default_rng(1)
            self.encoder.init(params, rng)
            params.add(self._prompt, rng.normal(0.0, 0.5, (g.n_prompts, g.prompt_width)))
            self.mlp.init(params, rng, zero_last=zero_init)
        self._params = params

    @property
    def params(self) -> ParamStore:
        return self._params

    def score_blocks(self, blocks: Sequence[Node], prompt_ids: np.ndarray, p: Params = None) -> Node:
        """blocks: K 个 (B, d) 节点 → (B,) logit。"""

        q = self._params.constants() if p is None else p
        if len(blocks) != self.geometry.n_blocks:
            raise InputError(f"判别器需要 {self.geometry.n_blocks} 个块，收到 {len(blocks)}")
        act = ACTIVATIONS[self.geometry.activation]
        encs = [act(self.encoder(q, b)) for b in blocks]
        pe = take_rows(q[self._prompt], prompt_ids)
        out = self.mlp(q, concat([*encs, pe], axis=-1))
        return out[:, 0]

    def score(self, videos: VideoBatch, p: Params = None) -> Node:
        blocks = [constant(videos.blocks[:, k]) for k in range(videos.n_blocks)]
        return self.score_blocks(blocks, videos.prompt_ids, p)

    def log_ratio(self, videos: VideoBatch) -> np.ndarray:
        """ρ_φ：原始 logit，最优时等于 log(π_T/π_θ)（相差一个与 prompt 有关的常数）。"""

        return self.score(videos).value.copy()
