"""小型网络积木：Affine 与 MLP。

参数统一登记在 ParamStore 中，网络对象本身只记录前缀与尺寸，
前向时从传入的 `p: Mapping[str, Node]` 取参数（叶子或常量）。
"""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .engine import Node, silu, tanh
from .params import ParamStore

ACTIVATIONS: dict[str, Callable[[Node], Node]] = {"silu": silu, "tanh": tanh}


@dataclass(frozen=True, slots=True)
class Affine:
    """y = x W + b。"""

    prefix: str
    n_in: int
    n_out: int

    def init(self, store: ParamStore, rng: np.random.Generator, *, zero: bool = False) -> None:
        scale = 0.0 if zero else np.sqrt(1.0 / self.n_in)
        store.add(f"{self.prefix}.w", rng.normal(0.0, 1.0, (self.n_in, self.n_out)) * scale)
        store.add(f"{self.prefix}.b", np.zeros(self.n_out))

    def __call__(self, p: Mapping[str, Node], x: Node) -> Node:
        return x @ p[f"{self.prefix}.w"] + p[f"{self.prefix}.b"]


@dataclass(frozen=True, slots=True)
class MLP:
    """全连接网络：sizes=[in, h1, ..., out]，隐藏层使用 activation。

    zero_last=True 时输出层初始化为 0（判别器初始 logit 恒为 0）。
    """

    prefix: str
    sizes: tuple[int, ...]
    activation: str = "silu"

    @classmethod
    def build(
        cls,
        prefix: str,
        n_in: int,
        hidden: int,
        layers: int,
        n_out: int,
        activation: str = "silu",
    ) -> MLP:
        return cls(prefix, (n_in, *([hidden] * layers), n_out), activation)

    @property
    def layers(self) -> Sequence[Affine]:
        return [
            Affine(f"{self.prefix}.l{i}", a, b)
            for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:], strict=True))
        ]

    def init(self, store: ParamStore, rng: np.random.Generator, *, zero_last: bool = False) -> None:
        layers = self.layers
        for i, layer in enumerate(layers):
            layer.init(store, rng, zero=zero_last and i == len(layers) - 1)

    def __call__(self, p: Mapping[str, Node], x: Node) -> Node:
        act = ACTIVATIONS[self.activation]
        layers = self.layers
        h = x
        for i, layer in enumerate(layers):
            h = layer(p, h)
            if i < len(layers) - 1:
                h = act(h)
        return h
