"""因果自回归速度场 f_θ(x_t, t, h_k, y)。

网络输入为四段拼接：
    x_t (d) ⊕ t 的正弦嵌入 (t_embed) ⊕ 历史摘要 h_k (2·enc) ⊕ prompt 嵌入 (prompt_width)
输出为 d 维速度。

历史摘要：对每个已生成的干净块做仿射编码 E(x)，
    h_k = [mean_{j<k} E(x^(j)), E(x^(k-1))]
空历史（k=0）映射到一个可学习的起始向量。第二段只看最后一块，所以摘要对块顺序敏感。
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..autodiff.engine import Node, concat, constant, take_rows
from ..autodiff.nn import MLP, Affine
from ..autodiff.params import ParamStore
from ..errors import CheckpointError, ConfigurationError
from ..flow.path import NoisedStates

Params = Mapping[str, Node] | None


@dataclass(frozen=True, slots=True)
class FieldGeometry:
    n_blocks: int = 8
    dim: int = 2
    n_prompts: int = 8
    hidden: int = 128
    layers: int = 3
    t_embed: int = 16
    enc_width: int = 16
    prompt_width: int = 8
    activation: str = "silu"

    def __post_init__(self) -> None:
        for name in ("n_blocks", "dim", "n_prompts", "hidden", "layers", "enc_width", "prompt_width"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"student.{name} 必须 >= 1")
        if self.t_embed < 2 or self.t_embed % 2:
            raise ConfigurationError(f"student.t_embed 必须是 >= 2 的偶数: {self.t_embed}")

    @property
    def summary_width(self) -> int:
        return 2 * self.enc_width

    def to_header(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_header(cls, header: Mapping[str, Any]) -> FieldGeometry:
        try:
            return cls(**dict(header))
        except TypeError as exc:
            raise CheckpointError(f"检查点几何信息无法解析: {exc}") from exc


def sinusoidal_embedding(t: np.ndarray, width: int) -> np.ndarray:
    """(N,) -> (N, width)：[sin(t·f_i), cos(t·f_i)]，频率在 [1, 1000] 上按对数均匀分布。"""

    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    freqs = np.exp(np.linspace(0.0, np.log(1000.0), width // 2))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


class VelocityField:
    """学生速度场；参数全部存放在 ParamStore 中，前缀默认 "f"。"""

    def __init__(
        self,
        geometry: FieldGeometry,
        params: ParamStore | None = None,
        *,
        prefix: str = "f",
        rng: np.random.Generator | None = None,
    ) -> None:
        self.geometry = geometry
        self.prefix = prefix
        self.dim = geometry.dim
        self.encoder = Affine(f"{prefix}.enc", geometry.dim, geometry.enc_width)
        n_in = geometry.dim + geometry.t_embed + geometry.summary_width + geometry.prompt_width
        self.mlp = MLP.build(
            f"{prefix}.mlp", n_in, geometry.hidden, geometry.layers, geometry.dim, geometry.activation
        )
        self._start = f"{prefix}.start"
        self._prompt = f"{prefix}.prompt"
        if params is None:
            params = ParamStore()
            self._init(params, rng or np.random.default_rng(0))
        self._params = params

    def _init(self, store: ParamStore, rng: np.random.Generator) -> None:
        g = self.geometry
        self.encoder.init(store, rng)
        store.add(self._start, np.zeros(g.summary_width))
        store.add(self._prompt, rng.normal(0.0, 0.5, (g.n_prompts, g.prompt_width)))
        self.mlp.init(store, rng)

    @property
    def params(self) -> ParamStore:
        return self._params

    def with_params(self, params: ParamStore) -> VelocityField:
        """同几何、换一套参数（EMA 快照 / 冻结参考场）。"""

        if params.shapes() != self._params.shapes():
            raise ConfigurationError("参数布局与速度场几何不一致")
        return VelocityField(self.geometry, params, prefix=self.prefix)

    def _resolve(self, p: Params) -> Mapping[str, Node]:
        return self._params.constants() if p is None else p

    # ---------- 历史摘要 ----------

    def history_summary(self, prior: Sequence[Node], batch: int, p: Params = None) -> Node:
        """prior: 已生成的块列表，每个形状 (B, d)；返回 (B, 2·enc)。"""

        q = self._resolve(p)
        if not prior:
            return constant(np.ones((batch, 1))) * q[self._start]
        encs = [self.encoder(q, blk) for blk in prior]
        total = encs[0]
        for e in encs[1:]:
            total = total + e
        return concat([total * (1.0 / len(encs)), encs[-1]], axis=-1)

    def summaries(self, contexts: np.ndarray, p: Params = None) -> Node:
        """对 (B, K, d) 的干净上下文给出全部 K 个摘要，k-major 排列为 (K·B, 2·enc)。"""

        q = self._resolve(p)
        B, K, _ = contexts.shape
        out: list[Node] = [self.history_summary([], B, q)]
        running: Node | None = None
        for k in range(1, K):
            e = self.encoder(q, constant(contexts[:, k - 1]))
            running = e if running is None else running + e
            out.append(concat([running * (1.0 / k), e], axis=-1))
        return concat(out, axis=0)

    # ---------- 速度 ----------

    def velocity(
        self,
        x_t: Node,
        t: np.ndarray,
        h: Node,
        prompt_ids: np.ndarray,
        p: Params = None,
    ) -> Node:
        q = self._resolve(p)
        temb = constant(sinusoidal_embedding(t, self.geometry.t_embed))
        pe = take_rows(q[self._prompt], prompt_ids)
        return self.mlp(q, concat([x_t, temb, h, pe], axis=-1))

    def velocity_on(self, states: NoisedStates, p: Params = None) -> Node:
        """在批量加噪状态上求 v_θ，行顺序与 states 一致。"""

        q = self._resolve(p)
        h_all = self.summaries(states.contexts, q)
        rows = states.block_index * states.n_videos + states.video_index
        h = h_all[rows]
        return self.velocity(constant(states.x_t), states.t, h, states.prompt_ids, q)

    # ---------- 检查点 ----------

    def save(self, path: Path, **extra: Any) -> None:
        self._params.save(path, header={"geometry": self.geometry.to_header(), "prefix": self.prefix, **extra})

    @classmethod
    def load(cls, path: Path, expected: FieldGeometry | None = None) -> VelocityField:
        return cls.load_with_header(path, expected)[0]

    @classmethod
    def load_with_header(
        cls, path: Path, expected: FieldGeometry | None = None
    ) -> tuple[VelocityField, dict[str, Any]]:
        store, header = ParamStore.load(path)
        if "geometry" not in header:
            raise CheckpointError(f"{path} 不是速度场检查点（缺少 geometry）")
        geometry = FieldGeometry.from_header(header["geometry"])
        if expected is not None and geometry != expected:
            raise CheckpointError(f"几何不匹配: 检查点 {geometry}，期望 {expected}")
        field = cls(geometry, store, prefix=header.get("prefix", "f"))
        if store.shapes() != cls(geometry, prefix=field.prefix).params.shapes():
            raise CheckpointError(f"{path} 的参数布局与几何不一致")
        return field, header
