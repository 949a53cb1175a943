"""参数仓库 ParamStore：具名扁平数组 + 形状元数据 + 检查点序列化。

约定：
- 名字唯一，创建后形状不可变（set 时校验）
- 所有参数保持有限
- 每个训练步通过 leaves() 生成一批新的叶子节点，反向后用 grads_of() 取梯度

检查点格式（npz，逐位无损）：
- `__meta__`: JSON 字符串（format/version/名字列表/调用方附带的 header）
- 每个参数一项，键为参数名
"""

from __future__ import annotations

import json
from collections.abc import Iterator, Mapping
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import CheckpointError, ConfigurationError, NumericalError
from .engine import Node, constant, leaf

PARAMS_FORMAT = "afd-lab/params"
PARAMS_VERSION = 1


class ParamStore:
    """具名参数集合（θ、φ、θ̄ 与冻结的参考参数都存放在这里）。"""

    def __init__(self) -> None:
        self._arrays: dict[str, np.ndarray] = {}

    # ---------- 构建与访问 ----------

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._arrays:
            raise ConfigurationError(f"参数名重复: {name}")
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"参数 {name} 含非有限值", tag="param")
        self._arrays[name] = arr

    def get(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def set(self, name: str, value: np.ndarray) -> None:
        current = self._arrays[name]
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != current.shape:
            raise ConfigurationError(f"参数 {name} 形状不可变: {current.shape} -> {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"参数 {name} 含非有限值", tag="param")
        self._arrays[name] = arr.copy()

    def names(self) -> list[str]:
        return list(self._arrays)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._arrays.items()}

    @property
    def count(self) -> int:
        return int(sum(v.size for v in self._arrays.values()))

    def __contains__(self, name: object) -> bool:
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._arrays.items())

    # ---------- 计算图接口 ----------

    def leaves(self) -> dict[str, Node]:
        """为每个参数生成可求导叶子（每步新建）。"""

        return {k: leaf(v, name=k) for k, v in self._arrays.items()}

    def constants(self) -> dict[str, Node]:
        """为每个参数生成常量节点（采样 / 评估 / 数值差分时使用）。"""

        return {k: constant(v) for k, v in self._arrays.items()}

    @staticmethod
    def grads_of(leaves: Mapping[str, Node]) -> dict[str, np.ndarray]:
        return {k: n.grad for k, n in leaves.items()}

    # ---------- 拷贝 / 比较 ----------

    def copy(self) -> ParamStore:
        out = ParamStore()
        for k, v in self._arrays.items():
            out._arrays[k] = v.copy()
        return out

    def equals(self, other: ParamStore) -> bool:
        """逐位相等（包括名字与形状）。"""

        if self.shapes() != other.shapes():
            return False
        return all(np.array_equal(v, other.get(k)) for k, v in self._arrays.items())

    def flat(self) -> np.ndarray:
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._arrays.values()])

    def _check_same_layout(self, other: ParamStore) -> None:
        if self.shapes() != other.shapes():
            raise ConfigurationError("参数布局不一致（名字或形状不同）")

    # ---------- 序列化 ----------

    def to_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}{k}": v for k, v in self._arrays.items()}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], prefix: str = "") -> ParamStore:
        store = cls()
        for key, value in arrays.items():
            if key.startswith(prefix) and key != "__meta__":
                store.add(key[len(prefix) :], value)
        return store

    def save(self, path: Path, header: Mapping[str, Any] | None = None) -> None:
        """保存为 npz；header 用于记录几何结构等元数据。"""

        meta = {
            "format": PARAMS_FORMAT,
            "version": PARAMS_VERSION,
            "names": self.names(),
            "header": dict(header or {}),
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self._arrays)

    @classmethod
    def load(cls, path: Path) -> tuple[ParamStore, dict[str, Any]]:
        """读取 npz，返回 (store, header)；版本不符抛 CheckpointError。"""

        if not path.exists():
            raise CheckpointError(f"检查点不存在: {path}")
        with np.load(path, allow_pickle=False) as data:
            if "__meta__" not in data.files:
                raise CheckpointError(f"缺少元数据: {path}")
            meta = json.loads(str(data["__meta__"]))
            if meta.get("format") != PARAMS_FORMAT or meta.get("version") != PARAMS_VERSION:
                raise CheckpointError(
                    f"参数检查点版本不匹配: {meta.get('format')} v{meta.get('version')}"
                )
            store = cls()
            for name in meta["names"]:
                store.add(name, data[name])
        return store, dict(meta.get("header", {}))
