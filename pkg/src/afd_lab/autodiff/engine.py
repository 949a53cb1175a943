"""反向模式自动微分核心：Node 与算子。

设计要点：
- 每个训练步重新建图（不复用持久图），叶子节点由 ParamStore.leaves() 生成
- 全程 float64；每个算子在前向计算后检查有限性，非有限时抛 NumericalError(tag=算子名)
- 不需要梯度的子图不记录父节点：常量路径（采样、评估）几乎没有额外开销
- stop_gradient 返回值相同、但与上游断开的新节点

用法：
```python
w = leaf(np.ones((2, 3)), name="w")
y = sum_(silu(constant(x) @ w))
y.backward()
w.grad  # 与 w.value 同形状
```
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
from scipy.special import expit, log_expit

from ..errors import ConfigurationError, NumericalError

ArrayLike = Any
BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Node:
    """计算图节点：value + 同形状的梯度累加器 + 算子标签 + 父节点。"""

    __slots__ = ("_backward", "grad", "name", "op", "parents", "requires_grad", "value")

    # 让 ndarray @ Node / ndarray * Node 走 Node 的反射运算
    __array_ufunc__ = None

    def __init__(
        self,
        value: np.ndarray,
        *,
        op: str = "const",
        parents: tuple[Node, ...] = (),
        backward: BackwardFn | None = None,
        requires_grad: bool = False,
        name: str = "",
    ) -> None:
        self.value = value
        self.op = op
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray = np.zeros_like(value)

    # ---------- 基本属性 ----------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"<Node{tag} op={self.op} shape={self.shape} grad={self.requires_grad}>"

    # ---------- 反向传播 ----------

    def backward(self) -> None:
        """从标量节点出发做一次反向传播，梯度累加到各节点的 grad。"""

        if self.value.size != 1:
            raise ConfigurationError(f"backward 需要标量输出，当前形状 {self.shape}")
        if not self.requires_grad:
            return
        order = _topological_order(self)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is None:
                continue
            for parent, g in zip(node.parents, node._backward(node.grad), strict=True):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = parent.grad + _unbroadcast(g, parent.value.shape)

    # ---------- 运算符 ----------

    def __add__(self, other: ArrayLike) -> Node:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Node:
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> Node:
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> Node:
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> Node:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Node:
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> Node:
        return div(self, other)

    def __neg__(self) -> Node:
        return neg(self)

    def __matmul__(self, other: ArrayLike) -> Node:
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> Node:
        return matmul(other, self)

    def __getitem__(self, key: Any) -> Node:
        return index(self, key)


# ==================== 构造函数 ====================


def constant(value: ArrayLike) -> Node:
    """不参与求导的常量节点（float64）。"""

    arr = np.asarray(value, dtype=np.float64)
    _check_finite(arr, "const")
    return Node(arr, op="const")


def leaf(value: ArrayLike, name: str = "") -> Node:
    """可求导的叶子节点（参数）。"""

    arr = np.array(value, dtype=np.float64)
    _check_finite(arr, "leaf")
    return Node(arr, op="leaf", requires_grad=True, name=name)


def as_node(x: ArrayLike) -> Node:
    return x if isinstance(x, Node) else constant(x)


def stop_gradient(x: ArrayLike) -> Node:
    """sg(x)：值不变，反向时这条边传播 0。"""

    x = as_node(x)
    return Node(x.value, op="stop_gradient")


# ==================== 内部工具 ====================


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalError("出现非有限数值", tag=op)


def _result(
    value: np.ndarray,
    op: str,
    parents: tuple[Node, ...],
    backward: BackwardFn,
) -> Node:
    _check_finite(value, op)
    if not any(p.requires_grad for p in parents):
        return Node(value, op=op)
    return Node(value, op=op, parents=parents, backward=backward, requires_grad=True)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度求和还原到原始形状。"""

    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(a: Node, b: Node, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ConfigurationError(f"{op}: 形状不兼容 {a.shape} vs {b.shape}") from exc


def _topological_order(root: Node) -> list[Node]:
    # 迭代式后序遍历；Euler 展开的生成器图可能很深，避免递归
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node.parents if p.requires_grad and id(p) not in visited)
    return order


# ==================== 逐元素二元算子 ====================


def add(a: ArrayLike, b: ArrayLike) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_check(a, b, "add")
    return _result(a.value + b.value, "add", (a, b), lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_check(a, b, "sub")
    return _result(a.value - b.value, "sub", (a, b), lambda g: (g, -g))


def mul(a: ArrayLike, b: ArrayLike) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_check(a, b, "mul")
    av, bv = a.value, b.value
    return _result(av * bv, "mul", (a, b), lambda g: (g * bv, g * av))


def div(a: ArrayLike, b: ArrayLike) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_check(a, b, "div")
    av, bv = a.value, b.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av / bv
    return _result(out, "div", (a, b), lambda g: (g / bv, -g * av / (bv * bv)))


def neg(a: ArrayLike) -> Node:
    a = as_node(a)
    return _result(-a.value, "neg", (a,), lambda g: (-g,))


def matmul(a: ArrayLike, b: ArrayLike) -> Node:
    """a @ b，其中 b 为二维矩阵，a 可为 (..., n)。"""

    a, b = as_node(a), as_node(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ConfigurationError(f"matmul: 形状不兼容 {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = g @ bv.T
        gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, bv.shape[1])
        return ga, gb

    return _result(av @ bv, "matmul", (a, b), backward)


# ==================== 逐元素一元算子 ====================


def tanh(x: ArrayLike) -> Node:
    x = as_node(x)
    y = np.tanh(x.value)
    return _result(y, "tanh", (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: ArrayLike) -> Node:
    x = as_node(x)
    s = expit(x.value)
    return _result(s, "sigmoid", (x,), lambda g: (g * s * (1.0 - s),))


def silu(x: ArrayLike) -> Node:
    x = as_node(x)
    xv = x.value
    s = expit(xv)
    return _result(xv * s, "silu", (x,), lambda g: (g * s * (1.0 + xv * (1.0 - s)),))


def log(x: ArrayLike) -> Node:
    x = as_node(x)
    xv = x.value
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(xv)
    return _result(y, "log", (x,), lambda g: (g / xv,))


def log_sigmoid(x: ArrayLike) -> Node:
    """数值稳定的 log σ(x)。"""

    x = as_node(x)
    xv = x.value
    return _result(log_expit(xv), "log_sigmoid", (x,), lambda g: (g * expit(-xv),))


def exp(x: ArrayLike) -> Node:
    x = as_node(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.value)
    return _result(y, "exp", (x,), lambda g: (g * y,))


def square(x: ArrayLike) -> Node:
    x = as_node(x)
    xv = x.value
    return _result(xv * xv, "square", (x,), lambda g: (2.0 * g * xv,))


# ==================== 归约 / 结构算子 ====================


def sum_(x: ArrayLike, axis: int | None = None) -> Node:
    x = as_node(x)
    shape = x.shape

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result(np.sum(x.value, axis=axis), "sum", (x,), backward)


def mean(x: ArrayLike, axis: int | None = None) -> Node:
    x = as_node(x)
    count = x.value.size if axis is None else x.shape[axis]
    if count == 0:
        raise ConfigurationError("mean: 空数组")
    return sum_(x, axis=axis) * (1.0 / count)


def sq_norm(x: ArrayLike, axis: int = -1) -> Node:
    """沿 axis 的平方范数 ‖x‖²。"""

    x = as_node(x)
    xv = x.value
    return _result(
        np.sum(xv * xv, axis=axis),
        "sq_norm",
        (x,),
        lambda g: (2.0 * np.expand_dims(g, axis) * xv,),
    )


def concat(nodes: Sequence[ArrayLike], axis: int = -1) -> Node:
    parts = [as_node(n) for n in nodes]
    if not parts:
        raise ConfigurationError("concat: 空输入")
    try:
        value = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError as exc:
        shapes = [p.shape for p in parts]
        raise ConfigurationError(f"concat: 形状不兼容 {shapes}") from exc
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, cuts, axis=axis)

    return _result(value, "concat", tuple(parts), backward)


def take_rows(table: ArrayLike, idx: np.ndarray) -> Node:
    """按整数下标取行（embedding lookup）。"""

    table = as_node(table)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ConfigurationError(f"take_rows: 下标越界 (行数 {table.shape[0]})")
    shape = table.shape

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        gt = np.zeros(shape, dtype=np.float64)
        np.add.at(gt, idx, g)
        return (gt,)

    return _result(table.value[idx], "take_rows", (table,), backward)


def index(x: ArrayLike, key: Any) -> Node:
    x = as_node(x)
    shape = x.shape

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        gx = np.zeros(shape, dtype=np.float64)
        np.add.at(gx, key, g)
        return (gx,)

    return _result(np.array(x.value[key]), "index", (x,), backward)


def reshape(x: ArrayLike, shape: tuple[int, ...]) -> Node:
    x = as_node(x)
    src = x.shape
    try:
        value = x.value.reshape(shape)
    except ValueError as exc:
        raise ConfigurationError(f"reshape: {src} -> {shape}") from exc
    return _result(value, "reshape", (x,), lambda g: (g.reshape(src),))
