"""统一异常层级。

所有模块只抛出这里定义的异常，CLI 根据类型映射退出码：
- ConfigurationError / InputError / CheckpointError -> 1
- NumericalError（含 TrainingAborted）-> 2
- 校验失败（VerificationFailed）-> 3
"""

from __future__ import annotations


class AFDError(Exception):
    """afd-lab 所有异常的基类。"""


class ConfigurationError(AFDError, ValueError):
    """配置或形状不合法（包括运算形状不匹配）。"""


class InputError(AFDError, ValueError):
    """调用参数不合法（越界的 t、未知 prompt、空 batch 等）。"""


class NumericalError(AFDError, ArithmeticError):
    """出现非有限数值。

    tag 标识出错位置：算子名、Euler 步或训练阶段。
    """

    def __init__(self, message: str, *, tag: str = "") -> None:
        super().__init__(f"[{tag}] {message}" if tag else message)
        self.tag = tag


class CapabilityError(AFDError, TypeError):
    """请求了对象不具备的能力（例如向非 oracle 教师索要密度）。"""


class CheckpointError(AFDError, RuntimeError):
    """检查点版本或几何结构不匹配。"""


class TrainingAborted(NumericalError):
    """训练因非有限数值中止；phase 为出错阶段。"""

    def __init__(self, message: str, *, phase: str, step: int) -> None:
        super().__init__(f"step={step} phase={phase}: {message}", tag=phase)
        self.phase = phase
        self.step = step


class VerificationFailed(AFDError):
    """oracle 校验套件存在失败项。"""
