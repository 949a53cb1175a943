"""路径辅助模块 - 统一管理项目路径

这个模块的作用:
1. 提供可靠的项目根目录定位功能
2. 提供 assets 资源目录(oracle 实例数据文件)的访问路径
3. 提供 configs 目录(随仓库发布的运行配置)的访问路径

为什么需要这个模块?
- CLI 可能从任意工作目录启动,相对路径容易指错
- oracle 校验依赖随仓库发布的离散玩具实例(assets/oracles/*.toml)
- 测试与命令行需要同一种方式找到这些文件

关键概念:
- 项目根目录: 包含 pyproject.toml 的那一层目录
- @lru_cache: 只查找一次文件系统,之后直接返回缓存
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path


@lru_cache(maxsize=1)
def project_root() -> Path:
    """返回项目根目录路径(以 pyproject.toml 文件为定位锚点)

    查找策略:
    1. 从当前文件(paths.py)的位置开始
    2. 逐级向上遍历父目录
    3. 找到包含 pyproject.toml 的目录就返回
    4. 找不到时按默认目录结构回退: project_root/src/afd_lab/paths.py

    Returns:
        Path: 项目根目录的绝对路径
    """

    here = Path(__file__).resolve()
    for parent in (here, *here.parents):
        if (parent / "pyproject.toml").exists():
            return parent

    # 兜底: parents[0]=afd_lab, parents[1]=src, parents[2]=project_root
    return here.parents[2]


def assets_dir() -> Path:
    """返回 assets 资源目录路径(不检查是否存在)。"""

    return project_root() / "assets"


def oracle_dir() -> Path:
    """返回 oracle 实例数据目录: assets/oracles

    目录内容:
    - discrete_toys.toml: 有限支撑上的 π_θ / π_T 概率表
    - velocity_supports.toml: 条件平均速度校验用的 x0 支撑点与倾斜权重
    """

    return assets_dir() / "oracles"


def configs_dir() -> Path:
    """返回随仓库发布的运行配置目录: configs"""

    return project_root() / "configs"
