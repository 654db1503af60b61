"""
ridge-varpro 版本信息
"""

__version__ = "1.1.0"
__version_info__ = (1, 1, 0)
__author__ = "ridge-varpro Team"
__description__ = "变量投影 + Grassmann Gauss-Newton 的多项式 ridge 近似工具"

# 版本历史
VERSION_HISTORY = {
    "1.1.0": "2024-03-02 - 交替法基线、实验复现（收敛/计时/全局最小/条件数/子空间恢复/toy）",
    "1.0.0": "2024-02-01 - 初始版本发布：fit / predict / shadow 命令"
}

def get_version():
    """获取当前版本号"""
    return __version__
