# 异常类型定义，命令层根据类型映射退出码

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER_FAILURE = 2


class RidgeError(Exception):
    """所有业务异常的基类"""
    exit_code = EXIT_USAGE


class UsageError(RidgeError, ValueError):
    """命令行参数错误"""


class DataError(RidgeError, ValueError):
    """输入数据（CSV / 模型文件）格式错误"""


class FeasibilityError(RidgeError, ValueError):
    """多项式次数与子空间维度组合不可行（p=1 时只能 n=1）"""


class SubspaceError(RidgeError, ValueError):
    """子空间基不满足正交性或维度约束"""


class ExperimentError(RidgeError, ValueError):
    """未知的实验名称或实验配置错误"""
