# 本文件定义应用中使用的数据模型（配置、拟合报告、模型文件）
# 数值对象（子空间、设计矩阵等）在 services 各模块中用 dataclass 定义

from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

SCHEMA_VERSION = 1


class FitStatus(str, Enum):
    CONVERGED_RESIDUAL = "converged_residual"
    CONVERGED_GRADIENT = "converged_gradient"
    CONVERGED_SUBSPACE = "converged_subspace"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH_FAILURE = "line_search_failure"


class SolverConfig(BaseModel):
    """优化器参数，默认值见 config/config.yaml 的 solver 段"""
    gamma: float = 0.5  # 回溯步长缩减因子
    beta: float = 1e-6  # Armijo 容差
    max_iter: int = Field(default=200, gt=0)
    max_backtracks: int = Field(default=40, gt=0)
    tol_residual_change: float = Field(default=1e-12, ge=0)
    tol_grad: float = Field(default=1e-10, ge=0)  # 实际阈值为 tol_grad * (1 + ||f||)
    tol_subspace: float = Field(default=1e-9, ge=0)  # 弧度
    target_residual: Optional[float] = Field(default=None, ge=0)  # ||r||/||f|| 达到即停止
    angle_criterion: Literal["largest", "smallest"] = "largest"
    step_rank_tol: float = Field(default=1e-12, ge=0)
    seed: Optional[int] = None
    restarts: int = Field(default=1, gt=0)
    workers: int = Field(default=1, gt=0)

    @field_validator("gamma", "beta")
    @classmethod
    def _open_unit_interval(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("必须位于开区间 (0, 1)")
        return value


class IterationRecord(BaseModel):
    iteration: int
    residual_norm: float
    grad_norm: float
    step_t: float
    fell_back_to_gradient: bool = False
    angle_moved: float = 0.0


class FitReport(BaseModel):
    """单次拟合的迭代轨迹与终止状态"""
    solver: str
    status: FitStatus
    iterations: List[IterationRecord] = []
    wall_time: float = 0.0
    restart: int = 0
    seed: Optional[int] = None

    def residual_history(self) -> List[float]:
        return [rec.residual_norm for rec in self.iterations]


class TrainingMetadata(BaseModel):
    M: int
    residual_norm: float
    seed: Optional[int] = None
    solver: str = "gauss-newton"
    status: Optional[str] = None
    target: Optional[str] = None
    feature_names: List[str] = []


class ModelDocument(BaseModel):
    """持久化的 ridge 模型文件，U 按行存储 (m x n)，c 按 graded-lex 指标顺序"""
    schema_version: int = SCHEMA_VERSION
    m: int = Field(gt=0)
    n: int = Field(gt=0)
    p: int = Field(ge=0)
    family: Literal["monomial", "legendre", "hermite"]
    affine_a: List[float]
    affine_d: List[float]
    U: List[List[float]]
    c: List[float]
    training: TrainingMetadata

    @field_validator("schema_version")
    @classmethod
    def _known_version(cls, value: int) -> int:
        if value > SCHEMA_VERSION:
            raise ValueError(f"不支持的模型文件版本: {value}")
        return value
