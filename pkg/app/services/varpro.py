import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.errors import DataError
from app.services.basis import AffineMap, BasisFamily, IndexSet, enumerate_indices, fit_affine_map
from app.services.grassmann import Subspace, as_subspace
from app.services.vandermonde import DesignMatrix, build_design, build_design_derivative

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProjectedProblem:
    """样本点 x_i、函数值 f_i、多项式次数与基族"""
    points: np.ndarray
    values: np.ndarray
    degree: int
    family: BasisFamily = BasisFamily.LEGENDRE
    f_norm: float = field(init=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.points, dtype=float))
        f = np.asarray(self.values, dtype=float).ravel()
        if X.shape[0] < 1:
            raise DataError("至少需要一个样本点")
        if X.shape[0] != f.shape[0]:
            raise DataError(f"样本点数 {X.shape[0]} 与函数值个数 {f.shape[0]} 不一致")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(f))):
            raise DataError("样本点或函数值包含非有限数值")
        if self.degree < 0:
            raise DataError(f"多项式次数必须非负: {self.degree}")
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "values", f)
        object.__setattr__(self, "family", BasisFamily(self.family))
        object.__setattr__(self, "f_norm", float(np.linalg.norm(f)))

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]

    def index_set(self, n: int) -> IndexSet:
        return enumerate_indices(n, self.degree)


@dataclass(frozen=True, eq=False)
class VarproState:
    """给定 U 时的内层最小二乘解，V 的一次瘦 SVD 同时服务于系数、残差和 Jacobian"""
    U: Subspace
    design: DesignMatrix
    coefficients: np.ndarray
    residual: np.ndarray
    rank: int
    left: np.ndarray  # 数值值域的左奇异向量 (M x rank)
    singular_values: np.ndarray  # 保留的奇异值
    right_t: np.ndarray  # 保留的右奇异向量转置 (rank x N)

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual))

    @property
    def underdetermined(self) -> bool:
        return self.rank < self.design.values.shape[1]

    @property
    def predictions(self) -> np.ndarray:
        return self.design.values @ self.coefficients

    def project_out(self, Z: np.ndarray) -> np.ndarray:
        """P^⊥ Z = Z - Q (Q^T Z)"""
        return Z - self.left @ (self.left.T @ Z)


@dataclass(frozen=True, eq=False)
class JacobianTensor:
    """残差对 U 的导数，entries[i, j, k] = ∂r_i / ∂U_jk"""
    entries: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        """M x (m n) 矩阵，列按 vec 的列优先顺序 (j 变化最快)"""
        M, m, n = self.entries.shape
        return np.transpose(self.entries, (0, 2, 1)).reshape(M, n * m)

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


def _numerical_rank(s: np.ndarray, shape) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def solve_coefficients(problem: ProjectedProblem, U, affine: Optional[AffineMap] = None) -> VarproState:
    """c = V(U)^+ f，r = f - V c

    affine 为空时根据当前投影重新拟合；交替法内层需要固定仿射变换时显式传入。
    """
    U = as_subspace(U)
    if U.m != problem.m:
        raise DataError(f"子空间行数 {U.m} 与样本维度 {problem.m} 不一致")
    index_set = problem.index_set(U.n)
    if affine is None:
        affine = fit_affine_map(problem.family, problem.points @ U.basis)
    design = build_design(problem.points, U, index_set, problem.family, affine)

    W, s, Zt = np.linalg.svd(design.values, full_matrices=False)
    rank = _numerical_rank(s, design.values.shape)
    Q, s_r, Zt_r = W[:, :rank], s[:rank], Zt[:rank]
    coeff_proj = Q.T @ problem.values
    c = Zt_r.T @ (coeff_proj / s_r)
    # 投影形式的残差比 f - V c 的舍入误差更小
    r = problem.values - Q @ coeff_proj

    if rank < design.values.shape[1]:
        logger.warning(f"设计矩阵秩亏: rank={rank}, N={design.values.shape[1]}, M={problem.M}")
    return VarproState(
        U=U, design=design, coefficients=c, residual=r, rank=rank,
        left=Q, singular_values=s_r, right_t=Zt_r,
    )


def jacobian(problem: ProjectedProblem, state: VarproState) -> JacobianTensor:
    """Golub-Pereyra 公式：J_{.,k,l} = -(P^⊥ ∂V c + (V^+)^T ∂V^T r)

    对每个 l 一次性处理全部 k：∂V/∂U_kl = x[:, k] * D_l，因此
    ∂V c = X * (D_l c)，∂V^T r = D_l^T (X * r)。
    """
    if state.rank == 0:
        raise ValueError("设计矩阵秩为 0，不存在多项式方向")
    X = problem.points
    r = state.residual
    derivative = build_design_derivative(X, state.U, state.design.index_set, problem.family, state.design.affine)

    M, m = X.shape
    n = derivative.n
    J = np.empty((M, m, n))
    Xr = X * r[:, None]
    for ell, D in enumerate(derivative.partials):
        first = state.project_out(X * (D @ state.coefficients)[:, None])
        second = state.left @ ((state.right_t @ (D.T @ Xr)) / state.singular_values[:, None])
        J[:, :, ell] = -(first + second)
    return JacobianTensor(J)


def gradient(jac: JacobianTensor, r: np.ndarray) -> np.ndarray:
    """G = Σ_i J_i r_i，无需显式投影即满足 U^T G = 0"""
    r = np.asarray(r, dtype=float)
    if jac.entries.shape[0] != r.shape[0]:
        raise ValueError(f"Jacobian 行数 {jac.entries.shape[0]} 与残差长度 {r.shape[0]} 不一致")
    return np.einsum("ijk,i->jk", jac.entries, r)
