import logging
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from app.errors import SubspaceError
from app.services.basis import AffineMap, BasisFamily, IndexSet, vander_1d, vander_1d_deriv

logger = logging.getLogger(__name__)


def _as_basis(U) -> np.ndarray:
    return np.asarray(getattr(U, "basis", U), dtype=float)


def _check_dimensions(points: np.ndarray, U: np.ndarray, index_set: IndexSet, affine: AffineMap):
    if points.ndim != 2 or points.shape[0] < 1:
        raise SubspaceError(f"样本点必须是 M x m 矩阵且 M >= 1，实际形状 {points.shape}")
    if points.shape[1] != U.shape[0]:
        raise SubspaceError(f"样本维度 {points.shape[1]} 与子空间行数 {U.shape[0]} 不一致")
    if U.shape[1] != index_set.n or affine.n != index_set.n:
        raise SubspaceError(
            f"子空间维度 {U.shape[1]}、指标集维度 {index_set.n}、仿射维度 {affine.n} 不一致"
        )


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """V(U)，[V]_ij = ψ_j(η(U^T x_i))"""
    values: np.ndarray
    index_set: IndexSet
    family: BasisFamily
    affine: AffineMap

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class DesignDerivative:
    """∂V/∂[U]_kl 的按需切片

    只保存 n 个 M x N 矩阵 D_l = d_l φ'(η_l) ∏_{q≠l} φ(η_q)，切片 (k, l) 为 x[:, k] * D_l，
    这样峰值内存为 O(M (N + n))，由调用方逐片取用。
    """
    points: np.ndarray
    partials: Tuple[np.ndarray, ...]

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return len(self.partials)

    def slice(self, k: int, ell: int) -> np.ndarray:
        return self.points[:, k, None] * self.partials[ell]

    def iter_slices(self) -> Iterator[Tuple[int, int, np.ndarray]]:
        for ell in range(self.n):
            for k in range(self.m):
                yield k, ell, self.slice(k, ell)


def _coordinate_tables(points, U, index_set, family, affine, with_deriv: bool):
    Z = affine.apply(points @ U)
    values: List[np.ndarray] = []
    derivs: List[np.ndarray] = []
    for ell in range(index_set.n):
        table = vander_1d(family, Z[:, ell], index_set.p)
        values.append(table)
        if with_deriv:
            derivs.append(vander_1d_deriv(family, Z[:, ell], index_set.p, values=table))
    return values, derivs


def build_design(points, U, index_set: IndexSet, family: BasisFamily, affine: AffineMap) -> DesignMatrix:
    """构造 Vandermonde 型矩阵 V(U)"""
    points = np.asarray(points, dtype=float)
    basis = _as_basis(U)
    _check_dimensions(points, basis, index_set, affine)

    alpha = index_set.as_array()
    values, _ = _coordinate_tables(points, basis, index_set, family, affine, with_deriv=False)
    V = np.ones((points.shape[0], len(index_set)))
    for ell, table in enumerate(values):
        V *= table[:, alpha[:, ell]]
    return DesignMatrix(values=V, index_set=index_set, family=BasisFamily(family), affine=affine)


def build_design_derivative(points, U, index_set: IndexSet, family: BasisFamily, affine: AffineMap) -> DesignDerivative:
    """构造 ∂V/∂U，仿射变换视为常数（不对 a, d 求导）"""
    points = np.asarray(points, dtype=float)
    basis = _as_basis(U)
    _check_dimensions(points, basis, index_set, affine)

    alpha = index_set.as_array()
    values, derivs = _coordinate_tables(points, basis, index_set, family, affine, with_deriv=True)
    columns = [table[:, alpha[:, ell]] for ell, table in enumerate(values)]

    partials = []
    for ell in range(index_set.n):
        D = affine.d[ell] * derivs[ell][:, alpha[:, ell]]
        for q, col in enumerate(columns):
            if q != ell:
                D = D * col
        partials.append(D)
    return DesignDerivative(points=points, partials=tuple(partials))


def condition_number(design) -> float:
    """最大与最小奇异值之比，最小奇异值为 0 时返回 inf"""
    V = np.asarray(getattr(design, "values", design), dtype=float)
    M, N = V.shape
    if M < N:
        raise ValueError(f"欠定设计矩阵 ({M} x {N}) 的条件数未定义")
    s = np.linalg.svd(V, compute_uv=False)
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])
