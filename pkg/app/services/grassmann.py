import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import subspace_angles as _principal_angles

from app.errors import SubspaceError

logger = logging.getLogger(__name__)

# U^T U = I 的容差：小于 ORTHO_TOL 直接接受，介于两者之间重新正交化，超过 REPAIR_TOL 拒绝
ORTHO_TOL = 1e-12
REPAIR_TOL = 1e-8

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


def orthonormality_error(U: np.ndarray) -> float:
    U = np.asarray(U, dtype=float)
    return float(np.max(np.abs(U.T @ U - np.eye(U.shape[1]))))


def _qr_positive(Z: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


@dataclass(frozen=True, eq=False)
class Subspace:
    """Grassmann 流形上的点，用列正交的 m x n 矩阵表示"""
    basis: np.ndarray

    def __post_init__(self):
        U = np.array(self.basis, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if U.ndim != 2:
            raise SubspaceError(f"子空间基必须是二维矩阵，实际维数 {U.ndim}")
        m, n = U.shape
        if not 1 <= n <= m:
            raise SubspaceError(f"需要 1 <= n <= m，实际 m={m}, n={n}")
        if not np.all(np.isfinite(U)):
            raise SubspaceError("子空间基包含非有限数值")

        error = orthonormality_error(U)
        if error > ORTHO_TOL:
            if error >= REPAIR_TOL:
                raise SubspaceError(f"子空间基不是列正交矩阵 (max|U^T U - I| = {error:.3e})")
            logger.debug(f"子空间基正交误差 {error:.3e}，重新正交化")
            U = _qr_positive(U)
        U.setflags(write=False)
        object.__setattr__(self, "basis", U)

    @property
    def m(self) -> int:
        return self.basis.shape[0]

    @property
    def n(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True, eq=False)
class TangentDirection:
    """U 处的切向量 Δ，满足 U^T Δ = 0"""
    delta: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))

    def tangency_error(self, U) -> float:
        U = as_basis(U)
        return float(np.max(np.abs(U.T @ self.delta), initial=0.0))


def as_basis(U) -> np.ndarray:
    if isinstance(U, Subspace):
        return U.basis
    return np.asarray(U, dtype=float)


def as_subspace(U) -> Subspace:
    return U if isinstance(U, Subspace) else Subspace(U)


def random_subspace(m: int, n: int, rng_seed: SeedLike = None) -> Subspace:
    """对标准正态矩阵做 QR，得到 Grassmann 流形上的均匀随机点"""
    if not 1 <= n <= m:
        raise SubspaceError(f"需要 1 <= n <= m，实际 m={m}, n={n}")
    rng = np.random.default_rng(rng_seed)
    return Subspace(_qr_positive(rng.standard_normal((m, n))))


def tangent_project(U, G) -> TangentDirection:
    """(I - U U^T) G"""
    basis = as_basis(U)
    G = np.asarray(G, dtype=float)
    if G.shape != basis.shape:
        raise SubspaceError(f"方向形状 {G.shape} 与子空间形状 {basis.shape} 不一致")
    return TangentDirection(G - basis @ (basis.T @ G))


class Geodesic:
    """沿切向量 Δ 的测地线 U(t) = U0 Z cos(Σt) Z^T + Y sin(Σt) Z^T

    Δ 的瘦 SVD 只在构造时计算一次，回溯线搜索中每个试探步长复用。
    """

    def __init__(self, U0, delta):
        self.U0 = as_subspace(U0)
        delta = getattr(delta, "delta", delta)
        # 去掉舍入带来的法向分量
        delta = tangent_project(self.U0, delta).delta
        Y, s, Zt = np.linalg.svd(delta, full_matrices=False)
        self._UZ = self.U0.basis @ Zt.T
        self._Y = Y
        self._s = s
        self._Zt = Zt

    @property
    def speed(self) -> float:
        """||Δ||_2，t 较小时等于最大主角的增长速率"""
        return float(self._s[0]) if self._s.size else 0.0

    def at(self, t: float) -> Subspace:
        if t == 0 or self.speed == 0.0:
            return self.U0
        st = self._s * t
        U = (self._UZ * np.cos(st)) @ self._Zt + (self._Y * np.sin(st)) @ self._Zt
        return Subspace(U)


def geodesic(U0, delta, t: float) -> Subspace:
    if t < 0:
        raise ValueError(f"步长必须非负: {t}")
    return Geodesic(U0, delta).at(t)


def principal_angles(U1, U2) -> np.ndarray:
    """两个子空间之间的主角（弧度，降序）"""
    A, B = as_basis(U1), as_basis(U2)
    if A.shape != B.shape:
        raise SubspaceError(f"子空间形状不一致: {A.shape} vs {B.shape}")
    return np.clip(_principal_angles(A, B), 0.0, np.pi / 2)


def subspace_angle(U1, U2) -> float:
    """最大主角，用于实验中的子空间误差"""
    return float(principal_angles(U1, U2)[0])


def smallest_subspace_angle(U1, U2) -> float:
    return float(principal_angles(U1, U2)[-1])
