import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import comb
from typing import Iterator, Tuple

import numpy as np
from numpy.polynomial import hermite_e, legendre, polynomial

logger = logging.getLogger(__name__)

# 坐标跨度低于该值视为退化
DEGENERATE_SPREAD = 1e-14

MultiIndex = Tuple[int, ...]


class BasisFamily(str, Enum):
    """一维多项式族"""
    MONOMIAL = "monomial"
    LEGENDRE = "legendre"
    HERMITE = "hermite"  # probabilists' Hermite, 权函数 e^{-y^2/2}


@dataclass(frozen=True, eq=False)
class IndexSet:
    """总次数不超过 p 的 n 维多重指标，按 graded-lex 顺序排列，决定设计矩阵的列顺序"""
    n: int
    p: int
    indices: Tuple[MultiIndex, ...]

    def __len__(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(len(self.indices), self.n)


def _compositions(total: int, parts: int) -> Iterator[MultiIndex]:
    # 首分量从大到小，得到 (1,0) 先于 (0,1) 的顺序
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=128)
def enumerate_indices(n: int, p: int) -> IndexSet:
    """枚举总次数 <= p 的多重指标，数量为 C(n+p, p)"""
    if n < 1 or p < 0:
        raise ValueError(f"需要 n >= 1 且 p >= 0，实际 n={n}, p={p}")
    indices = tuple(alpha for degree in range(p + 1) for alpha in _compositions(degree, n))
    assert len(indices) == comb(n + p, p)
    return IndexSet(n=n, p=p, indices=indices)


def vander_1d(family: BasisFamily, y: np.ndarray, p: int) -> np.ndarray:
    """返回 (len(y), p+1) 矩阵，第 k 列为 φ_k(y)；numpy 内部使用三项递推"""
    family = BasisFamily(family)
    y = np.asarray(y, dtype=float)
    if family is BasisFamily.LEGENDRE:
        return legendre.legvander(y, p)
    if family is BasisFamily.HERMITE:
        return hermite_e.hermevander(y, p)
    return polynomial.polyvander(y, p)


def vander_1d_deriv(family: BasisFamily, y: np.ndarray, p: int, values: np.ndarray = None) -> np.ndarray:
    """返回 (len(y), p+1) 矩阵，第 k 列为 φ_k'(y)

    values 为同一组点上 vander_1d 的结果，传入可避免重复计算。
    """
    family = BasisFamily(family)
    y = np.asarray(y, dtype=float)
    if values is None:
        values = vander_1d(family, y, p)
    deriv = np.zeros_like(values)
    if p == 0:
        return deriv
    if family is BasisFamily.LEGENDRE:
        # P'_{k+1} = P'_{k-1} + (2k+1) P_k
        deriv[..., 1] = 1.0
        for k in range(1, p):
            deriv[..., k + 1] = deriv[..., k - 1] + (2 * k + 1) * values[..., k]
    else:
        # He'_k = k He_{k-1}，单项式 (y^k)' = k y^{k-1}
        k = np.arange(1, p + 1)
        deriv[..., 1:] = k * values[..., :-1]
    return deriv


def eval_poly_1d(family: BasisFamily, k: int, y: float) -> float:
    if k < 0:
        raise ValueError(f"次数必须非负: {k}")
    return float(vander_1d(family, np.array([y]), k)[0, k])


def eval_poly_1d_deriv(family: BasisFamily, k: int, y: float) -> float:
    if k < 0:
        raise ValueError(f"次数必须非负: {k}")
    return float(vander_1d_deriv(family, np.array([y]), k)[0, k])


@dataclass(frozen=True, eq=False)
class AffineMap:
    """η(y) = a + diag(d) y，作用于投影坐标"""
    a: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.d) <= 0):
            raise ValueError("仿射缩放系数 d 必须全部为正")

    @property
    def n(self) -> int:
        return len(self.a)

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(a=np.zeros(n), d=np.ones(n))

    def apply(self, y: np.ndarray) -> np.ndarray:
        return self.a + np.asarray(y, dtype=float) * self.d


def fit_affine_map(family: BasisFamily, projected_points: np.ndarray) -> AffineMap:
    """根据训练投影点构造仿射变换

    legendre/monomial: 每个坐标的 [min, max] 映射到 [-1, 1]；
    hermite: 每个坐标标准化为零均值、单位标准差。
    退化坐标（跨度 < 1e-14）取 d=1 并平移到 0。
    """
    family = BasisFamily(family)
    Y = np.atleast_2d(np.asarray(projected_points, dtype=float))
    if Y.shape[0] < 1:
        raise ValueError("至少需要一个投影点")

    if family is BasisFamily.HERMITE:
        center = Y.mean(axis=0)
        spread = Y.std(axis=0)
        degenerate = spread < DEGENERATE_SPREAD
        d = np.where(degenerate, 1.0, 1.0 / np.where(degenerate, 1.0, spread))
        a = -center * d
    else:
        lo = Y.min(axis=0)
        hi = Y.max(axis=0)
        spread = hi - lo
        degenerate = spread < DEGENERATE_SPREAD
        d = np.where(degenerate, 1.0, 2.0 / np.where(degenerate, 1.0, spread))
        a = np.where(degenerate, -lo, -1.0 - d * lo)

    if np.any(degenerate):
        logger.warning(f"投影坐标 {np.flatnonzero(degenerate).tolist()} 退化，使用单位缩放")
    return AffineMap(a=a, d=d)
