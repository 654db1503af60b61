import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from app.services.grassmann import SeedLike, Subspace, as_subspace

logger = logging.getLogger(__name__)

DEFAULT_FD_STEP = 1e-6
TOY_DIRECTION_SEED = 20180101


@dataclass(frozen=True, eq=False)
class TestFunction:
    """合成测试函数：f 在超立方体 [lower, upper]^m 上的取值，以及已知时的真实子空间"""
    __test__ = False  # 防止 pytest 把它当作测试类收集

    name: str
    m: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    parameters: Dict[str, Any] = field(default_factory=dict)
    bounds: Tuple[float, float] = (-1.0, 1.0)
    true_subspace: Optional[Subspace] = None

    def __call__(self, points) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        if X.shape[1] != self.m:
            raise ValueError(f"{self.name}: 输入维度 {X.shape[1]} 与函数维度 {self.m} 不一致")
        return np.asarray(self.evaluator(X), dtype=float)

    def sample(self, M: int, rng_seed: SeedLike = None) -> Tuple[np.ndarray, np.ndarray]:
        """在定义域上均匀采样 M 个点并求值"""
        rng = np.random.default_rng(rng_seed)
        lower, upper = self.bounds
        X = rng.uniform(lower, upper, size=(M, self.m))
        return X, self(X)


def ridge_cubic() -> TestFunction:
    """f(x) = (e1^T x)^2 + (1^T x / 10)^3 + 1，二维子空间上的三次 ridge 函数"""
    m = 10
    ones = np.ones(m) / np.sqrt(m)
    U = np.linalg.qr(np.column_stack([np.eye(m)[:, 0], ones]))[0]
    return TestFunction(
        name="ridge_cubic", m=m,
        evaluator=lambda X: X[:, 0] ** 2 + (X.sum(axis=1) / 10.0) ** 3 + 1.0,
        true_subspace=Subspace(U),
    )


def timing_family(n: int, p: int) -> TestFunction:
    """f_{n,p}(x) = (1^T x)^p + Σ_{j<n} (e_j^T x)^{p-1}"""
    m = 10
    if not 1 <= n <= m:
        raise ValueError(f"需要 1 <= n <= {m}，实际 n={n}")

    def evaluate(X):
        out = X.sum(axis=1) ** p
        for j in range(n - 1):
            out = out + X[:, j] ** (p - 1)
        return out

    return TestFunction(name=f"timing_n{n}_p{p}", m=m, evaluator=evaluate, parameters={"n": n, "p": p})


def quadratic_sum(n: int) -> TestFunction:
    """f_n(x) = Σ_{j<=n} (e_j^T x)^2，真实子空间为前 n 个坐标轴"""
    m = 10
    if not 1 <= n <= m:
        raise ValueError(f"需要 1 <= n <= {m}，实际 n={n}")
    return TestFunction(
        name=f"quadratic_n{n}", m=m,
        evaluator=lambda X: np.sum(X[:, :n] ** 2, axis=1),
        parameters={"n": n},
        true_subspace=Subspace(np.eye(m)[:, :n]),
    )


def oscillating_ridge(m: int = 100, alpha: float = 0.02, beta: int = 1) -> TestFunction:
    """f(x) = ½(1^T x)^2 + α Σ cos(βπ x_j)，一维 ridge 加低幅振荡"""
    return TestFunction(
        name="oscillating_ridge", m=m,
        evaluator=lambda X: 0.5 * X.sum(axis=1) ** 2 + alpha * np.sum(np.cos(beta * np.pi * X), axis=1),
        parameters={"alpha": alpha, "beta": beta},
        true_subspace=Subspace(np.ones((m, 1)) / np.sqrt(m)),
    )


def toy_shadow(m: int = 100, rng_seed: SeedLike = TOY_DIRECTION_SEED) -> TestFunction:
    """f(x) = |û^T x| + 0.1(sin(1000 x_2) + 1)，û 在单位球面上均匀采样，正弦项模拟确定性噪声"""
    rng = np.random.default_rng(rng_seed)
    u = rng.standard_normal(m)
    u /= np.linalg.norm(u)
    return TestFunction(
        name="toy_shadow", m=m,
        evaluator=lambda X: np.abs(X @ u) + 0.1 * (np.sin(1000.0 * X[:, 1]) + 1.0),
        parameters={"direction": u},
        true_subspace=Subspace(u[:, None]),
    )


def builtin_functions() -> List[TestFunction]:
    return [
        ridge_cubic(),
        *[timing_family(n, p) for n, p in [(1, 3), (2, 3)]],
        *[quadratic_sum(n) for n in (1, 2, 3)],
        oscillating_ridge(),
        toy_shadow(),
    ]


def active_subspace_closed_form(m: int, alpha: float, beta: int) -> Tuple[np.ndarray, np.ndarray]:
    """C = 1 1^T + (αβπ)^2 I 及其主特征向量 1/√m"""
    if m < 1:
        raise ValueError(f"维度必须为正: {m}")
    shift = (alpha * beta * np.pi) ** 2
    C = np.ones((m, m)) + shift * np.eye(m)
    return C, np.ones(m) / np.sqrt(m)


def finite_difference_gradients(fn: TestFunction, points: np.ndarray, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """单侧差分梯度 [∇f(x)]_j ≈ (f(x + h e_j) - f(x)) / h，每个点消耗 m+1 次函数求值"""
    if h <= 0:
        raise ValueError(f"差分步长必须为正: {h}")
    X = np.atleast_2d(points)
    L, m = X.shape
    base = fn(X)
    shifted = (X[:, None, :] + h * np.eye(m)[None, :, :]).reshape(L * m, m)
    return (fn(shifted).reshape(L, m) - base[:, None]) / h


def active_subspace_monte_carlo(fn: TestFunction, L: int, h: float = DEFAULT_FD_STEP,
                                rng_seed: SeedLike = None, n: int = 1) -> Subspace:
    """C̃ = (1/L) Σ ∇̃f(x_i) ∇̃f(x_i)^T 的前 n 个特征向量"""
    if L < 1:
        raise ValueError(f"样本数必须为正: {L}")
    rng = np.random.default_rng(rng_seed)
    lower, upper = fn.bounds
    X = rng.uniform(lower, upper, size=(L, fn.m))
    grads = finite_difference_gradients(fn, X, h)
    C = grads.T @ grads / L
    _, vecs = np.linalg.eigh(C)
    return as_subspace(vecs[:, ::-1][:, :n].copy())


def function_evaluations(method: str, samples: int, m: int) -> int:
    """公平比较的预算：ridge 拟合消耗 M 次，差分活动子空间消耗 L(m+1) 次"""
    if method == "active_subspace":
        return samples * (m + 1)
    return samples


def loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if np.count_nonzero(keep) < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])
