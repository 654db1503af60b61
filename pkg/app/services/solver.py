import logging
import secrets
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from app.errors import FeasibilityError, SubspaceError
from app.models import FitReport, FitStatus, IterationRecord, SolverConfig
from app.services.basis import AffineMap, BasisFamily, IndexSet, enumerate_indices
from app.services.grassmann import (
    Geodesic,
    Subspace,
    TangentDirection,
    as_subspace,
    random_subspace,
    smallest_subspace_angle,
    subspace_angle,
    tangent_project,
)
from app.services.scheduler import ReplicateScheduler
from app.services.vandermonde import build_design, build_design_derivative
from app.services.varpro import JacobianTensor, ProjectedProblem, VarproState, gradient, jacobian, solve_coefficients

logger = logging.getLogger(__name__)

GAUSS_NEWTON = "gauss-newton"
ALTERNATING = "alternating"
DEFAULT_INNER_STEPS = 100


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """拟合结果 g(U^T x) = Σ c_j ψ_j(η(U^T x))"""
    U: Subspace
    family: BasisFamily
    p: int
    affine: AffineMap
    coefficients: np.ndarray
    training_residual_norm: float
    M: int = 0
    seed: Optional[int] = None
    solver: str = GAUSS_NEWTON
    status: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "U", as_subspace(self.U))
        object.__setattr__(self, "family", BasisFamily(self.family))
        c = np.asarray(self.coefficients, dtype=float).ravel()
        if c.shape[0] != len(self.index_set):
            raise SubspaceError(f"系数个数 {c.shape[0]} 与基函数个数 {len(self.index_set)} 不一致")
        if self.affine.n != self.U.n:
            raise SubspaceError(f"仿射维度 {self.affine.n} 与子空间维度 {self.U.n} 不一致")
        object.__setattr__(self, "coefficients", c)

    @property
    def m(self) -> int:
        return self.U.m

    @property
    def n(self) -> int:
        return self.U.n

    @property
    def index_set(self) -> IndexSet:
        return enumerate_indices(self.U.n, self.p)


def evaluate_model(model: RidgeModel, points) -> np.ndarray:
    """在新点上计算 g(U^T x)，使用模型保存的仿射变换"""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        if X.size != model.m:
            raise SubspaceError(f"一维输入视为单个点，长度 {X.size} 与模型维度 {model.m} 不一致")
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.m:
        raise SubspaceError(f"输入维度 {X.shape[-1] if X.ndim else 0} 与模型维度 {model.m} 不一致")
    if X.shape[0] == 0:
        return np.zeros(0)
    design = build_design(X, model.U, model.index_set, model.family, model.affine)
    return design.values @ model.coefficients


def ridge_parameter_count(m: int, n: int, p: int) -> int:
    """ridge 近似的参数个数 N + m n，样本数低于该值时问题欠定"""
    return len(enumerate_indices(n, p)) + m * n


def check_feasibility(problem: ProjectedProblem, n: int):
    if not 1 <= n <= problem.m:
        raise SubspaceError(f"子空间维度需满足 1 <= n <= m={problem.m}，实际 n={n}")
    if problem.degree == 1 and n > 1:
        raise FeasibilityError(
            f"p=1 时线性 ridge 函数等价于一维子空间上的 ridge 函数 (p=1 ⇒ n=1)，当前 n={n}"
        )
    needed = ridge_parameter_count(problem.m, n, problem.degree)
    if problem.M < needed:
        logger.warning(f"样本数 M={problem.M} 少于参数个数 {needed}，拟合问题欠定")


def gauss_newton_step(problem: ProjectedProblem, state: VarproState, jac: JacobianTensor,
                      rank_tol: float = 1e-12) -> TangentDirection:
    """vec Δ = -(vec J)^+ r，最多保留 mn - n^2 个奇异三元组"""
    M, m, n = jac.entries.shape
    zero = TangentDirection(np.zeros((m, n)))
    r = state.residual
    cap = m * n - n * n
    if cap <= 0 or not np.any(r):
        return zero

    Y, s, Zt = np.linalg.svd(jac.flat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        logger.warning("Jacobian 奇异值全部为零，Gauss-Newton 步为零")
        return zero
    keep = min(cap, int(np.sum(s > rank_tol * s[0])))
    vec = -Zt[:keep].T @ ((Y[:, :keep].T @ r) / s[:keep])
    # vec 按列优先排列，第 k 段长度 m 对应 Δ 的第 k 列
    return TangentDirection(vec.reshape(n, m).T)


def _backtrack(geo: Geodesic, r_norm: float, alpha: float, config: SolverConfig,
               evaluate: Callable[[Subspace], Tuple[float, object]]):
    """沿测地线回溯，Armijo 条件 ||r_+|| <= ||r|| + α β t

    返回 (t, 新的子空间, evaluate 的附带结果)；回溯次数用尽时返回 None。
    """
    t = 1.0
    for _ in range(config.max_backtracks):
        U_new = geo.at(t)
        trial_norm, payload = evaluate(U_new)
        if trial_norm <= r_norm + alpha * config.beta * t:
            return t, U_new, payload
        t *= config.gamma
    return None


def _angle_moved(U_old, U_new, criterion: str) -> float:
    if criterion == "smallest":
        return smallest_subspace_angle(U_old, U_new)
    return subspace_angle(U_old, U_new)


def _termination(r_norm: float, prev_norm: Optional[float], g_norm: float, moved: Optional[float],
                 f_norm: float, config: SolverConfig) -> Optional[FitStatus]:
    if r_norm <= config.tol_residual_change * f_norm:
        return FitStatus.CONVERGED_RESIDUAL
    if config.target_residual is not None and r_norm <= config.target_residual * f_norm:
        return FitStatus.CONVERGED_RESIDUAL
    if g_norm <= config.tol_grad * (1.0 + f_norm):
        return FitStatus.CONVERGED_GRADIENT
    if prev_norm is not None and prev_norm - r_norm <= config.tol_residual_change * prev_norm:
        return FitStatus.CONVERGED_RESIDUAL
    # moved 默认是最大主角，不是经典判据中的最小主角；angle_criterion=smallest 可切回
    if moved is not None and moved <= config.tol_subspace:
        return FitStatus.CONVERGED_SUBSPACE
    return None


def _gauss_newton_run(problem: ProjectedProblem, U0: Subspace, config: SolverConfig) -> Tuple[VarproState, FitReport]:
    start = time.perf_counter()
    state = solve_coefficients(problem, U0)
    records: List[IterationRecord] = []
    prev_norm: Optional[float] = None
    step_t, moved, fell_back = 0.0, None, False
    status = FitStatus.MAX_ITERATIONS

    for it in range(config.max_iter + 1):
        jac = jacobian(problem, state)
        G = gradient(jac, state.residual)
        g_norm = float(np.linalg.norm(G))
        records.append(IterationRecord(
            iteration=it, residual_norm=state.residual_norm, grad_norm=g_norm, step_t=step_t,
            fell_back_to_gradient=fell_back, angle_moved=moved or 0.0,
        ))
        logger.debug(f"[GN] iter={it} ||r||={state.residual_norm:.6e} ||G||={g_norm:.3e} t={step_t:.3e}")

        done = _termination(state.residual_norm, prev_norm, g_norm, moved, problem.f_norm, config)
        if done is not None:
            status = done
            break
        if it == config.max_iter:
            break

        delta = gauss_newton_step(problem, state, jac, config.step_rank_tol)
        alpha = float(np.sum(G * delta.delta))
        fell_back = alpha >= 0
        if fell_back:
            # 不是下降方向，改用负梯度
            logger.debug(f"[GN] iter={it} Gauss-Newton 方向斜率 {alpha:.3e} >= 0，改用负梯度")
            delta = TangentDirection(-G)
            alpha = -g_norm ** 2

        geo = Geodesic(state.U, delta)
        if geo.speed <= config.tol_subspace:
            status = FitStatus.CONVERGED_SUBSPACE
            break
        accepted = _backtrack(geo, state.residual_norm, alpha, config,
                              lambda U: _varpro_trial(problem, U))
        if accepted is None:
            logger.warning(f"[GN] iter={it} 线搜索在 {config.max_backtracks} 次回溯后失败")
            status = FitStatus.LINE_SEARCH_FAILURE
            break
        step_t, U_new, new_state = accepted
        moved = _angle_moved(state.U, U_new, config.angle_criterion)
        prev_norm = state.residual_norm
        state = new_state

    report = FitReport(solver=GAUSS_NEWTON, status=status, iterations=records,
                       wall_time=time.perf_counter() - start)
    return state, report


def _varpro_trial(problem: ProjectedProblem, U: Subspace):
    trial = solve_coefficients(problem, U)
    return trial.residual_norm, trial


def _fixed_coefficient_residual(problem: ProjectedProblem, U: Subspace, c: np.ndarray, affine: AffineMap) -> np.ndarray:
    design = build_design(problem.points, U, problem.index_set(U.n), problem.family, affine)
    return problem.values - design.values @ c


def _fixed_coefficient_gradient(problem: ProjectedProblem, U: Subspace, c: np.ndarray, affine: AffineMap,
                                r: np.ndarray) -> np.ndarray:
    """c 固定时 ½||f - V(U) c||^2 的 Grassmann 梯度"""
    derivative = build_design_derivative(problem.points, U, problem.index_set(U.n), problem.family, affine)
    G = np.empty((problem.m, U.n))
    for ell, D in enumerate(derivative.partials):
        G[:, ell] = -problem.points.T @ (r * (D @ c))
    return tangent_project(U, G).delta


def _alternating_run(problem: ProjectedProblem, U0: Subspace, config: SolverConfig,
                     inner_steps: int) -> Tuple[VarproState, FitReport]:
    start = time.perf_counter()
    grad_tol = config.tol_grad * (1.0 + problem.f_norm)
    state = solve_coefficients(problem, U0)
    records: List[IterationRecord] = []
    prev_norm: Optional[float] = None
    step_t, moved = 0.0, None
    status = FitStatus.MAX_ITERATIONS

    for it in range(config.max_iter + 1):
        c, affine = state.coefficients, state.design.affine
        r = state.residual
        # c 取最优时固定系数梯度等于变量投影梯度
        G = _fixed_coefficient_gradient(problem, state.U, c, affine, r)
        g_norm = float(np.linalg.norm(G))
        records.append(IterationRecord(
            iteration=it, residual_norm=state.residual_norm, grad_norm=g_norm,
            step_t=step_t, angle_moved=moved or 0.0,
        ))
        logger.debug(f"[ALT] iter={it} ||r||={state.residual_norm:.6e} ||G||={g_norm:.3e}")

        done = _termination(state.residual_norm, prev_norm, g_norm, moved, problem.f_norm, config)
        if done is not None:
            status = done
            break
        if it == config.max_iter:
            break

        U = state.U
        r_norm = float(np.linalg.norm(r))
        accepted_steps = 0

        def evaluate(U_trial):
            r_trial = _fixed_coefficient_residual(problem, U_trial, c, affine)
            return float(np.linalg.norm(r_trial)), r_trial

        for inner in range(inner_steps):
            if inner > 0:
                G = _fixed_coefficient_gradient(problem, U, c, affine, r)
                g_norm = float(np.linalg.norm(G))
            if g_norm <= grad_tol:
                break
            # 最速下降与 Gauss-Newton 共用测地线与 Armijo 回溯
            geo = Geodesic(U, -G)
            accepted = _backtrack(geo, r_norm, -g_norm ** 2, config, evaluate)
            if accepted is None:
                break
            step_t, U, r = accepted
            r_norm = float(np.linalg.norm(r))
            accepted_steps += 1

        if accepted_steps == 0:
            logger.warning(f"[ALT] iter={it} 内层最速下降未接受任何步长")
            status = FitStatus.LINE_SEARCH_FAILURE
            break
        new_state = solve_coefficients(problem, U)
        moved = _angle_moved(state.U, new_state.U, config.angle_criterion)
        prev_norm = state.residual_norm
        state = new_state

    report = FitReport(solver=ALTERNATING, status=status, iterations=records,
                       wall_time=time.perf_counter() - start)
    return state, report


def _to_model(problem: ProjectedProblem, state: VarproState, report: FitReport, seed: Optional[int]) -> RidgeModel:
    return RidgeModel(
        U=state.U, family=problem.family, p=problem.degree, affine=state.design.affine,
        coefficients=state.coefficients, training_residual_norm=state.residual_norm,
        M=problem.M, seed=seed, solver=report.solver, status=report.status.value,
    )


def _fit_with_restarts(problem: ProjectedProblem, n: int, config: Optional[SolverConfig], U0,
                       run: Callable[[ProjectedProblem, Subspace, SolverConfig], Tuple[VarproState, FitReport]],
                       label: str) -> Tuple[RidgeModel, FitReport]:
    config = config or SolverConfig()
    check_feasibility(problem, n)
    seed = config.seed if config.seed is not None else secrets.randbits(63)
    children = np.random.SeedSequence(seed).spawn(config.restarts)

    def job(index: int):
        if U0 is not None and index == 0:
            U_init = as_subspace(U0)
            if U_init.basis.shape != (problem.m, n):
                raise SubspaceError(f"初始子空间形状 {U_init.basis.shape} 应为 {(problem.m, n)}")
        else:
            U_init = random_subspace(problem.m, n, children[index])
        state, report = run(problem, U_init, config)
        report.restart = index
        report.seed = seed
        return state, report

    logger.info(f"开始 {label} 拟合: M={problem.M}, m={problem.m}, n={n}, p={problem.degree}, "
                f"basis={problem.family.value}, restarts={config.restarts}, seed={seed}")
    scheduler = ReplicateScheduler(config.workers, name=f"{label}-restarts")
    results = scheduler.map(job, range(config.restarts))

    # 残差最小者胜出，相同时取编号最小的重启
    best = min(range(len(results)), key=lambda i: (results[i][0].residual_norm, i))
    state, report = results[best]
    logger.info(f"{label} 拟合完成: restart={best}, status={report.status.value}, "
                f"||r||={state.residual_norm:.6e}, 迭代 {len(report.iterations) - 1} 次, "
                f"耗时 {report.wall_time:.3f}s")
    return _to_model(problem, state, report, seed), report


def fit_gauss_newton(problem: ProjectedProblem, n: int, config: Optional[SolverConfig] = None,
                     U0=None) -> Tuple[RidgeModel, FitReport]:
    """变量投影 + Grassmann 流形 Gauss-Newton（测地线 Armijo 回溯）"""
    return _fit_with_restarts(problem, n, config, U0, _gauss_newton_run, GAUSS_NEWTON)


def fit_alternating(problem: ProjectedProblem, n: int, config: Optional[SolverConfig] = None,
                    inner_steps: int = DEFAULT_INNER_STEPS, U0=None) -> Tuple[RidgeModel, FitReport]:
    """交替法基线：c <- V(U)^+ f，然后固定 c 做 inner_steps 步 Grassmann 最速下降"""
    if inner_steps < 1:
        raise ValueError(f"inner_steps 必须为正整数: {inner_steps}")

    def run(problem_, U_init, config_):
        return _alternating_run(problem_, U_init, config_, inner_steps)

    return _fit_with_restarts(problem, n, config, U0, run, ALTERNATING)
