import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from app.errors import ExperimentError
from app.models import SolverConfig
from app.services.basis import AffineMap, BasisFamily, enumerate_indices, fit_affine_map
from app.services.grassmann import Subspace, principal_angles, random_subspace, subspace_angle
from app.services.scheduler import ReplicateScheduler
from app.services.solver import evaluate_model, fit_alternating, fit_gauss_newton
from app.services.testbed import (
    active_subspace_monte_carlo,
    function_evaluations,
    loglog_slope,
    oscillating_ridge,
    quadratic_sum,
    ridge_cubic,
    timing_family,
    toy_shadow,
)
from app.services.vandermonde import build_design, condition_number
from app.services.varpro import ProjectedProblem

logger = logging.getLogger(__name__)

# 各实验的默认规模，可由配置文件 experiments 段覆盖
DEFAULT_EXPERIMENTS: Dict[str, Dict[str, Any]] = {
    "convergence": {
        "replicates": 10,
        "samples": 1000,
        "dim": 2,
        "degree": 3,
        "noise_levels": [0.0, 1.0],
        "inner_steps": 100,
        "max_iter": 60,
    },
    "timing": {
        "replicates": 10,
        "samples": 1000,
        "cases": [[1, 3], [2, 3]],
        "target_residual": 1e-5,
        "inner_steps": [1, 10, 100],
        "max_iter": 200,
    },
    "global_min": {
        "replicates": 100,
        "samples": 1000,
        "degree": 2,
        "dims": [1, 2, 3],
        "failure_threshold": 1e-6,
    },
    "conditioning": {
        "samples": 1000,
        "m": 100,
        "max_degree": 20,
        "bases": ["legendre", "monomial", "hermite"],
        "panels": ["ones", "random2"],
    },
    "subspace_recovery": {
        "replicates": 20,
        "m": 100,
        "alpha": 0.02,
        "beta": 1,
        "budgets": [100, 200, 400, 600, 800, 1000],
        "methods": ["active_subspace", "ridge"],
        "degree": 2,
        "fd_step": 1e-6,
    },
    "toy": {
        "samples": 1000,
        "m": 100,
        "dim": 1,
        "degree": 7,
        "curve_points": 200,
    },
}


@dataclass
class ExperimentResult:
    """实验结果：原始记录、汇总表以及附加表（如拟合曲线）"""
    name: str
    seed: int
    records: List[Dict[str, Any]] = field(default_factory=list)
    summary: Optional[List[Dict[str, Any]]] = None
    extras: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.records)

    def table(self) -> pd.DataFrame:
        """存在汇总表时返回汇总表，否则返回原始记录"""
        if self.summary is not None:
            return pd.DataFrame.from_records(self.summary)
        return self.to_frame()


def _int_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _replicate_config(base: SolverConfig, seed: int, **updates) -> SolverConfig:
    return base.model_copy(update={"seed": seed, "restarts": 1, "workers": 1, **updates})


def _run_convergence(settings, base: SolverConfig, root: np.random.SeedSequence, scheduler, seed: int):
    fn = ridge_cubic()
    n, p = settings["dim"], settings["degree"]
    noise_levels = settings["noise_levels"]
    children = root.spawn(len(noise_levels) * settings["replicates"])
    jobs = [(level, rep, children[i * settings["replicates"] + rep])
            for i, level in enumerate(noise_levels) for rep in range(settings["replicates"])]

    def job(args):
        level, rep, child = args
        data_seq, init_seq, noise_seq = child.spawn(3)
        X, f = fn.sample(settings["samples"], data_seq)
        noise = level * np.random.default_rng(noise_seq).standard_normal(f.shape[0])
        problem = ProjectedProblem(X, f + noise, p)
        # 两种方法从同一初始子空间出发
        U0 = random_subspace(fn.m, n, init_seq)
        config = _replicate_config(base, _int_seed(child), max_iter=settings["max_iter"])
        rows = []
        for solver, fit in (("gauss-newton", fit_gauss_newton),
                            ("alternating", lambda *a, **k: fit_alternating(*a, inner_steps=settings["inner_steps"], **k))):
            _, report = fit(problem, n, config, U0=U0)
            for record in report.iterations:
                rows.append({
                    "solver": solver, "replicate": rep, "noise": level > 0,
                    "iter": record.iteration,
                    "residual": record.residual_norm / problem.f_norm,
                    "noise_norm": float(np.linalg.norm(noise)),
                    "status": report.status.value, "seed": seed,
                })
        return rows

    records = [row for rows in scheduler.map(job, jobs) for row in rows]
    return records, None, {}


def _run_timing(settings, base: SolverConfig, root, scheduler, seed: int):
    cases = [tuple(case) for case in settings["cases"]]
    children = root.spawn(len(cases) * settings["replicates"])
    jobs = [(n, p, rep, children[i * settings["replicates"] + rep])
            for i, (n, p) in enumerate(cases) for rep in range(settings["replicates"])]

    def job(args):
        n, p, rep, child = args
        fn = timing_family(n, p)
        data_seq, init_seq = child.spawn(2)
        X, f = fn.sample(settings["samples"], data_seq)
        problem = ProjectedProblem(X, f, p)
        U0 = random_subspace(fn.m, n, init_seq)
        config = _replicate_config(base, _int_seed(child), target_residual=settings["target_residual"],
                                   max_iter=settings["max_iter"])
        rows = []
        model, report = fit_gauss_newton(problem, n, config, U0=U0)
        rows.append(_timing_row("gauss-newton", n, p, rep, None, problem, model, report, seed))
        for inner in settings["inner_steps"]:
            model, report = fit_alternating(problem, n, config, inner_steps=inner, U0=U0)
            rows.append(_timing_row("alternating", n, p, rep, inner, problem, model, report, seed))
        return rows

    records = [row for rows in scheduler.map(job, jobs) for row in rows]
    frame = pd.DataFrame.from_records(records)
    # 交替法取各内层步数中最快的一次
    best = frame.groupby(["solver", "n", "p", "replicate"], as_index=False)["wall_time"].min()
    summary = (best.groupby(["solver", "n", "p"], as_index=False)["wall_time"].median()
               .rename(columns={"wall_time": "median_wall_time"}))
    return records, summary.to_dict("records"), {}


def _timing_row(solver, n, p, rep, inner, problem, model, report, seed):
    return {
        "solver": solver, "n": n, "p": p, "replicate": rep, "inner_steps": inner,
        "wall_time": report.wall_time, "iterations": len(report.iterations) - 1,
        "residual": model.training_residual_norm / problem.f_norm,
        "status": report.status.value, "seed": seed,
    }


def _run_global_min(settings, base: SolverConfig, root, scheduler, seed: int):
    dims = settings["dims"]
    p = settings["degree"]
    data_children = root.spawn(len(dims))
    jobs = []
    problems = {}
    for n, data_seq in zip(dims, data_children):
        fn = quadratic_sum(n)
        X, f = fn.sample(settings["samples"], data_seq)
        problems[n] = ProjectedProblem(X, f, p)
        for rep, child in enumerate(data_seq.spawn(settings["replicates"])):
            jobs.append((n, rep, child))

    def job(args):
        n, rep, child = args
        problem = problems[n]
        model, report = fit_gauss_newton(problem, n, _replicate_config(base, _int_seed(child)),
                                         U0=random_subspace(problem.m, n, child))
        residual = model.training_residual_norm / problem.f_norm
        return {
            "n": n, "replicate": rep, "residual": residual,
            "failed": bool(residual > settings["failure_threshold"]),
            "iterations": len(report.iterations) - 1, "status": report.status.value, "seed": seed,
        }

    records = scheduler.map(job, jobs)
    frame = pd.DataFrame.from_records(records)
    summary = (frame.groupby("n", as_index=False)
               .agg(trials=("failed", "size"), failures=("failed", "sum")))
    summary["failure_fraction"] = summary["failures"] / summary["trials"]
    return records, summary.to_dict("records"), {}


def _run_conditioning(settings, base: SolverConfig, root, scheduler, seed: int):
    m = settings["m"]
    data_seq, panel_seq = root.spawn(2)
    # 取自 [0,1]^m：投影点远离原点，未平移缩放的单项式基因此严重病态
    X = np.random.default_rng(data_seq).uniform(0.0, 1.0, size=(settings["samples"], m))
    panels = {
        "ones": Subspace(np.ones((m, 1)) / np.sqrt(m)),
        "random2": random_subspace(m, 2, panel_seq),
    }
    jobs = [(panel, basis, scaled, degree)
            for panel in settings["panels"]
            for basis in settings["bases"]
            for scaled in (True, False)
            for degree in range(1, settings["max_degree"] + 1)]

    def job(args):
        panel, basis, scaled, degree = args
        U = panels[panel]
        family = BasisFamily(basis)
        affine = fit_affine_map(family, X @ U.basis) if scaled else AffineMap.identity(U.n)
        design = build_design(X, U, enumerate_indices(U.n, degree), family, affine)
        return {
            "panel": panel, "n": U.n, "basis": basis, "scaled": scaled,
            "degree": degree, "cond": condition_number(design), "seed": seed,
        }

    return scheduler.map(job, jobs), None, {}


def _run_subspace_recovery(settings, base: SolverConfig, root, scheduler, seed: int):
    fn = oscillating_ridge(settings["m"], settings["alpha"], settings["beta"])
    budgets = settings["budgets"]
    methods = settings["methods"]
    for method in methods:
        if method not in ("active_subspace", "ridge"):
            raise ExperimentError(f"未知的子空间估计方法: {method}")
    children = root.spawn(len(budgets) * settings["replicates"])
    jobs = [(method, budget, rep, children[i * settings["replicates"] + rep])
            for i, budget in enumerate(budgets) for rep in range(settings["replicates"])
            for method in methods]

    def job(args):
        method, budget, rep, child = args
        if method == "active_subspace":
            U = active_subspace_monte_carlo(fn, budget, settings["fd_step"], child)
        else:
            X, f = fn.sample(budget, child)
            problem = ProjectedProblem(X, f, settings["degree"])
            model, _ = fit_gauss_newton(problem, 1, _replicate_config(base, _int_seed(child)))
            U = model.U
        return {
            "method": method, "budget": budget, "replicate": rep,
            "angle_deg": float(np.degrees(subspace_angle(U, fn.true_subspace))),
            "evaluations": function_evaluations(method, budget, fn.m), "seed": seed,
        }

    records = scheduler.map(job, jobs)
    frame = pd.DataFrame.from_records(records)
    grouped = frame.groupby(["method", "budget"])["angle_deg"]
    summary = pd.DataFrame({
        "median_angle_deg": grouped.median(),
        "q25_angle_deg": grouped.quantile(0.25),
        "q75_angle_deg": grouped.quantile(0.75),
    }).reset_index()
    slopes = {method: loglog_slope(part["budget"], part["median_angle_deg"])
              for method, part in summary.groupby("method")}
    summary["loglog_slope"] = summary["method"].map(slopes)
    for method, slope in slopes.items():
        logger.info(f"子空间恢复 {method}: 中位角度对预算的 log-log 斜率 {slope:.3f}")
    return records, summary.to_dict("records"), {}


def _run_toy(settings, base: SolverConfig, root, scheduler, seed: int):
    fn = toy_shadow(settings["m"])
    data_seq, fit_seq = root.spawn(2)
    X, f = fn.sample(settings["samples"], data_seq)
    problem = ProjectedProblem(X, f, settings["degree"])
    model, report = fit_gauss_newton(problem, settings["dim"], _replicate_config(base, _int_seed(fit_seq)))

    u_true = fn.true_subspace.basis[:, 0]
    u_fit = model.U.basis[:, 0]
    # U 只确定到符号，与 û 对齐后再比较权重
    if u_fit @ u_true < 0:
        u_fit = -u_fit
    projection = X @ model.U.basis[:, 0]
    fitted = evaluate_model(model, X)
    records = [
        {"x2": float(X[i, 1]), "projection": float(projection[i]), "f": float(f[i]), "fit": float(fitted[i])}
        for i in np.argsort(projection)
    ]
    angle = float(np.degrees(principal_angles(model.U, fn.true_subspace)[0]))
    summary = [
        {"i": i + 1, "U": float(u_true[i]), "U_fit": float(u_fit[i]), "angle_deg": angle, "seed": seed}
        for i in range(fn.m)
    ]
    grid = np.linspace(projection.min(), projection.max(), settings["curve_points"])
    curve_points = grid[:, None] * model.U.basis[:, 0][None, :]
    curve = [{"projection": float(y), "fit": float(g)} for y, g in zip(grid, evaluate_model(model, curve_points))]
    logger.info(f"toy 拟合完成: status={report.status.value}, 与 û 的夹角 {angle:.3f} 度")
    return records, summary, {"curve": curve}


EXPERIMENTS: Dict[str, Callable] = {
    "convergence": _run_convergence,
    "timing": _run_timing,
    "global_min": _run_global_min,
    "conditioning": _run_conditioning,
    "subspace_recovery": _run_subspace_recovery,
    "toy": _run_toy,
}


def experiment_settings(name: str, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    if name not in EXPERIMENTS:
        raise ExperimentError(f"未知实验 '{name}'，可选: {', '.join(EXPERIMENTS)}")
    settings = copy.deepcopy(DEFAULT_EXPERIMENTS[name])
    settings.update(overrides or {})
    return settings


def run_experiment(name: str, settings: Optional[Dict[str, Any]] = None, seed: Optional[int] = None,
                   solver_config: Optional[SolverConfig] = None, workers: int = 1) -> ExperimentResult:
    """按名称运行实验，返回可写成 CSV 的记录；相同 seed 结果可复现"""
    settings = experiment_settings(name, settings)
    seed = int(seed) if seed is not None else _int_seed(np.random.SeedSequence())
    base = solver_config or SolverConfig()
    scheduler = ReplicateScheduler(workers, name=name)

    logger.info(f"开始实验 {name}: seed={seed}, workers={workers}, 设置={settings}")
    records, summary, extras = EXPERIMENTS[name](settings, base, np.random.SeedSequence(seed), scheduler, seed)
    logger.info(f"实验 {name} 完成，共 {len(records)} 条记录")
    return ExperimentResult(name=name, seed=seed, records=records, summary=summary, extras=extras)
