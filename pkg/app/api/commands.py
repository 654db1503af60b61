import logging
import os
import sys
from argparse import Namespace
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from app.config import solver_config_from
from app.errors import EXIT_OK, EXIT_SOLVER_FAILURE, UsageError
from app.models import FitReport, FitStatus
from app.services.experiments import run_experiment
from app.services.solver import RidgeModel, evaluate_model, fit_alternating, fit_gauss_newton
from app.services.varpro import ProjectedProblem
from app.utils.dataio import (
    STDIO,
    document_to_model,
    load_document,
    model_to_document,
    read_dataset,
    read_points,
    save_document,
    write_frame,
)

logger = logging.getLogger(__name__)

SOLVER_FLAGS = (
    "seed", "restarts", "workers", "max_iter", "max_backtracks", "gamma", "beta",
    "tol_grad", "tol_residual_change", "tol_subspace", "target_residual",
)


def _sibling_path(path: str, suffix: str) -> Optional[str]:
    """<stem>_<suffix>.csv；输出到 stdout 时没有同级文件"""
    if not path or path == STDIO:
        return None
    stem, _ = os.path.splitext(path)
    return f"{stem}_{suffix}.csv"


def format_report(model: RidgeModel, report: FitReport, problem: ProjectedProblem) -> str:
    f_norm = problem.f_norm or 1.0
    iterations = len(report.iterations) - 1
    lines = [
        f"求解器: {report.solver}",
        f"状态: {report.status.value}",
        f"样本: M={problem.M}, m={model.m}; 子空间维度 n={model.n}; 次数 p={model.p}; 基: {model.family.value}",
        f"迭代次数: {iterations} (restart {report.restart}, seed {report.seed})",
        f"残差 ||r|| = {model.training_residual_norm:.6e}，相对残差 ||r||/||f|| = {model.training_residual_norm / f_norm:.6e}",
        f"耗时: {report.wall_time:.3f}s",
        "迭代历史 (iter, ||r||, ||G||, t, fallback):",
    ]
    for rec in report.iterations:
        fallback = "yes" if rec.fell_back_to_gradient else "no"
        lines.append(f"  {rec.iteration:4d}  {rec.residual_norm:.6e}  {rec.grad_norm:.3e}  {rec.step_t:.3e}  {fallback}")
    return "\n".join(lines) + "\n"


def cmd_fit(args: Namespace, config: Dict[str, Any]) -> int:
    """拟合 ridge 模型并写出模型文件与文字报告"""
    if args.dim < 1:
        raise UsageError(f"--dim 必须为正整数: {args.dim}")
    if args.degree < 0:
        raise UsageError(f"--degree 必须非负: {args.degree}")
    target = args.target or config["io"]["target_column"]
    dataset = read_dataset(args.input, target)
    if args.dim > dataset.m:
        raise UsageError(f"--dim={args.dim} 超过输入维度 m={dataset.m}")

    problem = ProjectedProblem(dataset.points, dataset.values, args.degree, family=args.basis)
    solver_config = solver_config_from(config, {name: getattr(args, name, None) for name in SOLVER_FLAGS})
    if args.solver == "alternating":
        model, report = fit_alternating(problem, args.dim, solver_config, inner_steps=args.inner_steps)
    else:
        model, report = fit_gauss_newton(problem, args.dim, solver_config)

    save_document(model_to_document(model, target, dataset.feature_names), args.output)
    text = format_report(model, report, problem)
    if args.report:
        with open(args.report, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info(f"拟合报告已写入 {args.report}")
    else:
        sys.stderr.write(text)

    if report.status is FitStatus.LINE_SEARCH_FAILURE:
        logger.error("线搜索失败，已保存目前最好的模型")
        return EXIT_SOLVER_FAILURE
    return EXIT_OK


def _load_model(path: str):
    doc = load_document(path)
    return doc, document_to_model(doc)


def cmd_predict(args: Namespace, config: Dict[str, Any]) -> int:
    """对输入的每一行计算 g(U^T x)，追加列 g"""
    doc, model = _load_model(args.model)
    points, frame = read_points(args.input, doc.training.feature_names, doc.training.target, m=model.m)
    if frame.shape[0] == 0:
        frame = frame.reindex(columns=[*frame.columns, "g"])
    else:
        frame = frame.assign(g=evaluate_model(model, points))
    write_frame(frame, args.output)
    return EXIT_OK


def cmd_shadow(args: Namespace, config: Dict[str, Any]) -> int:
    """输出 shadow plot 数据：投影坐标 U^T x、观测值 f、拟合值 g；n=1 时附带拟合曲线"""
    doc, model = _load_model(args.model)
    target = doc.training.target or config["io"]["target_column"]
    points, frame = read_points(args.input, doc.training.feature_names, target, m=model.m)

    projected = points @ model.U.basis
    shadow = pd.DataFrame(projected, columns=[f"u{k + 1}" for k in range(model.n)])
    shadow["f"] = frame[target].to_numpy() if target in frame.columns else np.nan
    shadow["g"] = evaluate_model(model, points)
    if model.n == 1:
        shadow = shadow.sort_values("u1", kind="mergesort").reset_index(drop=True)
    write_frame(shadow, args.output)

    if model.n == 1 and shadow.shape[0] > 0:
        count = int(config["io"].get("curve_points", 200))
        grid = np.linspace(projected.min(), projected.max(), count)
        # U^T (y u) = y
        curve = pd.DataFrame({"u1": grid, "g": evaluate_model(model, grid[:, None] * model.U.basis[:, 0])})
        curve_path = args.curve_output or _sibling_path(args.output, "curve")
        if curve_path is None:
            # stdout 上以空行分隔，作为第二个 CSV 块
            sys.stdout.write("\n")
            curve_path = STDIO
        write_frame(curve, curve_path)
    return EXIT_OK


def cmd_bench(args: Namespace, config: Dict[str, Any]) -> int:
    """运行实验并输出 CSV（默认汇总表，--raw 输出原始记录）"""
    settings = dict((config.get("experiments") or {}).get(args.name) or {})
    for key in ("replicates", "samples"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    solver_config = solver_config_from(config, {"max_iter": getattr(args, "max_iter", None)})
    result = run_experiment(args.name, settings, seed=args.seed, solver_config=solver_config,
                            workers=args.workers)

    write_frame(result.to_frame() if args.raw else result.table(), args.output)
    for key, rows in result.extras.items():
        path = _sibling_path(args.output, key)
        if path is None:
            logger.info(f"附加表 {key} 未写出（输出到 stdout）")
            continue
        write_frame(pd.DataFrame.from_records(rows), path)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "shadow": cmd_shadow,
    "bench": cmd_bench,
}
