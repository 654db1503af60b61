import json
import logging
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.errors import DataError, SubspaceError
from app.models import ModelDocument, TrainingMetadata
from app.services.basis import AffineMap
from app.services.grassmann import Subspace
from app.services.solver import RidgeModel

logger = logging.getLogger(__name__)

STDIO = "-"


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    values: np.ndarray
    feature_names: List[str]
    target: str

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]


def _read_raw(path: str) -> Optional[pd.DataFrame]:
    """按字符串读入 CSV；缺字段的单元为 NaN，空单元为空串"""
    source = sys.stdin if path == STDIO else path
    try:
        raw = pd.read_csv(source, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise DataError(f"输入文件不存在: {path}")
    except pd.errors.EmptyDataError:
        return None
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: 行宽不一致: {e}")
    # 每行都比表头多一个字段时 pandas 会把首列当作索引
    if not isinstance(raw.index, pd.RangeIndex):
        raise DataError(f"{path}: 数据行字段数多于表头")
    return raw


def _to_numeric(raw: pd.DataFrame, path: str) -> pd.DataFrame:
    missing = raw.isna()
    if missing.to_numpy().any():
        row, col = np.argwhere(missing.to_numpy())[0]
        # 表头占第 1 行
        raise DataError(f"{path}: 第 {row + 2} 行字段数不足 (列 '{raw.columns[col]}' 缺失)")
    numeric = raw.apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataError(
            f"{path}: 第 {row + 2} 行第 {col + 1} 列 ('{raw.columns[col]}') 不是有限数值: '{raw.iat[row, col]}'"
        )
    return numeric.astype(float)


def read_dataset(path: str, target: str = "f") -> Dataset:
    """读取训练数据：目标列为 f，其余列为输入 x"""
    raw = _read_raw(path)
    if raw is None or raw.shape[0] == 0:
        raise DataError(f"{path}: 没有数据行")
    if target not in raw.columns:
        raise DataError(f"{path}: 缺少目标列 '{target}'，现有列: {list(raw.columns)}")
    frame = _to_numeric(raw, path)
    features = [c for c in frame.columns if c != target]
    if not features:
        raise DataError(f"{path}: 除目标列外没有输入列")
    logger.info(f"读取数据 {path}: M={frame.shape[0]}, m={len(features)}, 目标列 '{target}'")
    return Dataset(
        points=frame[features].to_numpy(dtype=float),
        values=frame[target].to_numpy(dtype=float),
        feature_names=[str(c) for c in features],
        target=target,
    )


def read_points(path: str, feature_names: Sequence[str] = (), target: Optional[str] = "f",
                m: Optional[int] = None) -> Tuple[np.ndarray, pd.DataFrame]:
    """读取待预测的点，返回 (K x m 数组, 原始数值表)；空文件返回 0 行"""
    raw = _read_raw(path)
    if raw is None:
        columns = list(feature_names) or []
        return np.zeros((0, m or len(columns))), pd.DataFrame(columns=columns)
    frame = _to_numeric(raw, path)

    if feature_names and all(name in frame.columns for name in feature_names):
        features = list(feature_names)
    else:
        features = [c for c in frame.columns if c != target]
    if m is not None and len(features) != m:
        raise SubspaceError(f"{path}: 输入列数 {len(features)} 与模型维度 m={m} 不一致")
    return frame[features].to_numpy(dtype=float).reshape(frame.shape[0], len(features)), frame


def write_frame(frame: pd.DataFrame, path: str = STDIO):
    if path == STDIO:
        frame.to_csv(sys.stdout, index=False)
        sys.stdout.flush()
    else:
        frame.to_csv(path, index=False)
        logger.info(f"已写入 {path} ({frame.shape[0]} 行)")


def model_to_document(model: RidgeModel, target: Optional[str] = None,
                      feature_names: Sequence[str] = ()) -> ModelDocument:
    return ModelDocument(
        m=model.m, n=model.n, p=model.p, family=model.family.value,
        affine_a=[float(v) for v in model.affine.a],
        affine_d=[float(v) for v in model.affine.d],
        U=model.U.basis.tolist(),
        c=[float(v) for v in model.coefficients],
        training=TrainingMetadata(
            M=model.M, residual_norm=model.training_residual_norm, seed=model.seed,
            solver=model.solver, status=model.status, target=target,
            feature_names=list(feature_names),
        ),
    )


def document_to_model(doc: ModelDocument) -> RidgeModel:
    U = np.array(doc.U, dtype=float)
    if U.shape != (doc.m, doc.n):
        raise DataError(f"模型文件中 U 的形状 {U.shape} 与 (m, n)=({doc.m}, {doc.n}) 不一致")
    if len(doc.affine_a) != doc.n or len(doc.affine_d) != doc.n:
        raise DataError("模型文件中仿射参数长度与 n 不一致")
    try:
        return RidgeModel(
            U=Subspace(U), family=doc.family, p=doc.p,
            affine=AffineMap(a=np.array(doc.affine_a), d=np.array(doc.affine_d)),
            coefficients=np.array(doc.c), training_residual_norm=doc.training.residual_norm,
            M=doc.training.M, seed=doc.training.seed, solver=doc.training.solver,
            status=doc.training.status,
        )
    except ValueError as e:
        raise DataError(f"模型文件无效: {e}")


def dump_document(doc: ModelDocument) -> str:
    # json 对 float 使用最短往返表示
    return json.dumps(doc.model_dump(), indent=2, ensure_ascii=False) + "\n"


def parse_document(text: str) -> ModelDocument:
    try:
        return ModelDocument.model_validate(json.loads(text))
    except json.JSONDecodeError as e:
        raise DataError(f"模型文件不是合法 JSON: {e}")
    except ValidationError as e:
        raise DataError(f"模型文件字段无效: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}")


def save_document(doc: ModelDocument, path: str):
    text = dump_document(doc)
    if path == STDIO:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    logger.info(f"模型已保存到 {path}")


def load_document(path: str) -> ModelDocument:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except FileNotFoundError:
        raise DataError(f"模型文件不存在: {path}")
    return parse_document(text)
