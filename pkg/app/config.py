import copy
import logging
import os
from typing import Any, Dict, Optional

import yaml
from pydantic import ValidationError

from app.errors import UsageError
from app.models import SolverConfig
from app.services.experiments import DEFAULT_EXPERIMENTS

logger = logging.getLogger(__name__)

CONFIG_PATH = "config/config.yaml"

# 默认配置
DEFAULT_CONFIG: Dict[str, Any] = {
    "solver": SolverConfig().model_dump(),
    "experiments": copy.deepcopy(DEFAULT_EXPERIMENTS),
    "logging": {
        "level": "INFO",
        "file": "logs/app.log",
    },
    "io": {
        "target_column": "f",
        "curve_points": 200,
    },
}


def _read_yaml(path: str) -> Optional[Dict[str, Any]]:
    # 读取配置：UTF-8优先，回退GBK/GB18030
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return yaml.safe_load(f)
    except UnicodeDecodeError:
        try:
            with open(path, 'r', encoding='gbk') as f:
                return yaml.safe_load(f)
        except UnicodeDecodeError:
            with open(path, 'r', encoding='gb18030') as f:
                return yaml.safe_load(f)


def save_config(config: Dict[str, Any], path: str = CONFIG_PATH):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.dump(config, f, default_flow_style=False, allow_unicode=True)


def load_config(path: str = CONFIG_PATH) -> Dict[str, Any]:
    """加载配置文件；不存在时按默认配置创建，缺失的段落用默认值补齐并写回"""
    if not os.path.exists(path):
        current_config = copy.deepcopy(DEFAULT_CONFIG)
        try:
            save_config(current_config, path)
            logger.info(f"已创建默认配置文件: {path}")
        except OSError as e:
            logger.warning(f"无法写入默认配置文件 {path}: {e}")
        return current_config

    try:
        current_config = _read_yaml(path)
    except yaml.YAMLError as e:
        raise UsageError(f"配置文件 {path} 解析失败: {e}")

    if not current_config:
        current_config = copy.deepcopy(DEFAULT_CONFIG)
    if not isinstance(current_config, dict):
        raise UsageError(f"配置文件 {path} 顶层必须是映射")

    need_save_after_load = False
    for key, value in DEFAULT_CONFIG.items():
        if key not in current_config or current_config[key] is None:
            current_config[key] = copy.deepcopy(value)
            need_save_after_load = True
        elif isinstance(value, dict):
            for sub_key, sub_value in value.items():
                if sub_key not in current_config[key]:
                    current_config[key][sub_key] = copy.deepcopy(sub_value)
                    need_save_after_load = True

    if need_save_after_load:
        logger.info(f"配置文件 {path} 缺少部分字段，已用默认值补齐")
        try:
            save_config(current_config, path)
        except OSError as e:
            logger.error(f"保存配置文件失败: {e}")

    return current_config


def solver_config_from(config: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> SolverConfig:
    """配置文件 solver 段 + 命令行覆盖（值为 None 的覆盖项忽略）"""
    values = dict(config.get("solver") or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return SolverConfig(**values)
    except ValidationError as e:
        raise UsageError(f"求解器参数无效: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}")
