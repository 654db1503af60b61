import numpy as np
import pytest

from app.services.grassmann import random_subspace
from app.services.testbed import quadratic_sum, ridge_cubic
from app.services.varpro import ProjectedProblem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cubic_problem():
    """ridge_cubic 的 M=1000 样本，零残差问题 (n=2, p=3)"""
    X, f = ridge_cubic().sample(1000, 7)
    return ProjectedProblem(X, f, 3)


@pytest.fixture
def quadratic_problem():
    """二维二次 ridge 函数的小规模样本"""
    X, f = quadratic_sum(2).sample(200, 11)
    return ProjectedProblem(X, f, 2)


def random_instance(rng, M=40, m=5, n=2, p=3, family="legendre"):
    X = rng.uniform(-1.0, 1.0, size=(M, m))
    f = rng.standard_normal(M)
    U = random_subspace(m, n, rng)
    return ProjectedProblem(X, f, p, family=family), U


@pytest.fixture
def make_instance(rng):
    def _make(**kwargs):
        return random_instance(rng, **kwargs)
    return _make


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """在临时目录中运行命令，config/ 与 logs/ 不落在仓库里"""
    monkeypatch.chdir(tmp_path)
    return tmp_path
