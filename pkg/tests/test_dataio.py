import json

import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.errors import DataError
from app.models import SolverConfig
from app.services.solver import evaluate_model, fit_gauss_newton
from app.utils.dataio import (
    document_to_model,
    dump_document,
    load_document,
    model_to_document,
    parse_document,
    read_dataset,
    read_points,
    save_document,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_read_dataset(tmp_path):
    path = _write(tmp_path / "d.csv", "x1,x2,f\n0.5,1e-3,2\n-1,2.5,3.25\n")
    data = read_dataset(path, "f")
    assert data.feature_names == ["x1", "x2"]
    assert_allclose(data.points, [[0.5, 1e-3], [-1.0, 2.5]])
    assert_allclose(data.values, [2.0, 3.25])


def test_read_dataset_single_row(tmp_path):
    data = read_dataset(_write(tmp_path / "d.csv", "a,f\n1,2\n"))
    assert data.M == 1 and data.m == 1


def test_missing_target(tmp_path):
    with pytest.raises(DataError, match="目标列"):
        read_dataset(_write(tmp_path / "d.csv", "x1,y\n1,2\n"), "f")


def test_ragged_rows(tmp_path):
    with pytest.raises(DataError, match="第 3 行"):
        read_dataset(_write(tmp_path / "d.csv", "x1,x2,f\n1,2,3\n4,5\n"))
    with pytest.raises(DataError):
        read_dataset(_write(tmp_path / "e.csv", "x1,x2,f\n1,2,3\n4,5,6,7\n"))


def test_non_finite_cell(tmp_path):
    with pytest.raises(DataError, match="第 3 行第 2 列"):
        read_dataset(_write(tmp_path / "d.csv", "x1,x2,f\n1,2,3\n4,inf,6\n"))
    with pytest.raises(DataError, match="x1"):
        read_dataset(_write(tmp_path / "e.csv", "x1,x2,f\nabc,2,3\n"))


def test_read_points_empty_file(tmp_path):
    points, frame = read_points(_write(tmp_path / "d.csv", ""), ["x1", "x2"], "f")
    assert points.shape == (0, 2)
    assert frame.shape[0] == 0


def test_read_points_ignores_target(tmp_path):
    points, frame = read_points(_write(tmp_path / "d.csv", "x1,x2,f\n1,2,3\n"), ["x1", "x2"], "f", m=2)
    assert_array_equal(points, [[1.0, 2.0]])
    assert "f" in frame.columns


@pytest.fixture
def fitted(quadratic_problem):
    model, _ = fit_gauss_newton(quadratic_problem, 2, SolverConfig(seed=1, max_iter=10))
    return model


def test_document_roundtrip_byte_identical(fitted, tmp_path):
    doc = model_to_document(fitted, "f", [f"x{i}" for i in range(10)])
    text = dump_document(doc)
    assert dump_document(parse_document(text)) == text

    path = str(tmp_path / "model.json")
    save_document(doc, path)
    assert dump_document(load_document(path)) == text


def test_document_to_model_predicts_identically(fitted, quadratic_problem):
    restored = document_to_model(parse_document(dump_document(model_to_document(fitted))))
    assert_array_equal(restored.U.basis, fitted.U.basis)
    assert_array_equal(evaluate_model(restored, quadratic_problem.points),
                       evaluate_model(fitted, quadratic_problem.points))


def test_document_stores_row_major_u(fitted):
    doc = model_to_document(fitted)
    assert len(doc.U) == doc.m and len(doc.U[0]) == doc.n


def test_bad_documents(fitted, tmp_path):
    with pytest.raises(DataError):
        parse_document("{not json")
    doc = model_to_document(fitted).model_dump()
    doc["U"] = [[1.0, 1.0]] * doc["m"]
    with pytest.raises(DataError):
        document_to_model(parse_document(json.dumps(doc)))
    doc = model_to_document(fitted).model_dump()
    doc["schema_version"] = 99
    with pytest.raises(DataError):
        parse_document(json.dumps(doc))
    with pytest.raises(DataError):
        load_document(str(tmp_path / "missing.json"))
