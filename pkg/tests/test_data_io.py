import json

import numpy as np
import pytest

from latentvar.data import (
    CsvFormatError,
    Dataset,
    GroundTruth,
    read_csv,
    truth_path_for,
    write_csv,
    write_truth,
)
from latentvar.errors import DegenerateData
from latentvar.serialize import fit_from_dict, fit_to_dict, write_matrix_csv, write_trace_csv
from latentvar.synth import make_nlvar_dataset
from latentvar.training import TrainConfig, predict, train


def test_csv_round_trip_lossless(tmp_path):
    data, _, _ = make_nlvar_dataset(n=3, p=2, t=50, seed=4)
    path = tmp_path / "d.csv"
    write_csv(data, path)
    write_truth(data.truth, truth_path_for(path))
    back = read_csv(path)
    assert np.array_equal(back.z, data.z)
    assert back.names == data.names
    np.testing.assert_array_equal(back.truth.adjacency, data.truth.adjacency)
    np.testing.assert_array_equal(back.truth.coeffs, data.truth.coeffs)
    # serialising again gives the same bytes
    write_csv(back, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_bytes() == path.read_bytes()


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(CsvFormatError, match="row 3"):
        read_csv(p)
    p.write_text("a,b\n1,2\n3,zz\n")
    with pytest.raises(CsvFormatError, match=r"row 3, column 2 \(b\)"):
        read_csv(p)
    p.write_text("")
    with pytest.raises(CsvFormatError):
        read_csv(p)
    p.write_text("a,b\n")
    with pytest.raises(CsvFormatError):
        read_csv(p)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros(3))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), names=("a",))
    with pytest.raises(DegenerateData):
        Dataset(np.ones((2, 5))).check_nondegenerate()
    d = Dataset(np.zeros((2, 3)))
    assert d.names == ("x0", "x1")
    with pytest.raises(ValueError):
        d.z[0, 0] = 1.0


def test_truth_json_round_trip():
    gt = GroundTruth(np.eye(2), np.arange(8.0).reshape(2, 2, 2), {"model": "x"})
    back = GroundTruth.from_json(json.loads(json.dumps(gt.to_json())))
    np.testing.assert_array_equal(back.coeffs, gt.coeffs)
    assert back.generator == {"model": "x"}
    with pytest.raises(ValueError):
        GroundTruth(np.zeros((2, 3)))


@pytest.mark.parametrize("method", ["linear", "f_a", "f_b"])
def test_model_json_round_trip(method):
    data, _, _ = make_nlvar_dataset(n=3, p=2, t=120, seed=1)
    fit = train(method, data, TrainConfig(lag=2, epochs=2, units=8, lam=1e-3))
    obj = json.loads(json.dumps(fit_to_dict(fit, data.names)))
    back = fit_from_dict(obj)
    assert back.method == fit.method and back.config == fit.config
    np.testing.assert_array_equal(back.var.coeffs, fit.var.coeffs)
    p1, _ = predict(fit, data)
    p2, _ = predict(back, data)
    np.testing.assert_array_equal(p1, p2)


def test_matrix_and_trace_csv(tmp_path):
    write_matrix_csv(np.array([[0.0, 1.5], [2.0, 0.0]]), ["a", "b"], tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines() == [",a,b", "a,0.0,1.5", "b,2.0,0.0"]
    write_trace_csv({"objective": [3.0, 2.0], "g1": np.array([[0.1, -0.2], [0.0, 0.05]]),
                     "g2": np.zeros((2, 2))}, tmp_path / "t.csv")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "epoch,objective,max_abs_g1,max_abs_g2"
    assert rows[1] == "0,3.0,0.2,0.0"
