import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from conftest import FIB_C
from nestlab.estimators import NestScanTransformer, PrincipalNestEstimator


def test_estimator_table_matches_geometry():
    est = PrincipalNestEstimator(depth=6, bits=512).fit(FIB_C)
    assert est.termination_ == "MaxDepth"
    table = est.table()
    assert table.shape == (6, 7)
    assert np.isnan(table[0, 3])
    assert table[2, 0] == pytest.approx(float(est.geometry_.level(3).mu))
    assert list(table[:, 5]) == [1, 2, 3, 4, 5, 6]
    assert list(table[:, 6]) == [3, 5, 8, 13, 21, 34]


def test_estimator_params_and_unfitted():
    est = PrincipalNestEstimator(depth=3)
    assert clone(est).get_params()["depth"] == 3
    with pytest.raises(NotFittedError):
        est.table()


def test_scan_transformer():
    tr = NestScanTransformer(depth=4)
    with pytest.raises(NotFittedError):
        tr.transform([["-1"]])
    out = make_pipeline(tr).fit_transform(np.array([["-1"], ["-1.87"], ["-2"]], dtype=object))
    assert out.shape == (3, 3)
    assert out[0, 0] == 0 and np.isnan(out[0, 1])
    assert out[1, 0] == 4 and 0 < out[1, 1] < 1
    assert out[2, 0] == -1
