import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from claimrank.errors import ParseError, ShapeError
from claimrank.features import FeatureMatrix, read_feature_csv, standardize, write_feature_csv


def test_csv_roundtrip_nine_digits(tmp_path):
    fm = FeatureMatrix([("a", 1), ("a", 2)], [[1 / 3, 2.0], [-1e-7, 12345.6789]])
    write_feature_csv(fm, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "event_id,line_no,f0,f1"
    assert lines[1] == "a,1,0.333333333,2"
    back = read_feature_csv(tmp_path / "f.csv")
    assert back.keys == fm.keys
    assert np.allclose(back.values, fm.values, rtol=1e-8)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6)))
def test_csv_roundtrip_property(tmp_path_factory, values):
    fm = FeatureMatrix([("e", i + 1) for i in range(len(values))], values)
    path = tmp_path_factory.mktemp("f") / "f.csv"
    write_feature_csv(fm, path)
    assert np.allclose(read_feature_csv(path).values, values, rtol=1e-8, atol=1e-300)


def test_csv_errors(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("id,line,f0\n")
    with pytest.raises(ParseError):
        read_feature_csv(p)
    p.write_text("event_id,line_no,f0\na,1,0.5,0.2\n")
    with pytest.raises(ParseError) as info:
        read_feature_csv(p)
    assert info.value.line == 2


def test_matrix_validation_and_rows():
    fm = FeatureMatrix([("a", 1), ("b", 1)], [[1.0], [2.0]])
    assert fm.rows([("b", 1), ("b", 1)]).ravel().tolist() == [2.0, 2.0]
    with pytest.raises(KeyError):
        fm.rows([("c", 1)])
    with pytest.raises(ShapeError):
        FeatureMatrix([("a", 1), ("a", 1)], [[1.0], [2.0]])
    with pytest.raises(ShapeError):
        FeatureMatrix([("a", 1)], [[1.0], [2.0]])


def test_standardize_uses_reference_rows_only():
    fm = FeatureMatrix([("t", 1), ("t", 2), ("d", 1)], [[1.0, 5.0], [3.0, 5.0], [7.0, 9.0]])
    z = standardize(fm, [("t", 1), ("t", 2)])
    assert z.values.tolist() == [[-1.0, 0.0], [1.0, 0.0], [5.0, 4.0]]
