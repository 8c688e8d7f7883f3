import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from curatelink.features import (
    FeatureFormatError,
    l2_normalize_rows,
    load_features,
    parse_binary,
    parse_text,
    save_features,
    to_binary,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, width=32)


def test_parse_text():
    m = parse_text("2 3\n1 0 0\n0 1 0")
    assert m.shape == (2, 3)
    assert np.array_equal(m, [[1, 0, 0], [0, 1, 0]])


@pytest.mark.parametrize(
    "text,msg",
    [
        ("2 3\n1 0 0\n0 1\n", "row length"),
        ("1 2\nnan 1\n", "non-finite"),
        ("1 2\ninf 1\n", "non-finite"),
        ("3 2\n1 1\n2 2\n", "truncated"),
        ("1 2\n1 1\n2 2\n", "shape mismatch"),
        ("", "truncated"),
    ],
)
def test_text_errors(text, msg):
    with pytest.raises(FeatureFormatError, match=msg):
        parse_text(text)


def test_binary_errors():
    data = to_binary(np.ones((2, 3)))
    with pytest.raises(FeatureFormatError, match="truncated"):
        parse_binary(data[:-1])
    with pytest.raises(FeatureFormatError, match="truncated"):
        parse_binary(data[:10])
    with pytest.raises(FeatureFormatError, match="shape mismatch"):
        parse_binary(data + b"\0\0\0\0")
    with pytest.raises(FeatureFormatError, match="magic"):
        parse_binary(b"XXXXXX" + data[6:])
    bad = bytearray(data)
    bad[-4:] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(FeatureFormatError, match="non-finite"):
        parse_binary(bytes(bad))


def test_binary_layout():
    data = to_binary(np.array([[1.0, 2.0]]))
    assert data[:6] == b"FEATv1"
    assert data[6:14] == (1).to_bytes(8, "little")
    assert data[14:22] == (2).to_bytes(8, "little")
    assert np.frombuffer(data[22:], "<f4").tolist() == [1.0, 2.0]


@given(arrays(np.float32, st.tuples(st.integers(0, 6), st.integers(0, 5)), elements=finite))
def test_binary_round_trip_exact(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("f") / "m.feat"
    save_features(m.astype(np.float64), path, "binary")
    back = load_features(path)
    assert back.shape == m.shape
    assert np.array_equal(back, m.astype(np.float64))


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=st.floats(-1e6, 1e6)))
def test_text_round_trip(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("f") / "m.txt"
    save_features(m, path, "text")
    back = load_features(path)
    assert back.shape == m.shape
    np.testing.assert_allclose(back, m, rtol=1e-6, atol=0)


def test_normalize():
    m = l2_normalize_rows([[3.0, 4.0], [0.0, 0.0]])
    np.testing.assert_allclose(m[0], [0.6, 0.8])
    assert np.array_equal(m[1], [0.0, 0.0])


@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.floats(-1e3, 1e3)))
def test_normalize_properties(m):
    once = l2_normalize_rows(m)
    norms = np.linalg.norm(once, axis=1)
    nonzero = np.linalg.norm(m, axis=1) > 0
    np.testing.assert_allclose(norms[nonzero], 1.0, rtol=1e-12)
    assert np.all(once[~nonzero] == 0)
    np.testing.assert_allclose(l2_normalize_rows(once), once, rtol=1e-12, atol=1e-15)
