import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polymanifold import (
    CenteringVector,
    DatasetCatalog,
    FormatError,
    InputError,
    SnapshotMatrix,
    TruncatedFileError,
    center,
    export_csv,
    load_catalog,
    load_matrix,
    save_catalog,
    save_matrix,
    uncenter,
)
from polymanifold.snapshots import read_container, write_container

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
matrices = st.tuples(st.integers(1, 8), st.integers(1, 8)).flatmap(lambda s: arrays(np.float64, s, elements=finite))


def test_center_small_example():
    Sc, c = center([[1, 3], [2, 2]])
    np.testing.assert_array_equal(Sc.data, [[-1, 1], [0, 0]])
    np.testing.assert_array_equal(c.mean, [2, 2])


def test_center_single_column():
    Sc, c = center(np.array([[4.0], [-2.0], [7.5]]))
    np.testing.assert_array_equal(Sc.data, 0.0)
    np.testing.assert_array_equal(c.mean, [4.0, -2.0, 7.5])


def test_center_rejects_nonfinite():
    with pytest.raises(InputError):
        center([[1.0, np.nan]])
    with pytest.raises(InputError):
        SnapshotMatrix(np.array([[np.inf]]))


def test_uncenter_examples():
    np.testing.assert_array_equal(uncenter([[0.0], [0.0]], CenteringVector([5, 7])).data, [[5], [7]])
    S = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(uncenter(S, CenteringVector([0, 0])).data, S)
    with pytest.raises(InputError):
        uncenter(S, CenteringVector([1, 2, 3]))


@given(matrices)
def test_center_properties(S):
    Sc, c = center(S)
    scale = max(1.0, np.abs(S).max())
    assert np.all(np.abs(Sc.data.mean(axis=1)) <= 1e-12 * scale)
    np.testing.assert_allclose(uncenter(Sc, c).data, S, rtol=0, atol=1e-12 * scale)
    # idempotent
    Scc, _ = center(Sc)
    np.testing.assert_allclose(Scc.data, Sc.data, rtol=0, atol=1e-12 * scale)


def test_snapshot_matrix_is_read_only():
    S = SnapshotMatrix(np.ones((2, 2)))
    with pytest.raises(ValueError):
        S.data[0, 0] = 3.0
    assert (S.n, S.k) == (2, 2)


@settings(max_examples=25)
@given(matrices)
def test_binary_round_trip_is_bit_exact(tmp_path_factory, S):
    path = tmp_path_factory.mktemp("m") / "s.pmdr"
    save_matrix(S, path)
    back = load_matrix(path).data
    assert back.tobytes() == np.asarray(S, dtype=np.float64).tobytes()


def test_binary_layout(tmp_path, rng):
    S = rng.standard_normal((3, 5))
    path = tmp_path / "a.pmdr"
    save_matrix(S, path)
    raw = path.read_bytes()
    assert raw[:5] == b"PMDR1"
    assert struct.unpack("<QQ", raw[5:21]) == (3, 5)
    np.testing.assert_array_equal(np.frombuffer(raw[21:], "<f8"), S.ravel(order="F"))
    assert load_matrix(path).data.tobytes() == S.tobytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.pmdr"
    path.write_bytes(b"NOPE1" + struct.pack("<QQ", 1, 1) + b"\0" * 8)
    with pytest.raises(FormatError):
        load_matrix(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "short.pmdr"
    path.write_bytes(b"PMDR1" + struct.pack("<QQ", 4, 4) + b"\0" * 64)
    with pytest.raises(TruncatedFileError):
        load_matrix(path)


def test_dimension_overflow(tmp_path):
    path = tmp_path / "huge.pmdr"
    path.write_bytes(b"PMDR1" + struct.pack("<QQ", 2**40, 2**20))
    with pytest.raises(FormatError):
        load_matrix(path)


def test_csv_export(tmp_path, rng):
    S = rng.standard_normal((4, 2))
    export_csv(S, tmp_path / "s.csv")
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "s.csv", delimiter=","), S)


def test_container_round_trip(tmp_path, rng):
    arrays_in = {"a": rng.standard_normal((3, 2)), "b": rng.standard_normal(4), "empty": np.zeros((3, 0))}
    write_container(tmp_path / "c.pmdc", {"x": 1}, arrays_in)
    meta, out = read_container(tmp_path / "c.pmdc")
    assert meta["x"] == 1 and meta["arrays"] == ["a", "b", "empty"]
    np.testing.assert_array_equal(out["a"], arrays_in["a"])
    np.testing.assert_array_equal(out["b"][:, 0], arrays_in["b"])
    assert out["empty"].shape == (3, 0)
    raw = (tmp_path / "c.pmdc").read_bytes()
    (tmp_path / "t.pmdc").write_bytes(raw[:-3])
    with pytest.raises(TruncatedFileError):
        read_container(tmp_path / "t.pmdc")


def test_catalog_round_trip(tmp_path, rng):
    train = [(0.0, SnapshotMatrix(rng.standard_normal((4, 3)))), (0.5, SnapshotMatrix(rng.standard_normal((4, 3))))]
    test = [(0.25, SnapshotMatrix(rng.standard_normal((4, 3))))]
    cat = DatasetCatalog(train, test, seed=3, mu_range=(0.0, 1.0))
    save_catalog(cat, tmp_path)
    doc = json.loads((tmp_path / "catalog.json").read_text())
    assert doc["seed"] == 3 and [e["mu"] for e in doc["train"]] == [0.0, 0.5]
    back = load_catalog(tmp_path)
    assert back.seed == 3 and back.mu_range == (0.0, 1.0)
    for (m1, a), (m2, b) in zip(cat.train + cat.test, back.train + back.test):
        assert m1 == m2 and a.data.tobytes() == b.data.tobytes()
    assert back.training_matrix().shape == (4, 6)


def test_catalog_invariants(rng):
    S = SnapshotMatrix(rng.standard_normal((2, 2)))
    with pytest.raises(InputError):
        DatasetCatalog([(0.0, S), (0.0, S)], [])
    with pytest.raises(InputError):
        DatasetCatalog([(0.0, S)], [(3.0, S)], mu_range=(0.0, 2.0))
