import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polymanifold import (
    AmConfig,
    ErrorSweepRecord,
    InputError,
    KdvConfig,
    build_catalog,
    relative_errors,
    representation_error,
    run_sweep,
    space_time_field,
)
from polymanifold.evaluation import mean_relative_error, read_records_csv, write_records_csv


def test_error_examples(rng):
    S = [rng.standard_normal((5, 4)) for _ in range(3)]
    assert mean_relative_error(S, S) == 0.0
    assert mean_relative_error(S, [np.zeros_like(x) for x in S]) == 1.0
    A = np.ones((2, 2))
    recs = [A * (1 - np.sqrt(0.1)), A * (1 - np.sqrt(0.3))]
    assert mean_relative_error([A, A], recs) == pytest.approx(0.2, rel=1e-14)


def test_error_input_checks(rng):
    with pytest.raises(InputError):
        relative_errors([], [])
    with pytest.raises(InputError):
        relative_errors([np.ones((2, 2))], [np.ones((2, 3))])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_error_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((6, 9))
    R = S + 0.1 * rng.standard_normal(S.shape)
    perm = rng.permutation(9)
    a = relative_errors([S], [R])[0]
    b = relative_errors([S[:, perm]], [R[:, perm]])[0]
    assert a == pytest.approx(b, rel=1e-12)


def test_record_invariants():
    with pytest.raises(InputError):
        ErrorSweepRecord("pod", 0, 0, 0, 0.0, 0.1)
    with pytest.raises(InputError):
        ErrorSweepRecord("pod", 2, 0, 0, 0.0, -0.1)
    with pytest.raises(InputError):
        ErrorSweepRecord("other", 2, 0, 0, 0.0, 0.1)
    assert ErrorSweepRecord("manifold_am", 2, 3, 10, 1.0, math.nan, 0, False).failed


def test_csv_round_trip(tmp_path):
    recs = [
        ErrorSweepRecord("pod", 2, 0, 0, 0.0, 0.1234567890123456789),
        ErrorSweepRecord("manifold_am", 4, 3, 78, 500.0, 1e-3 / 3, 7, True),
        ErrorSweepRecord("manifold_am", 6, 3, 76, 500.0, math.nan, 0, False),
    ]
    write_records_csv(recs, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "method,r,p,q,gamma,test_error,am_cycles,converged"
    back = read_records_csv(tmp_path / "s.csv")
    for a, b in zip(recs, back):
        assert (a.method, a.r, a.p, a.q, a.gamma, a.am_cycles, a.converged) == (
            b.method, b.r, b.p, b.q, b.gamma, b.am_cycles, b.converged)
        assert a.test_error == b.test_error or (a.failed and b.failed)


def test_space_time_field(rng):
    ref = rng.standard_normal((3, 2))
    tab = space_time_field([0.0, 1.0, 2.0], [0.0, 0.5], ref, {"pod": ref * 2})
    assert tab.dtype.names == ("x", "t", "reference", "pod")
    assert tab.shape == (6,)
    np.testing.assert_array_equal(tab["reference"], ref.ravel())
    assert (tab["x"][3], tab["t"][3]) == (1.0, 0.5)
    with pytest.raises(InputError):
        space_time_field([0.0], [0.0], ref, {"bad": np.zeros((2, 2))})


@pytest.fixture(scope="module")
def tiny_catalog():
    base = KdvConfig(n_grid=64, t_end=0.004, save_dt=2e-4, inner_dt=1e-5)
    return build_catalog([0.0, 0.5, 1.0, 1.5, 2.0], n_test=3, seed=5, base=base)


def test_sweep_record_layout(tiny_catalog):
    traces, models = {}, {}
    recs = run_sweep(tiny_catalog, r_list=(2, 3), p_list=(2, 3), gamma=1.0, r_total=12,
                     am_cfg=AmConfig(max_cycles=10), traces=traces, models=models)
    assert [r.method for r in recs].count("pod") == 2
    assert [r.method for r in recs].count("manifold_pod") == 4
    assert [r.method for r in recs].count("manifold_am") == 4
    assert [r.key for r in recs] == sorted(r.key for r in recs)
    assert all(not r.failed for r in recs)
    assert set(traces) == {(2, 2), (2, 3), (3, 2), (3, 3)}
    for rec in recs:
        if rec.method == "pod":
            assert (rec.p, rec.q, rec.am_cycles) == (0, 0, 0)
        else:
            assert rec.q == 12 - rec.r
    # the pod record equals a direct evaluation of the stored model
    direct = representation_error(models[("pod", 2, 0)], tiny_catalog)
    assert recs[0].test_error == direct
    pod = [r.test_error for r in recs if r.method == "pod"]
    assert pod[1] <= pod[0] + 1e-12


def test_sweep_rejects_oversized_total(tiny_catalog):
    with pytest.raises(InputError):
        run_sweep(tiny_catalog, r_list=(2,), r_total=65)


def test_sweep_flags_failed_cells(tiny_catalog):
    # gamma = 0 with more features than samples is ill posed; failures become nan records
    small = build_catalog([0.0], n_test=1, seed=1,
                          base=KdvConfig(n_grid=32, t_end=0.0012, save_dt=2e-4, inner_dt=1e-5))
    recs = run_sweep(small, r_list=(3,), p_list=(4,), gamma=0.0, r_total=5)
    assert [r.failed for r in recs] == [False, True, True]
    assert "gamma" in recs[1].message
