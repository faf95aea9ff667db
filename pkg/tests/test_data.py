import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bavart.data import (DataError, NsCurveConfig, TimeSeriesMatrix, build_lag_design, lag_vector, load_csv,
                         ns_extract_factors, ns_fitted_yields, ns_loading_matrix, ns_loadings, ns_map_forecasts,
                         write_csv)
from bavart.forecast import PredictiveDraws

GAMMA = 0.0609


def test_load_csv_reads_header_and_values(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,4\n5.5,-6\n")
    Y = load_csv(p)
    assert Y.names == ("a", "b")
    np.testing.assert_array_equal(Y.values, [[1, 2], [3, 4], [5.5, -6]])


def test_load_csv_blank_cell_names_location(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,\n")
    with pytest.raises(DataError, match=r"row 3, column 2 \('b'\)"):
        load_csv(p)


@pytest.mark.parametrize("body,msg", [
    ("a,b\n1,2\n3\n", "row 3 has 1 cells"),
    ("a,b\n1,x\n3,4\n", "cannot parse 'x'"),
    ("a,b\n1,2\n", "at least 2 data rows"),
    ("a,b\n1,nan\n3,4\n", "non-finite"),
])
def test_load_csv_rejects_malformed(tmp_path, body, msg):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=msg):
        load_csv(p)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "nope.csv")


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    Y = TimeSeriesMatrix(rng.standard_normal((7, 3)) * 1e3, ("x", "y", "z"))
    write_csv(tmp_path / "r.csv", Y)
    back = load_csv(tmp_path / "r.csv")
    assert back.names == Y.names
    np.testing.assert_array_equal(back.values, Y.values)


def test_matrix_invariants():
    with pytest.raises(DataError):
        TimeSeriesMatrix([[1.0, 2.0]], ("a", "b"))
    with pytest.raises(DataError):
        TimeSeriesMatrix([[1.0, 2.0], [3.0, 4.0]], ("a", "a"))
    with pytest.raises(DataError):
        TimeSeriesMatrix([[1.0, np.nan], [3.0, 4.0]], ("a", "b"))


def test_lag_design_examples():
    d = build_lag_design(TimeSeriesMatrix(np.array([1.0, 2, 3]), ("y",)), 1)
    np.testing.assert_array_equal(d.X, [[1], [2]])
    np.testing.assert_array_equal(d.Y, [[2], [3]])

    d = build_lag_design(TimeSeriesMatrix(np.array([1.0, 2, 3, 4]), ("y",)), 2)
    np.testing.assert_array_equal(d.X, [[2, 1], [3, 2]])
    np.testing.assert_array_equal(d.Y, [[3], [4]])

    d = build_lag_design(TimeSeriesMatrix(np.zeros((10, 2)) + np.arange(10)[:, None], ("a", "b")), 3)
    assert d.X.shape == (7, 6)
    assert d.K == 6


def test_lag_design_block_order():
    Y = np.arange(12.0).reshape(6, 2)
    d = build_lag_design(Y, 2)
    # row for t=2: (y_1, y_0)
    np.testing.assert_array_equal(d.X[0], np.r_[Y[1], Y[0]])
    np.testing.assert_array_equal(lag_vector(Y[:3], 2), d.X[1])


@pytest.mark.parametrize("P", [0, 3, 5])
def test_lag_design_rejects_bad_order(P):
    with pytest.raises(DataError):
        build_lag_design(np.arange(3.0), P)


@settings(max_examples=50, deadline=None)
@given(T=st.integers(6, 30), M=st.integers(1, 3), P=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_lag_design_window_consistency(T, M, P, seed):
    Y = np.random.default_rng(seed).standard_normal((T + 1, M))
    if P >= T:
        return
    a = build_lag_design(Y[:-1], P)
    b = build_lag_design(Y[1:], P)
    np.testing.assert_array_equal(a.X[1:], b.X[:-1])
    np.testing.assert_array_equal(a.Y[1:], b.Y[:-1])


def test_ns_loadings_short_maturity_limit():
    np.testing.assert_allclose(ns_loadings(1e-9, GAMMA), [1.0, 1.0, 0.0], atol=1e-9)


def test_ns_loading_at_ten_years_matches_high_precision():
    mpmath.mp.dps = 40
    z = mpmath.mpf(GAMMA) * 120
    ref = float((1 - mpmath.e ** (-z)) / z)
    assert ns_loadings(120, GAMMA)[1] == pytest.approx(ref, rel=1e-14)


def test_curvature_loading_peaks_near_thirty_months():
    grid = np.linspace(1, 120, 119001)
    curv = [ns_loadings(m, GAMMA)[2] for m in grid]
    assert abs(grid[int(np.argmax(curv))] - 29.9) <= 0.5


@pytest.mark.parametrize("m,g", [(0, 1), (-1, 1), (1, 0)])
def test_ns_loadings_reject_non_positive(m, g):
    with pytest.raises(DataError):
        ns_loadings(m, g)


@settings(max_examples=200, deadline=None)
@given(m=st.floats(1e-3, 1e3), g=st.floats(1e-3, 1.0))
def test_ns_loading_bounds(m, g):
    _, slope, curv = ns_loadings(m, g)
    assert 0 < slope <= 1
    assert -1 < curv < 1


def test_factor_extraction_recovers_exact_factors():
    cfg = NsCurveConfig((3, 12, 24, 60, 120, 180))
    rng = np.random.default_rng(1)
    F = rng.standard_normal((50, 3))
    Y = TimeSeriesMatrix(F @ ns_loading_matrix(cfg).T, [f"m{m}" for m in cfg.maturities])
    np.testing.assert_allclose(ns_extract_factors(Y, cfg).values, F, atol=1e-10)


def test_factor_extraction_residual_zero_only_without_noise():
    cfg = NsCurveConfig((3, 12, 24, 60, 120, 180))
    rng = np.random.default_rng(2)
    F = rng.standard_normal((40, 3))
    clean = F @ ns_loading_matrix(cfg).T
    for sigma, zero in ((0.0, True), (0.05, False)):
        Y = TimeSeriesMatrix(clean + sigma * rng.standard_normal(clean.shape), list("abcdef"))
        resid = Y.values - ns_fitted_yields(ns_extract_factors(Y, cfg).values, cfg)
        assert (np.linalg.norm(resid) < 1e-10) == zero


def test_factor_extraction_rank_and_count_errors():
    with pytest.raises(DataError, match="at least 3"):
        ns_extract_factors(TimeSeriesMatrix(np.ones((4, 2)), ("a", "b")), NsCurveConfig((12, 24)))
    with pytest.raises(DataError, match="maturities"):
        ns_extract_factors(TimeSeriesMatrix(np.ones((4, 2)), ("a", "b")), NsCurveConfig((12, 24, 36)))


def test_maturities_must_increase():
    with pytest.raises(DataError):
        NsCurveConfig((12, 6, 24))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), mats=st.lists(st.floats(1, 240), min_size=3, max_size=3, unique=True))
def test_three_maturities_reconstruct_exactly(seed, mats):
    mats = sorted(mats)
    if min(np.diff(mats)) < 1:
        return
    cfg = NsCurveConfig(tuple(mats))
    Y = np.random.default_rng(seed).standard_normal((5, 3))
    back = ns_fitted_yields(ns_extract_factors(TimeSeriesMatrix(Y, ("a", "b", "c")), cfg).values, cfg)
    np.testing.assert_allclose(back, Y, atol=1e-8)


def test_map_forecasts():
    cfg = NsCurveConfig((3, 12, 60, 120))
    np.testing.assert_allclose(ns_map_forecasts(np.array([1.0, 0, 0]), cfg), np.ones(4))
    np.testing.assert_array_equal(ns_map_forecasts(np.zeros(3), cfg), np.zeros(4))
    draw = np.random.default_rng(3).standard_normal(3)
    expect = [sum(ns_loadings(m, GAMMA)[i] * draw[i] for i in range(3)) for m in cfg.maturities]
    np.testing.assert_allclose(ns_map_forecasts(draw, cfg), expect, rtol=1e-12)
    with pytest.raises(DataError):
        ns_map_forecasts(np.zeros(4), cfg)


def test_map_forecasts_on_predictive_draws():
    cfg = NsCurveConfig((3, 12, 60, 120))
    vals = np.random.default_rng(4).standard_normal((5, 2, 3))
    pd_ = ns_map_forecasts(PredictiveDraws(vals, ("level", "slope", "curvature"), 10), cfg)
    assert pd_.values.shape == (5, 2, 4)
    assert pd_.origin == 10
    np.testing.assert_allclose(pd_.values, vals @ ns_loading_matrix(cfg).T)
