import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsfic.detrend import TrendDesign, detrend_pipeline, fit_ols
from tsfic.exceptions import DesignError, PreconditionError
from tsfic.fic import CandidateModel, fic_scores
from tsfic.focus import focus_lag_cov
from tsfic.spectral import make_arma_family

DESIGNS = [TrendDesign.mean_only(), TrendDesign.linear_time(), TrendDesign.harmonic([12.0, 5.5])]


@pytest.mark.parametrize("design", DESIGNS, ids=lambda d: d.kind)
def test_matches_lstsq(design):
    rng = np.random.default_rng(0)
    y = rng.standard_normal(80) + np.linspace(0, 3, 80)
    X = design.matrix(80)
    beta, res = fit_ols(y, design)
    ref = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.allclose(beta, ref, atol=1e-10)
    assert res.detrended
    assert np.allclose(X.T @ res.values, 0.0, atol=1e-9)


def test_design_shapes():
    t = TrendDesign.linear_time().matrix(4)
    assert np.array_equal(t, [[1, 1], [1, 2], [1, 3], [1, 4]])
    h = TrendDesign.harmonic(4).matrix(4)
    assert np.allclose(h[:, 1], [0, -1, 0, 1], atol=1e-15)
    assert np.allclose(h[:, 2], [1, 0, -1, 0], atol=1e-15)


def test_mean_only_centres():
    y = np.arange(10.0) ** 2
    res = detrend_pipeline(y, TrendDesign.mean_only())
    assert abs(res.values.sum()) < 1e-10
    assert np.allclose(res.values, y - y.mean())


def test_rank_deficient_custom():
    X = np.column_stack([np.ones(20), 2 * np.ones(20)])
    with pytest.raises(DesignError):
        fit_ols(np.arange(20.0), TrendDesign.custom(X))


def test_custom_row_mismatch():
    with pytest.raises(DesignError):
        fit_ols(np.arange(20.0), TrendDesign.custom(np.ones((19, 1))))


def test_bad_harmonic_and_short_series():
    with pytest.raises(DesignError):
        TrendDesign.harmonic([0.0])
    with pytest.raises(PreconditionError):
        fit_ols([1.0, 2.0], TrendDesign.linear_time())


def test_constant_after_detrend_is_degenerate():
    res = detrend_pipeline(np.full(40, 3.0), TrendDesign.mean_only())
    rep = fic_scores(res, [CandidateModel.parametric(make_arma_family(1, 0)), CandidateModel.nonparametric()],
                     focus_lag_cov(1))
    assert all(r.error for r in rep.rows)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(-1, 1))
def test_residuals_ignore_trend_in_span(seed, a, b):
    y = np.random.default_rng(seed).standard_normal(50)
    X = TrendDesign.linear_time().matrix(50)
    r0 = detrend_pipeline(y, TrendDesign.linear_time()).values
    r1 = detrend_pipeline(y + X @ [a, b], TrendDesign.linear_time()).values
    assert np.allclose(r0, r1, atol=1e-9)
