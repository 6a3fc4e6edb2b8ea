"""
Least-squares removal of a trend that is linear in its coefficients.

The residual series is tagged ``detrended`` and can be passed to every
spectral routine unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DesignError, PreconditionError
from .periodogram import TimeSeries, as_series

__all__ = ["TrendDesign", "fit_ols", "detrend_pipeline", "DESIGN_KINDS"]

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class TrendDesign:
    """Design-matrix builder for ``m(x_t, beta) = x_t' beta``.

    Use the constructors :meth:`mean_only`, :meth:`linear_time`,
    :meth:`harmonic` or :meth:`custom`; :meth:`matrix` returns the
    ``n x p`` design for a given length.
    """

    kind: str
    periods: tuple = ()
    X: np.ndarray | None = None

    @classmethod
    def mean_only(cls) -> "TrendDesign":
        return cls("mean_only")

    @classmethod
    def linear_time(cls) -> "TrendDesign":
        return cls("linear_time")

    @classmethod
    def harmonic(cls, periods) -> "TrendDesign":
        """Intercept plus a cosine/sine pair per period (in observations)."""
        periods = tuple(float(p) for p in np.atleast_1d(periods))
        if not periods or any(p <= 0 for p in periods):
            raise DesignError("harmonic periods must be positive")
        return cls("harmonic", periods)

    @classmethod
    def custom(cls, X) -> "TrendDesign":
        X = np.array(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or not np.all(np.isfinite(X)):
            raise DesignError("custom design must be a finite 2-d array")
        X.setflags(write=False)
        return cls("custom", (), X)

    def matrix(self, n: int) -> np.ndarray:
        t = np.arange(1, n + 1, dtype=float)
        if self.kind == "mean_only":
            return np.ones((n, 1))
        if self.kind == "linear_time":
            return np.column_stack([np.ones(n), t])
        if self.kind == "harmonic":
            cols = [np.ones(n)]
            for p in self.periods:
                w = 2.0 * np.pi * t / p
                cols += [np.cos(w), np.sin(w)]
            return np.column_stack(cols)
        if self.kind == "custom":
            if self.X.shape[0] != n:
                raise DesignError(f"custom design has {self.X.shape[0]} rows, series has {n}")
            return np.asarray(self.X)
        raise DesignError(f"unknown design kind {self.kind!r}")


DESIGN_KINDS = ("mean_only", "linear_time", "harmonic", "custom")


def fit_ols(y, design: TrendDesign):
    """Ordinary least squares trend fit through a QR factorization.

    Returns
    -------
    beta_hat : ndarray
    residuals : TimeSeries
        ``y - X beta_hat``, tagged as detrended.

    Raises
    ------
    DesignError
        If the design is rank deficient (smallest singular value at most
        ``1e-10`` times the largest).
    """
    yv = as_series(y)
    n = yv.size
    X = design.matrix(n)
    if n <= X.shape[1]:
        raise PreconditionError(f"need n > {X.shape[1]} observations for this design, got {n}")
    sv = np.linalg.svd(X, compute_uv=False)
    if not sv[-1] > RANK_RTOL * sv[0]:
        raise DesignError(f"{design.kind} design is rank deficient (singular values {sv[-1]:.3g} / {sv[0]:.3g})")
    Q, R = scipy.linalg.qr(X, mode="economic")
    beta = scipy.linalg.solve_triangular(R, Q.T @ yv)
    resid = yv - X @ beta
    return beta, TimeSeries(resid, detrended=True)


def detrend_pipeline(y, design: TrendDesign) -> TimeSeries:
    """Residuals of :func:`fit_ols`, ready for the spectral routines."""
    return fit_ols(y, design)[1]
