"""
Raw periodogram, the integrated-periodogram distribution estimator and the
nonparametric focus estimators built on it.

The periodogram is evaluated by direct summation at arbitrary frequencies,
so it can be tabulated at the nodes of any quadrature rule. No mean
correction, tapering or smoothing is applied.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInputError, PreconditionError
from .spectral import QuadratureRule, default_quadrature, even_part

__all__ = [
    "TimeSeries",
    "as_series",
    "periodogram_at",
    "periodogram_grid",
    "EmpiricalSpectrum",
    "integrate_distribution",
    "np_focus_linear",
    "np_focus",
]

# entries per trig block in the direct-summation kernel
_BLOCK = 2_000_000


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Observed values ``y_1..y_n``; ``detrended`` marks OLS residual series."""

    values: np.ndarray
    detrended: bool = False
    label: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 1:
            raise PreconditionError("a time series needs at least one value")
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise PreconditionError(f"non-finite value at position {bad[0] + 1}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def as_series(y) -> np.ndarray:
    """Finite 1-d float array from a sequence, array or :class:`TimeSeries`."""
    if isinstance(y, EmpiricalSpectrum):
        return y.values
    if isinstance(y, TimeSeries):
        return y.values
    return TimeSeries(y).values


def is_degenerate(y) -> bool:
    """True for constant series (including the zero series)."""
    y = as_series(y)
    return bool(np.all(y == y[0]))


def periodogram_grid(Y, nodes) -> np.ndarray:
    """Periodogram of each column of ``Y`` at ``nodes``.

    ``Y`` has shape ``(n,)`` or ``(n, b)``; the result has shape ``(M,)`` or
    ``(M, b)``. Trig blocks are shared across columns, so batching many
    series is much cheaper than one call per series.
    """
    Y = np.asarray(Y, dtype=float)
    single = Y.ndim == 1
    if single:
        Y = Y[:, None]
    nodes = np.asarray(nodes, dtype=float).ravel()
    n = Y.shape[0]
    t = np.arange(1, n + 1, dtype=float)
    out = np.empty((nodes.size, Y.shape[1]))
    step = max(1, _BLOCK // n)
    for start in range(0, nodes.size, step):
        sl = slice(start, start + step)
        arg = np.outer(nodes[sl], t)
        c = np.cos(arg) @ Y
        s = np.sin(arg) @ Y
        out[sl] = (c * c + s * s) / (2.0 * np.pi * n)
    return out[:, 0] if single else out


def periodogram_at(y, omega):
    """``(2 pi n)^{-1} |sum_t y_t exp(i w t)|^2`` at scalar or array ``omega``."""
    y = as_series(y)
    omega = np.asarray(omega, dtype=float)
    vals = periodogram_grid(y, omega.ravel())
    return vals.reshape(omega.shape) if omega.ndim else float(vals[0])


class EmpiricalSpectrum:
    """Periodogram of one series, tabulated on a quadrature rule.

    Parameters
    ----------
    y : array_like or TimeSeries
        Observed series.
    quad : QuadratureRule, optional
        Rule used for cached grid values; ``default_quadrature(n)`` if omitted.
    grid : ndarray, optional
        Precomputed periodogram values at ``quad.nodes`` (e.g. from a batched
        :func:`periodogram_grid` call).
    """

    __slots__ = ("series", "quad", "grid")

    def __init__(self, y, quad: QuadratureRule | None = None, grid=None):
        series = y if isinstance(y, TimeSeries) else TimeSeries(as_series(y))
        quad = quad if quad is not None else default_quadrature(series.n)
        if grid is None:
            grid = periodogram_grid(series.values, quad.nodes)
        grid = np.array(grid, dtype=float)
        if grid.shape != quad.nodes.shape:
            raise PreconditionError("grid values do not match the quadrature nodes")
        grid.setflags(write=False)
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "grid", grid)

    def __setattr__(self, name, value):
        raise AttributeError("EmpiricalSpectrum is immutable")

    @property
    def values(self) -> np.ndarray:
        return self.series.values

    @property
    def n(self) -> int:
        return self.series.n

    def __call__(self, omega):
        return periodogram_at(self.values, omega)

    def on(self, q: QuadratureRule | None) -> np.ndarray:
        """Periodogram values at the nodes of ``q``."""
        if q is None or q is self.quad:
            return self.grid
        return periodogram_grid(self.values, q.nodes)

    def total_mass(self, q: QuadratureRule | None = None) -> float:
        q = q or self.quad
        return float(q.integrate_full(self.on(q)))

    @classmethod
    def batch(cls, Y, quad: QuadratureRule) -> list:
        """One spectrum per column of ``Y`` sharing a single trig evaluation."""
        Y = np.asarray(Y, dtype=float)
        grids = periodogram_grid(Y, quad.nodes)
        return [cls(Y[:, j], quad, grids[:, j]) for j in range(Y.shape[1])]

    def __repr__(self):
        return f"EmpiricalSpectrum(n={self.n}, nodes={self.quad.size})"


def _spectrum(spec, q=None) -> EmpiricalSpectrum:
    if isinstance(spec, EmpiricalSpectrum):
        return spec
    return EmpiricalSpectrum(spec, q)


def integrate_distribution(spec, omega: float, q: QuadratureRule | None = None) -> float:
    """``G_n(w) = int_{-pi}^{w} I_n(u) du`` using symmetry of ``I_n``."""
    spec = _spectrum(spec, q)
    q = q or spec.quad
    omega = float(omega)
    if not -np.pi <= omega <= np.pi:
        raise PreconditionError("omega must lie in [-pi, pi]")
    total = spec.total_mass(q)
    if omega == np.pi:
        return total
    if omega == -np.pi:
        return 0.0
    sub = q.sub_rule(0.0, abs(omega))
    partial = float(sub.integrate(periodogram_grid(spec.values, sub.nodes))) if sub.size else 0.0
    half = 0.5 * total
    return half + partial if omega >= 0 else half - partial


def np_focus_linear(spec, h0, q: QuadratureRule | None = None) -> float:
    """Nonparametric estimate ``int h0(w) I_n(w) dw`` over ``[-pi, pi]``.

    For ``h0 = cos(k w)`` this is the lag-``k`` sample autocovariance with
    divisor ``n``.
    """
    spec = _spectrum(spec, q)
    q = q or spec.quad
    return float(q.integrate_full(np.asarray(even_part(h0)(q.nodes)) * spec.on(q)))


def np_focus(spec, focus, q: QuadratureRule | None = None) -> float:
    """``H`` applied to the integrated-periodogram components of ``focus``."""
    spec = _spectrum(spec, q)
    q = q or spec.quad
    return focus.H(focus.components(spec.on(q), q))


def require_nondegenerate(y):
    if is_degenerate(y):
        raise DegenerateInputError("series is constant; no variation to model")
