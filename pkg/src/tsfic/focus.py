"""
Focus functionals: smooth transforms of linear spectral functionals.

A focus is ``mu(G) = H(int h_1 dG, ..., int h_k dG)`` with bounded,
piecewise continuous weights ``h_j`` on ``[-pi, pi]``. The built-in
constructors cover lagged covariances, lagged correlations, one-sided band
masses and conditional threshold probabilities.

Weights and transforms are built from module-level functions so that focus
objects pickle cleanly into worker processes.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.stats import norm

from .exceptions import FocusDomainError, InfeasibleCovarianceError, PreconditionError
from .spectral import QuadratureRule

__all__ = [
    "FocusWeight",
    "FocusFunctional",
    "focus_lag_cov",
    "focus_lag_corr",
    "focus_band_mass",
    "focus_threshold_prob",
    "FOCUS_CONSTRUCTORS",
    "focus_from_config",
]


@dataclass(frozen=True)
class FocusWeight:
    """A bounded weight function ``h`` on ``[-pi, pi]``.

    Parameters
    ----------
    func : callable
        Vectorised map from frequencies to weights.
    bound : float
        Declared bound on ``|h|``.
    jump_points : tuple of float
        Sorted discontinuities inside ``(-pi, pi)``.
    symmetric : bool
        Whether ``h(w) == h(-w)``. Only the even part of ``h`` ever enters an
        integral against a spectral density.
    """

    func: Callable
    bound: float
    jump_points: tuple = ()
    symmetric: bool = True
    label: str = ""

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.broadcast_to(np.asarray(self.func(omega), dtype=float), omega.shape)

    def even(self, omega):
        if self.symmetric:
            return self(omega)
        omega = np.asarray(omega, dtype=float)
        return 0.5 * (self(omega) + self(-omega))


def _identity(x):
    return float(x[0])


def _identity_grad(x):
    return np.ones(1)


@dataclass(frozen=True, eq=False)
class FocusFunctional:
    """``mu(G; h, H)`` with weights ``h_1..h_k`` and a smooth transform ``H``."""

    name: str
    weights: tuple
    transform: Callable = _identity
    grad_transform: Callable = _identity_grad
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) < 1:
            raise PreconditionError("a focus needs at least one weight")
        object.__setattr__(self, "weights", tuple(self.weights))

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def jump_points(self) -> tuple:
        pts = sorted({abs(p) for w in self.weights for p in w.jump_points})
        return tuple(pts)

    def H(self, x) -> float:
        return self.transform(np.asarray(x, dtype=float))

    def grad_H(self, x) -> np.ndarray:
        return np.asarray(self.grad_transform(np.asarray(x, dtype=float)), dtype=float)

    def weight_grid(self, q: QuadratureRule) -> np.ndarray:
        """Even parts of the weights at the nodes, shape ``(M, k)``."""
        return np.column_stack([w.even(q.nodes) for w in self.weights])

    def components(self, g, q: QuadratureRule) -> np.ndarray:
        """``(int h_j g dw)_j`` over ``[-pi, pi]`` for a density callable or grid values."""
        vals = g(q.nodes) if callable(g) else g
        return q.integrate_full(self.weight_grid(q) * np.asarray(vals, dtype=float)[:, None])

    def value(self, g, q: QuadratureRule) -> float:
        """Focus parameter ``mu(G)`` for the spectral density ``g``."""
        return self.H(self.components(g, q))

    def __repr__(self):
        return f"FocusFunctional({self.name})"

    def to_config(self) -> dict:
        return {"name": self.params.get("constructor", self.name), **{
            k: v for k, v in self.params.items() if k != "constructor"}}


# --- weights ------------------------------------------------------------------

def _cos_weight(k, omega):
    return np.cos(k * omega)


def _band_weight(a, b, omega):
    r = np.abs(omega)
    return 0.5 * ((r >= a) & (r < b))


def cosine_weight(k: int) -> FocusWeight:
    return FocusWeight(functools.partial(_cos_weight, float(k)), bound=1.0, label=f"cos({k}w)")


# --- transforms ---------------------------------------------------------------

def _ratio(name, x):
    if not x[1] > 0:
        raise FocusDomainError(f"{name}: lag-0 covariance component must be positive, got {x[1]!r}")
    return float(x[0] / x[1])


def _ratio_grad(name, x):
    if not x[1] > 0:
        raise FocusDomainError(f"{name}: lag-0 covariance component must be positive, got {x[1]!r}")
    return np.array([1.0 / x[1], -x[0] / x[1] ** 2])


def _conditional_exceedance(y_threshold, cond, x):
    x = np.asarray(x, dtype=float)
    m = cond.size
    cov = scipy.linalg.toeplitz(x)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise InfeasibleCovarianceError(
            f"threshold_prob: covariance built from C(0..{m}) = {x.tolist()} is not positive definite"
        ) from None
    s11 = cov[:m, :m]
    s12 = cov[:m, m]
    coef = scipy.linalg.solve(s11, s12, assume_a="pos")
    mean = coef @ cond
    var = cov[m, m] - coef @ s12
    if not var > 0:
        raise InfeasibleCovarianceError("threshold_prob: conditional variance is not positive")
    return float(norm.sf((y_threshold - mean) / np.sqrt(var)))


def _numeric_grad(func, x):
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for j in range(x.size):
        step = 1e-6 * max(1.0, abs(x[j]))
        up, down = x.copy(), x.copy()
        up[j] += step
        down[j] -= step
        out[j] = (func(up) - func(down)) / (2 * step)
    return out


def _conditional_exceedance_grad(y_threshold, cond, x):
    return _numeric_grad(functools.partial(_conditional_exceedance, y_threshold, cond), x)


# --- constructors ---------------------------------------------------------------

def focus_lag_cov(k: int) -> FocusFunctional:
    """Autocovariance ``C(k)``."""
    if k < 0:
        raise PreconditionError("lag must be nonnegative")
    k = int(k)
    return FocusFunctional(f"lag_cov(k={k})", (cosine_weight(k),),
                           params={"constructor": "lag_cov", "k": k})


def focus_lag_corr(k: int) -> FocusFunctional:
    """Autocorrelation ``C(k) / C(0)``."""
    if k < 1:
        raise PreconditionError("correlation lag must be >= 1")
    k = int(k)
    name = f"lag_corr(k={k})"
    return FocusFunctional(
        name, (cosine_weight(k), cosine_weight(0)),
        functools.partial(_ratio, name), functools.partial(_ratio_grad, name),
        params={"constructor": "lag_corr", "k": k})


def focus_band_mass(a: float, b: float) -> FocusFunctional:
    """One-sided spectral mass ``int_a^b g(w) dw`` over ``[a, b)`` in ``[0, pi]``.

    The two-sided mass over ``a <= |w| < b`` is twice this value.
    """
    a, b = float(a), float(b)
    if not 0.0 <= a < b <= np.pi:
        raise PreconditionError(f"band_mass needs 0 <= a < b <= pi, got ({a}, {b})")
    jumps = sorted({s * v for v in (a, b) if 0.0 < v < np.pi for s in (-1.0, 1.0)})
    weight = FocusWeight(functools.partial(_band_weight, a, b), bound=0.5,
                         jump_points=tuple(jumps), label=f"1[{a:.4g},{b:.4g})/2")
    return FocusFunctional(f"band_mass(a={a:.6g},b={b:.6g})", (weight,),
                           params={"constructor": "band_mass", "a": a, "b": b})


def focus_threshold_prob(y_threshold: float, cond_values) -> FocusFunctional:
    """``P(Y_{n+1} >= y | Y_{n-k..n} = cond_values)`` for a zero-mean Gaussian process.

    ``cond_values`` lists ``(y_{n-k}, ..., y_n)`` and is treated as fixed.
    The gradient of the transform is a central finite difference.
    """
    cond = np.atleast_1d(np.asarray(cond_values, dtype=float))
    if cond.ndim != 1 or cond.size < 1:
        raise PreconditionError("cond_values must be a nonempty vector")
    k = cond.size - 1
    y_threshold = float(y_threshold)
    weights = tuple(cosine_weight(j) for j in range(k + 2))
    return FocusFunctional(
        f"threshold_prob(y={y_threshold:.6g},k={k})", weights,
        functools.partial(_conditional_exceedance, y_threshold, cond),
        functools.partial(_conditional_exceedance_grad, y_threshold, cond),
        params={"constructor": "threshold_prob", "y_threshold": y_threshold,
                "cond_values": cond.tolist()})


FOCUS_CONSTRUCTORS = {
    "lag_cov": focus_lag_cov,
    "lag_corr": focus_lag_corr,
    "band_mass": focus_band_mass,
    "threshold_prob": focus_threshold_prob,
}


def focus_from_config(spec: dict) -> FocusFunctional:
    """Build a focus from ``{"name": <constructor>, **params}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in FOCUS_CONSTRUCTORS:
        raise KeyError(f"unknown focus {name!r}; available: {', '.join(sorted(FOCUS_CONSTRUCTORS))}")
    try:
        return FOCUS_CONSTRUCTORS[name](**spec)
    except TypeError as exc:
        raise KeyError(f"bad parameters for focus {name!r}: {exc}") from None
