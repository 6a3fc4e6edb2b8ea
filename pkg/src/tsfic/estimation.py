"""
Whittle and exact Gaussian fitting of ARMA spectral families.

Optimisation runs in the unconstrained encoding of each family (partial
autocorrelations through ``tanh``, ``log sigma``) on the per-observation
objective. The sandwich matrices ``J`` and ``K`` accept either an analytic
reference density or an :class:`~tsfic.periodogram.EmpiricalSpectrum`; in
the latter case ``g`` is replaced by ``I_n`` and ``g^2`` by ``I_n^2 / 2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg
from scipy import optimize

from .exceptions import NumericDegeneracyError, PreconditionError
from .periodogram import EmpiricalSpectrum, as_series, require_nondegenerate
from .spectral import ARMAFamily, QuadratureRule, default_quadrature

__all__ = [
    "FitOptions",
    "FitResult",
    "whittle_loglik",
    "gaussian_loglik",
    "fit_whittle",
    "fit_gaussian_ml",
    "least_false",
    "sandwich_J",
    "sandwich_K",
    "discrepancy",
    "aic_bic",
    "reference_on",
]

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
_TINY = 1e-300


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings shared by every fit.

    ``gtol`` bounds the Euclidean norm of the gradient of the unconstrained
    per-observation objective at convergence.
    """

    gtol: float = 1e-6
    ftol: float = 1e-10
    maxiter: int = 500
    n_starts: int = 5


@dataclass(frozen=True, eq=False)
class FitResult:
    family: ARMAFamily
    theta: np.ndarray
    n: int | None
    J_hat: np.ndarray
    K_hat: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float
    method: str = "whittle"
    whittle_loglik: float | None = None
    gaussian_loglik: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.family.p

    @property
    def density(self) -> Callable:
        return self.family.spectral_density(self.theta)

    def to_dict(self) -> dict:
        return {
            "family": self.family.label,
            "theta": self.theta.tolist(),
            "n": self.n,
            "method": self.method,
            "whittle_loglik": self.whittle_loglik,
            "gaussian_loglik": self.gaussian_loglik,
            "J_hat": self.J_hat.tolist(),
            "K_hat": self.K_hat.tolist(),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "grad_norm": self.grad_norm,
        }


# --- reference spectra --------------------------------------------------------

def reference_on(gref, q: QuadratureRule):
    """Values of ``g`` and of the plug-in for ``g^2`` at the nodes of ``q``."""
    if isinstance(gref, EmpiricalSpectrum):
        g = gref.on(q)
        return g, 0.5 * g * g
    g = np.asarray(gref(q.nodes) if callable(gref) else gref, dtype=float)
    return g, g * g


def _default_q(gref, q):
    if q is not None:
        return q
    if isinstance(gref, EmpiricalSpectrum):
        return gref.quad
    return default_quadrature(512)


def _derivs(family, theta, q, hessian=True):
    f, gl, hl = family.derivatives(theta, q.nodes, hessian=hessian)
    if np.any(~(f > _TINY)):
        raise NumericDegeneracyError(f"{family.label}: spectral density below {_TINY} at a node")
    return f, gl, hl


def sandwich_J(gref, family: ARMAFamily, theta, q: QuadratureRule | None = None) -> np.ndarray:
    """``(1/4pi) int [grad Psi grad Psi' g + hess Psi (f - g)] / f dw``."""
    q = _default_q(gref, q)
    g, _ = reference_on(gref, q)
    f, gl, hl = _derivs(family, theta, q)
    outer = gl[:, :, None] * gl[:, None, :]
    integrand = (outer * g[:, None, None] + hl * (f - g)[:, None, None]) / f[:, None, None]
    J = q.integrate(integrand) / (2.0 * np.pi)
    return 0.5 * (J + J.T)


def sandwich_K(gref, family: ARMAFamily, theta, q: QuadratureRule | None = None) -> np.ndarray:
    """``(1/4pi) int grad Psi grad Psi' (g/f)^2 dw`` with ``g^2 -> I_n^2/2`` for periodograms."""
    q = _default_q(gref, q)
    _, g2 = reference_on(gref, q)
    f, gl, _ = _derivs(family, theta, q, hessian=False)
    integrand = gl[:, :, None] * gl[:, None, :] * (g2 / (f * f))[:, None, None]
    K = q.integrate(integrand) / (2.0 * np.pi)
    return 0.5 * (K + K.T)


def discrepancy(g, family: ARMAFamily, theta, q: QuadratureRule | None = None) -> float:
    """Whittle divergence ``(1/4pi) int [g/f - 1 - log(g/f)] dw``."""
    q = _default_q(g, q)
    gv, _ = reference_on(g, q)
    f, _, _ = _derivs(family, theta, q, hessian=False)
    x = gv / f
    return float(q.integrate(x - 1.0 - np.log(x)) / (2.0 * np.pi))


# --- objectives -----------------------------------------------------------------

def _whittle_per_obs(family, theta, grid, q, grad=False):
    f, gl, _ = _derivs(family, theta, q, hessian=False)
    ratio = grid / f
    val = -0.5 * (LOG_2PI + (q.integrate(np.log(2.0 * np.pi * f)) + q.integrate(ratio)) / np.pi)
    if not grad:
        return float(val)
    dval = -q.integrate(gl * (1.0 - ratio)[:, None]) / (2.0 * np.pi)
    return float(val), dval


def whittle_loglik(y, family: ARMAFamily, theta, q: QuadratureRule | None = None) -> float:
    """Whittle pseudo-log-likelihood of ``theta`` for the series (or spectrum) ``y``."""
    spec = y if isinstance(y, EmpiricalSpectrum) else EmpiricalSpectrum(y, q)
    q = q or spec.quad
    theta = family.check(theta)
    return spec.n * _whittle_per_obs(family, theta, spec.on(q), q)


class _AcvfOperator:
    """Maps a density on the nodes of ``q`` to autocovariances at lags ``0..n-1``."""

    _MAX_ENTRIES = 30_000_000

    def __init__(self, q: QuadratureRule, n: int):
        self.q = q
        self.n = n
        lags = np.arange(n, dtype=float)
        self.cos = None
        if n * q.size <= self._MAX_ENTRIES:
            self.cos = np.cos(np.outer(lags, q.nodes))
        self.lags = lags

    def __call__(self, f_nodes):
        fw = self.q.weights * f_nodes
        if self.cos is not None:
            return 2.0 * (self.cos @ fw)
        step = max(1, self._MAX_ENTRIES // (4 * self.q.size))
        out = np.empty(self.n)
        for s in range(0, self.n, step):
            out[s:s + step] = 2.0 * (np.cos(np.outer(self.lags[s:s + step], self.q.nodes)) @ fw)
        return out


def _levinson_loglik(gamma: np.ndarray, y: np.ndarray) -> float:
    """Exact Gaussian log-likelihood from the autocovariances via Durbin-Levinson."""
    n = y.size
    v = gamma[0]
    if not v > _TINY:
        raise NumericDegeneracyError("nonpositive variance in covariance sequence")
    logdet = np.log(v)
    quad = y[0] * y[0] / v
    phi = np.zeros(n)
    for t in range(1, n):
        head = phi[:t - 1]
        k = (gamma[t] - head @ gamma[t - 1:0:-1]) / v
        if not abs(k) < 1.0:
            raise NumericDegeneracyError("covariance matrix is numerically singular")
        phi[:t - 1] = head - k * head[::-1]
        phi[t - 1] = k
        v = v * (1.0 - k * k)
        if not v > _TINY:
            raise NumericDegeneracyError("covariance matrix is numerically singular")
        e = y[t] - phi[:t] @ y[t - 1::-1]
        logdet += np.log(v)
        quad += e * e / v
    return float(-0.5 * (n * LOG_2PI + logdet + quad))


def _cholesky_loglik(gamma: np.ndarray, y: np.ndarray) -> float:
    try:
        c, low = scipy.linalg.cho_factor(scipy.linalg.toeplitz(gamma), lower=True)
    except np.linalg.LinAlgError:
        raise NumericDegeneracyError("covariance matrix is numerically singular") from None
    z = scipy.linalg.solve_triangular(c, y, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    return float(-0.5 * (y.size * LOG_2PI + logdet + z @ z))


# below this length a LAPACK factorization beats the interpreted recursion
_DENSE_MAX_N = 600


def _exact_loglik(gamma: np.ndarray, y: np.ndarray) -> float:
    if y.size <= _DENSE_MAX_N:
        return _cholesky_loglik(gamma, y)
    return _levinson_loglik(gamma, y)


def gaussian_loglik(y, family: ARMAFamily, theta, q: QuadratureRule | None = None) -> float:
    """Exact zero-mean Gaussian log-likelihood of ``theta``."""
    y = as_series(y)
    q = q or default_quadrature(y.size)
    theta = family.check(theta)
    f = _derivs(family, theta, q, hessian=False)[0]
    return _exact_loglik(_AcvfOperator(q, y.size)(f), y)


# --- optimisation -------------------------------------------------------------

def _starts(family: ARMAFamily, scale: float, n_starts: int) -> list:
    """Deterministic starting points in the unconstrained encoding."""
    m = family.p - 1
    ls = np.log(scale)
    if m == 0:
        return [np.array([ls])]
    alt = np.where(np.arange(m) % 2 == 0, 0.5, -0.5)
    pacfs = [np.zeros(m), np.full(m, 0.5), np.full(m, -0.5), alt, -alt]
    return [np.append(np.arctanh(r), ls) for r in pacfs[:max(1, n_starts)]]


def _fd_hessian(grad_fn, x):
    p = x.size
    H = np.empty((p, p))
    for j in range(p):
        h = 1e-5 * (1.0 + abs(x[j]))
        e = np.zeros(p)
        e[j] = h
        H[:, j] = (grad_fn(x + e) - grad_fn(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def _polish(fg, x, F, g, gtol, max_steps=25):
    """Newton steps with a finite-difference Hessian; accepts only descent."""
    steps = 0
    for steps in range(1, max_steps + 1):
        if np.linalg.norm(g) < 0.01 * gtol:
            break
        H = _fd_hessian(lambda z: fg(z)[1], x)
        try:
            np.linalg.cholesky(H)
            d = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        # near the optimum F is flat to rounding, so a smaller gradient also counts
        slack = 1e-12 * max(1.0, abs(F))
        t = 1.0
        while t > 1e-8:
            try:
                F_new, g_new = fg(x + t * d)
            except (NumericDegeneracyError, FloatingPointError):
                t *= 0.5
                continue
            if F_new <= F + 1e-4 * t * (g @ d):
                break
            if F_new <= F + slack and np.linalg.norm(g_new) < np.linalg.norm(g):
                break
            t *= 0.5
        else:
            break
        x, F, g = x + t * d, F_new, g_new
    return x, F, g, steps


def _minimize(fg, starts, opts: FitOptions):
    """Run BFGS from every start, polish, and keep the lowest objective."""
    best = None
    total_iter = 0
    for x0 in starts:
        try:
            res = optimize.minimize(fg, x0, jac=True, method="BFGS",
                                    options={"gtol": opts.gtol * 1e-2, "maxiter": opts.maxiter})
        except (NumericDegeneracyError, FloatingPointError, ValueError) as exc:
            log.debug("start %s failed: %s", x0, exc)
            continue
        x, F = res.x, res.fun
        _, g = fg(x)
        x, F, g, extra = _polish(fg, x, F, g, opts.gtol)
        total_iter += res.nit + extra
        cand = (F, x, g)
        if best is None or F < best[0]:
            best = cand
    if best is None:
        raise NumericDegeneracyError("every optimizer start failed")
    F, x, g = best
    gnorm = float(np.linalg.norm(g))
    return x, F, gnorm, total_iter, bool(gnorm < opts.gtol and total_iter < opts.maxiter * len(starts))


def _spectral_fit(grid, family, q, opts, scale, starts=None):
    def fg(x):
        theta = family.from_unconstrained(x)
        val, dval = _whittle_per_obs(family, theta, grid, q, grad=True)
        return -val, -(family.jacobian_unconstrained(x).T @ dval)

    if starts is None:
        starts = _starts(family, scale, opts.n_starts)
    return _minimize(fg, starts, opts)


def fit_whittle(y, family: ARMAFamily, q: QuadratureRule | None = None,
                opts: FitOptions | None = None) -> FitResult:
    """Maximise the Whittle pseudo-log-likelihood over ``family``.

    Parameters
    ----------
    y : array_like, TimeSeries or EmpiricalSpectrum
        Zero-mean series, or its periodogram when already tabulated.
    family : ARMAFamily
    q : QuadratureRule, optional
        Shared rule; defaults to the spectrum's own rule.
    opts : FitOptions, optional

    Returns
    -------
    FitResult
        Natural-encoded estimate with plug-in ``J(I_n, f)`` and
        ``K(I_n / sqrt 2, f)``. ``converged`` is False when the gradient
        tolerance was not met; the estimate is still returned.
    """
    opts = opts or FitOptions()
    spec = y if isinstance(y, EmpiricalSpectrum) else EmpiricalSpectrum(y, q)
    q = q or spec.quad
    require_nondegenerate(spec.values)
    if spec.n < family.p + 2:
        raise PreconditionError(f"{family.label} needs n >= {family.p + 2}, got {spec.n}")
    grid = spec.on(q)
    scale = np.sqrt(max(spec.total_mass(q), _TINY))
    x, F, gnorm, nit, ok = _spectral_fit(grid, family, q, opts, scale)
    theta = family.from_unconstrained(x)
    return FitResult(
        family=family, theta=theta, n=spec.n,
        J_hat=sandwich_J(spec, family, theta, q), K_hat=sandwich_K(spec, family, theta, q),
        converged=ok, n_iter=nit, grad_norm=gnorm, method="whittle",
        whittle_loglik=-spec.n * F,
        diagnostics={"quad_nodes": q.size},
    )


def least_false(g, family: ARMAFamily, q: QuadratureRule | None = None,
                opts: FitOptions | None = None) -> FitResult:
    """Minimise the Whittle divergence ``d(g, f_theta)`` over ``family``.

    The returned result carries population ``J(g, f)`` and ``K(g, f)`` and no
    sample size.
    """
    opts = opts or FitOptions()
    q = _default_q(g, q)
    gv, _ = reference_on(g, q)
    scale = np.sqrt(q.integrate_full(gv))
    x, _, gnorm, nit, ok = _spectral_fit(gv, family, q, opts, scale)
    theta = family.from_unconstrained(x)
    return FitResult(
        family=family, theta=theta, n=None,
        J_hat=sandwich_J(gv, family, theta, q), K_hat=sandwich_K(gv, family, theta, q),
        converged=ok, n_iter=nit, grad_norm=gnorm, method="least-false",
        diagnostics={"quad_nodes": q.size, "discrepancy": discrepancy(gv, family, theta, q)},
    )


def _central_grad(fun, x):
    g = np.empty(x.size)
    for j in range(x.size):
        h = 1e-5 * (1.0 + abs(x[j]))
        e = np.zeros(x.size)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def fit_gaussian_ml(y, family: ARMAFamily, q: QuadratureRule | None = None,
                    opts: FitOptions | None = None, start=None,
                    multistart: bool = False) -> FitResult:
    """Maximise the exact Gaussian log-likelihood.

    The covariance sequence of ``f_theta`` comes from the shared quadrature
    and the likelihood from the Durbin-Levinson innovations recursion, so the
    cost per evaluation is ``O(n^2)``.

    By default the optimizer starts from the Whittle estimate only (``start``
    overrides it); ``multistart=True`` adds the standard deterministic starts.
    """
    opts = opts or FitOptions()
    yv = as_series(y)
    n = yv.size
    require_nondegenerate(yv)
    if n < family.p + 2:
        raise PreconditionError(f"{family.label} needs n >= {family.p + 2}, got {n}")
    if n > 5000:
        raise PreconditionError("exact Gaussian fitting is limited to n <= 5000")
    spec = y if isinstance(y, EmpiricalSpectrum) else None
    q = q or (spec.quad if spec is not None else default_quadrature(n))
    acvf = _AcvfOperator(q, n)

    def objective(x):
        theta = family.from_unconstrained(x)
        f = _derivs(family, theta, q, hessian=False)[0]
        return -_exact_loglik(acvf(f), yv) / n

    def fg(x):
        return objective(x), _central_grad(objective, x)

    whittle = None
    if start is None:
        whittle = fit_whittle(spec if spec is not None else yv, family, q, opts)
        start = whittle.theta
    starts = [family.to_unconstrained(start)]
    if multistart:
        starts += _starts(family, np.sqrt(np.mean(yv * yv)), opts.n_starts)
    x, F, gnorm, nit, ok = _minimize(fg, starts, opts)
    theta = family.from_unconstrained(x)
    sp = spec if spec is not None else EmpiricalSpectrum(yv, q)
    return FitResult(
        family=family, theta=theta, n=n,
        J_hat=sandwich_J(sp, family, theta, q), K_hat=sandwich_K(sp, family, theta, q),
        converged=ok, n_iter=nit, grad_norm=gnorm, method="gaussian-ml",
        whittle_loglik=whittle_loglik(sp, family, theta, q),
        gaussian_loglik=-n * F,
        diagnostics={"quad_nodes": q.size},
    )


def with_gaussian_loglik(fit: FitResult, y, q: QuadratureRule | None = None) -> FitResult:
    """Copy of ``fit`` with the exact Gaussian log-likelihood at its estimate."""
    return replace(fit, gaussian_loglik=gaussian_loglik(y, fit.family, fit.theta, q))


def aic_bic(fit: FitResult, n: int | None = None):
    """``(2p - 2 loglik, p log n - 2 loglik)`` from the exact Gaussian log-likelihood."""
    if fit.gaussian_loglik is None:
        raise PreconditionError("aic_bic needs a fit with gaussian_loglik")
    n = n if n is not None else fit.n
    if n is None:
        raise PreconditionError("sample size unknown")
    p = fit.p
    return 2 * p - 2 * fit.gaussian_loglik, p * np.log(n) - 2 * fit.gaussian_loglik
