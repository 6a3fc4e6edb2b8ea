"""
Spectral densities, ARMA spectral families and the shared quadrature engine.

Every frequency-domain integral in the package runs through a
:class:`QuadratureRule` on ``(0, pi]``. Integrands over ``[-pi, pi]`` are
folded onto the half interval using the even part of the integrand, so a
rule integrating ``x -> 1`` to ``pi`` integrates symmetric functions over the
full circle after doubling.

A *spectral density* is any callable mapping an array of frequencies (in
radians) to nonnegative values. ARMA families provide such callables through
:meth:`ARMAFamily.spectral_density`.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .exceptions import PreconditionError

__all__ = [
    "QuadratureRule",
    "composite_gauss_legendre",
    "default_quadrature",
    "ARMAFamily",
    "make_arma_family",
    "white_noise_density",
    "autocovariance",
    "autocovariances",
    "toeplitz_weight_matrix",
    "even_part",
]

PANEL_SIZE = 16
TWO_PI = 2.0 * np.pi


@functools.lru_cache(maxsize=64)
def _legendre(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and positive weights for integrals over ``(0, pi]``.

    ``integrate(values)`` contracts the first axis of ``values`` with the
    weights, so stacked integrands (nodes along axis 0) are integrated in one
    call.
    """

    nodes: np.ndarray
    weights: np.ndarray
    scheme: str = "composite-gauss-legendre"
    breakpoints: tuple = ()

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.nodes.size

    def __len__(self):
        return self.nodes.size

    def integrate(self, values) -> np.ndarray:
        """Integral over ``(0, pi]`` of tabulated values (nodes on axis 0)."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def integrate_full(self, values) -> np.ndarray:
        """Integral over ``[-pi, pi]`` of an even integrand tabulated on the nodes."""
        return 2.0 * self.integrate(values)

    def sub_rule(self, a: float, b: float) -> "QuadratureRule":
        """Rule on ``[a, b]`` with the same node density and scheme."""
        if not 0.0 <= a <= b <= np.pi:
            raise PreconditionError("sub_rule needs 0 <= a <= b <= pi")
        if b == a:
            return QuadratureRule(np.empty(0), np.empty(0), self.scheme)
        count = max(PANEL_SIZE, int(math.ceil(self.size * (b - a) / np.pi)))
        return composite_gauss_legendre(a, b, count)

    def refined(self, factor: int) -> "QuadratureRule":
        """Same scheme with ``factor`` times as many nodes."""
        return composite_gauss_legendre(
            0.0, np.pi, self.size * int(factor), breakpoints=self.breakpoints
        )

    def __repr__(self):
        return f"QuadratureRule(scheme={self.scheme!r}, size={self.size})"


def _allocate(total: int, shares: np.ndarray) -> np.ndarray:
    """Split ``total`` integer units by ``shares``, at least one unit each."""
    k = shares.size
    base = np.ones(k, dtype=int)
    rest = total - k
    if rest <= 0:
        return base
    raw = shares / shares.sum() * rest
    alloc = np.floor(raw).astype(int)
    left = rest - alloc.sum()
    order = np.argsort(-(raw - alloc), kind="stable")
    alloc[order[:left]] += 1
    return base + alloc


def composite_gauss_legendre(a: float, b: float, n_nodes: int,
                             breakpoints: Sequence[float] = (),
                             panel_size: int = PANEL_SIZE) -> QuadratureRule:
    """Composite Gauss-Legendre rule with exactly ``n_nodes`` nodes on ``[a, b]``.

    Panels never straddle a breakpoint, so integrands with jumps at the
    breakpoints are integrated panel-wise smoothly.
    """
    if n_nodes < 1:
        raise PreconditionError("n_nodes must be positive")
    cuts = sorted({float(c) for c in breakpoints if a < c < b})
    edges_outer = np.array([a, *cuts, b], dtype=float)
    lengths = np.diff(edges_outer)
    n_panels = max(int(math.ceil(n_nodes / panel_size)), lengths.size)
    per_interval = _allocate(n_panels, lengths)
    edges = [edges_outer[:1]]
    for lo, hi, m in zip(edges_outer[:-1], edges_outer[1:], per_interval):
        edges.append(np.linspace(lo, hi, m + 1)[1:])
    edges = np.concatenate(edges)
    n_panels = edges.size - 1
    sizes = np.full(n_panels, n_nodes // n_panels)
    sizes[: n_nodes % n_panels] += 1
    nodes, weights = [], []
    for lo, hi, m in zip(edges[:-1], edges[1:], sizes):
        if m == 0:
            continue
        x, w = _legendre(int(m))
        half = 0.5 * (hi - lo)
        nodes.append(half * x + 0.5 * (hi + lo))
        weights.append(half * w)
    return QuadratureRule(np.concatenate(nodes), np.concatenate(weights),
                          breakpoints=tuple(cuts))


def default_quadrature(n: int, nodes: int | None = None,
                       breakpoints: Sequence[float] = ()) -> QuadratureRule:
    """Shared rule for a series of length ``n``: ``max(512, 4n)`` nodes on ``(0, pi]``.

    Parameters
    ----------
    n : int
        Series length.
    nodes : int, optional
        Override for the node count.
    breakpoints : sequence of float, optional
        Frequencies where integrands jump; folded to ``[0, pi]``.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    count = int(nodes) if nodes is not None else max(512, 4 * int(n))
    folded = {abs(float(c)) for c in breakpoints}
    return composite_gauss_legendre(0.0, np.pi, count, breakpoints=sorted(folded))


def even_part(h: Callable) -> Callable:
    """Return ``w -> (h(w) + h(-w)) / 2``, or ``h.even`` when ``h`` provides it."""
    if hasattr(h, "even"):
        return h.even

    def _even(omega):
        omega = np.asarray(omega, dtype=float)
        return 0.5 * (np.asarray(h(omega), dtype=float) + np.asarray(h(-omega), dtype=float))

    return _even


# --- partial autocorrelation reparameterisation -----------------------------

def _pacf_to_coef(r: np.ndarray):
    """Durbin-Levinson map from partial autocorrelations to AR coefficients.

    Returns the coefficients of ``1 - sum_j phi_j z^j`` and the Jacobian
    ``d phi / d r``.
    """
    r = np.asarray(r, dtype=float)
    p = r.size
    phi = np.zeros(p)
    dphi = np.zeros((p, p))
    for k in range(p):
        head, dhead = phi[:k].copy(), dphi[:k].copy()
        phi[:k] = head - r[k] * head[::-1]
        dphi[:k] = dhead - r[k] * dhead[::-1]
        dphi[:k, k] -= head[::-1]
        phi[k] = r[k]
        dphi[k, k] = 1.0
    return phi, dphi


def _coef_to_pacf(phi: np.ndarray) -> np.ndarray:
    phi = np.array(phi, dtype=float)
    p = phi.size
    r = np.zeros(p)
    for k in range(p - 1, -1, -1):
        rk = phi[k]
        r[k] = rk
        if abs(rk) >= 1.0:
            raise ValueError("coefficients outside the stationarity region")
        head = phi[:k]
        phi = (head + rk * head[::-1]) / (1.0 - rk * rk)
    return r


@dataclass(frozen=True)
class ARMAFamily:
    """ARMA(p, q) spectral family with parameter ``theta = (ar..., ma..., sigma)``.

    The density is ``sigma^2/(2 pi) |1 + sum_j ma_j e^{-ijw}|^2 /
    |1 - sum_j ar_j e^{-ijw}|^2``. The AR block must be stationary and the MA
    block invertible; ``sigma`` is the innovation standard deviation.
    """

    ar_order: int = 0
    ma_order: int = 0
    _lags: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.ar_order < 0 or self.ma_order < 0:
            raise PreconditionError("orders must be nonnegative")
        object.__setattr__(self, "_lags", np.arange(1, max(self.ar_order, self.ma_order) + 1))

    @property
    def p(self) -> int:
        return self.ar_order + self.ma_order + 1

    @property
    def label(self) -> str:
        if self.ma_order == 0:
            return f"AR({self.ar_order})"
        if self.ar_order == 0:
            return f"MA({self.ma_order})"
        return f"ARMA({self.ar_order},{self.ma_order})"

    def __str__(self):
        return self.label

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p,):
            raise PreconditionError(f"{self.label} expects {self.p} parameters, got shape {theta.shape}")
        return theta[: self.ar_order], theta[self.ar_order: self.p - 1], theta[-1]

    # -- constraint handling ---------------------------------------------
    def is_admissible(self, theta) -> bool:
        ar, ma, sigma = self.split(theta)
        if not (np.isfinite(sigma) and sigma > 0):
            return False
        try:
            _coef_to_pacf(ar)
            _coef_to_pacf(-ma)
        except ValueError:
            return False
        return True

    def check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not self.is_admissible(theta):
            raise PreconditionError(
                f"{self.label}: parameter {theta.tolist()} is outside the stationary/invertible region")
        return theta

    def to_unconstrained(self, theta) -> np.ndarray:
        ar, ma, sigma = self.split(self.check(theta))
        return np.concatenate([np.arctanh(_coef_to_pacf(ar)),
                               np.arctanh(_coef_to_pacf(-ma)),
                               [np.log(sigma)]])

    def from_unconstrained(self, x) -> np.ndarray:
        return self._transform(x)[0]

    def jacobian_unconstrained(self, x) -> np.ndarray:
        """Matrix ``d theta / d x`` of the unconstrained map."""
        return self._transform(x)[1]

    def _transform(self, x):
        x = np.asarray(x, dtype=float)
        p, q = self.ar_order, self.ma_order
        jac = np.zeros((self.p, self.p))
        r_ar = np.tanh(x[:p])
        ar, dar = _pacf_to_coef(r_ar)
        jac[:p, :p] = dar * (1.0 - r_ar ** 2)
        r_ma = np.tanh(x[p:p + q])
        ma, dma = _pacf_to_coef(r_ma)
        jac[p:p + q, p:p + q] = -dma * (1.0 - r_ma ** 2)
        sigma = np.exp(x[-1])
        jac[-1, -1] = sigma
        return np.concatenate([ar, -ma, [sigma]]), jac

    # -- density and derivatives ------------------------------------------
    def _polys(self, theta, omega):
        ar, ma, sigma = self.split(theta)
        omega = np.asarray(omega, dtype=float)
        z = np.exp(-1j * omega[..., None] * self._lags)
        a = 1.0 - z[..., : self.ar_order] @ ar if self.ar_order else np.ones(omega.shape, complex)
        b = 1.0 + z[..., : self.ma_order] @ ma if self.ma_order else np.ones(omega.shape, complex)
        return z, a, b, sigma

    def density(self, theta, omega):
        _, a, b, sigma = self._polys(theta, omega)
        return sigma ** 2 / TWO_PI * (np.abs(b) ** 2 / np.abs(a) ** 2)

    def log_density(self, theta, omega):
        return np.log(self.density(theta, omega))

    def grad_log(self, theta, omega):
        return self.derivatives(theta, omega, hessian=False)[1]

    def grad_density(self, theta, omega):
        f, g, _ = self.derivatives(theta, omega, hessian=False)
        return f[..., None] * g

    def hess_log(self, theta, omega):
        return self.derivatives(theta, omega)[2]

    def derivatives(self, theta, omega, hessian: bool = True):
        """Density, gradient of log density and (optionally) its Hessian.

        Shapes are ``omega.shape``, ``omega.shape + (p,)`` and
        ``omega.shape + (p, p)``.
        """
        z, a, b, sigma = self._polys(theta, omega)
        p, q = self.ar_order, self.ma_order
        f = sigma ** 2 / TWO_PI * (np.abs(b) ** 2 / np.abs(a) ** 2)
        grad = np.empty(f.shape + (self.p,))
        grad[..., :p] = 2.0 * np.real(z[..., :p] / a[..., None])
        grad[..., p:p + q] = 2.0 * np.real(z[..., :q] / b[..., None])
        grad[..., -1] = 2.0 / sigma
        hess = None
        if hessian:
            hess = np.zeros(f.shape + (self.p, self.p))
            if p:
                zz = z[..., :p, None] * z[..., None, :p]
                hess[..., :p, :p] = 2.0 * np.real(zz / (a ** 2)[..., None, None])
            if q:
                zz = z[..., :q, None] * z[..., None, :q]
                hess[..., p:p + q, p:p + q] = -2.0 * np.real(zz / (b ** 2)[..., None, None])
            hess[..., -1, -1] = -2.0 / sigma ** 2
        return f, grad, hess

    def spectral_density(self, theta) -> Callable:
        """Callable spectral density of the member at ``theta``."""
        theta = self.check(theta)
        dens = functools.partial(self.density, theta)
        dens.__doc__ = f"{self.label} spectral density at theta={theta.tolist()}"
        return dens

    def white_noise_start(self, scale: float) -> np.ndarray:
        """Natural parameter of the flat member with innovation sd ``scale``."""
        return np.concatenate([np.zeros(self.p - 1), [scale]])


def make_arma_family(ar_order: int = 0, ma_order: int = 0) -> ARMAFamily:
    """ARMA spectral family; ``make_arma_family(0, 0)`` is white noise."""
    return ARMAFamily(int(ar_order), int(ma_order))


def white_noise_density(sigma: float = 1.0) -> Callable:
    return make_arma_family(0, 0).spectral_density([sigma])


# --- integrals against a density --------------------------------------------

_COS_CHUNK = 4_000_000


def autocovariances(f: Callable, max_lag: int, q: QuadratureRule) -> np.ndarray:
    """``C(k) = 2 int_0^pi cos(k w) f(w) dw`` for ``k = 0..max_lag``."""
    fw = q.weights * np.asarray(f(q.nodes), dtype=float)
    return _cosine_transform(fw, q.nodes, np.arange(max_lag + 1))


def _cosine_transform(weighted: np.ndarray, nodes: np.ndarray, lags: np.ndarray) -> np.ndarray:
    out = np.empty(lags.size)
    step = max(1, _COS_CHUNK // max(1, nodes.size))
    for start in range(0, lags.size, step):
        sl = slice(start, start + step)
        out[sl] = 2.0 * (np.cos(np.outer(lags[sl], nodes)) @ weighted)
    return out


def autocovariance(f: Callable, lag, q: QuadratureRule):
    """Autocovariance at ``lag`` (scalar or array) of the density ``f``."""
    lag = np.asarray(lag)
    if np.any(lag < 0):
        raise PreconditionError("lag must be nonnegative")
    fw = q.weights * np.asarray(f(q.nodes), dtype=float)
    out = _cosine_transform(fw, q.nodes, lag.ravel().astype(float))
    return out.reshape(lag.shape) if lag.ndim else float(out[0])


def toeplitz_weight_matrix(h0: Callable, n: int, q: QuadratureRule) -> np.ndarray:
    """Symmetric Toeplitz matrix with entries ``(1/2pi) int cos(w|s-t|) h0(w) dw``.

    With this normalisation ``y' T y / n`` equals the integral of ``h0``
    against the periodogram of ``y``.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    hw = q.weights * np.asarray(even_part(h0)(q.nodes), dtype=float)
    col = _cosine_transform(hw, q.nodes, np.arange(n, dtype=float)) / TWO_PI
    return scipy.linalg.toeplitz(col)
