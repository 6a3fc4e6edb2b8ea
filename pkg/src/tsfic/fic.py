"""
Focused information criteria for parametric versus nonparametric estimators.

For each candidate the mean squared error of its focus estimator is
estimated: ``v_np / n`` for the integrated periodogram and
``max(0, b^2 - kappa/n) + v_pm / n`` for a Whittle-fitted parametric family,
with ``b = mu_pm - mu_np`` and ``kappa = v_pm + v_np - 2 v_c``.

Every estimator takes a *reference* that is either an
:class:`~tsfic.periodogram.EmpiricalSpectrum` (plug-in mode, ``g -> I_n``,
``g^2 -> I_n^2 / 2``) or an analytic density callable (population mode).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .estimation import FitOptions, FitResult, fit_whittle, least_false, reference_on, sandwich_J, sandwich_K
from .exceptions import (DegenerateInputError, DiagnosticUnavailable, NumericDegeneracyError,
                         PreconditionError, SingularInformationError)
from .focus import FocusFunctional
from .periodogram import EmpiricalSpectrum, is_degenerate
from .spectral import ARMAFamily, QuadratureRule, default_quadrature

__all__ = [
    "CandidateModel",
    "CandidateScore",
    "FicReport",
    "AficWeights",
    "pm_focus",
    "c_matrix",
    "d_matrix",
    "variances",
    "fic_scores",
    "afic_scores",
    "population_scores",
    "z_statistic",
]

FOUR_PI = 4.0 * np.pi
MAX_CONDITION = 1e12
# scores this close are indistinguishable from optimizer and quadrature noise,
# e.g. an AR(p) fit reproduces the sample covariances at lags 0..p exactly
TIE_RTOL = 1e-6
# scores this far below the largest score in a report are rounding noise around zero
TIE_FLOOR = 1e-12

# failures that are recorded per candidate instead of aborting a run
CANDIDATE_ERRORS = (ArithmeticError, ValueError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class CandidateModel:
    kind: str
    family: ARMAFamily | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("parametric", "nonparametric"):
            raise PreconditionError(f"unknown candidate kind {self.kind!r}")
        if self.kind == "parametric" and self.family is None:
            raise PreconditionError("parametric candidates need a family")
        if not self.label:
            object.__setattr__(self, "label", self.family.label if self.family else "NP")

    @classmethod
    def parametric(cls, family: ARMAFamily, label: str = "") -> "CandidateModel":
        return cls("parametric", family, label)

    @classmethod
    def nonparametric(cls, label: str = "NP") -> "CandidateModel":
        return cls("nonparametric", None, label)

    @property
    def is_parametric(self) -> bool:
        return self.kind == "parametric"

    @property
    def p(self) -> float:
        return self.family.p if self.family is not None else math.inf


@dataclass
class CandidateScore:
    """One row of a :class:`FicReport`; parametric-only fields are None for NP."""

    label: str
    kind: str
    p: int | None
    mu_hat: float | None = None
    b_hat: float | None = None
    v_np: float | None = None
    v_pm: float | None = None
    v_c: float | None = None
    kappa: float | None = None
    bsq_trunc: float | None = None
    fic: float | None = None
    theta: list | None = None
    converged: bool | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.fic is not None

    def z_statistic(self, n: int) -> float:
        return z_statistic(self, n)


def z_statistic(row: CandidateScore, n: int) -> float:
    """``Z_n = n b^2 / (v_np - v_c)``.

    When ``v_np >= v_pm`` the FIC prefers the parametric row over the
    nonparametric one exactly when ``Z_n <= 2``.
    """
    if row.kind != "parametric" or row.b_hat is None:
        raise PreconditionError("Z_n is defined for scored parametric rows only")
    denom = row.v_np - row.v_c
    if not denom > 0:
        raise DiagnosticUnavailable(f"{row.label}: v_np - v_c = {denom!r} is not positive")
    return n * row.b_hat ** 2 / denom


@dataclass
class FicReport:
    focus: str
    n: int | None
    quad_nodes: int
    rows: list
    mode: str = "fic"
    version: str = __version__
    components: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def ranking(self) -> list:
        """Labels of successfully scored rows, best first.

        Scores within a relative ``TIE_RTOL`` of the lowest remaining score
        count as tied, as do scores below ``TIE_FLOOR`` times the largest
        one; ties go to fewer parameters, then candidate order.
        """
        left = [(r.fic, r.p if r.p is not None else math.inf, i, r.label)
                for i, r in enumerate(self.rows) if r.ok]
        floor = TIE_FLOOR * max((abs(t[0]) for t in left), default=0.0)
        out = []
        while left:
            low = min(t[0] for t in left)
            tied = [t for t in left if t[0] <= low + max(TIE_RTOL * abs(low), floor)]
            pick = min(tied, key=lambda t: (t[1], t[2]))
            out.append(pick[-1])
            left.remove(pick)
        return out

    @property
    def selected(self) -> str | None:
        rank = self.ranking
        return rank[0] if rank else None

    @property
    def has_errors(self) -> bool:
        return any(r.error is not None for r in self.rows)

    def row(self, label: str) -> CandidateScore:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def __getitem__(self, label):
        return self.row(label)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "mode": self.mode,
            "focus": self.focus,
            "n": self.n,
            "quad_nodes": self.quad_nodes,
            "ranking": self.ranking,
            "selected": self.selected,
            "candidates": [asdict(r) for r in self.rows],
            "components": {k: v.to_dict() for k, v in self.components.items()},
            "notes": list(self.notes),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "FicReport":
        rows = [CandidateScore(**r) for r in data["candidates"]]
        comps = {k: cls.from_dict(v) for k, v in data.get("components", {}).items()}
        return cls(data["focus"], data["n"], data["quad_nodes"], rows, data["mode"],
                   data["version"], comps, list(data.get("notes", [])))

    _FLAT = ("label", "kind", "p", "mu_hat", "b_hat", "v_np", "v_pm", "v_c", "kappa",
             "bsq_trunc", "fic", "converged", "error")

    def to_csv(self, path=None) -> str:
        """Flat table: one line per candidate plus focus, n, quadrature size and version."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("focus", "n", "quad_nodes", "version", "rank") + self._FLAT)
        rank = {lab: i + 1 for i, lab in enumerate(self.ranking)}
        for r in self.rows:
            w.writerow((self.focus, self.n, self.quad_nodes, self.version, rank.get(r.label, ""))
                       + tuple(_csv_cell(getattr(r, k)) for k in self._FLAT))
        return _maybe_write(buf.getvalue(), path)

    def long_rows(self) -> list:
        """``(focus, candidate, metric, value)`` tuples for tidy output."""
        out = []
        reports = [self] + list(self.components.values())
        for rep in reports:
            for r in rep.rows:
                for k in ("mu_hat", "b_hat", "v_np", "v_pm", "v_c", "kappa", "bsq_trunc", "fic"):
                    v = getattr(r, k)
                    if v is not None:
                        out.append((rep.focus, r.label, k, v))
        return out

    def format_table(self) -> str:
        lines = [f"focus: {self.focus}   n = {self.n}   nodes = {self.quad_nodes}",
                 f"{'rank':>4}  {'candidate':<12} {'fic':>12} {'mu_hat':>10} {'bsq':>10} {'v':>10}"]
        for i, lab in enumerate(self.ranking, 1):
            r = self.row(lab)
            v = r.v_np if r.kind == "nonparametric" else r.v_pm
            lines.append(f"{i:>4}  {lab:<12} {r.fic:>12.5g} {_fmt(r.mu_hat):>10} "
                         f"{_fmt(r.bsq_trunc):>10} {_fmt(v):>10}")
        for r in self.rows:
            if r.error:
                lines.append(f"   -  {r.label:<12} error: {r.error}")
        return "\n".join(lines)


def _fmt(v):
    return "-" if v is None else f"{v:.4g}"


def _csv_cell(v):
    return "" if v is None else v


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))


def _maybe_write(text, path):
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


@dataclass(frozen=True)
class AficWeights:
    """Discrete weight measure over foci: ``((focus, weight), ...)``."""

    items: tuple

    def __post_init__(self):
        items = tuple((f, float(w)) for f, w in self.items)
        if not items:
            raise PreconditionError("AFIC needs at least one focus")
        ws = np.array([w for _, w in items])
        if np.any(ws < 0) or not ws.sum() > 0:
            raise PreconditionError("AFIC weights must be nonnegative with a positive sum")
        names = [f.name for f, _ in items]
        if len(set(names)) != len(names):
            raise PreconditionError("AFIC foci must have distinct names")
        object.__setattr__(self, "items", items)

    @property
    def foci(self) -> list:
        return [f for f, _ in self.items]

    @property
    def jump_points(self) -> tuple:
        return tuple(sorted({p for f in self.foci for p in f.jump_points}))


# --- per-candidate building blocks --------------------------------------------

class _Prepared:
    """Candidate quantities that do not depend on the focus."""

    __slots__ = ("fit", "f", "grad_f", "J_inv", "K")

    def __init__(self, gref, fit: FitResult, q: QuadratureRule):
        fam, theta = fit.family, fit.theta
        f, gl, _ = fam.derivatives(theta, q.nodes, hessian=False)
        if np.any(~(f > 1e-300)):
            raise NumericDegeneracyError(f"{fam.label}: spectral density vanishes on the grid")
        self.fit = fit
        self.f = f
        self.grad_f = f[:, None] * gl
        J = sandwich_J(gref, fam, theta, q)
        if not np.linalg.cond(J) <= MAX_CONDITION:
            raise SingularInformationError(f"{fam.label}: J is singular (condition > {MAX_CONDITION:g})")
        self.J_inv = np.linalg.inv(J)
        self.K = sandwich_K(gref, fam, theta, q)


def pm_focus(fit: FitResult, focus: FocusFunctional, q: QuadratureRule | None = None) -> float:
    """Parametric focus estimate ``H(int h_j f_theta dw)``."""
    q = q or default_quadrature(fit.n or 512, breakpoints=focus.jump_points)
    return focus.value(fit.density, q)


def c_matrix(fit: FitResult, focus: FocusFunctional, q: QuadratureRule | None = None) -> np.ndarray:
    """``k x p`` matrix with rows ``int h_j grad f_theta dw``."""
    q = q or default_quadrature(fit.n or 512, breakpoints=focus.jump_points)
    f, gl, _ = fit.family.derivatives(fit.theta, q.nodes, hessian=False)
    W = focus.weight_grid(q)
    return q.integrate_full(W[:, :, None] * (f[:, None] * gl)[:, None, :])


def d_matrix(gref, fit: FitResult, focus: FocusFunctional, q: QuadratureRule | None = None) -> np.ndarray:
    """``k x p`` matrix with rows ``int h_j grad f g^2 / f^2 dw`` (``g^2 -> I_n^2/2`` empirically)."""
    q = q or _rule_for(gref, focus.jump_points)
    _, g2 = reference_on(gref, q)
    f, gl, _ = fit.family.derivatives(fit.theta, q.nodes, hessian=False)
    W = focus.weight_grid(q)
    return q.integrate_full(W[:, :, None] * (gl * (g2 / f)[:, None])[:, None, :])


def _rule_for(gref, breakpoints, nodes=None):
    if isinstance(gref, EmpiricalSpectrum):
        if not breakpoints and nodes is None:
            return gref.quad
        return default_quadrature(gref.n, nodes=nodes, breakpoints=breakpoints)
    return default_quadrature(512, nodes=nodes, breakpoints=breakpoints)


class _NpState:
    __slots__ = ("x", "mu", "grad", "v")

    def __init__(self, g, g2, W, q, focus):
        self.x = q.integrate_full(W * g[:, None])
        self.mu = focus.H(self.x)
        self.grad = focus.grad_H(self.x)
        sigma = FOUR_PI * q.integrate_full(W[:, :, None] * W[:, None, :] * g2[:, None, None])
        self.v = float(self.grad @ sigma @ self.grad)


def _pm_terms(prep: _Prepared, np_state: _NpState, W, g2, q, focus):
    x_pm = q.integrate_full(W * prep.f[:, None])
    mu_pm = focus.H(x_pm)
    grad_pm = focus.grad_H(x_pm)
    c = q.integrate_full(W[:, :, None] * prep.grad_f[:, None, :])
    d = q.integrate_full(W[:, :, None] * (prep.grad_f * (g2 / prep.f ** 2)[:, None])[:, None, :])
    a = grad_pm @ c @ prep.J_inv
    v_pm = float(a @ prep.K @ a)
    v_c = float(a @ d.T @ np_state.grad)
    return mu_pm, v_pm, v_c


def variances(gref, fit: FitResult, focus: FocusFunctional, q: QuadratureRule | None = None):
    """``(v_np, v_pm, v_c)`` for a fitted candidate against a reference spectrum."""
    q = q or _rule_for(gref, focus.jump_points)
    g, g2 = reference_on(gref, q)
    W = focus.weight_grid(q)
    nps = _NpState(g, g2, W, q, focus)
    _, v_pm, v_c = _pm_terms(_Prepared(gref, fit, q), nps, W, g2, q, focus)
    return nps.v, v_pm, v_c


# --- scoring ------------------------------------------------------------------

def _score(gref, candidates, focus, q, n, prepared, g=None, g2=None) -> FicReport:
    if g is None:
        g, g2 = reference_on(gref, q)
    W = focus.weight_grid(q)
    rows = []
    try:
        nps = _NpState(g, g2, W, q, focus)
        np_error = None
    except CANDIDATE_ERRORS as exc:
        nps, np_error = None, f"{type(exc).__name__}: {exc}"
    for cand in candidates:
        p = None if not cand.is_parametric else cand.p
        row = CandidateScore(cand.label, cand.kind, p)
        rows.append(row)
        if nps is None:
            row.error = np_error
            continue
        row.v_np = nps.v
        if not cand.is_parametric:
            row.mu_hat = nps.mu
            row.bsq_trunc = 0.0
            row.fic = nps.v / n
            continue
        prep = prepared.get(cand.label)
        if isinstance(prep, Exception) or prep is None:
            row.error = f"{type(prep).__name__}: {prep}" if prep is not None else "no fit"
            continue
        row.theta = prep.fit.theta.tolist()
        row.converged = prep.fit.converged
        try:
            mu_pm, v_pm, v_c = _pm_terms(prep, nps, W, g2, q, focus)
        except CANDIDATE_ERRORS as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            continue
        b = mu_pm - nps.mu
        kappa = v_pm + nps.v - 2.0 * v_c
        row.mu_hat, row.b_hat, row.v_pm, row.v_c, row.kappa = mu_pm, b, v_pm, v_c, kappa
        row.bsq_trunc = max(0.0, b * b - kappa / n)
        row.fic = row.bsq_trunc + v_pm / n
    return FicReport(focus.name, n, q.size, rows)


def _check_candidates(candidates):
    candidates = list(candidates)
    if not candidates:
        raise PreconditionError("candidate list is empty")
    labels = [c.label for c in candidates]
    if len(set(labels)) != len(labels):
        raise PreconditionError("candidate labels must be unique")
    if sum(not c.is_parametric for c in candidates) > 1:
        raise PreconditionError("at most one nonparametric candidate")
    return candidates


def prepare_candidates(spec: EmpiricalSpectrum, candidates, q: QuadratureRule,
                       fits: dict | None = None, opts: FitOptions | None = None) -> dict:
    """Whittle-fit each parametric candidate once; failures are kept as exceptions."""
    fits = dict(fits or {})
    prepared = {}
    for cand in candidates:
        if not cand.is_parametric:
            continue
        try:
            fit = fits.get(cand.label)
            if fit is None:
                fit = fit_whittle(spec, cand.family, q, opts)
            if isinstance(fit, Exception):
                raise fit
            prepared[cand.label] = _Prepared(spec, fit, q)
        except (CANDIDATE_ERRORS + (DegenerateInputError,)) as exc:
            prepared[cand.label] = exc
    return prepared


def _as_spectrum(y, q):
    if isinstance(y, EmpiricalSpectrum):
        return y
    return EmpiricalSpectrum(y, q)


def _degenerate_report(name, candidates, n, q, notes=()):
    msg = "DegenerateInputError: series is constant; no variation to model"
    rows = [CandidateScore(c.label, c.kind, None if not c.is_parametric else c.p, error=msg)
            for c in candidates]
    return FicReport(name, n, q.size, rows, notes=["degenerate input: constant series", *notes])


def fic_scores(y, candidates: Sequence[CandidateModel], focus: FocusFunctional,
               q: QuadratureRule | None = None, fits: dict | None = None,
               opts: FitOptions | None = None) -> FicReport:
    """Score every candidate for one focus and rank by estimated mse.

    Parameters
    ----------
    y : array_like, TimeSeries or EmpiricalSpectrum
    candidates : sequence of CandidateModel
        At most one nonparametric entry; labels unique.
    focus : FocusFunctional
    q : QuadratureRule, optional
        Defaults to ``default_quadrature(n)`` with the focus jump points as
        panel breakpoints (or the spectrum's own rule if one is passed).
    fits : dict, optional
        Precomputed Whittle fits keyed by candidate label.

    Returns
    -------
    FicReport
        Candidate failures are recorded on their rows; other candidates are
        still scored.
    """
    candidates = _check_candidates(candidates)
    if q is None and not isinstance(y, EmpiricalSpectrum):
        n0 = np.asarray(y).size if not hasattr(y, "n") else y.n
        q = default_quadrature(n0, breakpoints=focus.jump_points)
    spec = _as_spectrum(y, q)
    q = q or spec.quad
    if is_degenerate(spec.values):
        return _degenerate_report(focus.name, candidates, spec.n, q)
    prepared = prepare_candidates(spec, candidates, q, fits, opts)
    return _score(spec, candidates, focus, q, spec.n, prepared)


def afic_scores(y, candidates: Sequence[CandidateModel], weights: AficWeights,
                q: QuadratureRule | None = None, fits: dict | None = None,
                opts: FitOptions | None = None) -> FicReport:
    """Weighted sum of FIC summands over a discrete set of foci.

    Each parametric candidate is fitted once and reused for every focus. The
    per-focus reports are kept in ``report.components``.
    """
    candidates = _check_candidates(candidates)
    if not isinstance(weights, AficWeights):
        weights = AficWeights(tuple(weights))
    if q is None and not isinstance(y, EmpiricalSpectrum):
        n0 = np.asarray(y).size if not hasattr(y, "n") else y.n
        q = default_quadrature(n0, breakpoints=weights.jump_points)
    spec = _as_spectrum(y, q)
    q = q or spec.quad
    name = "AFIC[" + ", ".join(f"{w:g}*{f.name}" for f, w in weights.items) + "]"
    if is_degenerate(spec.values):
        return _degenerate_report(name, candidates, spec.n, q)
    prepared = prepare_candidates(spec, candidates, q, fits, opts)
    g, g2 = reference_on(spec, q)
    comps = {f.name: _score(spec, candidates, f, q, spec.n, prepared, g, g2) for f in weights.foci}
    rows = []
    for i, cand in enumerate(candidates):
        row = CandidateScore(cand.label, cand.kind, None if not cand.is_parametric else cand.p)
        parts = [(comps[f.name].rows[i], w) for f, w in weights.items if w > 0]
        bad = [r.error for r, _ in parts if r.error is not None]
        if bad:
            row.error = bad[0]
        else:
            row.fic = sum(w * r.fic for r, w in parts)
            row.converged = parts[0][0].converged
            row.theta = parts[0][0].theta
        rows.append(row)
    return FicReport(name, spec.n, q.size, rows, mode="afic", components=comps)


def population_scores(g, candidates: Sequence[CandidateModel], focus: FocusFunctional,
                      n: int, q: QuadratureRule | None = None,
                      opts: FitOptions | None = None) -> FicReport:
    """Population version of :func:`fic_scores` for an analytic truth ``g``.

    Parametric candidates sit at their least-false parameters, ``b_hat`` is the
    true bias ``mu_0 - mu_true`` and ``fic`` is the first-order mse
    ``b^2 + v_pm / n`` (``v_np / n`` for NP); no truncation is applied.
    """
    candidates = _check_candidates(candidates)
    q = q or default_quadrature(512, breakpoints=focus.jump_points)
    prepared = {}
    for cand in candidates:
        if cand.is_parametric:
            try:
                prepared[cand.label] = _Prepared(g, least_false(g, cand.family, q, opts), q)
            except CANDIDATE_ERRORS as exc:
                prepared[cand.label] = exc
    rep = _score(g, candidates, focus, q, n, prepared)
    for r in rep.rows:
        if r.ok and r.kind == "parametric":
            r.bsq_trunc = r.b_hat ** 2
            r.fic = r.bsq_trunc + r.v_pm / n
    rep.mode = "population"
    return rep
