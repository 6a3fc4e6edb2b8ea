"""
Exact Gaussian simulation and seeded Monte Carlo studies.

Series are drawn as ``L z`` with ``L`` the Cholesky factor of the Toeplitz
covariance implied by a spectral density. Every replication owns a Philox
stream keyed by ``(seed, replication)``, so results do not depend on how
replications are grouped or distributed over workers.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import __version__
from .estimation import FitOptions, aic_bic, fit_gaussian_ml, least_false, reference_on
from .exceptions import NumericDegeneracyError, PreconditionError
from .fic import CANDIDATE_ERRORS, TIE_RTOL, CandidateModel, _score, prepare_candidates, z_statistic
from .focus import FocusFunctional, focus_band_mass, focus_lag_cov
from .periodogram import EmpiricalSpectrum, TimeSeries, periodogram_grid
from .spectral import ARMAFamily, QuadratureRule, autocovariances, default_quadrature, make_arma_family

__all__ = [
    "MAX_SIM_N",
    "replication_rng",
    "GaussianSampler",
    "sample_gaussian",
    "SimSpec",
    "McResult",
    "run_mc",
    "least_false_table",
    "figure_design",
    "figure_checks",
    "COMPARATORS",
]

log = logging.getLogger(__name__)

MAX_SIM_N = 5000
JITTER = 1e-10
COMPARATORS = ("FIC", "AIC", "BIC", "always_np")
NO_SELECTION = -1
_GRID_ENTRIES = 25_000_000
_DEFAULT_BLOCK = 64


def replication_rng(seed: int, rep: int = 0) -> np.random.Generator:
    """Counter-based generator for replication ``rep`` of a run seeded by ``seed``."""
    if seed < 0 or rep < 0:
        raise PreconditionError("seed and replication index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=(int(seed) % 2 ** 64) + (int(rep) << 64)))


class GaussianSampler:
    """Cholesky factor of the ``n x n`` covariance of a spectral density.

    The factor is computed once; :meth:`draw` then costs one matrix product.
    """

    def __init__(self, f: Callable, n: int, q: QuadratureRule | None = None):
        n = int(n)
        if not 1 <= n <= MAX_SIM_N:
            raise PreconditionError(f"simulation length must be in [1, {MAX_SIM_N}], got {n}")
        q = q or default_quadrature(n)
        acvf = autocovariances(f, n - 1, q)
        cov = scipy.linalg.toeplitz(acvf)
        try:
            self.L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            cov[np.diag_indices(n)] += JITTER * acvf[0]
            try:
                self.L = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise NumericDegeneracyError("covariance is not positive definite after jitter") from None
        self.n = n
        self.acvf = acvf

    def draw(self, seed: int, reps: Sequence[int] | None = None) -> np.ndarray:
        """One column per replication index (a single vector if ``reps`` is None)."""
        if reps is None:
            return self.L @ replication_rng(seed, 0).standard_normal(self.n)
        Z = np.column_stack([replication_rng(seed, r).standard_normal(self.n) for r in reps])
        return self.L @ Z


def sample_gaussian(f: Callable, n: int, seed: int, q: QuadratureRule | None = None) -> TimeSeries:
    """Exact zero-mean Gaussian series of length ``n`` with spectral density ``f``."""
    return TimeSeries(GaussianSampler(f, n, q).draw(seed))


# --- Monte Carlo --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimSpec:
    """A seeded Monte Carlo design.

    ``truth`` is an ARMA family evaluated at ``theta`` (natural encoding).
    AIC and BIC choose among the parametric candidates by the exact Gaussian
    likelihood and then report that candidate's Whittle-based focus estimate.
    """

    truth: ARMAFamily
    theta: tuple
    n: int
    B: int = 2000
    seed: int = 0
    candidates: tuple = ()
    foci: tuple = ()
    comparators: tuple = ("FIC",)
    quad_nodes: int | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "foci", tuple(self.foci))
        object.__setattr__(self, "comparators", tuple(self.comparators))
        if self.B < 1 or self.n < 8:
            raise PreconditionError("need B >= 1 and n >= 8")
        if self.n > MAX_SIM_N:
            raise PreconditionError(f"simulation length is limited to {MAX_SIM_N}")
        if not self.candidates or not self.foci:
            raise PreconditionError("need at least one candidate and one focus")
        bad = set(self.comparators) - set(COMPARATORS)
        if bad:
            raise PreconditionError(f"unknown comparators {sorted(bad)}; available: {', '.join(COMPARATORS)}")
        labels = [c.label for c in self.candidates]
        if len(set(labels)) != len(labels):
            raise PreconditionError("candidate labels must be unique")
        if "always_np" in self.comparators and not any(not c.is_parametric for c in self.candidates):
            raise PreconditionError("always_np needs a nonparametric candidate")
        self.truth.check(np.asarray(self.theta))

    @property
    def density(self):
        return self.truth.spectral_density(np.asarray(self.theta))

    def quadrature(self) -> QuadratureRule:
        pts = sorted({p for f in self.foci for p in f.jump_points})
        return default_quadrature(self.n, nodes=self.quad_nodes, breakpoints=pts)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "truth": {"ar": self.truth.ar_order, "ma": self.truth.ma_order, "theta": list(self.theta)},
            "n": self.n,
            "B": self.B,
            "seed": self.seed,
            "candidates": [c.label for c in self.candidates],
            "foci": [f.name for f in self.foci],
            "comparators": list(self.comparators),
            "quad_nodes": self.quad_nodes,
        }


@dataclass
class McResult:
    """Per-replication records of a Monte Carlo run.

    ``estimates[b, i, j]`` is candidate ``j``'s estimate of focus ``i`` in
    replication ``b`` (NaN on failure); ``selections[c][b, i]`` is the index of
    the candidate chosen by comparator ``c`` (-1 if none could be scored);
    ``z[b, i, j]`` holds ``Z_n`` for parametric candidates (NaN where
    unavailable).
    """

    spec: SimSpec
    mu_true: np.ndarray
    estimates: np.ndarray
    selections: dict
    z: np.ndarray
    failures: np.ndarray
    aborted: int
    quad_nodes: int
    version: str = __version__

    @property
    def labels(self) -> list:
        return [c.label for c in self.spec.candidates]

    @property
    def focus_names(self) -> list:
        return [f.name for f in self.spec.foci]

    def rmse(self) -> np.ndarray:
        """Root-mse per (focus, candidate) over replications where the candidate succeeded."""
        err = self.estimates - self.mu_true[None, :, None]
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.nanmean(err ** 2, axis=0))

    def relative_rmse(self) -> np.ndarray:
        """Root-mse divided by its largest value per focus, so each row lies in ``[0, 1]``."""
        r = self.rmse()
        top = np.nanmax(r, axis=1, keepdims=True)
        return np.divide(r, top, out=np.zeros_like(r), where=top > 0)

    def best_candidates(self) -> list:
        """Index of the lowest root-mse candidate per focus.

        Values within a relative ``TIE_RTOL`` count as tied (an AR(p) fit and
        the periodogram give identical estimates of ``C(0..p)``); ties go to
        fewer parameters, then candidate order.
        """
        return [self._ranked(row)[0] for row in self.rmse()]

    def rmse_ranks(self) -> np.ndarray:
        """Competition rank (1 = best) of each candidate per focus, ties sharing the better rank."""
        out = np.zeros((len(self.focus_names), len(self.labels)), dtype=int)
        for i, row in enumerate(self.rmse()):
            for j, v in enumerate(row):
                out[i, j] = 1 + int(np.sum(row < v - TIE_RTOL * abs(v)))
        return out

    def strict_best(self, label: str) -> np.ndarray:
        """Per focus, whether ``label`` beats every other candidate beyond the tie tolerance."""
        j = self.labels.index(label)
        r = self.rmse()
        others = np.delete(r, j, axis=1)
        return r[:, j] < others.min(axis=1) - TIE_RTOL * r[:, j]

    def _ranked(self, row) -> list:
        cands = self.spec.candidates
        left = [j for j in range(len(row)) if np.isfinite(row[j])]
        out = []
        while left:
            low = min(row[j] for j in left)
            tied = [j for j in left if row[j] <= low + TIE_RTOL * abs(low)]
            pick = min(tied, key=lambda j: (cands[j].p, j))
            out.append(pick)
            left.remove(pick)
        return out

    def selection_counts(self, comparator: str) -> np.ndarray:
        """``(n_foci, n_candidates + 1)`` counts; the last column counts replications with no choice."""
        sel = self.selections[comparator]
        k = len(self.labels)
        out = np.zeros((sel.shape[1], k + 1), dtype=int)
        for i in range(sel.shape[1]):
            idx = np.where(sel[:, i] >= 0, sel[:, i], k)
            out[i] = np.bincount(idx, minlength=k + 1)
        return out

    def selected_estimates(self, comparator: str) -> np.ndarray:
        sel = self.selections[comparator]
        B, F = sel.shape
        out = np.full((B, F), np.nan)
        ok = sel >= 0
        b, i = np.nonzero(ok)
        out[b, i] = self.estimates[b, i, sel[b, i]]
        return out

    def achieved_rmse(self, comparator: str) -> np.ndarray:
        """Root-mse of the estimator sequence produced by a comparator, per focus."""
        err = self.selected_estimates(comparator) - self.mu_true[None, :]
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.nanmean(err ** 2, axis=0))

    def optimal_pick_rate(self, comparator: str) -> np.ndarray:
        """Fraction of replications in which the comparator chose a root-mse optimal candidate.

        Every candidate tied for the lowest root-mse counts as optimal.
        """
        counts = self.selection_counts(comparator)[:, :-1]
        best = self.rmse_ranks() == 1
        return (counts * best).sum(axis=1) / self.spec.B

    def z_below(self, threshold: float = 2.0) -> np.ndarray:
        """Per (focus, candidate) fraction of available ``Z_n`` values at most ``threshold``."""
        with np.errstate(invalid="ignore"):
            avail = np.isfinite(self.z)
            below = (self.z <= threshold) & avail
            return below.sum(axis=0) / np.maximum(avail.sum(axis=0), 1)

    def to_dict(self) -> dict:
        rmse = self.rmse()
        rel = self.relative_rmse()
        out = {
            "version": self.version,
            "spec": self.spec.to_dict(),
            "quad_nodes": self.quad_nodes,
            "aborted_replications": self.aborted,
            "mu_true": dict(zip(self.focus_names, self.mu_true.tolist())),
            "rmse": {f: dict(zip(self.labels, _clean(rmse[i]))) for i, f in enumerate(self.focus_names)},
            "relative_rmse": {f: dict(zip(self.labels, _clean(rel[i]))) for i, f in enumerate(self.focus_names)},
            "failures": {f: dict(zip(self.labels, self.failures[i].tolist()))
                         for i, f in enumerate(self.focus_names)},
            "comparators": {},
        }
        for c in self.spec.comparators:
            counts = self.selection_counts(c)
            out["comparators"][c] = {
                "achieved_rmse": dict(zip(self.focus_names, _clean(self.achieved_rmse(c)))),
                "optimal_pick_rate": dict(zip(self.focus_names, self.optimal_pick_rate(c).tolist())),
                "selection_counts": {f: dict(zip(self.labels + ["none"], counts[i].tolist()))
                                     for i, f in enumerate(self.focus_names)},
            }
        return out

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def long_rows(self) -> list:
        """``(focus, candidate, metric, value)`` rows; comparator metrics use the comparator as candidate."""
        rows = []
        rmse, rel = self.rmse(), self.relative_rmse()
        for i, f in enumerate(self.focus_names):
            rows.append((f, "truth", "mu_true", float(self.mu_true[i])))
            for j, lab in enumerate(self.labels):
                rows.append((f, lab, "rmse", _num(rmse[i, j])))
                rows.append((f, lab, "relative_rmse", _num(rel[i, j])))
                rows.append((f, lab, "failures", int(self.failures[i, j])))
            for c in self.spec.comparators:
                counts = self.selection_counts(c)
                rows.append((f, c, "achieved_rmse", _num(self.achieved_rmse(c)[i])))
                rows.append((f, c, "optimal_pick_rate", float(self.optimal_pick_rate(c)[i])))
                for j, lab in enumerate(self.labels):
                    rows.append((f, c, f"selected:{lab}", int(counts[i, j])))
        return rows

    def to_csv(self, path=None) -> str:
        return write_long_csv(self.long_rows(), path)


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _clean(arr):
    return [_num(v) for v in arr]


LONG_HEADER = ("focus", "candidate", "metric", "value")


def write_long_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LONG_HEADER)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _replicate(y, grid, spec: SimSpec, q, opts):
    """Score one simulated series; returns per-focus estimates, selections and Z values."""
    cands, foci = spec.candidates, spec.foci
    F, C = len(foci), len(cands)
    est = np.full((F, C), np.nan)
    z = np.full((F, C), np.nan)
    sel = {c: np.full(F, NO_SELECTION) for c in spec.comparators}
    es = EmpiricalSpectrum(y, q, grid)
    prepared = prepare_candidates(es, cands, q, opts=opts)
    g, g2 = reference_on(es, q)
    np_index = next((j for j, c in enumerate(cands) if not c.is_parametric), None)
    for i, focus in enumerate(foci):
        rep = _score(es, cands, focus, q, spec.n, prepared, g, g2)
        for j, row in enumerate(rep.rows):
            if row.ok:
                est[i, j] = row.mu_hat
                if row.kind == "parametric" and np_index is not None:
                    try:
                        z[i, j] = z_statistic(row, spec.n)
                    except ArithmeticError:
                        pass
        if "FIC" in sel and rep.selected is not None:
            sel["FIC"][i] = [c.label for c in cands].index(rep.selected)
        if "always_np" in sel and np_index is not None and np.isfinite(est[i, np_index]):
            sel["always_np"][i] = np_index
    if "AIC" in sel or "BIC" in sel:
        crit = _information_criteria(y, cands, prepared, q, opts)
        for name, col in (("AIC", 0), ("BIC", 1)):
            if name not in sel:
                continue
            for i in range(F):
                ok = [(crit[j][col], cands[j].p, j) for j in crit if np.isfinite(est[i, j])]
                if ok:
                    sel[name][i] = min(ok)[2]
    return est, sel, z


def _information_criteria(y, cands, prepared, q, opts):
    out = {}
    for j, c in enumerate(cands):
        prep = prepared.get(c.label)
        if not c.is_parametric or isinstance(prep, Exception) or prep is None:
            continue
        try:
            fit = fit_gaussian_ml(y, c.family, q, opts, start=prep.fit.theta)
            out[j] = aic_bic(fit)
        except CANDIDATE_ERRORS:
            continue
    return out


def _run_block(spec: SimSpec, reps, L, q, opts):
    Y = L @ np.column_stack([replication_rng(spec.seed, r).standard_normal(spec.n) for r in reps])
    grids = periodogram_grid(Y, q.nodes)
    return [_replicate(Y[:, k], grids[:, k], spec, q, opts) for k in range(len(reps))]


def run_mc(spec: SimSpec, workers: int = 1, block: int | None = None, opts: FitOptions | None = None,
           progress: Callable | None = None) -> McResult:
    """Run a seeded Monte Carlo study.

    Parameters
    ----------
    spec : SimSpec
    workers : int
        Worker processes; results are identical for any value.
    block : int, optional
        Replications that share one batched sampling and periodogram
        evaluation. The default depends only on the design, so results are
        bitwise identical for any number of workers; a different block size
        can move results in the last bits because batched matrix products
        round differently.
    progress : callable, optional
        Called with the number of finished replications.
    """
    q = spec.quadrature()
    opts = opts or FitOptions()
    g = spec.density
    fine = default_quadrature(spec.n, nodes=max(4096, 2 * q.size), breakpoints=list(q.breakpoints))
    mu_true = np.array([f.value(g, fine) for f in spec.foci])
    L = GaussianSampler(g, spec.n, q).L
    if block is None:
        block = max(1, min(_GRID_ENTRIES // q.size, _DEFAULT_BLOCK))
    blocks = [range(a, min(a + block, spec.B)) for a in range(0, spec.B, block)]
    results = []
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_run_block, spec, list(b), L, q, opts) for b in blocks]
            for fut in futs:
                results.extend(fut.result())
                if progress:
                    progress(len(results))
    else:
        for b in blocks:
            results.extend(_run_block(spec, list(b), L, q, opts))
            if progress:
                progress(len(results))
    est = np.stack([r[0] for r in results])
    z = np.stack([r[2] for r in results])
    sels = {c: np.stack([r[1][c] for r in results]) for c in spec.comparators}
    failures = np.isnan(est).sum(axis=0)
    aborted = int(np.all(np.isnan(est), axis=(1, 2)).sum())
    return McResult(spec, mu_true, est, sels, z, failures, aborted, q.size)


# --- least-false tables -------------------------------------------------------

def least_false_table(truth: Callable, families: Sequence[ARMAFamily], max_lag: int,
                      q: QuadratureRule | None = None, opts: FitOptions | None = None) -> list:
    """Least-false parameters and autocovariances ``C(0..max_lag)`` for each family.

    Rows carry ``family``, ``theta``, ``discrepancy``, ``acvf``, ``converged``
    and ``error``; a failing family does not stop the others.
    """
    if not families:
        raise PreconditionError("need at least one family")
    q = q or default_quadrature(512)
    rows = [{"family": "truth", "theta": None, "discrepancy": 0.0,
             "acvf": autocovariances(truth, max_lag, q).tolist(), "converged": True, "error": None}]
    for fam in families:
        try:
            fit = least_false(truth, fam, q, opts)
            rows.append({"family": fam.label, "theta": fit.theta.tolist(),
                         "discrepancy": fit.diagnostics["discrepancy"],
                         "acvf": autocovariances(fit.density, max_lag, q).tolist(),
                         "converged": fit.converged, "error": None})
        except CANDIDATE_ERRORS as exc:
            rows.append({"family": fam.label, "theta": None, "discrepancy": None, "acvf": None,
                         "converged": False, "error": f"{type(exc).__name__}: {exc}"})
    return rows


# --- built-in designs ---------------------------------------------------------

AR4_DESIGN = {"ar": (0.2, 0.2, -0.1, -0.2), "sigma": 1.3, "n": 100}
AR2_DESIGN = {"ar": (0.7, -0.6), "sigma": 1.0, "n": 100}
# one-sided bands partitioning [0, pi]
BAND_EDGES = (0.0, np.pi / 3, 2 * np.pi / 3, np.pi)


def ar_truth(ar, sigma):
    fam = make_arma_family(len(ar), 0)
    return fam, tuple(ar) + (sigma,)


def figure_design(fig_id: str, B: int = 2000, seed: int = 20240501, n: int | None = None,
                  quad_nodes: int | None = None) -> SimSpec:
    """Built-in study designs: ``fig1`` (AR(4), band masses) and ``fig3``/``fig5``/``fig6`` (AR(2), C(0..5))."""
    if fig_id == "fig1":
        fam, theta = ar_truth(AR4_DESIGN["ar"], AR4_DESIGN["sigma"])
        cands = [CandidateModel.parametric(make_arma_family(k, 0)) for k in range(5)]
        cands.append(CandidateModel.nonparametric())
        foci = [focus_band_mass(a, b) for a, b in zip(BAND_EDGES[:-1], BAND_EDGES[1:])]
        return SimSpec(fam, theta, n or AR4_DESIGN["n"], B, seed, cands, foci,
                       ("FIC", "AIC", "BIC", "always_np"), quad_nodes, "fig1")
    if fig_id in ("fig3", "fig5", "fig6"):
        fam, theta = ar_truth(AR2_DESIGN["ar"], AR2_DESIGN["sigma"])
        cands = [CandidateModel.parametric(make_arma_family(0, 0)),
                 CandidateModel.parametric(make_arma_family(1, 0)),
                 CandidateModel.parametric(make_arma_family(2, 0)),
                 CandidateModel.parametric(make_arma_family(0, 1)),
                 CandidateModel.nonparametric()]
        foci = [focus_lag_cov(k) for k in range(6)]
        return SimSpec(fam, theta, n or AR2_DESIGN["n"], B, seed, cands, foci,
                       ("FIC", "AIC", "BIC", "always_np"), quad_nodes, "fig3-6")
    raise KeyError(f"unknown design {fig_id!r}; available: fig1, fig3, fig5, fig6")


def figure_checks(res: McResult) -> dict:
    """Qualitative checks for the built-in AR(2) design, keyed by check name.

    Each value holds ``pass`` and a readable ``detail``; root-mse values within
    the tie tolerance count as equal.
    """
    labels = res.labels
    names = res.focus_names
    out = {}
    if "NP" not in labels:
        return out
    ranks = res.rmse_ranks()
    np_strict = res.strict_best("NP")
    out["np_never_strict_best"] = {
        "pass": not bool(np_strict.any()),
        "detail": f"NP strictly lowest for {[n for n, b in zip(names, np_strict) if b]}"}
    if "AR(2)" in labels:
        a2 = ranks[:, labels.index("AR(2)")] == 1
        out["ar2_best_for_3_foci"] = {"pass": int(a2.sum()) >= 3,
                                      "detail": f"AR(2) lowest for {int(a2.sum())} of {len(names)} foci"}
    lag = {f.params.get("k"): i for i, f in enumerate(res.spec.foci) if f.params.get("constructor") == "lag_cov"}
    if 1 in lag and 3 in lag:
        r1, r3 = ranks[lag[1], labels.index("NP")], ranks[lag[3], labels.index("NP")]
        out["np_top_two_lags_1_3"] = {"pass": bool(r1 <= 2 and r3 <= 2),
                                      "detail": f"NP rank {r1} at lag 1, {r3} at lag 3"}
    if {"FIC", "always_np"} <= set(res.spec.comparators):
        fic, alw = res.achieved_rmse("FIC"), res.achieved_rmse("always_np")
        wins = fic <= alw * (1 + TIE_RTOL)
        out["fic_not_worse_than_np_4_foci"] = {
            "pass": int(wins.sum()) >= 4,
            "detail": f"FIC achieved root-mse <= always-NP for {int(wins.sum())} of {len(names)} foci "
                      f"(FIC {np.round(fic, 4).tolist()}, NP {np.round(alw, 4).tolist()})"}
        rate = res.optimal_pick_rate("FIC")
        floor = 1.0 / len(labels)
        out["fic_optimal_pick_above_uniform"] = {
            "pass": bool(np.all(rate > floor)),
            "detail": f"FIC optimal-pick rates {np.round(rate, 3).tolist()} vs {floor:.3f}"}
    return out
