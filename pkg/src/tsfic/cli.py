"""
Command-line interface.

Every command reads an optional JSON config (``--config``), applies the flag
overrides, rejects unknown keys, and writes the resolved config next to its
results in ``--out``. Exit status is 0 on success, 1 for configuration or
input errors and 2 when some candidate could not be scored (the partial
report is still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import re
import sys

import numpy as np

from . import __version__
from .detrend import DESIGN_KINDS, TrendDesign, detrend_pipeline
from .estimation import FitOptions, fit_gaussian_ml, fit_whittle, with_gaussian_loglik, aic_bic
from .exceptions import DegenerateInputError, PreconditionError
from .fic import AficWeights, CandidateModel, afic_scores, fic_scores
from .focus import FOCUS_CONSTRUCTORS, focus_from_config
from .periodogram import EmpiricalSpectrum, TimeSeries, periodogram_at
from .simulate import (COMPARATORS, SimSpec, figure_design, figure_checks, least_false_table, run_mc,
                       sample_gaussian, write_long_csv)
from .spectral import autocovariances, default_quadrature, make_arma_family

log = logging.getLogger("tsfic")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
FIGURES = ("fig1", "fig3", "fig4", "fig5", "fig6")
DEFAULT_SEED = 20240501


class ConfigError(Exception):
    """Invalid configuration or input; maps to exit status 1."""


# --- input ------------------------------------------------------------------

def _read_rows(path):
    if not os.path.isfile(path):
        raise ConfigError(f"{path}: no such file")
    with open(path, encoding="utf-8-sig", newline="") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), 1)
                if row and any(c.strip() for c in row)]
    if not rows:
        raise ConfigError(f"{path}: file is empty")
    return rows


def _parse_cells(path, lineno, cells):
    out = []
    for c in cells:
        try:
            v = float(c)
        except ValueError:
            raise ConfigError(f"{path}: row {lineno}: non-numeric value {c.strip()!r}") from None
        if not math.isfinite(v):
            raise ConfigError(f"{path}: row {lineno}: non-finite value {c.strip()!r}")
        out.append(v)
    return out


def _is_header(cells):
    try:
        [float(c) for c in cells]
        return False
    except ValueError:
        return True


def ingest_csv(path) -> TimeSeries:
    """Read a one-column numeric CSV (optional header) into a :class:`TimeSeries`.

    Errors name the offending file row (1-based, counting the header).
    """
    rows = _read_rows(path)
    if _is_header(rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    values = []
    for lineno, cells in rows:
        if len(cells) != 1:
            raise ConfigError(f"{path}: row {lineno}: expected one column, found {len(cells)}")
        values.extend(_parse_cells(path, lineno, cells))
    return TimeSeries(np.array(values), label=os.path.basename(path))


def ingest_matrix(path) -> np.ndarray:
    """Read a multi-column numeric CSV (optional header) as an ``n x p`` array."""
    rows = _read_rows(path)
    if _is_header(rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    width = len(rows[0][1])
    out = []
    for lineno, cells in rows:
        if len(cells) != width:
            raise ConfigError(f"{path}: row {lineno}: expected {width} columns, found {len(cells)}")
        out.append(_parse_cells(path, lineno, cells))
    return np.array(out)


# --- config -----------------------------------------------------------------

COMMON_KEYS = {"command", "out", "seed", "workers", "quad_nodes"}
COMMAND_KEYS = {
    "fit": {"input", "candidates", "method", "detrend"},
    "fic": {"input", "candidates", "focus", "detrend"},
    "afic": {"input", "candidates", "weights", "detrend"},
    "simulate": {"truth", "n"},
    "mc": {"truth", "n", "B", "candidates", "foci", "comparators"},
    "least-false": {"truth", "candidates", "max_lag"},
    "reproduce": {"figure", "B", "n"},
}
DEFAULTS = {
    "fit": {"method": "whittle", "detrend": None},
    "fic": {"detrend": None},
    "afic": {"detrend": None},
    "simulate": {"n": 100},
    "mc": {"B": 2000, "comparators": ["FIC", "AIC", "BIC", "always_np"]},
    "least-false": {"max_lag": 10},
    "reproduce": {"B": 2000, "n": None},
}
REQUIRED = {
    "fit": {"input", "candidates"},
    "fic": {"input", "candidates", "focus"},
    "afic": {"input", "candidates", "weights"},
    "simulate": {"truth"},
    "mc": {"truth", "n", "candidates", "foci"},
    "least-false": {"truth", "candidates"},
    "reproduce": {"figure"},
}

_LABEL = re.compile(r"^\s*(AR|MA)\((\d+)\)\s*$|^\s*ARMA\((\d+),\s*(\d+)\)\s*$", re.I)


def parse_candidate(spec) -> CandidateModel:
    """Candidate from ``"AR(1)"``, ``"MA(1)"``, ``"ARMA(2,1)"``, ``"NP"`` or a dict.

    Dict form: ``{"kind": "arma", "ar": 2, "ma": 1, "label": ...}`` or
    ``{"kind": "np"}``.
    """
    if isinstance(spec, str):
        if spec.strip().upper() == "NP":
            return CandidateModel.nonparametric()
        m = _LABEL.match(spec)
        if not m:
            raise ConfigError(f"cannot parse candidate {spec!r}; use AR(p), MA(q), ARMA(p,q) or NP")
        if m.group(1):
            k = int(m.group(2))
            fam = make_arma_family(k, 0) if m.group(1).upper() == "AR" else make_arma_family(0, k)
        else:
            fam = make_arma_family(int(m.group(3)), int(m.group(4)))
        return CandidateModel.parametric(fam)
    if isinstance(spec, dict):
        spec = dict(spec)
        kind = str(spec.pop("kind", "")).lower()
        label = spec.pop("label", "")
        if kind == "np":
            _no_extra(spec, "candidate")
            return CandidateModel.nonparametric(label or "NP")
        if kind in ("ar", "ma", "arma"):
            ar = int(spec.pop("ar", spec.pop("order", 0) if kind == "ar" else 0))
            ma = int(spec.pop("ma", spec.pop("order", 0) if kind == "ma" else 0))
            _no_extra(spec, "candidate")
            return CandidateModel.parametric(make_arma_family(ar, ma), label)
        raise ConfigError(f"unknown candidate kind {kind!r}; available: ar, ma, arma, np")
    raise ConfigError(f"cannot parse candidate {spec!r}")


def _no_extra(d, what):
    if d:
        raise ConfigError(f"unknown {what} keys: {', '.join(sorted(d))}")


def parse_candidates(items):
    if not isinstance(items, list) or not items:
        raise ConfigError("candidates must be a nonempty list")
    cands = [parse_candidate(c) for c in items]
    labels = [c.label for c in cands]
    if len(set(labels)) != len(labels):
        raise ConfigError("candidate labels must be unique")
    return cands


def parse_focus(spec):
    if not isinstance(spec, dict):
        raise ConfigError("a focus is an object like {\"name\": \"lag_cov\", \"k\": 1}")
    try:
        return focus_from_config(spec)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]) if exc.args else str(exc)) from None
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from None


def parse_truth(spec):
    if not isinstance(spec, dict):
        raise ConfigError("truth must be an object with ar, ma and sigma")
    spec = dict(spec)
    ar = [float(v) for v in spec.pop("ar", [])]
    ma = [float(v) for v in spec.pop("ma", [])]
    sigma = float(spec.pop("sigma", 1.0))
    _no_extra(spec, "truth")
    fam = make_arma_family(len(ar), len(ma))
    theta = np.array(ar + ma + [sigma])
    if not fam.is_admissible(theta):
        raise ConfigError("truth parameters are not stationary/invertible or sigma <= 0")
    return fam, theta


def parse_design(spec, n):
    if spec is None:
        return None
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in DESIGN_KINDS:
        raise ConfigError(f"unknown detrend kind {kind!r}; available: {', '.join(DESIGN_KINDS)}")
    if kind == "harmonic":
        d = TrendDesign.harmonic(spec.pop("periods", []))
    elif kind == "custom":
        path = spec.pop("path", None)
        if path is None:
            raise ConfigError("custom detrend design needs a 'path' to a CSV file")
        d = TrendDesign.custom(ingest_matrix(path))
    else:
        d = getattr(TrendDesign, kind)()
    _no_extra(spec, "detrend")
    return d


def parse_weights(items):
    if not isinstance(items, list) or not items:
        raise ConfigError("weights must be a nonempty list of {\"focus\": {...}, \"weight\": w}")
    pairs = []
    for it in items:
        if not isinstance(it, dict) or set(it) != {"focus", "weight"}:
            raise ConfigError("each weight entry needs exactly the keys 'focus' and 'weight'")
        pairs.append((parse_focus(it["focus"]), float(it["weight"])))
    try:
        return AficWeights(tuple(pairs))
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from None


def resolve_config(command, path=None, overrides=None) -> dict:
    """Merge defaults, the JSON file and flag overrides; reject unknown keys."""
    cfg = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}: top level must be an object")
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for command {cfg['command']!r}, not {command!r}")
    allowed = COMMON_KEYS | COMMAND_KEYS[command]
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}; "
                          f"allowed: {', '.join(sorted(allowed))}")
    out = {"seed": DEFAULT_SEED, "workers": 1, "quad_nodes": None, "out": "tsfic-out"}
    out.update(DEFAULTS.get(command, {}))
    out.update(cfg)
    out.update({k: v for k, v in (overrides or {}).items() if v is not None})
    out["command"] = command
    missing = REQUIRED[command] - {k for k, v in out.items() if v is not None}
    if missing:
        raise ConfigError(f"missing config keys for {command}: {', '.join(sorted(missing))}")
    if int(out["seed"]) < 0:
        raise ConfigError("seed must be nonnegative")
    if command == "mc":
        bad = set(out["comparators"]) - set(COMPARATORS)
        if bad:
            raise ConfigError(f"unknown comparators {sorted(bad)}; available: {', '.join(COMPARATORS)}")
    return out


# --- output -----------------------------------------------------------------

def _prepare_out(cfg):
    os.makedirs(cfg["out"], exist_ok=True)
    write_json(os.path.join(cfg["out"], "resolved_config.json"),
               {"config": cfg, "version": __version__, "seed": cfg["seed"]})


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _out(cfg, name):
    return os.path.join(cfg["out"], name)


def _load_series(cfg):
    y = ingest_csv(cfg["input"])
    design = parse_design(cfg.get("detrend"), y.n)
    if design is not None:
        y = detrend_pipeline(y, design)
    return y


def _quad(cfg, n, breakpoints=()):
    return default_quadrature(n, nodes=cfg.get("quad_nodes"), breakpoints=breakpoints)


# --- commands ---------------------------------------------------------------

def cmd_fit(cfg) -> int:
    y = _load_series(cfg)
    cands = [c for c in parse_candidates(cfg["candidates"]) if c.is_parametric]
    if cfg["method"] not in ("whittle", "ml"):
        raise ConfigError("method must be 'whittle' or 'ml'")
    _prepare_out(cfg)
    q = _quad(cfg, y.n)
    spec = EmpiricalSpectrum(y, q)
    fits, rows, status = {}, [], EXIT_OK
    for c in cands:
        try:
            if cfg["method"] == "ml":
                fit = fit_gaussian_ml(spec, c.family, q)
            else:
                fit = with_gaussian_loglik(fit_whittle(spec, c.family, q), y, q)
            d = fit.to_dict()
            d["aic"], d["bic"] = aic_bic(fit)
            fits[c.label] = d
            for j, v in enumerate(fit.theta):
                rows.append(("-", c.label, f"theta[{j}]", float(v)))
            for k in ("whittle_loglik", "gaussian_loglik", "aic", "bic"):
                rows.append(("-", c.label, k, d[k]))
            print(f"{c.label:<10} theta = {np.array2string(fit.theta, precision=5)}  "
                  f"aic = {d['aic']:.3f}  converged = {fit.converged}")
        except (ArithmeticError, ValueError) as exc:
            fits[c.label] = {"error": f"{type(exc).__name__}: {exc}"}
            print(f"{c.label:<10} error: {exc}")
            status = EXIT_PARTIAL
    write_json(_out(cfg, "fits.json"), {"version": __version__, "n": y.n, "quad_nodes": q.size,
                                        "method": cfg["method"], "fits": fits})
    write_long_csv(rows, _out(cfg, "fits.csv"))
    return status


def _write_report(cfg, report, stem="report"):
    report.to_json(_out(cfg, f"{stem}.json"))
    write_long_csv(report.long_rows(), _out(cfg, f"{stem}.csv"))
    print(report.format_table())
    return EXIT_PARTIAL if report.has_errors else EXIT_OK


def cmd_fic(cfg) -> int:
    y = _load_series(cfg)
    cands = parse_candidates(cfg["candidates"])
    focus = parse_focus(cfg["focus"])
    _prepare_out(cfg)
    q = _quad(cfg, y.n, focus.jump_points)
    return _write_report(cfg, fic_scores(y, cands, focus, q))


def cmd_afic(cfg) -> int:
    y = _load_series(cfg)
    cands = parse_candidates(cfg["candidates"])
    weights = parse_weights(cfg["weights"])
    _prepare_out(cfg)
    q = _quad(cfg, y.n, weights.jump_points)
    return _write_report(cfg, afic_scores(y, cands, weights, q))


def cmd_simulate(cfg) -> int:
    fam, theta = parse_truth(cfg["truth"])
    n = int(cfg["n"])
    try:
        y = sample_gaussian(fam.spectral_density(theta), n, int(cfg["seed"]), _quad(cfg, n))
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from None
    _prepare_out(cfg)
    with open(_out(cfg, "series.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("value\n")
        fh.writelines(f"{v!r}\n" for v in y.values.tolist())
    print(f"wrote {n} observations to {_out(cfg, 'series.csv')}")
    return EXIT_OK


def _progress(total):
    def report(done):
        log.info("%d / %d replications", done, total)
    return report


def cmd_mc(cfg) -> int:
    fam, theta = parse_truth(cfg["truth"])
    try:
        spec = SimSpec(fam, tuple(theta), int(cfg["n"]), int(cfg["B"]), int(cfg["seed"]),
                       parse_candidates(cfg["candidates"]),
                       [parse_focus(f) for f in cfg["foci"]], tuple(cfg["comparators"]),
                       cfg.get("quad_nodes"), "mc")
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from None
    _prepare_out(cfg)
    res = run_mc(spec, workers=int(cfg["workers"]), progress=_progress(spec.B))
    res.to_json(_out(cfg, "mc.json"))
    res.to_csv(_out(cfg, "mc.csv"))
    _print_mc(res)
    return EXIT_OK


def _print_mc(res):
    rmse = res.rmse()
    print("root-mse".ljust(22) + "".join(f"{lab:>10}" for lab in res.labels))
    for i, f in enumerate(res.focus_names):
        print(f"{f:<22}" + "".join(f"{v:>10.4f}" for v in rmse[i]))
    for c in res.spec.comparators:
        print(f"{c:<22}" + "".join(f"{v:>10.4f}" for v in res.achieved_rmse(c)) + "  (achieved, per focus)")


def cmd_least_false(cfg) -> int:
    fam, theta = parse_truth(cfg["truth"])
    fams = [c.family for c in parse_candidates(cfg["candidates"]) if c.is_parametric]
    _prepare_out(cfg)
    q = default_quadrature(512, nodes=cfg.get("quad_nodes"))
    table = least_false_table(fam.spectral_density(theta), fams, int(cfg["max_lag"]), q)
    _write_least_false(cfg, table)
    return EXIT_PARTIAL if any(r["error"] for r in table) else EXIT_OK


def _write_least_false(cfg, table):
    write_json(_out(cfg, "least_false.json"), {"version": __version__, "rows": table})
    rows = []
    for r in table:
        for k, v in enumerate(r["acvf"] or []):
            rows.append((f"lag_cov(k={k})", r["family"], "least_false_acvf", v))
    write_long_csv(rows, _out(cfg, "least_false.csv"))
    for r in table:
        acvf = "error: " + r["error"] if r["error"] else " ".join(f"{v:8.4f}" for v in r["acvf"])
        print(f"{r['family']:<8} {acvf}")


def cmd_reproduce(cfg) -> int:
    fig = cfg["figure"]
    if fig not in FIGURES:
        raise ConfigError(f"unknown figure {fig!r}; available: {', '.join(FIGURES)}")
    _prepare_out(cfg)
    seed, B = int(cfg["seed"]), int(cfg["B"])
    if fig == "fig4":
        spec = figure_design("fig3", B=1, seed=seed)
        fams = [c.family for c in spec.candidates if c.is_parametric]
        table = least_false_table(spec.density, fams, 10, default_quadrature(512, nodes=cfg.get("quad_nodes")))
        _write_least_false(cfg, table)
        return EXIT_OK
    spec = figure_design(fig, B=B, seed=seed, n=cfg.get("n"), quad_nodes=cfg.get("quad_nodes"))
    if fig == "fig1":
        return _reproduce_fig1(cfg, spec)
    res = run_mc(spec, workers=int(cfg["workers"]), progress=_progress(spec.B))
    res.to_json(_out(cfg, "mc.json"))
    res.to_csv(_out(cfg, "mc.csv"))
    checks = figure_checks(res)
    write_json(_out(cfg, "summary.json"), {"figure": fig, "version": __version__, "seed": seed,
                                           "B": B, "checks": checks})
    _print_mc(res)
    for name, c in checks.items():
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {name}: {c['detail']}")
    return EXIT_OK


def _reproduce_fig1(cfg, spec):
    """Analytic spectrum, one seeded periodogram, band truths and FIC scores on that series."""
    q = spec.quadrature()
    g = spec.density
    y = sample_gaussian(g, spec.n, spec.seed, q)
    grid = np.linspace(0.0, np.pi, 257)
    rows = []
    for w, fv, iv in zip(grid, g(grid), periodogram_at(y, grid)):
        rows.append((f"omega={w:.10g}", "truth", "density", float(fv)))
        rows.append((f"omega={w:.10g}", "periodogram", "density", float(iv)))
    truths = {}
    status = EXIT_OK
    for f in spec.foci:
        truths[f.name] = f.value(g, q)
        rows.append((f.name, "truth", "mu_true", truths[f.name]))
        rep = fic_scores(y, spec.candidates, f, q)
        for r in rep.rows:
            if r.ok:
                rows.append((f.name, r.label, "mu_hat", r.mu_hat))
                rows.append((f.name, r.label, "root_fic", math.sqrt(r.fic)))
        if rep.has_errors:
            status = EXIT_PARTIAL
        print(f"{f.name}: truth {truths[f.name]:.4f}, FIC ranking {', '.join(rep.ranking)}")
    write_long_csv(rows, _out(cfg, "fig1.csv"))
    write_json(_out(cfg, "summary.json"), {"figure": "fig1", "version": __version__, "seed": spec.seed,
                                           "n": spec.n, "band_truth": truths,
                                           "acvf_truth": autocovariances(g, 5, q).tolist()})
    return status


COMMANDS = {
    "fit": cmd_fit,
    "fic": cmd_fic,
    "afic": cmd_afic,
    "simulate": cmd_simulate,
    "mc": cmd_mc,
    "least-false": cmd_least_false,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsfic", description="Focused model selection for stationary time series.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name == "reproduce":
            s.add_argument("figure", nargs="?", help=", ".join(FIGURES))
        s.add_argument("--config", metavar="PATH")
        s.add_argument("--out", metavar="DIR")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--B", type=int, dest="B")
        s.add_argument("--quad-nodes", type=int, dest="quad_nodes")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {"out": args.out, "seed": args.seed, "workers": args.workers, "quad_nodes": args.quad_nodes}
    if args.B is not None:
        if "B" not in COMMAND_KEYS[args.command]:
            print(f"error: --B does not apply to {args.command}", file=sys.stderr)
            return EXIT_CONFIG
        overrides["B"] = args.B
    if args.command == "reproduce":
        overrides["figure"] = args.figure
    try:
        cfg = resolve_config(args.command, args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
