import json

import numpy as np
import pytest

from conftest import ar1_series
from tsfic.cli import ConfigError, ingest_csv, main, parse_candidate, resolve_config


def write_series(path, values, header="value"):
    with open(path, "w") as fh:
        if header:
            fh.write(header + "\n")
        fh.writelines(f"{v!r}\n" for v in values)
    return str(path)


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def series(tmp_path):
    return write_series(tmp_path / "y.csv", ar1_series(0.6, 150, seed=2).tolist())


def test_ingest(tmp_path):
    p = write_series(tmp_path / "a.csv", [1.0, 2.5, -3.0])
    assert np.array_equal(ingest_csv(p).values, [1.0, 2.5, -3.0])
    p = write_series(tmp_path / "b.csv", [1.0, 2.0], header=None)
    assert ingest_csv(p).n == 2


def test_ingest_reports_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("value\n1\n2\n3\nabc\n5\n")
    with pytest.raises(ConfigError, match="row 5"):
        ingest_csv(str(p))
    p.write_text("1\nnan\n")
    with pytest.raises(ConfigError, match="non-finite"):
        ingest_csv(str(p))
    p.write_text("1,2\n3,4\n")
    with pytest.raises(ConfigError, match="one column"):
        ingest_csv(str(p))


def test_parse_candidate_forms():
    assert parse_candidate("AR(2)").label == "AR(2)"
    assert parse_candidate("arma(1, 1)").family.p == 3
    assert not parse_candidate("NP").is_parametric
    assert parse_candidate({"kind": "ar", "order": 3, "label": "big"}).label == "big"
    with pytest.raises(ConfigError):
        parse_candidate("GARCH(1,1)")


def test_resolve_config(tmp_path):
    cfg = resolve_config("fic", write_config(tmp_path / "c.json", {"input": "x", "candidates": ["NP"],
                                                                   "focus": {"name": "lag_cov", "k": 1}}),
                         {"seed": 5})
    assert cfg["seed"] == 5 and cfg["workers"] == 1
    with pytest.raises(ConfigError, match="unknown config keys"):
        resolve_config("fic", write_config(tmp_path / "d.json", {"input": "x", "typo": 1}))
    with pytest.raises(ConfigError, match="missing"):
        resolve_config("fic", write_config(tmp_path / "e.json", {"input": "x"}))


def test_fic_happy_path(tmp_path, series, capsys):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "c.json", {"input": series, "candidates": ["AR(0)", "AR(1)", "NP"],
                                            "focus": {"name": "lag_corr", "k": 1}})
    assert main(["fic", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["n"] == 150 and len(rep["candidates"]) == 3
    assert (out / "report.csv").read_text().startswith("focus,candidate,metric,value")
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["seed"] == 20240501 and "version" in resolved
    assert "AR(1)" in capsys.readouterr().out


def test_fic_with_detrend(tmp_path, series):
    cfg = write_config(tmp_path / "c.json", {"input": series, "candidates": ["AR(1)", "NP"],
                                            "focus": {"name": "lag_cov", "k": 0},
                                            "detrend": {"kind": "linear_time"}})
    assert main(["fic", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_unknown_focus_lists_constructors(tmp_path, series, capsys):
    cfg = write_config(tmp_path / "c.json", {"input": series, "candidates": ["NP"],
                                            "focus": {"name": "kurtosis"}})
    assert main(["fic", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "lag_cov" in capsys.readouterr().err


def test_constant_series_is_partial(tmp_path):
    s = write_series(tmp_path / "c.csv", [2.0] * 40)
    cfg = write_config(tmp_path / "c.json", {"input": s, "candidates": ["AR(1)", "NP"],
                                            "focus": {"name": "lag_cov", "k": 1}})
    assert main(["fic", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "degenerate" in (tmp_path / "o" / "report.json").read_text()


def test_afic(tmp_path, series):
    w = [{"focus": {"name": "lag_cov", "k": k}, "weight": 2.0 ** -k} for k in (1, 2, 3)]
    cfg = write_config(tmp_path / "c.json", {"input": series, "candidates": ["AR(1)", "AR(2)", "NP"],
                                            "weights": w})
    assert main(["afic", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "report.json").read_text())["mode"] == "afic"


def test_fit_both_methods(tmp_path, series):
    for method in ("whittle", "ml"):
        cfg = write_config(tmp_path / f"{method}.json", {"input": series, "candidates": ["AR(1)", "MA(1)"],
                                                        "method": method})
        assert main(["fit", "--config", cfg, "--out", str(tmp_path / method)]) == 0
        fits = json.loads((tmp_path / method / "fits.json").read_text())["fits"]
        assert abs(fits["AR(1)"]["theta"][0] - 0.6) < 0.2


def test_simulate_is_seeded(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"truth": {"ar": [0.5], "sigma": 1.0}, "n": 30})
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--seed", "3", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "series.csv").read_text()
    assert a == (tmp_path / "b" / "series.csv").read_text()
    assert ingest_csv(str(tmp_path / "a" / "series.csv")).n == 30


def test_nonstationary_truth(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"truth": {"ar": [1.2]}, "n": 30})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_mc_small(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"truth": {"ar": [0.6]}, "n": 50, "B": 3,
                                            "candidates": ["AR(0)", "AR(1)", "NP"],
                                            "foci": [{"name": "lag_cov", "k": 1}],
                                            "comparators": ["FIC", "always_np"]})
    assert main(["mc", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    data = json.loads((tmp_path / "o" / "mc.json").read_text())
    assert data["spec"]["B"] == 3


def test_least_false(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"truth": {"ar": [0.7, -0.6]}, "candidates": ["AR(1)", "MA(1)"],
                                            "max_lag": 3})
    assert main(["least-false", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = json.loads((tmp_path / "o" / "least_false.json").read_text())["rows"]
    assert [r["family"] for r in rows] == ["truth", "AR(1)", "MA(1)"]


def test_reproduce_is_byte_identical(tmp_path):
    for fig in ("fig1", "fig4"):
        for d in ("a", "b"):
            assert main(["reproduce", fig, "--out", str(tmp_path / fig / d)]) == 0
        for name in ("summary.json", "fig1.csv") if fig == "fig1" else ("least_false.json", "least_false.csv"):
            assert (tmp_path / fig / "a" / name).read_bytes() == (tmp_path / fig / "b" / name).read_bytes()


def test_reproduce_mc_small(tmp_path):
    assert main(["reproduce", "fig3", "--B", "3", "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["B"] == 3 and "np_never_strict_best" in summary["checks"]


def test_bad_invocations(tmp_path):
    assert main(["reproduce", "fig9", "--out", str(tmp_path / "o")]) == 1
    assert main(["fic", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["simulate", "--B", "5", "--out", str(tmp_path / "o")]) == 1
