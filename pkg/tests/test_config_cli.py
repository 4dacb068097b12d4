import csv
import math

import pytest

from accelsde import cli
from accelsde.config import ConfigError, validate_config


def _errors(raw, experiment="strong_error", **kw):
    with pytest.raises(ConfigError) as exc:
        validate_config(raw, experiment, **kw)
    return exc.value.errors


def test_rho_out_of_range():
    errs = _errors("model: {rho: 1.5}\n")
    assert any("rho" in e for e in errs)


def test_missing_seed_defaults_to_zero():
    cfg = validate_config("samples: 5\n", "strong_error")
    assert cfg.seed == 0 and cfg.seed_defaulted
    assert "seed=0 (default)" in cli._manifest(cfg)


def test_level_divisibility():
    errs = _errors("levels: {base: 3, max_level: 4}\ngrid: {n_ref: 16384}\n", "mlmc_price")
    assert any("divide" in e for e in errs)


def test_zero_samples():
    assert any("samples" in e for e in _errors("samples: 0\n"))
    assert any("samples" in e for e in _errors(None, samples=0))


def test_errors_are_aggregated():
    errs = _errors("bogus: 1\nmodel: {rho: 2, beta: 0, extra: 1}\ngrid: {sizes: [16, 8]}\n")
    assert len(errs) >= 5


def test_unsorted_grid_rejected():
    assert any("ascending" in e for e in _errors("grid: {sizes: [16, 8]}\n"))


def test_experiment_mismatch():
    assert _errors("experiment: nu_sweep\n", "strong_error")


def test_yaml_syntax_error_reports_line():
    errs = _errors("model:\n  rho: [1,\n")
    assert any("line" in e for e in errs)


def test_cli_overrides_win():
    cfg = validate_config("seed: 3\nsamples: 10\n", "strong_error", seed=9, samples=4)
    assert (cfg.seed, cfg.samples) == (9, 4)


def test_cli_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {rho: 1.5}\nsamples: 0\n")
    assert cli.main(["strong_error", "--config", str(bad), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 2 and all(line.startswith(str(bad)) for line in err)


def _read(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest")
    return list(csv.DictReader(lines[1:]))


def test_strong_error_csv_shape_and_determinism(tmp_path):
    cfg_file = tmp_path / "c.yaml"
    cfg_file.write_text("seed: 11\nsamples: 20\n")
    outs = []
    for run in ("a", "b"):
        assert cli.main(["strong_error", "--config", str(cfg_file), "--out",
                         str(tmp_path / run)]) == 0
        outs.append((tmp_path / run / "strong_error.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = _read(tmp_path / "a" / "strong_error.csv")
    assert list(rows[0]) == list(cli.COLUMNS)
    errs = [r for r in rows if r["label"] != "excluded_paths"]
    assert len(errs) == 12
    assert {r["label"] for r in errs} == {"standard", "accelerated"}
    assert sorted({int(r["n_or_level"]) for r in errs}) == [8, 16, 32, 64, 128, 256]
    excl = [r for r in rows if r["label"] == "excluded_paths"][0]
    for r in errs:
        assert int(r["samples"]) + int(float(excl["value"])) == 20
    assert (tmp_path / "a" / "strong_error_sup.csv").exists()


def test_mlmc_price_csv(tmp_path):
    cfg = tmp_path / "p.yaml"
    cfg.write_text("levels: {base: 4, max_level: 2}\n"
                   "mlmc: {target_rmse: 0.5, pilot_size: 200, estimators: [standard, accelerated]}\n")
    assert cli.main(["mlmc_price", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path)]) == 0
    rows = _read(tmp_path / "mlmc_price.csv")
    for est in ("standard", "accelerated"):
        levels = [float(r["value"]) for r in rows if r["label"] == f"{est}_level"]
        total = [float(r["value"]) for r in rows if r["label"] == f"{est}_total"][0]
        assert math.isclose(sum(levels), total, rel_tol=1e-12)


def test_localized_requires_digital(tmp_path):
    cfg = tmp_path / "p.yaml"
    cfg.write_text("levels: {base: 4, max_level: 1}\nmlmc: {estimators: [localized]}\n")
    assert cli.main(["mlmc_price", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_exclusion_threshold_exit_code(tmp_path, monkeypatch):
    cfg = validate_config("samples: 1000\n", "strong_error")
    monkeypatch.setitem(cli._RUNNERS, "strong_error", lambda c, t: ({"strong_error": []}, 11, 1000))
    assert cli.run_experiment(cfg, tmp_path)[0] == 3
    monkeypatch.setitem(cli._RUNNERS, "strong_error", lambda c, t: ({"strong_error": []}, 10, 1000))
    assert cli.run_experiment(cfg, tmp_path)[0] == 0


def test_path_demo(tmp_path):
    assert cli.main(["path_demo", "--seed", "4", "--out", str(tmp_path)]) == 0
    rows = _read(tmp_path / "path_demo.csv")
    labels = [r["label"] for r in rows]
    assert labels.count("standard") == 17 and labels.count("reference") == 257
    assert float(rows[0]["value"]) == 100.0
