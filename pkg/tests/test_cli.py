import hashlib
import json

import pandas as pd
import pytest

from attestcast import __version__
from attestcast.cli import RunConfig, main
from attestcast.errors import ConfigError


@pytest.fixture(scope="module")
def inputs(sim_triple):
    paths, _ = sim_triple
    return ["--attestations", str(paths["attestations"]), "--census", str(paths["census"]),
            "--zipmap", str(paths["zipmap"])]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_run_all_is_byte_identical(inputs, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run-all", *inputs, "--out", str(a), "--plot-data", "--rolling-origin"]) == 0
    assert main(["run-all", *inputs, "--out", str(b), "--plot-data", "--rolling-origin", "--jobs", "2"]) == 0
    fa, fb = _files(a), _files(b)
    assert fa == fb
    for name in ("panel.csv", "fit.json", "granger.json", "forecast.csv", "eval.json", "manifest.json",
                 "plot_data.csv", "rolling_forecast.csv", "summary.txt", "lag_curve.csv"):
        assert name in fa
    assert "network WMAPE" in capsys.readouterr().out


def test_manifest_hashes_artifacts(inputs, tmp_path):
    out = tmp_path / "m"
    assert main(["run-all", *inputs, "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"] == __version__ and manifest["schema_version"] == 1
    assert "generated_at" not in manifest
    for name, digest in manifest["artifacts"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    for entry in manifest["inputs"].values():
        assert len(entry["sha256"]) == 64
    assert "out_dir" not in manifest["config"]


def test_timestamps_are_opt_in(inputs, tmp_path):
    out = tmp_path / "t"
    assert main(["ingest", *inputs, "--out", str(out), "--timestamps"]) == 0
    assert "generated_at" in json.loads((out / "ingest.json").read_text())


def test_missing_file_exits_3(inputs, tmp_path, capsys):
    args = list(inputs)
    args[args.index("--census") + 1] = str(tmp_path / "nope.csv")
    assert main(["ingest", *args, "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "code=3" in err and "nope.csv" in err


def test_config_errors_exit_2(inputs, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("horizon = 7\nbogus_key = 1\n")
    assert main(["fit", "--config", str(cfg), *inputs, "--out", str(tmp_path / "o")]) == 2
    assert "bogus_key" in capsys.readouterr().err
    assert main(["evaluate", *inputs, "--horizon", "5", "--out", str(tmp_path / "o2")]) == 2
    assert main(["fit", *inputs, "--k", "0", "--out", str(tmp_path / "o3")]) == 2


def test_flags_override_config_file(inputs, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("k = 2\nholdout_len = 7\nma_window = 7\n")
    out = tmp_path / "p"
    assert main(["fit", "--config", str(cfg), *inputs, "--k", "3", "--out", str(out)]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["K"] == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["k"] == 3 and manifest["config"]["ma_window"] == 7

    out2 = tmp_path / "q"
    assert main(["fit", "--config", str(cfg), *inputs, "--out", str(out2)]) == 0
    assert json.loads((out2 / "fit.json").read_text())["K"] == 2


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(exog_policy="provided")
    with pytest.raises(ConfigError):
        RunConfig(alpha=1.5)
    assert RunConfig(frequency="weekly").transform.ma_window == 1
    assert RunConfig().transform.ma_window == 7


def test_weekly_test_command(inputs, tmp_path):
    out = tmp_path / "w"
    assert main(["test", *inputs, "--frequency", "weekly", "--out", str(out)]) == 0
    payload = json.loads((out / "granger.json").read_text())
    assert payload["frequency"] == "weekly"
    assert 0.0 <= payload["p_fixed_t"] <= 1.0


def test_forecast_past_end(inputs, tmp_path, sim_triple):
    _, panel = sim_triple
    out = tmp_path / "f"
    assert main(["forecast", *inputs, "--holdout", "0", "--horizon", "5", "--out", str(out), "--plot-data"]) == 0
    frame = pd.read_csv(out / "forecast.csv")
    assert len(frame) == panel.n_units * 5
    assert frame["date"].min() > panel.calendar[-1].isoformat()
    plot = pd.read_csv(out / "plot_data.csv")
    assert set(plot["series"]) >= {"observed", "forecast"}


def test_simulate_and_oracle(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert main(["simulate", "--n-units", "2", "--n-days", "30", "--seed", "1", "--out", str(sim)]) == 0
    assert {"attestations.csv", "census.csv", "zipmap.csv", "truth.json", "manifest.json"} <= set(_files(sim))
    orc = tmp_path / "orc"
    args = ["oracle", "--out", str(orc), "--scale", "0", "--size-reps", "10", "--power-reps", "5"]
    assert main(args) == 0
    report = json.loads((orc / "oracle.json").read_text())
    assert [e["name"] for e in report["experiments"]] == ["dh_size", "dh_power"]
    assert "[PASS]" in capsys.readouterr().out or "[FAIL]" in (orc / "oracle.txt").read_text()


def test_provided_indicator_paths(inputs, tmp_path, sim_triple):
    _, panel = sim_triple
    rows = [(u, s, 0.0) for u in panel.units for s in range(1, 8)]
    exog = tmp_path / "exog.csv"
    pd.DataFrame(rows, columns=["unit_id", "step", "value"]).to_csv(exog, index=False)
    common = ["forecast", *inputs, "--k", "2"]
    assert main(common + ["--exog-policy", "provided", "--exog-paths", str(exog), "--out", str(tmp_path / "p")]) == 0
    assert main(common + ["--out", str(tmp_path / "h")]) == 0
    provided = pd.read_csv(tmp_path / "p" / "forecast.csv")
    held = pd.read_csv(tmp_path / "h" / "forecast.csv")
    assert len(provided) == len(held)
    assert not provided["predicted_census"].equals(held["predicted_census"])

    short = tmp_path / "short.csv"
    pd.DataFrame(rows[:3], columns=["unit_id", "step", "value"]).to_csv(short, index=False)
    assert main(common + ["--exog-policy", "provided", "--exog-paths", str(short), "--out", str(tmp_path / "s")]) == 3
