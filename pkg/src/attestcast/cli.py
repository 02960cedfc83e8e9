"""Command-line interface.

Every analysis subcommand reads the same flat ``key = value`` config file
(``--config``); command-line flags override file values, which override the
built-in defaults. Exit status: 0 success, 2 configuration error, 3 data
error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import datetime as dt
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .errors import AttestcastError, ConfigError, DataError
from .evaluate import describe_panel, evaluate_forecasts, format_table
from .forecast import (
    HOLD_LAST,
    PROVIDED,
    ExogenousPolicy,
    doubling_report,
    fitted_values,
    forecast_panel,
    persistence_forecast,
    rolling_origin_forecast,
)
from .granger import dh_test, dh_test_weekly
from .ingest import (
    DAILY,
    FREQUENCIES,
    WEEKLY,
    PanelDataset,
    build_panel,
    load_attestations,
    load_census,
    load_zip_map,
    write_panel_csv,
)
from .linmod import ModelSpec, confidence_interval, fit_panel, select_lag
from .oracle import SuiteConfig, run_oracle_suite
from .preprocess import TransformSpec, inverse_transform, split_train_holdout, transform_panel
from .simulate import SEIR_LIKE, BiasSpec, SimConfig, network_scale_config, simulate_panel, to_raw_tables, write_raw_tables

SCHEMA_VERSION = 1
_SECTION = "run"


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for an analysis run.

    ``ma_window`` left unset means 7 for daily panels and 1 for weekly ones.
    ``k`` left unset means the lag order is chosen by BIC over ``1..k_max``.
    ``holdout_len = 0`` fits on every period and forecasts past the end.
    """

    attestations: Optional[str] = None
    census: Optional[str] = None
    zipmap: Optional[str] = None
    out_dir: str = "out"
    frequency: str = DAILY
    allow_unmapped: bool = False
    ma_window: Optional[int] = None
    log_offset: float = 1.0
    smooth_target: bool = True
    k_max: int = 10
    k: Optional[int] = None
    holdout_len: int = 7
    horizon: int = 7
    exog_policy: str = HOLD_LAST
    exog_paths: Optional[str] = None
    alpha: float = 0.05
    jobs: int = 1

    def __post_init__(self):
        if self.frequency not in FREQUENCIES:
            raise ConfigError(f"frequency must be one of {FREQUENCIES}, got {self.frequency!r}")
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.holdout_len < 0:
            raise ConfigError("holdout_len must be nonnegative")
        if self.ma_window is not None and self.ma_window < 1:
            raise ConfigError("ma_window must be at least 1")
        if self.exog_policy not in (HOLD_LAST, PROVIDED):
            raise ConfigError(f"exog_policy must be {HOLD_LAST!r} or {PROVIDED!r}")
        if (self.exog_policy == PROVIDED) != (self.exog_paths is not None):
            raise ConfigError("exog_paths must be set exactly when exog_policy = provided")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")

    @property
    def transform(self) -> TransformSpec:
        window = self.ma_window
        if window is None:
            window = 7 if self.frequency == DAILY else 1
        return TransformSpec(ma_window=window, log_offset=self.log_offset, smooth_target=self.smooth_target)

    def hashed_fields(self) -> dict:
        """Settings that can change results; output location and worker count are excluded."""
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        d.pop("jobs")
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT_FIELDS = {"ma_window", "k_max", "k", "holdout_len", "horizon", "jobs"}
_FLOAT_FIELDS = {"log_offset", "alpha"}
_BOOL_FIELDS = {"allow_unmapped", "smooth_target"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if raw.lower() in ("", "none") and _FIELDS[key].default is None:
        return None
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        if key in _BOOL_FIELDS:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file (``#`` comments, no sections)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        parser.read_string(f"[{_SECTION}]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = {}
    for key, raw in parser.items(_SECTION):
        if key not in _FIELDS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# Artifact writing
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else repr(value)
    if isinstance(obj, (dt.date,)):
        return obj.isoformat()
    return obj


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Artifacts:
    """Writes artifacts into one directory and records them for the manifest."""

    def __init__(self, out_dir, timestamps: bool = False):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.timestamps = timestamps
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def _record(self, name: str):
        if name not in self.written:
            self.written.append(name)

    def json(self, name: str, payload: dict) -> Path:
        body = dict(_jsonable(payload), schema_version=SCHEMA_VERSION)
        if self.timestamps:
            body["generated_at"] = dt.datetime.now(dt.timezone.utc).isoformat()
        path = self.path(name)
        path.write_text(json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")
        self._record(name)
        return path

    def text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text.rstrip("\n") + "\n", encoding="utf-8")
        self._record(name)
        return path

    def frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.path(name)
        frame.to_csv(path, index=False, lineterminator="\n", float_format=None)
        self._record(name)
        return path

    def panel(self, name: str, panel: PanelDataset) -> Path:
        path = self.path(name)
        write_panel_csv(panel, path)
        self._record(name)
        return path

    def manifest(self, command: str, config: dict, inputs: dict[str, Optional[str]]) -> Path:
        canonical = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
        payload = {
            "command": command,
            "version": __version__,
            "config": config,
            "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
            "inputs": {
                name: {"path": p, "sha256": _sha256(Path(p))}
                for name, p in sorted(inputs.items())
                if p is not None
            },
            "artifacts": {name: _sha256(self.path(name)) for name in sorted(self.written)},
        }
        return self.json("manifest.json", payload)


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

def _require_inputs(cfg: RunConfig) -> None:
    for key in ("attestations", "census", "zipmap"):
        if getattr(cfg, key) is None:
            raise ConfigError(f"no {key} file given (set --{key} or '{key} =' in the config file)")


def _inputs(cfg: RunConfig) -> dict:
    return {
        "attestations": cfg.attestations,
        "census": cfg.census,
        "zipmap": cfg.zipmap,
        "exog_paths": cfg.exog_paths,
    }


def stage_ingest(cfg: RunConfig, frequency: Optional[str] = None):
    _require_inputs(cfg)
    census = load_census(cfg.census)
    zipmap = load_zip_map(cfg.zipmap, known_units={r.unit_id for r in census})
    attestations = load_attestations(cfg.attestations)
    panel = build_panel(attestations, census, zipmap, frequency or cfg.frequency, cfg.allow_unmapped)
    return panel, zipmap


def _ingest_summary(panel: PanelDataset) -> dict:
    return {
        "units": list(panel.units),
        "frequency": panel.frequency,
        "n_periods": panel.n_periods,
        "first_date": panel.calendar[0],
        "last_date": panel.calendar[-1],
    }


def stage_fit(cfg: RunConfig, panel: PanelDataset):
    tpanel = transform_panel(panel, cfg.transform)
    if cfg.holdout_len > 0:
        train, holdout = split_train_holdout(tpanel, cfg.holdout_len)
    else:
        train, holdout = tpanel, None
    curve = None
    if cfg.k is None:
        K, curve = select_lag(train, cfg.k_max, jobs=cfg.jobs)
    else:
        K = cfg.k
    panel_fit = fit_panel(train, ModelSpec(K=K), jobs=cfg.jobs)
    return tpanel, train, holdout, panel_fit, curve


def _fit_payload(panel_fit) -> dict:
    out = panel_fit.to_dict()
    for unit, fit in zip(out["units"], panel_fit.fits):
        unit["doubling"] = [doubling_report(float(b)) | {"lag": k + 1} for k, b in enumerate(fit.beta)]
    return out


def _fit_summary(panel_fit) -> str:
    lines = [f"lag order K = {panel_fit.spec.K}, pooled BIC = {panel_fit.bic_total:.4f}", ""]
    header = f"{'unit':<12}{'coef':<10}{'estimate':>12}{'se':>12}{'ci_low':>12}{'ci_high':>12}"
    lines.append(header)
    for f in panel_fit.fits:
        for j, name in enumerate(f.names):
            lo, hi = confidence_interval(f, j, panel_fit.spec.ci_level)
            lines.append(f"{f.unit_id:<12}{name:<10}{f.coeffs[j]:12.5f}{f.se[j]:12.5f}{lo:12.5f}{hi:12.5f}")
    return "\n".join(lines)


def _write_curve(art: Artifacts, curve) -> None:
    if curve is None:
        return
    best = min(curve, key=lambda kv: (kv[1], kv[0]))[0]
    art.frame("lag_curve.csv", pd.DataFrame(curve, columns=["K", "bic"]))
    art.json("lag_curve.json", {"selected_K": best, "curve": [{"K": k, "bic": b} for k, b in curve]})


def _load_exog(cfg: RunConfig, units: Sequence[str], h: int) -> ExogenousPolicy:
    if cfg.exog_policy == HOLD_LAST:
        return ExogenousPolicy()
    path = Path(cfg.exog_paths)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    frame = pd.read_csv(path, dtype={"unit_id": str})
    missing = {"unit_id", "step", "value"} - set(frame.columns)
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
    paths = np.full((len(units), h), np.nan)
    index = {u: i for i, u in enumerate(units)}
    for rec in frame.itertuples(index=False):
        if rec.unit_id not in index:
            raise DataError(f"{path}: unknown unit {rec.unit_id!r}")
        if 1 <= int(rec.step) <= h:
            paths[index[rec.unit_id], int(rec.step) - 1] = float(rec.value)
    if np.isnan(paths).any():
        raise DataError(f"{path}: needs steps 1..{h} for every unit")
    return ExogenousPolicy(PROVIDED, paths)


def _plot_frame(panel: PanelDataset, train, panel_fit, fs) -> pd.DataFrame:
    rows = []
    offset = train.spec.log_offset
    for i, unit in enumerate(panel.units):
        for d, v in zip(panel.calendar, panel.y[i]):
            rows.append((unit, d.isoformat(), "observed", float(v)))
        fitted = fitted_values(panel_fit.fits[i], train.y[i], train.x[i])
        fitted = np.maximum(inverse_transform(fitted, offset), 0.0)
        for d, v in zip(train.calendar, fitted):
            if math.isfinite(v):
                rows.append((unit, d.isoformat(), "fitted", float(v)))
        for d, v in zip(fs.dates, fs.per_unit[i]):
            rows.append((unit, d.isoformat(), "forecast", float(v)))
    network = panel.y.sum(axis=0)
    for d, v in zip(panel.calendar, network):
        rows.append(("network", d.isoformat(), "observed", float(v)))
    for d, v in zip(fs.dates, fs.network):
        rows.append(("network", d.isoformat(), "forecast", float(v)))
    return pd.DataFrame(rows, columns=["unit_id", "date", "series", "value"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = resolve_config(args)
    art = Artifacts(cfg.out_dir, args.timestamps)
    panel, _ = stage_ingest(cfg)
    art.panel("panel.csv", panel)
    summary = _ingest_summary(panel)
    art.json("ingest.json", summary)
    art.manifest("ingest", cfg.hashed_fields(), _inputs(cfg))
    print(f"ingested {len(panel.units)} units x {panel.n_periods} {panel.frequency} periods "
          f"({summary['first_date']} to {summary['last_date']})")
    return 0


def cmd_fit(args) -> int:
    cfg = resolve_config(args)
    art = Artifacts(cfg.out_dir, args.timestamps)
    panel, _ = stage_ingest(cfg)
    _, _, _, panel_fit, curve = stage_fit(cfg, panel)
    _write_curve(art, curve)
    art.json("fit.json", _fit_payload(panel_fit))
    text = _fit_summary(panel_fit)
    art.text("fit.txt", text)
    art.manifest("fit", cfg.hashed_fields(), _inputs(cfg))
    print(text)
    return 0


def _granger(cfg: RunConfig, panel_fit=None):
    if cfg.frequency == WEEKLY:
        weekly, _ = stage_ingest(cfg, WEEKLY)
        tpanel = transform_panel(weekly, cfg.transform)
        if cfg.k is not None:
            K = cfg.k
        else:
            k_cap = max(1, (tpanel.n_periods - 2) // 3)
            K, _ = select_lag(tpanel, min(cfg.k_max, k_cap))
        return dh_test_weekly(weekly, ModelSpec(K=K), cfg.transform, cfg.alpha)
    return dh_test(panel_fit, cfg.alpha)


def cmd_test(args) -> int:
    cfg = resolve_config(args)
    art = Artifacts(cfg.out_dir, args.timestamps)
    panel_fit = None
    if cfg.frequency == DAILY:
        panel, _ = stage_ingest(cfg)
        panel_fit = stage_fit(cfg, panel)[3]
    result = _granger(cfg, panel_fit)
    art.json("granger.json", result.to_dict() | {"frequency": cfg.frequency})
    art.text("granger.txt", result.report())
    art.manifest("test", cfg.hashed_fields(), _inputs(cfg))
    print(result.report())
    return 0


def _forecast(cfg: RunConfig, panel, train, panel_fit):
    policy = _load_exog(cfg, train.units, cfg.horizon)
    return forecast_panel(panel_fit, train, cfg.horizon, policy, jobs=cfg.jobs)


def _write_forecast(art: Artifacts, name: str, fs) -> None:
    art.frame(f"{name}.csv", fs.to_frame())
    art.json(f"{name}.json", fs.to_dict())


def cmd_forecast(args) -> int:
    cfg = resolve_config(args)
    art = Artifacts(cfg.out_dir, args.timestamps)
    panel, _ = stage_ingest(cfg)
    tpanel, train, _, panel_fit, curve = stage_fit(cfg, panel)
    _write_curve(art, curve)
    fs = _forecast(cfg, panel, train, panel_fit)
    _write_forecast(art, "forecast", fs)
    if args.plot_data:
        art.frame("plot_data.csv", _plot_frame(panel, train, panel_fit, fs))
    if args.rolling_origin:
        _rolling(cfg, art, tpanel, panel_fit.spec)
    art.manifest("forecast", cfg.hashed_fields(), _inputs(cfg))
    print(f"forecast origin {fs.origin}, horizon {fs.horizon}: network "
          + ", ".join(f"{v:.1f}" for v in fs.network))
    return 0


def _rolling(cfg: RunConfig, art: Artifacts, tpanel, spec):
    if cfg.holdout_len < 1:
        raise ConfigError("--rolling-origin needs holdout_len >= 1")
    fs = rolling_origin_forecast(tpanel, spec, cfg.holdout_len)
    _write_forecast(art, "rolling_forecast", fs)
    return fs


def _evaluate(cfg: RunConfig, art: Artifacts, panel, zipmap, train, holdout, panel_fit, rolling: bool, tpanel):
    if holdout is None:
        raise ConfigError("evaluation needs holdout_len >= 1")
    if cfg.horizon != cfg.holdout_len:
        raise ConfigError(f"evaluation needs horizon == holdout_len (got {cfg.horizon} and {cfg.holdout_len})")
    fs = forecast_panel(panel_fit, train, cfg.horizon, _load_exog(cfg, train.units, cfg.horizon), jobs=cfg.jobs)
    report = evaluate_forecasts(fs, holdout)
    baseline = evaluate_forecasts(persistence_forecast(train.base, cfg.horizon), holdout)
    description = describe_panel(panel.slice_periods(0, panel.n_periods - cfg.holdout_len), zipmap)
    payload = {"model": report.to_dict(), "persistence": baseline.to_dict()}
    if rolling:
        rfs = _rolling(cfg, art, tpanel, panel_fit.spec)
        payload["rolling_origin"] = evaluate_forecasts(rfs, holdout).to_dict()
    art.json("eval.json", payload)
    art.json("description.json", description.to_dict())
    table = format_table(description, report)
    art.text("eval_table.txt", table)
    return fs, report, baseline, table


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    art = Artifacts(cfg.out_dir, args.timestamps)
    panel, zipmap = stage_ingest(cfg)
    tpanel, train, holdout, panel_fit, _ = stage_fit(cfg, panel)
    _, report, baseline, table = _evaluate(
        cfg, art, panel, zipmap, train, holdout, panel_fit, args.rolling_origin, tpanel
    )
    art.manifest("evaluate", cfg.hashed_fields(), _inputs(cfg))
    print(table)
    print(_vs_baseline(report, baseline))
    return 0


def _vs_baseline(report, baseline) -> str:
    def pct(v):
        return "n/a" if v is None else f"{100 * v:.2f}%"

    return (f"network WMAPE: model {pct(report.network.wmape)}, "
            f"persistence {pct(baseline.network.wmape)}")


def cmd_run_all(args) -> int:
    cfg = resolve_config(args)
    art = Artifacts(cfg.out_dir, args.timestamps)
    panel, zipmap = stage_ingest(cfg)
    art.panel("panel.csv", panel)
    art.json("ingest.json", _ingest_summary(panel))
    tpanel, train, holdout, panel_fit, curve = stage_fit(cfg, panel)
    _write_curve(art, curve)
    art.json("fit.json", _fit_payload(panel_fit))
    art.text("fit.txt", _fit_summary(panel_fit))
    granger = _granger(cfg, panel_fit)
    art.json("granger.json", granger.to_dict() | {"frequency": cfg.frequency})
    art.text("granger.txt", granger.report())
    if holdout is not None:
        fs, report, baseline, table = _evaluate(
            cfg, art, panel, zipmap, train, holdout, panel_fit, args.rolling_origin, tpanel
        )
    else:
        fs = _forecast(cfg, panel, train, panel_fit)
        report = baseline = None
        table = format_table(describe_panel(panel, zipmap))
    _write_forecast(art, "forecast", fs)
    if args.plot_data:
        art.frame("plot_data.csv", _plot_frame(panel, train, panel_fit, fs))
    summary = [
        f"units: {len(panel.units)}, periods: {panel.n_periods} ({panel.frequency})",
        f"lag order K = {panel_fit.spec.K}",
        f"Granger test: Z-tilde = {granger.z_fixed_t:.3f}, p = {granger.p_fixed_t:.4g} "
        + ("(reject H0)" if granger.reject else "(do not reject H0)"),
        "",
        table,
    ]
    if report is not None:
        summary.append(_vs_baseline(report, baseline))
    text = "\n".join(summary)
    art.text("summary.txt", text)
    art.manifest("run-all", cfg.hashed_fields(), _inputs(cfg))
    print(text)
    return 0


def cmd_simulate(args) -> int:
    bias = None
    if args.weekday_dropout or args.underreport:
        bias = BiasSpec(weekday_dropout=args.weekday_dropout, underreport=args.underreport)
    overrides = {"bias": bias}
    for name in ("n_units", "n_days", "true_lag", "beta_true", "gamma_true", "infection_process"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.network_scale:
        cfg = network_scale_config(seed=args.seed, **overrides)
    else:
        cfg = SimConfig(seed=args.seed, **overrides)
    panel, truth = simulate_panel(cfg)
    out = Path(args.out)
    paths = write_raw_tables(to_raw_tables(panel, cfg), out)
    art = Artifacts(out, args.timestamps)
    for p in paths.values():
        art._record(p.name)
    art.json("truth.json", truth.to_dict() | {"seed": args.seed, "units": list(panel.units)})
    art.manifest("simulate", {"seed": args.seed, "network_scale": args.network_scale, **_jsonable(overrides | {"bias": bias and dataclasses.asdict(bias)})}, {})
    print(f"simulated {cfg.n_units} units x {cfg.n_days} days into {out}")
    return 0


def cmd_oracle(args) -> int:
    kwargs = {"seed": args.seed, "jobs": args.jobs}
    scale = args.scale
    for name in ("size_reps", "power_reps", "lag_reps", "coef_reps", "forecast_reps", "bias_reps"):
        default = getattr(SuiteConfig, name)
        value = getattr(args, name)
        kwargs[name] = value if value is not None else int(round(default * scale))
    cfg = SuiteConfig(**kwargs)
    report = run_oracle_suite(cfg)
    art = Artifacts(args.out, args.timestamps)
    art.json("oracle.json", report.to_dict(timings=args.timestamps))
    art.text("oracle.txt", report.format())
    print(report.format())
    return 1 if (args.strict and not report.passed) else 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", help="flat key = value file with any of the settings below")
    g.add_argument("--attestations", help="attestations.csv (date,zip,n_onsite,n_symptomatic)")
    g.add_argument("--census", help="census.csv (date,unit_id,census)")
    g.add_argument("--zipmap", help="zipmap.csv (zip,unit_id,population,market_share_weight)")
    g.add_argument("--out", dest="out_dir", help="output directory (default: out)")
    g.add_argument("--frequency", choices=FREQUENCIES, help="daily (default) or weekly")
    g.add_argument("--allow-unmapped", action="store_const", const=True, default=None,
                   help="drop attestations from unmapped zip codes with a warning")
    g.add_argument("--ma-window", type=int, help="trailing moving-average window (default 7 daily, 1 weekly)")
    g.add_argument("--log-offset", type=float, help="offset c in ln(v + c) (default 1)")
    g.add_argument("--smooth-target", action=argparse.BooleanOptionalAction, default=None,
                   help="smooth the census as well as the indicator (default on)")
    g.add_argument("--k-max", type=int, help="largest lag order tried by BIC selection (default 10)")
    g.add_argument("--k", type=int, help="fixed lag order; skips BIC selection")
    g.add_argument("--holdout", dest="holdout_len", type=int,
                   help="periods held out for evaluation (default 7; 0 fits on everything)")
    g.add_argument("--horizon", type=int, help="forecast horizon (default 7)")
    g.add_argument("--exog-policy", choices=(HOLD_LAST, PROVIDED), help="indicator fill beyond the data")
    g.add_argument("--exog-paths", help="CSV unit_id,step,value of indicator paths on the transformed scale")
    g.add_argument("--alpha", type=float, help="significance level for the Granger test (default 0.05)")
    g.add_argument("--jobs", type=int, help="worker threads for per-unit fits (default 1)")
    g.add_argument("--timestamps", action="store_true", help="stamp artifacts with the generation time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attestcast",
        description="Forecast hospital census from employee symptom attestations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    commands = {
        "ingest": (cmd_ingest, "aggregate raw CSVs into a unit-by-period panel"),
        "fit": (cmd_fit, "select the lag order and fit per-unit models"),
        "test": (cmd_test, "panel Granger non-causality test"),
        "forecast": (cmd_forecast, "recursive forecasts from the training origin"),
        "evaluate": (cmd_evaluate, "score forecasts on the holdout against persistence"),
        "run-all": (cmd_run_all, "ingest, fit, test, forecast and evaluate in one pass"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_run_flags(p)
        if name in ("forecast", "run-all"):
            p.add_argument("--plot-data", action="store_true",
                           help="also write plot_data.csv with observed, fitted and forecast series")
        if name in ("forecast", "evaluate", "run-all"):
            p.add_argument("--rolling-origin", action="store_true",
                           help="also produce one-step forecasts refit before each holdout period")
        p.set_defaults(func=fn)

    p = sub.add_parser("simulate", help="write a synthetic attestations/census/zipmap triple")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--out", default="sim", help="output directory (default: sim)")
    p.add_argument("--network-scale", action="store_true", help="ten units sized like a regional hospital network")
    p.add_argument("--n-units", type=int)
    p.add_argument("--n-days", type=int)
    p.add_argument("--true-lag", type=int)
    p.add_argument("--beta", dest="beta_true", type=float, help="indicator coefficient at the true lag")
    p.add_argument("--gamma", dest="gamma_true", type=float, help="census persistence")
    p.add_argument("--process", dest="infection_process", choices=("log_random_walk", SEIR_LIKE))
    p.add_argument("--weekday-dropout", type=float, default=0.0, help="weekend absence probability")
    p.add_argument("--underreport", type=float, default=0.0, help="probability a symptomatic employee does not report")
    p.add_argument("--timestamps", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="Monte Carlo checks of size, power, recovery and forecast accuracy")
    p.add_argument("--seed", type=int, default=SuiteConfig.seed)
    p.add_argument("--out", default="oracle", help="output directory (default: oracle)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--scale", type=float, default=1.0, help="multiply every default replication count")
    for name in ("size", "power", "lag", "coef", "forecast", "bias"):
        p.add_argument(f"--{name}-reps", type=int, dest=f"{name}_reps")
    p.add_argument("--strict", action="store_true", help="exit 1 when any check fails")
    p.add_argument("--timestamps", action="store_true", help="record wall-clock seconds per experiment")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AttestcastError as exc:
        print(f"attestcast: error code={exc.exit_code} kind={type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
