"""Synthetic attestation / census panels with a known causal structure.

Latent per-unit prevalence drives the daily number of symptomatic employees
``s_t`` (binomial over all employees); the census follows

    ln(1 + y_t) = alpha + gamma ln(1 + y_{t-1}) + beta ln(1 + s_{t-L}) + e_t

rounded to nonnegative integers. The reported count ``x_t`` equals ``s_t``
unless a bias is configured, in which case weekend absence and
under-reporting thin it. Without bias the generator is the estimation
equation, so fitted coefficients can be checked against the truth.
Random numbers come from numpy's PCG64 bit generator; every unit and every Monte Carlo replication
draws from its own ``SeedSequence(seed, spawn_key=...)`` substream, so
output does not depend on execution order or worker count.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import signal

from .errors import ConfigError
from .ingest import DAILY, PanelDataset

LOG_RANDOM_WALK = "log_random_walk"
SEIR_LIKE = "seir_like"
PROCESSES = (LOG_RANDOM_WALK, SEIR_LIKE)

# stream keys; fixed so that adding a new stream never shifts existing ones
_STREAM_UNIT = 0
_STREAM_ZIPS = 1
_STREAM_ARX = 2

PerUnit = Union[float, Sequence[float]]


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent PCG64 generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(keys))))


@dataclass(frozen=True)
class BiasSpec:
    """Reporting bias: weekend attestation dropout and symptom under-reporting."""

    weekday_dropout: float = 0.0
    underreport: float = 0.0

    def __post_init__(self):
        for name in ("weekday_dropout", "underreport"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v!r}")


@dataclass(frozen=True)
class SimConfig:
    """Generator settings. Per-unit fields accept a scalar or one value per unit.

    ``alpha_true`` defaults to the intercept that centres ``ln(1 + census)``
    on ``ln(1 + census_level)`` given the simulated indicator path.
    """

    n_units: int = 10
    n_days: int = 217
    seed: int = 0
    infection_process: str = LOG_RANDOM_WALK
    true_lag: int = 7
    beta_true: PerUnit = 0.5
    gamma_true: PerUnit = 0.5
    employees_per_unit: PerUnit = 300
    symptom_report_prob: PerUnit = 0.5
    bias: Optional[BiasSpec] = None
    census_level: PerUnit = 30.0
    alpha_true: Optional[PerUnit] = None
    noise_sd: PerUnit = 0.05
    prevalence_sd: float = 0.1
    initial_prevalence: float = 0.02
    start_date: dt.date = dt.date(2020, 4, 2)
    burn_in: int = 60
    zips_per_unit: int = 3

    def __post_init__(self):
        if self.n_units < 1 or self.n_days < 1:
            raise ConfigError("n_units and n_days must be positive")
        if self.infection_process not in PROCESSES:
            raise ConfigError(f"infection_process must be one of {PROCESSES}")
        if self.true_lag < 1:
            raise ConfigError("true_lag must be a positive integer")
        rep = self.per_unit("symptom_report_prob")
        if np.any(rep < 0) or np.any(rep > 1):
            raise ConfigError("symptom_report_prob must lie in [0, 1]")
        if not 0.0 < self.initial_prevalence < 1.0:
            raise ConfigError("initial_prevalence must lie in (0, 1)")
        if np.any(self.per_unit("noise_sd") < 0) or self.prevalence_sd < 0:
            raise ConfigError("noise scales must be nonnegative")
        if self.burn_in < self.true_lag:
            raise ConfigError("burn_in must be at least true_lag")
        if self.zips_per_unit < 1:
            raise ConfigError("zips_per_unit must be positive")
        gam = self.per_unit("gamma_true")
        if np.any(np.abs(gam) >= 1):
            raise ConfigError("gamma_true must satisfy |gamma| < 1")
        emp = self.per_unit("employees_per_unit")
        if np.any(emp < 1) or np.any(emp != np.round(emp)):
            raise ConfigError("employees_per_unit must be positive integers")
        if np.any(self.per_unit("census_level") < 0):
            raise ConfigError("census_level must be nonnegative")
        self.per_unit("beta_true")
        if self.alpha_true is not None:
            self.per_unit("alpha_true")

    def per_unit(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        arr = np.atleast_1d(np.asarray(value, dtype=float))
        if arr.size == 1:
            arr = np.repeat(arr, self.n_units)
        if arr.shape != (self.n_units,):
            raise ConfigError(f"{name} needs 1 or {self.n_units} values, got {arr.size}")
        return arr


@dataclass(frozen=True, eq=False)
class SimTruth:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    true_lag: int
    noise_sd: np.ndarray
    prevalence: np.ndarray
    employees: np.ndarray

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "true_lag": self.true_lag,
            "noise_sd": self.noise_sd.tolist(),
            "employees": self.employees.tolist(),
        }


def _log_random_walk(rng, n, cfg: SimConfig) -> np.ndarray:
    lo, hi = math.log(1e-4), math.log(0.5)
    level = math.log(cfg.initial_prevalence)
    steps = rng.standard_normal(n) * cfg.prevalence_sd
    out = np.empty(n)
    for t in range(n):
        level += steps[t]
        # reflect at the bounds
        if level > hi:
            level = 2 * hi - level
        if level < lo:
            level = 2 * lo - level
        out[t] = level
    return np.exp(out)


def _seir_like(rng, n, cfg: SimConfig) -> np.ndarray:
    """Discrete SEIR with a spring wave, a summer trough and a fall surge.

    Day 0 is the start of the burn-in. The spring lockdown falls shortly
    before the first reported day and the fall surge is still growing when
    the calendar ends, so a closing holdout sits on a rising census.
    """
    incubation, infectious = 1 / 4.0, 1 / 7.0
    r_spring = 2.2 * rng.uniform(0.9, 1.1)
    r_summer = 0.7 * rng.uniform(0.95, 1.05)
    r_reopen = 1.15 * rng.uniform(0.95, 1.05)
    r_fall = 1.8 * rng.uniform(0.95, 1.05)
    t_lock = cfg.burn_in - 10 + int(rng.integers(-5, 6))
    t_reopen = cfg.burn_in + 80 + int(rng.integers(-10, 11))
    t_fall = cfg.burn_in + 160 + int(rng.integers(-10, 11))
    seed_frac = cfg.initial_prevalence * 2e-3
    s, e, i = 1.0 - 2 * seed_frac, seed_frac, seed_frac
    noise = np.exp(rng.standard_normal(n) * cfg.prevalence_sd * 0.5)
    out = np.empty(n)
    for t in range(n):
        if t < t_lock:
            r = r_spring
        elif t < t_reopen:
            r = r_summer
        elif t < t_fall:
            r = r_reopen
        else:
            r = r_fall
        new_e = r * infectious * s * i
        new_i = incubation * e
        new_r = infectious * i
        s, e, i = s - new_e, e + new_e - new_i, i + new_i - new_r
        out[t] = i
    return np.clip(out * noise, 1e-7, 1.0)


def _unit_series(cfg: SimConfig, u: int):
    rng = substream(cfg.seed, _STREAM_UNIT, u)
    n = cfg.burn_in + cfg.n_days
    if cfg.infection_process == LOG_RANDOM_WALK:
        prev = _log_random_walk(rng, n, cfg)
    else:
        prev = _seir_like(rng, n, cfg)
    bias = cfg.bias or BiasSpec()
    emp = int(cfg.per_unit("employees_per_unit")[u])
    first = cfg.start_date - dt.timedelta(days=cfg.burn_in)
    weekend = np.array([(first + dt.timedelta(days=t)).weekday() >= 5 for t in range(n)])
    attend = np.where(weekend, 1.0 - bias.weekday_dropout, 1.0)
    rep = cfg.per_unit("symptom_report_prob")[u]
    # census responds to every symptomatic employee; bias only thins what is reported
    symptomatic = rng.binomial(emp, np.clip(prev * rep, 0.0, 1.0))
    sym_onsite = rng.binomial(symptomatic, attend)
    onsite = sym_onsite + rng.binomial(emp - symptomatic, attend)
    x = rng.binomial(sym_onsite, 1.0 - bias.underreport)

    beta = cfg.per_unit("beta_true")[u]
    gamma = cfg.per_unit("gamma_true")[u]
    lx = np.log1p(symptomatic)
    level = math.log1p(cfg.per_unit("census_level")[u])
    if cfg.alpha_true is None:
        alpha = (1.0 - gamma) * level - beta * float(np.mean(lx))
    else:
        alpha = float(cfg.per_unit("alpha_true")[u])
    eps = rng.standard_normal(n) * cfg.per_unit("noise_sd")[u]
    L = cfg.true_lag
    y = np.empty(n)
    prev_ly = level
    for t in range(n):
        v = alpha + gamma * prev_ly + beta * lx[max(t - L, 0)] + eps[t]
        y[t] = max(0.0, float(np.round(np.expm1(v))))
        prev_ly = math.log1p(y[t])
    keep = slice(cfg.burn_in, None)
    return y[keep], x[keep].astype(float), onsite[keep].astype(float), prev[keep], alpha


def simulate_panel(cfg: SimConfig) -> tuple[PanelDataset, SimTruth]:
    """Simulate a daily panel; deterministic in ``cfg`` (including ``seed``)."""
    ys, xs, ons, prevs, alphas = [], [], [], [], []
    for u in range(cfg.n_units):
        y, x, onsite, prev, alpha = _unit_series(cfg, u)
        ys.append(y)
        xs.append(x)
        ons.append(onsite)
        prevs.append(prev)
        alphas.append(alpha)
    calendar = tuple(cfg.start_date + dt.timedelta(days=t) for t in range(cfg.n_days))
    units = tuple(f"H{u + 1}" for u in range(cfg.n_units))
    panel = PanelDataset(units, calendar, np.vstack(ys), np.vstack(xs), DAILY, np.vstack(ons))
    truth = SimTruth(
        alpha=np.array(alphas),
        beta=cfg.per_unit("beta_true"),
        gamma=cfg.per_unit("gamma_true"),
        true_lag=cfg.true_lag,
        noise_sd=cfg.per_unit("noise_sd"),
        prevalence=np.vstack(prevs),
        employees=cfg.per_unit("employees_per_unit"),
    )
    return panel, truth


def network_scale_config(seed: int = 0, **overrides) -> SimConfig:
    """Ten units sized like a regional hospital network.

    Employee counts per service area, mean census per hospital and report
    rates are fixed per unit; prevalence follows a two-wave epidemic.
    Census noise on the log scale is ``0.5 / sqrt(1 + level)``, roughly the
    relative spread of a count at that level.
    Two small units are adjusted so no series is constant over the sample (a
    constant series makes the lag design singular): the ninth unit's
    near-zero census is raised to 3 and the tenth unit gets 60 employees,
    giving about 0.1 reports per day.
    """
    levels = (57.2, 10.3, 8.1, 27.8, 13.0, 4.0, 15.8, 8.6, 3.0, 2.8)
    params = dict(
        n_units=10,
        n_days=217,
        seed=seed,
        infection_process=SEIR_LIKE,
        true_lag=7,
        beta_true=0.1,
        gamma_true=0.9,
        employees_per_unit=(3085, 1197, 733, 488, 457, 444, 270, 81, 64, 60),
        symptom_report_prob=(0.78, 0.79, 0.89, 0.61, 0.66, 0.68, 0.93, 0.62, 0.78, 1.0),
        census_level=levels,
        noise_sd=tuple(round(0.5 / math.sqrt(1.0 + v), 4) for v in levels),
    )
    params.update(overrides)
    return SimConfig(**params)


# ---------------------------------------------------------------------------
# Raw CSV triple
# ---------------------------------------------------------------------------

def zip_code(unit: int, j: int, zips_per_unit: int) -> str:
    return f"{1000 + unit * zips_per_unit + j:05d}"


def to_raw_tables(panel: PanelDataset, cfg: SimConfig) -> dict[str, pd.DataFrame]:
    """Split unit counts over synthetic zip codes.

    Returns ``attestations``, ``census`` and ``zipmap`` frames in the input
    CSV schemas; ingesting them reproduces ``panel``.
    """
    rng = substream(cfg.seed, _STREAM_ZIPS)
    z = cfg.zips_per_unit
    att_rows, zip_rows = [], []
    for i, unit in enumerate(panel.units):
        weights = rng.dirichlet(np.full(z, 4.0))
        emp = int(cfg.per_unit("employees_per_unit")[i])
        for j in range(z):
            share = rng.uniform(0.002, 0.05)
            zip_rows.append(
                (
                    zip_code(i, j, z),
                    unit,
                    int(round(emp * weights[j] / share)) + 1,
                    round(float(rng.uniform(0.2, 0.9)), 4),
                )
            )
        onsite = panel.onsite[i] if panel.onsite is not None else panel.x[i]
        for t, day in enumerate(panel.calendar):
            on = rng.multinomial(int(onsite[t]), weights)
            sym = rng.multivariate_hypergeometric(on, int(panel.x[i, t])) if panel.x[i, t] else np.zeros(z, int)
            for j in range(z):
                if on[j] or sym[j]:
                    att_rows.append((day.isoformat(), zip_code(i, j, z), int(on[j]), int(sym[j])))
    census = [
        (day.isoformat(), unit, int(panel.y[i, t]))
        for i, unit in enumerate(panel.units)
        for t, day in enumerate(panel.calendar)
    ]
    return {
        "attestations": pd.DataFrame(att_rows, columns=["date", "zip", "n_onsite", "n_symptomatic"]),
        "census": pd.DataFrame(census, columns=["date", "unit_id", "census"]),
        "zipmap": pd.DataFrame(zip_rows, columns=["zip", "unit_id", "population", "market_share_weight"]),
    }


def write_raw_tables(tables: dict[str, pd.DataFrame], out_dir: Union[str, Path]) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, frame in tables.items():
        path = out_dir / f"{name}.csv"
        frame.to_csv(path, index=False, lineterminator="\n")
        paths[name] = path
    return paths


# ---------------------------------------------------------------------------
# Gaussian ARX panels on the transformed scale
# ---------------------------------------------------------------------------

class ArrayPanel(NamedTuple):
    units: tuple[str, ...]
    y: np.ndarray
    x: np.ndarray


def simulate_arx(
    n_units: int,
    n_periods: int,
    gamma: Sequence[float] = (0.5,),
    beta: Sequence[float] = (),
    x_ar: float = 0.5,
    noise_sd: float = 1.0,
    alpha: float = 0.0,
    seed: int = 0,
    keys: Sequence[int] = (),
    burn_in: int = 100,
) -> ArrayPanel:
    """Panel of ``y_t = alpha + sum gamma_k y_{t-k} + sum beta_k x_{t-k} + e_t``.

    ``x`` is an independent Gaussian AR(1) with coefficient ``x_ar``;
    ``gamma[k-1]`` / ``beta[k-1]`` multiply lag ``k``.
    """
    ar = np.r_[1.0, -np.asarray(gamma, dtype=float)]
    dl = np.r_[0.0, np.asarray(beta, dtype=float)]
    n = n_periods + burn_in
    ys, xs = [], []
    for u in range(n_units):
        rng = substream(seed, _STREAM_ARX, *keys, u)
        e = rng.standard_normal(n) * noise_sd
        x = signal.lfilter([1.0], [1.0, -x_ar], rng.standard_normal(n))
        y = signal.lfilter([1.0], ar, alpha + e + signal.lfilter(dl, [1.0], x))
        ys.append(y[burn_in:])
        xs.append(x[burn_in:])
    units = tuple(f"unit{u + 1}" for u in range(n_units))
    return ArrayPanel(units, np.vstack(ys), np.vstack(xs))
