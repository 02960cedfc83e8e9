"""Forecast scoring (MAE, WMAPE) and descriptive panel statistics."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AlignmentError, LengthMismatchError, ZeroDenominatorError
from .forecast import ForecastSet, network_total
from .ingest import PanelDataset, ZipMap


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if a.size != p.size:
        raise LengthMismatchError(f"actual has {a.size} values, predicted has {p.size}")
    if a.size < 1:
        raise LengthMismatchError("need at least one value to score")
    return a, p


def mae(actual: Sequence[float], predicted: Sequence[float]) -> float:
    a, p = _pair(actual, predicted)
    return math.fsum(np.abs(a - p)) / a.size


def wmape(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Census-weighted MAPE, ``sum|a - p| / sum a``.

    Weighting each day's percentage error by its actual value cancels the
    per-day denominators, so the metric stays finite when single days are 0.
    """
    a, p = _pair(actual, predicted)
    denom = math.fsum(a)
    if denom <= 0.0:
        raise ZeroDenominatorError("WMAPE is undefined when all actual values are zero")
    return math.fsum(np.abs(a - p)) / denom


@dataclass(frozen=True)
class Score:
    unit_id: str
    mae: float
    wmape: Optional[float]


@dataclass(frozen=True)
class EvalReport:
    per_unit: tuple[Score, ...]
    network: Score
    horizon: int
    origin: dt.date

    def score_for(self, unit_id: str) -> Score:
        for s in self.per_unit:
            if s.unit_id == unit_id:
                return s
        raise KeyError(unit_id)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "origin": self.origin.isoformat(),
            "wmape_definition": "sum(|actual - predicted|) / sum(actual)",
            "per_unit": [
                {"unit_id": s.unit_id, "mae": s.mae, "wmape": s.wmape} for s in self.per_unit
            ],
            "network": {"mae": self.network.mae, "wmape": self.network.wmape},
        }


def _score(unit_id: str, actual, predicted) -> Score:
    try:
        w = wmape(actual, predicted)
    except ZeroDenominatorError:
        w = None
    return Score(unit_id, mae(actual, predicted), w)


def evaluate_forecasts(fs: ForecastSet, holdout: PanelDataset) -> EvalReport:
    """Score a forecast against raw-scale holdout actuals.

    The network row is scored on the summed series (sum of unit actuals vs
    sum of unit forecasts), not averaged over unit scores. A unit whose
    holdout actuals are all zero gets ``wmape=None``.
    """
    if set(fs.units) != set(holdout.units) or len(fs.units) != len(holdout.units):
        raise AlignmentError("forecast and holdout cover different units")
    if holdout.n_periods != fs.horizon:
        raise AlignmentError(
            f"holdout has {holdout.n_periods} periods but the forecast horizon is {fs.horizon}"
        )
    if tuple(holdout.calendar) != tuple(fs.dates):
        raise AlignmentError("forecast dates do not match the holdout calendar")
    per_unit = []
    for i, unit in enumerate(fs.units):
        actual = holdout.y[holdout.unit_index(unit)]
        per_unit.append(_score(unit, actual, fs.per_unit[i]))
    net_actual = network_total(holdout.y)
    network = _score("network", net_actual, fs.network)
    order = {u: k for k, u in enumerate(holdout.units)}
    per_unit.sort(key=lambda s: order[s.unit_id])
    return EvalReport(tuple(per_unit), network, fs.horizon, fs.origin)


@dataclass(frozen=True)
class UnitDescription:
    unit_id: str
    census_mean: float
    census_sd: float
    symptoms_mean: float
    symptoms_sd: float
    employees: float
    weighted_population: float
    employee_share_of_population: Optional[float]


@dataclass(frozen=True)
class PanelDescription:
    per_unit: tuple[UnitDescription, ...]
    network: UnitDescription
    sd_ddof: int = 0

    def to_dict(self) -> dict:
        def row(d: UnitDescription):
            return {
                "unit_id": d.unit_id,
                "census_mean": d.census_mean,
                "census_sd": d.census_sd,
                "symptoms_mean": d.symptoms_mean,
                "symptoms_sd": d.symptoms_sd,
                "employees": d.employees,
                "weighted_population": d.weighted_population,
                "employee_share_of_population": d.employee_share_of_population,
            }

        return {
            "sd_denominator": "n" if self.sd_ddof == 0 else "n-1",
            "employees_definition": "peak daily on-site attestation count",
            "per_unit": [row(d) for d in self.per_unit],
            "network": row(self.network),
        }


def _describe(unit_id, y, x, employees, population) -> UnitDescription:
    share = employees / population if population > 0 else None
    return UnitDescription(
        unit_id=unit_id,
        census_mean=float(np.mean(y)),
        census_sd=float(np.std(y)),
        symptoms_mean=float(np.mean(x)),
        symptoms_sd=float(np.std(x)),
        employees=float(employees),
        weighted_population=float(population),
        employee_share_of_population=share,
    )


def describe_panel(panel: PanelDataset, zipmap: Optional[ZipMap] = None) -> PanelDescription:
    """Per-unit and network mean/SD of census and symptom counts.

    SDs use the ``n`` denominator. The employee count per unit is the peak
    daily on-site attestation count (a lower bound on distinct employees);
    the population is the market-share-weighted service-area population.
    """
    rows = []
    emp_total = 0.0
    pop_total = 0.0
    for i, unit in enumerate(panel.units):
        emp = float(np.max(panel.onsite[i])) if panel.onsite is not None else 0.0
        pop = zipmap.weighted_population(unit) if zipmap is not None else 0.0
        emp_total += emp
        pop_total += pop
        rows.append(_describe(unit, panel.y[i], panel.x[i], emp, pop))
    network = _describe("network", network_total(panel.y), network_total(panel.x), emp_total, pop_total)
    return PanelDescription(tuple(rows), network)


def _fmt_ms(mean: float, sd: float) -> str:
    return f"{mean:.1f} ({sd:.1f})"


def format_table(description: PanelDescription, report: Optional[EvalReport] = None) -> str:
    """Aligned text table: unit, census mean (SD), symptoms mean (SD), share, MAE (WMAPE)."""
    header = ["Unit", "Census mean (SD)", "Symptoms mean (SD)", "Employees/pop.", "MAE (WMAPE)"]
    body = []
    scores = {}
    if report is not None:
        scores = {s.unit_id: s for s in report.per_unit}
        scores["network"] = report.network
    for d in list(description.per_unit) + [description.network]:
        share = "n/a" if d.employee_share_of_population is None else f"{100 * d.employee_share_of_population:.1f}%"
        s = scores.get(d.unit_id)
        if s is None:
            err = ""
        else:
            w = "n/a" if s.wmape is None else f"{100 * s.wmape:.1f}%"
            err = f"{s.mae:.1f} ({w})"
        label = "Total network" if d.unit_id == "network" else d.unit_id
        body.append([label, _fmt_ms(d.census_mean, d.census_sd), _fmt_ms(d.symptoms_mean, d.symptoms_sd), share, err])
    widths = [max(len(r[c]) for r in [header] + body) for c in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join([r[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(r[1:], widths[1:])]))
    return "\n".join(lines)
