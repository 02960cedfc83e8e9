"""Recursive multi-step forecasts, back-transformation and network totals."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, SeriesTooShortError
from .ingest import DAILY, PanelDataset
from .linmod import ModelSpec, PanelFit, UnitFit, build_lag_matrix, fit_panel
from .preprocess import TransformedPanel, inverse_transform, log_transform

HOLD_LAST = "hold_last"
PROVIDED = "provided"


@dataclass(frozen=True, eq=False)
class ExogenousPolicy:
    """How indicator values beyond the last observation are filled.

    ``hold_last`` repeats the final observed (transformed) value; ``provided``
    takes explicit paths on the transformed scale, shape ``(h,)`` for one unit
    or ``(N, h)`` for a panel.
    """

    kind: str = HOLD_LAST
    provided_paths: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in (HOLD_LAST, PROVIDED):
            raise ConfigError(f"unknown exogenous policy {self.kind!r}")
        if (self.kind == PROVIDED) != (self.provided_paths is not None):
            raise ConfigError("provided_paths must be given exactly when kind='provided'")
        if self.provided_paths is not None:
            object.__setattr__(self, "provided_paths", np.asarray(self.provided_paths, dtype=float))

    def for_unit(self, i: int) -> "ExogenousPolicy":
        if self.kind == HOLD_LAST:
            return self
        paths = self.provided_paths
        return ExogenousPolicy(PROVIDED, paths[i] if paths.ndim == 2 else paths)


def forecast_unit(
    fit: UnitFit,
    y_history: Sequence[float],
    x_history: Sequence[float],
    h: int,
    policy: ExogenousPolicy = ExogenousPolicy(),
) -> np.ndarray:
    """Iterate the fitted equation ``h`` steps past the end of the histories.

    Lags that fall inside the history use observed values; later target lags
    use earlier predictions and later indicator lags follow ``policy``.
    Returns forecasts on the transformed scale.
    """
    if int(h) != h or h < 1:
        raise ConfigError(f"horizon must be a positive integer, got {h!r}")
    K = fit.K
    y_hist = np.asarray(y_history, dtype=float)
    x_hist = np.asarray(x_history, dtype=float)
    if y_hist.size < K or x_hist.size < K:
        raise SeriesTooShortError(f"forecasting with K={K} needs at least {K} history values")
    if policy.kind == PROVIDED:
        future_x = np.asarray(policy.provided_paths, dtype=float).ravel()
        if future_x.size < h:
            raise DataError(f"provided indicator path has {future_x.size} values, need {h}")
        future_x = future_x[:h]
    else:
        future_x = np.full(h, x_hist[-1])
    ys = list(y_hist[-K:])
    xs = list(x_hist[-K:]) + list(future_x)
    gamma, beta = fit.gamma, fit.beta
    out = np.empty(h)
    for s in range(h):
        # ys[-k] is y_{t+s-k}; xs[K+s-k] is x_{t+s-k}
        value = fit.alpha
        for k in range(1, K + 1):
            value += gamma[k - 1] * ys[-k] + beta[k - 1] * xs[K + s - k]
        out[s] = value
        ys.append(value)
    return out


@dataclass(frozen=True, eq=False)
class ForecastSet:
    units: tuple[str, ...]
    origin: dt.date
    horizon: int
    dates: tuple[dt.date, ...]
    per_unit: np.ndarray
    network: np.ndarray
    transformed_scale: np.ndarray
    log_offset: float = 1.0

    def to_frame(self):
        import pandas as pd

        n, h = self.per_unit.shape
        return pd.DataFrame(
            {
                "unit_id": np.repeat(self.units, h),
                "date": [d.isoformat() for d in self.dates] * n,
                "predicted_census": self.per_unit.ravel(),
            }
        )

    def to_dict(self) -> dict:
        return {
            "origin": self.origin.isoformat(),
            "horizon": self.horizon,
            "dates": [d.isoformat() for d in self.dates],
            "log_offset": self.log_offset,
            "back_transform": "exp(value) - log_offset, clipped at 0; no lognormal bias correction",
            "units": {
                u: {
                    "predicted_census": self.per_unit[i].tolist(),
                    "transformed_scale": self.transformed_scale[i].tolist(),
                }
                for i, u in enumerate(self.units)
            },
            "network": self.network.tolist(),
        }


def network_total(per_unit: np.ndarray) -> np.ndarray:
    """Column sums computed with exact rounding, independent of unit order."""
    per_unit = np.asarray(per_unit, dtype=float)
    return np.array([math.fsum(per_unit[:, s]) for s in range(per_unit.shape[1])])


def _future_dates(last: dt.date, h: int, frequency: str) -> tuple[dt.date, ...]:
    step = dt.timedelta(days=1 if frequency == DAILY else 7)
    return tuple(last + step * (s + 1) for s in range(h))


def forecast_panel(
    panel_fit: PanelFit,
    tpanel: TransformedPanel,
    h: int,
    policy: ExogenousPolicy = ExogenousPolicy(),
    jobs: int = 1,
) -> ForecastSet:
    """Forecast every unit from the end of ``tpanel`` and back-transform.

    Counts are ``max(0, exp(f) - log_offset)``; the network row is the sum
    over units.
    """
    if tuple(panel_fit.units) != tuple(tpanel.units):
        raise DataError("panel fit and transformed panel list different units")
    if policy.kind == PROVIDED and policy.provided_paths.ndim == 2:
        if policy.provided_paths.shape[0] != tpanel.n_units:
            raise DataError("provided_paths needs one row per unit")
    offset = tpanel.spec.log_offset

    def one(i):
        return forecast_unit(panel_fit.fits[i], tpanel.y[i], tpanel.x[i], h, policy.for_unit(i))

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, range(tpanel.n_units)))
    else:
        rows = [one(i) for i in range(tpanel.n_units)]
    transformed = np.vstack(rows)
    per_unit = np.maximum(inverse_transform(transformed, offset), 0.0)
    origin = tpanel.calendar[-1]
    return ForecastSet(
        units=tpanel.units,
        origin=origin,
        horizon=h,
        dates=_future_dates(origin, h, tpanel.base.frequency),
        per_unit=per_unit,
        network=network_total(per_unit),
        transformed_scale=transformed,
        log_offset=offset,
    )


def persistence_forecast(train: PanelDataset, h: int) -> ForecastSet:
    """Naive baseline repeating each unit's last observed raw census."""
    last = np.asarray(train.y[:, -1], dtype=float)
    per_unit = np.repeat(last[:, None], h, axis=1)
    origin = train.calendar[-1]
    return ForecastSet(
        units=train.units,
        origin=origin,
        horizon=h,
        dates=_future_dates(origin, h, train.frequency),
        per_unit=per_unit,
        network=network_total(per_unit),
        transformed_scale=log_transform(per_unit, 1.0),
        log_offset=1.0,
    )


def fitted_values(fit: UnitFit, y: Sequence[float], x: Sequence[float]) -> np.ndarray:
    """In-sample one-step predictions; the first ``K`` periods are NaN."""
    response, design = build_lag_matrix(y, x, fit.K, None, fit.include_intercept)
    out = np.full(len(y), np.nan)
    out[fit.K:] = design @ fit.coeffs
    return out


def rolling_origin_forecast(
    tpanel: TransformedPanel,
    spec: ModelSpec,
    holdout_len: int,
) -> ForecastSet:
    """One-step-ahead forecasts over the final ``holdout_len`` periods.

    Before each holdout period the model is refit on every transformed
    period observed so far, then predicts that single period.
    """
    T = tpanel.n_periods
    if int(holdout_len) != holdout_len or not 1 <= holdout_len < T:
        raise ConfigError(f"holdout_len must lie in 1..{T - 1}, got {holdout_len!r}")
    cut = T - holdout_len
    offset = tpanel.spec.log_offset
    cols = []
    for j in range(holdout_len):
        end = cut + j
        view = _ArrayView(tpanel.units, tpanel.y[:, :end], tpanel.x[:, :end])
        pf = fit_panel(view, spec)
        cols.append([forecast_unit(f, view.y[i], view.x[i], 1)[0] for i, f in enumerate(pf.fits)])
    transformed = np.array(cols).T
    per_unit = np.maximum(inverse_transform(transformed, offset), 0.0)
    origin = tpanel.calendar[cut - 1]
    return ForecastSet(
        units=tpanel.units,
        origin=origin,
        horizon=holdout_len,
        dates=tuple(tpanel.calendar[cut:]),
        per_unit=per_unit,
        network=network_total(per_unit),
        transformed_scale=transformed,
        log_offset=offset,
    )


@dataclass(frozen=True)
class _ArrayView:
    units: tuple[str, ...]
    y: np.ndarray
    x: np.ndarray


def interpret_doubling(beta_k: float) -> float:
    """Proportional change in the target when the indicator doubles.

    In a log-log model the exact effect is ``2**beta - 1``; reading ``beta``
    itself as the per-doubling change is only a first-order approximation.
    """
    if not math.isfinite(beta_k):
        raise ConfigError(f"beta must be finite, got {beta_k!r}")
    return 2.0 ** beta_k - 1.0


def doubling_report(beta_k: float, reported_effect: Optional[float] = None) -> dict:
    """Exact doubling effect alongside the ``beta``-as-percent reading.

    ``reported_effect`` is an externally quoted figure (e.g. 0.05 for a
    quoted "5% increase") to set next to the exact value.
    """
    exact = interpret_doubling(beta_k)
    out = {
        "beta": beta_k,
        "exact_effect": exact,
        "approx_effect": beta_k,
        "exact_percent": 100.0 * exact,
        "approx_percent": 100.0 * beta_k,
    }
    if reported_effect is not None:
        out["reported_effect"] = reported_effect
        out["reported_minus_exact"] = reported_effect - exact
    return out


def format_doubling(beta_k: float, reported_effect: Optional[float] = None) -> str:
    rep = doubling_report(beta_k, reported_effect)
    text = (
        f"beta = {beta_k:.4f}: doubling the indicator multiplies the target by "
        f"2^beta, an exact change of {rep['exact_percent']:.2f}% "
        f"(reading beta directly gives {rep['approx_percent']:.2f}%)"
    )
    if reported_effect is not None:
        text += f"; quoted figure {100 * reported_effect:.1f}% vs exact {rep['exact_percent']:.2f}%"
    return text
