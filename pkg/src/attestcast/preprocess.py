"""Smoothing, log transform and train/holdout partitioning."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError, NonPositiveArgumentError, SeriesTooShortError
from .ingest import PanelDataset


@dataclass(frozen=True)
class TransformSpec:
    """Moving-average window and log offset.

    ``log_offset=1`` gives ``log1p``. ``smooth_target=False`` leaves the
    target series unsmoothed (only logged).
    """

    ma_window: int = 7
    log_offset: float = 1.0
    smooth_target: bool = True

    def __post_init__(self):
        if int(self.ma_window) != self.ma_window or self.ma_window < 1:
            raise ConfigError(f"ma_window must be a positive integer, got {self.ma_window!r}")
        if not np.isfinite(self.log_offset) or self.log_offset < 0:
            raise ConfigError(f"log_offset must be nonnegative, got {self.log_offset!r}")


def moving_average(series: Sequence[float], window: int) -> np.ndarray:
    """Trailing moving average.

    ``out[j] = mean(series[j : j + window])``; the output is
    ``window - 1`` shorter than the input.
    """
    arr = np.asarray(series, dtype=float)
    if window < 1 or int(window) != window:
        raise ConfigError(f"window must be a positive integer, got {window!r}")
    if arr.ndim != 1 or arr.size < window:
        raise SeriesTooShortError(f"series of length {arr.size} is shorter than window {window}")
    if window == 1:
        return arr.copy()
    views = sliding_window_view(arr, window)
    # rounding in the sum can push a mean one ulp past its window extremes
    return np.clip(views.mean(axis=1), views.min(axis=1), views.max(axis=1))


def log_transform(series: Sequence[float], offset: float = 1.0) -> np.ndarray:
    """Natural log of ``series + offset``."""
    arr = np.asarray(series, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr + offset <= 0):
        raise NonPositiveArgumentError(
            f"log argument must be positive; min(series + offset) = {np.min(arr + offset)!r}"
            " (use log_offset > 0 for series containing zeros)"
        )
    if offset == 1.0:
        return np.log1p(arr)
    return np.log(arr + offset)


def inverse_transform(values: Sequence[float], offset: float = 1.0) -> np.ndarray:
    """Inverse of :func:`log_transform`."""
    arr = np.asarray(values, dtype=float)
    if offset == 1.0:
        return np.expm1(arr)
    return np.exp(arr) - offset


@dataclass(frozen=True, eq=False)
class TransformedPanel:
    """Smoothed-log view of a :class:`PanelDataset`.

    Column ``j`` of ``y``/``x`` corresponds to ``base.calendar[j + t_offset]``.
    """

    base: PanelDataset
    y: np.ndarray
    x: np.ndarray
    spec: TransformSpec
    t_offset: int = field(default=0)

    def __post_init__(self):
        for name in ("y", "x"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (self.base.n_units, self.base.n_periods - self.t_offset):
                raise DataError(f"transformed {name} has shape {arr.shape} inconsistent with base panel")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"transformed {name} is not finite everywhere")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def units(self) -> tuple[str, ...]:
        return self.base.units

    @property
    def n_units(self) -> int:
        return self.base.n_units

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def calendar(self):
        return self.base.calendar[self.t_offset:]


def transform_panel(panel: PanelDataset, spec: TransformSpec = TransformSpec()) -> TransformedPanel:
    """Smooth then log every unit's ``y`` and ``x``."""
    w = spec.ma_window
    if panel.n_periods < w:
        raise SeriesTooShortError(f"panel has {panel.n_periods} periods, fewer than ma_window {w}")
    ys, xs = [], []
    for i, unit in enumerate(panel.units):
        try:
            x_s = moving_average(panel.x[i], w)
            if spec.smooth_target:
                y_s = moving_average(panel.y[i], w)
            else:
                y_s = np.asarray(panel.y[i, w - 1:], dtype=float)
            ys.append(log_transform(y_s, spec.log_offset))
            xs.append(log_transform(x_s, spec.log_offset))
        except (SeriesTooShortError, NonPositiveArgumentError) as exc:
            raise type(exc)(f"unit {unit!r}: {exc}") from None
    return TransformedPanel(panel, np.vstack(ys), np.vstack(xs), spec, w - 1)


def split_train_holdout(
    panel: TransformedPanel, holdout_len: int, min_train: int = 3
) -> tuple[TransformedPanel, PanelDataset]:
    """Hold out the final ``holdout_len`` periods.

    Returns the transformed training panel and the raw-scale holdout slice
    of the base panel (evaluation happens on original counts).
    """
    if int(holdout_len) != holdout_len or holdout_len < 1:
        raise ConfigError(f"holdout_len must be a positive integer, got {holdout_len!r}")
    t_prime = panel.n_periods
    if t_prime <= holdout_len + min_train:
        raise SeriesTooShortError(
            f"{t_prime} transformed periods cannot hold out {holdout_len} and keep "
            f"more than {min_train} for estimation"
        )
    cut = t_prime - holdout_len
    base_cut = panel.t_offset + cut
    train = TransformedPanel(
        base=panel.base.slice_periods(0, base_cut),
        y=panel.y[:, :cut],
        x=panel.x[:, :cut],
        spec=panel.spec,
        t_offset=panel.t_offset,
    )
    return train, panel.base.slice_periods(base_cut)
