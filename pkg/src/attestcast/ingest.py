"""Loading, validation and alignment of the raw attestation / census inputs.

Three CSV inputs are understood (UTF-8, header row required)::

    attestations.csv  date,zip,n_onsite,n_symptomatic
    census.csv        date,unit_id,census
    zipmap.csv        zip,unit_id,population,market_share_weight

Attestation counts are grouped by employee home zip code, the zip codes are
matched to hospital service areas through the zip map, and the result is
aligned with the census on a common gap-free calendar.
"""

from __future__ import annotations

import datetime as dt
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import (
    CalendarGapError,
    DataError,
    DuplicateRecordError,
    DuplicateZipError,
    EmptyIntersectionError,
    ParseError,
    UnknownUnitError,
    UnmappedZipError,
)

DAILY = "daily"
WEEKLY = "weekly"
FREQUENCIES = (DAILY, WEEKLY)

ATTESTATION_COLUMNS = ("date", "zip", "n_onsite", "n_symptomatic")
CENSUS_COLUMNS = ("date", "unit_id", "census")
ZIPMAP_COLUMNS = ("zip", "unit_id", "population", "market_share_weight")
PANEL_COLUMNS = ("unit_id", "date", "y", "x")

_ZIP_RE = re.compile(r"^\d{5}$")


def natural_key(unit_id: str):
    """Sort key placing ``H2`` before ``H10``."""
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", str(unit_id))]


def sorted_units(units: Iterable[str]) -> list[str]:
    return sorted(set(units), key=natural_key)


@dataclass(frozen=True)
class ZipEntry:
    zip: str
    unit_id: str
    population: int
    market_share_weight: float


@dataclass(frozen=True)
class ZipMap:
    """Assignment of home zip codes to hospital service areas."""

    entries: tuple[ZipEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        dupes: list[str] = []
        for e in self.entries:
            if not _ZIP_RE.match(e.zip):
                raise ParseError(f"zip must be a 5-digit string, got {e.zip!r}")
            if e.population < 0:
                raise ParseError(f"zip {e.zip}: population must be nonnegative")
            if not 0.0 <= e.market_share_weight <= 1.0:
                raise ParseError(f"zip {e.zip}: market_share_weight must lie in [0, 1]")
            if e.zip in seen:
                dupes.append(e.zip)
            seen.add(e.zip)
        if dupes:
            raise DuplicateZipError(f"zip listed more than once: {', '.join(sorted(set(dupes)))}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def units(self) -> list[str]:
        return sorted_units(e.unit_id for e in self.entries)

    @property
    def unit_of(self) -> dict[str, str]:
        return {e.zip: e.unit_id for e in self.entries}

    def weighted_population(self, unit_id: str) -> float:
        """Service-area population weighted by the hospital's market share."""
        return float(
            sum(e.population * e.market_share_weight for e in self.entries if e.unit_id == unit_id)
        )


@dataclass(frozen=True)
class RawAttestationRecord:
    date: dt.date
    zip: str
    n_onsite: int
    n_symptomatic: int

    def __post_init__(self):
        if self.n_onsite < 0 or self.n_symptomatic < 0:
            raise DataError(f"{self.date} {self.zip}: negative attestation count")
        if self.n_symptomatic > self.n_onsite:
            raise DataError(
                f"{self.date} {self.zip}: n_symptomatic ({self.n_symptomatic}) exceeds "
                f"n_onsite ({self.n_onsite})"
            )


@dataclass(frozen=True)
class RawCensusRecord:
    date: dt.date
    unit_id: str
    census: int

    def __post_init__(self):
        if self.census < 0:
            raise DataError(f"{self.date} {self.unit_id}: census must be nonnegative")


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Aligned per-unit target (``y``) and indicator (``x``) series.

    ``y`` and ``x`` are ``N x T`` float arrays indexed by ``units`` and
    ``calendar``. ``onsite`` optionally carries the number of employees who
    attested on-site, used only for descriptive statistics.
    """

    units: tuple[str, ...]
    calendar: tuple[dt.date, ...]
    y: np.ndarray
    x: np.ndarray
    frequency: str = DAILY
    onsite: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        units = tuple(str(u) for u in self.units)
        calendar = tuple(_as_date(d) for d in self.calendar)
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "calendar", calendar)
        n, t = len(units), len(calendar)
        if n < 1 or t < 1:
            raise DataError("panel needs at least one unit and one period")
        if len(set(units)) != n:
            raise DataError("duplicate unit ids in panel")
        if self.frequency not in FREQUENCIES:
            raise DataError(f"frequency must be one of {FREQUENCIES}, got {self.frequency!r}")
        step = dt.timedelta(days=1 if self.frequency == DAILY else 7)
        for a, b in zip(calendar, calendar[1:]):
            if b - a != step:
                raise DataError(f"calendar is not consecutive between {a} and {b}")
        for name in ("y", "x", "onsite"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=float)
            if arr.shape != (n, t):
                raise DataError(f"{name} has shape {arr.shape}, expected {(n, t)}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains missing or non-finite cells")
            if np.any(arr < 0):
                raise DataError(f"{name} contains negative values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.calendar)

    def unit_index(self, unit_id: str) -> int:
        return self.units.index(unit_id)

    def slice_periods(self, start: int, stop: Optional[int] = None) -> "PanelDataset":
        sl = slice(start, stop)
        return PanelDataset(
            units=self.units,
            calendar=self.calendar[sl],
            y=self.y[:, sl],
            x=self.x[:, sl],
            frequency=self.frequency,
            onsite=None if self.onsite is None else self.onsite[:, sl],
        )

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        if (self.onsite is None) != (other.onsite is None):
            return False
        return (
            self.units == other.units
            and self.calendar == other.calendar
            and self.frequency == other.frequency
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.x, other.x)
            and (self.onsite is None or np.array_equal(self.onsite, other.onsite))
        )

    __hash__ = None

    def to_frame(self) -> pd.DataFrame:
        """Long format, one row per (unit, period)."""
        n, t = self.y.shape
        return pd.DataFrame(
            {
                "unit_id": np.repeat(self.units, t),
                "date": [d.isoformat() for d in self.calendar] * n,
                "y": self.y.ravel(),
                "x": self.x.ravel(),
            }
        )


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return pd.Timestamp(value).date()
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value.strip())
        except ValueError as exc:
            raise ParseError(f"invalid date {value!r}; expected YYYY-MM-DD") from exc
    raise ParseError(f"cannot interpret {value!r} as a date")


# ---------------------------------------------------------------------------
# CSV readers
# ---------------------------------------------------------------------------

def _read_csv(path: Union[str, Path], columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise ParseError(f"{path}: file is empty") from exc
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ParseError(f"{path}: missing column(s) {', '.join(missing)}")
    return frame[list(columns)].apply(lambda s: s.str.strip())


def _parse_int(value: str, what: str, path, row: int) -> int:
    try:
        f = float(value)
    except ValueError:
        raise ParseError(f"{path}, row {row}: {what} is not a number ({value!r})") from None
    if not np.isfinite(f) or f != int(f):
        raise ParseError(f"{path}, row {row}: {what} must be an integer ({value!r})")
    return int(f)


def _parse_date(value: str, path, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise ParseError(f"{path}, row {row}: invalid date {value!r}") from None


def load_zip_map(path: Union[str, Path], known_units: Optional[Iterable[str]] = None) -> ZipMap:
    """Read and validate ``zipmap.csv``.

    Parameters
    ----------
    path : path-like
        CSV with columns ``zip,unit_id,population,market_share_weight``.
    known_units : iterable of str, optional
        Unit registry. When given, every ``unit_id`` in the file must be in it.
    """
    frame = _read_csv(path, ZIPMAP_COLUMNS)
    entries = []
    for row, rec in enumerate(frame.itertuples(index=False), start=2):
        if not _ZIP_RE.match(rec.zip):
            raise ParseError(f"{path}, row {row}: zip must be 5 digits ({rec.zip!r})")
        if not rec.unit_id:
            raise ParseError(f"{path}, row {row}: empty unit_id")
        try:
            weight = float(rec.market_share_weight)
        except ValueError:
            raise ParseError(f"{path}, row {row}: bad market_share_weight") from None
        entries.append(
            ZipEntry(
                zip=rec.zip,
                unit_id=rec.unit_id,
                population=_parse_int(rec.population, "population", path, row),
                market_share_weight=weight,
            )
        )
    zipmap = ZipMap(tuple(entries))
    if known_units is not None:
        unknown = set(zipmap.units) - set(known_units)
        if unknown:
            raise UnknownUnitError(f"zip map references unknown unit(s): {', '.join(sorted_units(unknown))}")
    return zipmap


def load_attestations(path: Union[str, Path]) -> list[RawAttestationRecord]:
    frame = _read_csv(path, ATTESTATION_COLUMNS)
    out = []
    for row, rec in enumerate(frame.itertuples(index=False), start=2):
        if not _ZIP_RE.match(rec.zip):
            raise ParseError(f"{path}, row {row}: zip must be 5 digits ({rec.zip!r})")
        try:
            out.append(
                RawAttestationRecord(
                    date=_parse_date(rec.date, path, row),
                    zip=rec.zip,
                    n_onsite=_parse_int(rec.n_onsite, "n_onsite", path, row),
                    n_symptomatic=_parse_int(rec.n_symptomatic, "n_symptomatic", path, row),
                )
            )
        except ParseError:
            raise
        except DataError as exc:
            raise ParseError(f"{path}, row {row}: {exc}") from None
    return out


def load_census(path: Union[str, Path]) -> list[RawCensusRecord]:
    frame = _read_csv(path, CENSUS_COLUMNS)
    out = []
    for row, rec in enumerate(frame.itertuples(index=False), start=2):
        if not rec.unit_id:
            raise ParseError(f"{path}, row {row}: empty unit_id")
        try:
            out.append(
                RawCensusRecord(
                    date=_parse_date(rec.date, path, row),
                    unit_id=rec.unit_id,
                    census=_parse_int(rec.census, "census", path, row),
                )
            )
        except ParseError:
            raise
        except DataError as exc:
            raise ParseError(f"{path}, row {row}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# Panel assembly
# ---------------------------------------------------------------------------

def _attestation_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        frame = records.loc[:, list(ATTESTATION_COLUMNS)].copy()
        frame["date"] = [_as_date(d) for d in frame["date"]]
        frame["zip"] = frame["zip"].astype(str)
        if (frame["n_onsite"] < 0).any() or (frame["n_symptomatic"] < 0).any():
            raise DataError("negative attestation count")
        if (frame["n_symptomatic"] > frame["n_onsite"]).any():
            raise DataError("n_symptomatic exceeds n_onsite")
        return frame
    rows = [(r.date, r.zip, r.n_onsite, r.n_symptomatic) for r in records]
    return pd.DataFrame(rows, columns=list(ATTESTATION_COLUMNS))


def _census_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        frame = records.loc[:, list(CENSUS_COLUMNS)].copy()
        frame["date"] = [_as_date(d) for d in frame["date"]]
        frame["unit_id"] = frame["unit_id"].astype(str)
        if (frame["census"] < 0).any():
            raise DataError("census must be nonnegative")
        return frame
    rows = [(r.date, r.unit_id, r.census) for r in records]
    return pd.DataFrame(rows, columns=list(CENSUS_COLUMNS))


def _date_range(start: dt.date, stop: dt.date) -> list[dt.date]:
    return [start + dt.timedelta(days=k) for k in range((stop - start).days + 1)]


def build_panel(
    attestations,
    census,
    zipmap: ZipMap,
    frequency: str = DAILY,
    allow_unmapped: bool = False,
) -> PanelDataset:
    """Aggregate attestation counts to service areas and align with census.

    Parameters
    ----------
    attestations : sequence of RawAttestationRecord or DataFrame
    census : sequence of RawCensusRecord or DataFrame
    zipmap : ZipMap
    frequency : {"daily", "weekly"}
        Weekly output sums daily values within ISO (Monday-start) weeks and
        drops partial weeks at either end.
    allow_unmapped : bool
        Exclude attestations from unmapped zips with a warning instead of
        raising :class:`UnmappedZipError`.

    Returns
    -------
    PanelDataset
        Units in natural-sort order, calendar clipped to the intersection of
        the per-unit census spans and the attestation span.
    """
    if frequency not in FREQUENCIES:
        raise DataError(f"frequency must be one of {FREQUENCIES}, got {frequency!r}")
    att = _attestation_frame(attestations)
    cen = _census_frame(census)
    if cen.empty:
        raise EmptyIntersectionError("census input is empty")

    unit_of = zipmap.unit_of
    unmapped = set(att["zip"]) - set(unit_of)
    if unmapped:
        if not allow_unmapped:
            raise UnmappedZipError(unmapped)
        warnings.warn(
            f"excluding attestations from {len(unmapped)} unmapped zip(s): "
            + ", ".join(sorted(unmapped)[:20]),
            stacklevel=2,
        )
        att = att[att["zip"].isin(unit_of)]
    if att.empty:
        raise EmptyIntersectionError("no mapped attestation records")

    census_units = sorted_units(cen["unit_id"])
    unknown = set(zipmap.units) - set(census_units)
    if unknown:
        raise UnknownUnitError(
            f"zip map references unit(s) without census data: {', '.join(sorted_units(unknown))}"
        )

    dupes = cen.duplicated(subset=["date", "unit_id"], keep=False)
    if dupes.any():
        bad = cen.loc[dupes, ["date", "unit_id"]].drop_duplicates().head(10)
        listed = "; ".join(f"{r.unit_id} {r.date}" for r in bad.itertuples(index=False))
        raise DuplicateRecordError(f"duplicate census (date, unit_id) rows: {listed}")

    start = max(att["date"].min(), *(cen.loc[cen.unit_id == u, "date"].min() for u in census_units))
    stop = min(att["date"].max(), *(cen.loc[cen.unit_id == u, "date"].max() for u in census_units))
    for u in census_units:
        have = set(cen.loc[cen.unit_id == u, "date"])
        span = _date_range(min(have), max(have))
        missing = [d for d in span if d not in have]
        if missing:
            raise CalendarGapError(u, missing)
    if start > stop:
        raise EmptyIntersectionError(
            "census and attestation date ranges do not overlap across all units"
        )
    calendar = _date_range(start, stop)

    att = att.assign(unit_id=att["zip"].map(unit_of))
    grouped = att.groupby(["unit_id", "date"])[["n_symptomatic", "n_onsite"]].sum()
    idx = pd.MultiIndex.from_product([census_units, calendar], names=["unit_id", "date"])
    grouped = grouped.reindex(idx, fill_value=0)
    n, t = len(census_units), len(calendar)
    x = grouped["n_symptomatic"].to_numpy(dtype=float).reshape(n, t)
    onsite = grouped["n_onsite"].to_numpy(dtype=float).reshape(n, t)
    y = (
        cen.set_index(["unit_id", "date"])["census"]
        .reindex(idx)
        .to_numpy(dtype=float)
        .reshape(n, t)
    )

    panel = PanelDataset(tuple(census_units), tuple(calendar), y, x, DAILY, onsite)
    if frequency == WEEKLY:
        panel = aggregate_weekly(panel)
    return panel


def aggregate_weekly(panel: PanelDataset) -> PanelDataset:
    """Sum a daily panel within ISO weeks, dropping partial boundary weeks."""
    if panel.frequency != DAILY:
        raise DataError("weekly aggregation needs a daily panel")
    cal = panel.calendar
    first = next((k for k, d in enumerate(cal) if d.weekday() == 0), None)
    if first is None or len(cal) - first < 7:
        raise EmptyIntersectionError("calendar contains no complete ISO week")
    n_weeks = (len(cal) - first) // 7
    stop = first + 7 * n_weeks

    def fold(arr):
        return arr[:, first:stop].reshape(panel.n_units, n_weeks, 7).sum(axis=2)

    return PanelDataset(
        units=panel.units,
        calendar=tuple(cal[first + 7 * w] for w in range(n_weeks)),
        y=fold(panel.y),
        x=fold(panel.x),
        frequency=WEEKLY,
        onsite=None if panel.onsite is None else fold(panel.onsite),
    )


def write_panel_csv(panel: PanelDataset, path: Union[str, Path]) -> None:
    frame = panel.to_frame()
    frame["y"] = [repr(float(v)) for v in frame["y"]]
    frame["x"] = [repr(float(v)) for v in frame["x"]]
    frame.to_csv(path, index=False, lineterminator="\n")


def read_panel_csv(path: Union[str, Path]) -> PanelDataset:
    """Inverse of :func:`write_panel_csv`; frequency is inferred from the date step."""
    frame = _read_csv(path, PANEL_COLUMNS)
    frame["date"] = [_parse_date(d, path, i + 2) for i, d in enumerate(frame["date"])]
    try:
        frame["y"] = frame["y"].astype(float)
        frame["x"] = frame["x"].astype(float)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if frame.duplicated(subset=["unit_id", "date"]).any():
        raise DuplicateRecordError(f"{path}: duplicate (unit_id, date) rows")
    units = sorted_units(frame["unit_id"])
    calendar = sorted(set(frame["date"]))
    frequency = WEEKLY if len(calendar) > 1 and (calendar[1] - calendar[0]).days == 7 else DAILY
    idx = pd.MultiIndex.from_product([units, calendar])
    wide = frame.set_index(["unit_id", "date"]).reindex(idx)
    if wide[["y", "x"]].isna().any().any():
        raise DataError(f"{path}: panel has missing (unit, date) cells")
    n, t = len(units), len(calendar)
    return PanelDataset(
        tuple(units),
        tuple(calendar),
        wide["y"].to_numpy().reshape(n, t),
        wide["x"].to_numpy().reshape(n, t),
        frequency,
    )
