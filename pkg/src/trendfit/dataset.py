"""Loading weekly search-frequency exports and preparing them for fitting."""

from __future__ import annotations

import csv
import datetime as dt
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .onset import OnsetConfig, detect_onset, shift_to_onset

WORLDWIDE = "WW"
DEFAULT_SCHEMA = {"date": "date", "service": "service", "region": "region", "value": "value"}
VALUE_CEILING = 100.0


class DataError(ValueError):
    """Malformed input data."""


class CSVParseError(DataError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class MissingColumnError(DataError):
    def __init__(self, path, column: str):
        super().__init__(f"{path}: missing required column {column!r}")
        self.column = column


class NoOnsetError(DataError):
    pass


class GapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RawSeries:
    service: str
    region: str
    start_date: dt.date
    values: np.ndarray
    filled: tuple[int, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 1:
            raise DataError("a series needs at least one value")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise DataError(f"{self.service}/{self.region}: values must be finite and >= 0")
        if np.any(values > VALUE_CEILING + 1e-9):
            warnings.warn(
                f"{self.service}/{self.region}: values exceed {VALUE_CEILING:g}", stacklevel=3
            )
        object.__setattr__(self, "values", values)

    @property
    def key(self) -> tuple[str, str]:
        return (self.service, self.region)

    def date_at(self, index: int) -> dt.date:
        return self.start_date + dt.timedelta(weeks=int(index))


@dataclass(frozen=True)
class PreparedSeries:
    """Onset-shifted counts on weekly bins ``(edges[i], edges[i+1]]``.

    ``offset`` is the number of unobserved weeks between the start of the
    process and the first bin edge (non-zero for launches that predate the
    observation window).
    """

    service: str
    region: str
    counts: np.ndarray
    bin_edges: np.ndarray
    offset: int = 0
    onset_index: int = 0
    onset_date: Optional[dt.date] = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        edges = np.asarray(self.bin_edges, dtype=float)
        if counts.ndim != 1 or len(edges) != len(counts) + 1:
            raise DataError("need exactly one more bin edge than counts")
        if np.any(np.diff(edges) <= 0):
            raise DataError("bin edges must be strictly increasing")
        if edges[0] < 0:
            raise DataError("first bin edge must be >= 0")
        if np.any(counts < 0) or not counts.sum() > 0:
            raise DataError("counts must be non-negative with a positive total")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bin_edges", edges)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def m(self) -> int:
        return len(self.counts)

    @property
    def key(self) -> tuple[str, str]:
        return (self.service, self.region)

    def scaled(self, factor: float) -> "PreparedSeries":
        return PreparedSeries(
            self.service, self.region, self.counts * factor, self.bin_edges,
            self.offset, self.onset_index, self.onset_date,
        )

    def to_json(self) -> str:
        doc = {
            "service": self.service,
            "region": self.region,
            "T": self.offset,
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "onset_index": self.onset_index,
            "onset_date": self.onset_date.isoformat() if self.onset_date else None,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PreparedSeries":
        doc = json.loads(text)
        onset_date = doc.get("onset_date")
        return cls(
            service=doc["service"],
            region=doc["region"],
            counts=np.array(doc["counts"], dtype=float),
            bin_edges=np.array(doc["bin_edges"], dtype=float),
            offset=int(doc["T"]),
            onset_index=int(doc.get("onset_index", 0)),
            onset_date=dt.date.fromisoformat(onset_date) if onset_date else None,
        )


def _parse_date(text: str, path, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise CSVParseError(path, line, f"invalid ISO date {text!r}") from None


def load_csv(path, schema: Optional[Mapping[str, str]] = None) -> list[RawSeries]:
    """Read a long-format CSV into one :class:`RawSeries` per (service, region).

    ``schema`` maps the logical columns ``date, service, region, value`` to the
    header names used in the file.  Weeks missing between the first and last
    date of a series are filled with zeros; a :class:`GapWarning` is emitted
    and the filled positions are recorded on the series.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return []
        header = [h.strip() for h in header]
        cols = {}
        for logical, name in schema.items():
            if name not in header:
                raise MissingColumnError(path, name)
            cols[logical] = header.index(name)

        rows: dict[tuple[str, str], dict[dt.date, float]] = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise CSVParseError(path, line, f"expected {len(header)} fields, got {len(row)}")
            date = _parse_date(row[cols["date"]], path, line)
            key = (row[cols["service"]].strip(), row[cols["region"]].strip())
            raw_value = row[cols["value"]].strip()
            try:
                # Google Trends marks tiny volumes as "<1"
                value = 0.0 if raw_value.startswith("<") else float(raw_value)
            except ValueError:
                raise CSVParseError(path, line, f"invalid value {raw_value!r}") from None
            bucket = rows.setdefault(key, {})
            if date in bucket:
                raise CSVParseError(path, line, f"duplicate row for {key[0]}/{key[1]} on {date}")
            bucket[date] = value

    out = []
    for (service, region), bucket in sorted(rows.items()):
        dates = sorted(bucket)
        start = dates[0]
        offsets = []
        for d in dates:
            days = (d - start).days
            if days % 7:
                raise DataError(f"{path}: {service}/{region}: {d} is not on the weekly grid of {start}")
            offsets.append(days // 7)
        values = np.zeros(offsets[-1] + 1)
        values[offsets] = [bucket[d] for d in dates]
        filled = tuple(sorted(set(range(len(values))) - set(offsets)))
        if filled:
            warnings.warn(
                f"{service}/{region}: {len(filled)} missing week(s) zero-filled", GapWarning, stacklevel=2
            )
        out.append(RawSeries(service, region, start, values, filled))
    return out


def average_spellings(series_list: Sequence[RawSeries], canonical: Optional[str] = None) -> RawSeries:
    """Pointwise mean over spelling variants of one query in one region."""
    if not series_list:
        raise DataError("no series to average")
    first = series_list[0]
    for s in series_list[1:]:
        if s.region != first.region:
            raise DataError(f"region mismatch: {s.region} vs {first.region}")
        if s.start_date != first.start_date or len(s.values) != len(first.values):
            raise DataError(f"date range mismatch between {first.service} and {s.service}")
    values = np.mean([s.values for s in series_list], axis=0)
    filled = tuple(sorted(set().union(*(s.filled for s in series_list))))
    return RawSeries(canonical or first.service, first.region, first.start_date, values, filled)


def apply_aliases(series: Iterable[RawSeries], aliases: Mapping[str, str]) -> list[RawSeries]:
    """Group spelling variants via ``aliases`` (variant -> canonical) and average them."""
    groups: dict[tuple[str, str], list[RawSeries]] = {}
    for s in series:
        name = aliases.get(s.service, s.service)
        groups.setdefault((name, s.region), []).append(s)
    return [average_spellings(g, name) for (name, _), g in sorted(groups.items())]


def weeks_between(earlier: dt.date, later: dt.date) -> int:
    return (later - earlier).days // 7


def prepare(
    raw: RawSeries,
    onset_cfg: Optional[OnsetConfig] = None,
    launch_date: Optional[dt.date] = None,
) -> PreparedSeries:
    """Trim ``raw`` to its active part and lay it on weekly bins.

    Services launched before the observation window keep all their samples
    and are offset by the number of weeks between launch and window start.
    Everything else is cut at the CUSUM onset.

    Raises:
        NoOnsetError: if no onset is detected or nothing remains after it.
    """
    if launch_date is not None and launch_date < raw.start_date:
        onset, offset = 0, weeks_between(launch_date, raw.start_date)
    else:
        report = detect_onset(raw.values, onset_cfg)
        if not report.triggered:
            raise NoOnsetError(f"{raw.service}/{raw.region}: no onset detected")
        onset, offset = report.onset_index, 0
    counts, offset = shift_to_onset(raw.values, onset, offset)
    if not counts.sum() > 0:
        raise NoOnsetError(f"{raw.service}/{raw.region}: series is all zero after onset")
    edges = offset + np.arange(len(counts) + 1, dtype=float)
    return PreparedSeries(raw.service, raw.region, counts, edges, offset, onset, raw.date_at(onset))


def save_prepared(series: PreparedSeries, path) -> None:
    Path(path).write_text(series.to_json(), encoding="utf-8")


def load_prepared(path) -> PreparedSeries:
    return PreparedSeries.from_json(Path(path).read_text(encoding="utf-8"))
