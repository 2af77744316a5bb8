"""Raw-data ingestion: charging sessions, the 15-minute demand grid,
temperature joining, and calendar context.

All timestamps are kept as naive local wall-clock datetimes. Inputs that
carry a UTC offset are converted to the configured zone first and the
offset is dropped, since weekday/holiday semantics are local.
"""

from __future__ import annotations

import csv
import io
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from zoneinfo import ZoneInfo

import numpy as np

from .errors import GridError, SchemaError

STEP = timedelta(minutes=15)
STEP_SECONDS = 900
TEMP_EDGE_REACH = timedelta(hours=2)


# ---------------------------------------------------------------------------
# timestamps
# ---------------------------------------------------------------------------

def parse_timestamp(text: str, timezone: str | None = None) -> datetime:
    """Parse RFC 3339 or ``YYYY-MM-DD HH:MM`` into a naive local datetime.

    Offset-aware inputs are converted to ``timezone`` (UTC if none is
    configured) before the offset is stripped.
    """
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ValueError(f"unparseable timestamp {text!r}") from exc
    if ts.tzinfo is not None:
        zone = ZoneInfo(timezone) if timezone else ZoneInfo("UTC")
        ts = ts.astimezone(zone).replace(tzinfo=None)
    return ts


def check_aligned(ts: datetime, what: str = "origin") -> None:
    if ts.minute % 15 or ts.second or ts.microsecond:
        raise GridError(f"{what} {ts.isoformat()} is not on a 15-minute boundary")


def n_intervals_between(origin: datetime, end: datetime) -> int:
    """Number of 15-minute intervals in [origin, end)."""
    check_aligned(origin)
    check_aligned(end, "end")
    span = end - origin
    total = span.days * 86400 + span.seconds
    if total < 0:
        raise GridError("end precedes origin")
    return total // STEP_SECONDS


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SessionRecord:
    """One raw charging event."""

    start: datetime
    charge_end: datetime
    disconnect: datetime
    energy_kwh: float

    def __post_init__(self):
        if not (self.start <= self.charge_end <= self.disconnect):
            raise ValueError("session times must satisfy start <= charge_end <= disconnect")
        if self.energy_kwh < 0:
            raise ValueError("energy_kwh must be non-negative")


@dataclass(frozen=True)
class HolidayCalendar:
    dates: frozenset[date]

    @classmethod
    def from_dates(cls, dates) -> "HolidayCalendar":
        return cls(frozenset(dates))

    def __contains__(self, d: date) -> bool:
        return d in self.dates


@dataclass
class IntervalSeries:
    """Regular 15-minute grid of demand counts plus aligned context columns.

    ``temperature`` and the calendar columns are filled progressively by
    join_temperature / attach_calendar; a bare grid is a valid skeleton.
    """

    origin: datetime
    demand: np.ndarray
    temperature: np.ndarray | None = None
    weekday: np.ndarray | None = None   # 0=Mon .. 6=Sun
    month: np.ndarray | None = None     # 1..12
    holiday: np.ndarray | None = None
    _len: int = field(init=False, repr=False)

    def __post_init__(self):
        check_aligned(self.origin)
        self.demand = np.asarray(self.demand)
        if self.demand.ndim != 1:
            raise GridError("demand must be one-dimensional")
        if not np.issubdtype(self.demand.dtype, np.integer):
            as_int = self.demand.astype(np.int64)
            if not np.array_equal(as_int, self.demand):
                raise GridError("demand values must be integers")
            self.demand = as_int
        if np.any(self.demand < 0):
            raise GridError("demand values must be non-negative")
        self._len = len(self.demand)
        for name in ("temperature", "weekday", "month", "holiday"):
            col = getattr(self, name)
            if col is not None and len(col) != self._len:
                raise GridError(f"{name} length {len(col)} != demand length {self._len}")

    def __len__(self) -> int:
        return self._len

    def timestamp(self, k: int) -> datetime:
        return self.origin + k * STEP

    def timestamps(self) -> list[datetime]:
        return [self.origin + k * STEP for k in range(self._len)]


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


@dataclass
class ParseResult:
    records: list[SessionRecord]
    errors: list[RowError]


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

SESSION_COLUMNS = ("start", "charge_end", "disconnect", "energy_kwh")


def parse_sessions(csv_source, timezone: str | None = None) -> ParseResult:
    """Parse a sessions CSV; malformed rows become RowErrors, not exceptions.

    ``csv_source`` may be a byte stream, text stream, or path.
    """
    stream, close = _open_text(csv_source)
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("sessions CSV is empty (missing header)")
        cols = [h.strip().lower() for h in header]
        try:
            idx = {name: cols.index(name) for name in SESSION_COLUMNS}
        except ValueError:
            missing = [n for n in SESSION_COLUMNS if n not in cols]
            raise SchemaError(f"sessions CSV missing columns: {', '.join(missing)}")

        records: list[SessionRecord] = []
        errors: list[RowError] = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                start = parse_timestamp(row[idx["start"]], timezone)
                charge_end = parse_timestamp(row[idx["charge_end"]], timezone)
                disconnect = parse_timestamp(row[idx["disconnect"]], timezone)
                energy = float(row[idx["energy_kwh"]])
                records.append(SessionRecord(start, charge_end, disconnect, energy))
            except (ValueError, IndexError) as exc:
                errors.append(RowError(line, str(exc)))
        return ParseResult(records, errors)
    finally:
        if close:
            stream.close()


def aggregate_demand(sessions, origin: datetime, n_intervals: int) -> np.ndarray:
    """Count, for each grid interval, the sessions whose charging span
    [start, charge_end) overlaps it. Sessions outside the grid contribute
    nothing; the span ends at charge completion, not disconnect.
    """
    check_aligned(origin)
    if n_intervals < 1:
        raise GridError("n_intervals must be >= 1")
    counts = np.zeros(n_intervals, dtype=np.int64)
    for s in sessions:
        ts = _seconds_from(origin, s.start)
        te = _seconds_from(origin, s.charge_end)
        if te <= ts:
            continue  # empty charging span
        first = max(0, ts // STEP_SECONDS)
        last = min(n_intervals, -((-te) // STEP_SECONDS))
        if first < last:
            counts[first:last] += 1
    return counts


def _seconds_from(origin: datetime, ts: datetime) -> int:
    td = ts - origin
    return td.days * 86400 + td.seconds


def join_temperature(grid: IntervalSeries, readings) -> IntervalSeries:
    """Attach a temperature value to every interval.

    Exact-timestamp readings are copied through; interior intervals are
    linearly interpolated between the bracketing readings; intervals before
    the first or after the last reading take that boundary reading if it is
    within 2 hours, otherwise the interval is reported as an error.
    """
    readings = list(readings)
    if not readings:
        raise GridError("temperature readings are empty")
    times = [t for t, _ in readings]
    for a, b in zip(times, times[1:]):
        if a >= b:
            raise SchemaError("temperature readings must be strictly increasing in time")

    xs = np.array([_epoch_seconds(t) for t in times], dtype=np.float64)
    ys = np.array([float(v) for _, v in readings], dtype=np.float64)
    grid_x = np.array(
        [_epoch_seconds(grid.origin + k * STEP) for k in range(len(grid))],
        dtype=np.float64,
    )
    values = np.interp(grid_x, xs, ys)

    reach = TEMP_EDGE_REACH.total_seconds()
    before = grid_x < xs[0]
    after = grid_x > xs[-1]
    bad_before = before & (xs[0] - grid_x > reach)
    bad_after = after & (grid_x - xs[-1] > reach)
    if bad_before.any() or bad_after.any():
        k = int(np.argmax(bad_before)) if bad_before.any() else int(np.argmax(bad_after))
        raise GridError(
            f"no temperature reading within reach of interval {grid.timestamp(k).isoformat()}"
        )
    return replace(grid, temperature=values)


def attach_calendar(grid: IntervalSeries, holidays: HolidayCalendar) -> IntervalSeries:
    """Derive weekday, month, and holiday flags from each interval start."""
    n = len(grid)
    weekday = np.empty(n, dtype=np.int8)
    month = np.empty(n, dtype=np.int8)
    holiday = np.zeros(n, dtype=bool)
    ts = grid.origin
    for k in range(n):
        weekday[k] = ts.weekday()
        month[k] = ts.month
        holiday[k] = ts.date() in holidays
        ts += STEP
    return replace(grid, weekday=weekday, month=month, holiday=holiday)


# ---------------------------------------------------------------------------
# file interfaces
# ---------------------------------------------------------------------------

def _open_text(source):
    """Return (text stream, needs_close). Accepts paths, bytes, and streams."""
    if isinstance(source, (str,)) or hasattr(source, "__fspath__"):
        return open(source, "r", newline="", encoding="utf-8"), True
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8")), False
    if hasattr(source, "read"):
        probe = source.read(0)
        if isinstance(probe, bytes):
            return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
        return source, False
    raise SchemaError(f"unsupported CSV source {type(source).__name__}")


def _epoch_seconds(ts: datetime) -> float:
    return (ts - datetime(1970, 1, 1)).total_seconds()


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def load_temperature_csv(source, timezone: str | None = None) -> list[tuple[datetime, float]]:
    stream, close = _open_text(source)
    try:
        reader = csv.reader(stream)
        header = [h.strip().lower() for h in next(reader)]
        if header[:2] != ["timestamp", "temp_c"]:
            raise SchemaError("temperature CSV must have columns timestamp,temp_c")
        out = []
        for row in reader:
            if not row or not row[0].strip():
                continue
            out.append((parse_timestamp(row[0], timezone), float(row[1])))
        return out
    finally:
        if close:
            stream.close()


def load_holidays_csv(source) -> HolidayCalendar:
    stream, close = _open_text(source)
    try:
        dates = set()
        for line in stream:
            text = line.strip()
            if not text or text.lower() == "date":
                continue
            dates.add(date.fromisoformat(text))
        return HolidayCalendar.from_dates(dates)
    finally:
        if close:
            stream.close()


def load_demand_grid(source, timezone: str | None = None) -> IntervalSeries:
    """Read a pre-aggregated demand grid (columns timestamp,demand) and
    validate that it forms a gapless 15-minute progression."""
    stream, close = _open_text(source)
    try:
        reader = csv.reader(stream)
        header = [h.strip().lower() for h in next(reader)]
        if header[:2] != ["timestamp", "demand"]:
            raise SchemaError("demand grid CSV must have columns timestamp,demand")
        times: list[datetime] = []
        demand: list[int] = []
        for row in reader:
            if not row or not row[0].strip():
                continue
            times.append(parse_timestamp(row[0], timezone))
            demand.append(int(row[1]))
        if not times:
            raise GridError("demand grid CSV has no rows")
        origin = times[0]
        for k, ts in enumerate(times):
            if ts != origin + k * STEP:
                raise GridError(
                    f"demand grid breaks the 15-minute progression at row {k + 2}"
                    f" ({ts.isoformat()})"
                )
        return IntervalSeries(origin=origin, demand=np.array(demand, dtype=np.int64))
    finally:
        if close:
            stream.close()


def write_demand_grid(path, series: IntervalSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "demand"])
        ts = series.origin
        for v in series.demand:
            w.writerow([ts.isoformat(sep=" "), int(v)])
            ts += STEP


def write_temperature_csv(path, timestamps, temps) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "temp_c"])
        for ts, v in zip(timestamps, temps):
            w.writerow([ts.isoformat(sep=" "), _fmt(v)])


def write_holidays_csv(path, calendar: HolidayCalendar) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for d in sorted(calendar.dates):
            fh.write(d.isoformat() + "\n")


DATASET_COLUMNS = ["timestamp", "demand", "temp_c", "weekday", "month", "holiday"]


def write_dataset(path, series: IntervalSeries) -> None:
    """Persist a fully assembled IntervalSeries (all context columns)."""
    for name in ("temperature", "weekday", "month", "holiday"):
        if getattr(series, name) is None:
            raise SchemaError(f"cannot write dataset: {name} column missing")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DATASET_COLUMNS)
        ts = series.origin
        for k in range(len(series)):
            w.writerow([
                ts.isoformat(sep=" "),
                int(series.demand[k]),
                _fmt(series.temperature[k]),
                int(series.weekday[k]),
                int(series.month[k]),
                int(series.holiday[k]),
            ])
            ts += STEP


def load_dataset(source, timezone: str | None = None) -> IntervalSeries:
    stream, close = _open_text(source)
    try:
        reader = csv.reader(stream)
        header = [h.strip().lower() for h in next(reader)]
        if header != DATASET_COLUMNS:
            raise SchemaError(
                f"dataset CSV must have columns {','.join(DATASET_COLUMNS)}"
            )
        times, demand, temp, weekday, month, holiday = [], [], [], [], [], []
        for row in reader:
            if not row or not row[0].strip():
                continue
            times.append(parse_timestamp(row[0], timezone))
            demand.append(int(row[1]))
            temp.append(float(row[2]))
            weekday.append(int(row[3]))
            month.append(int(row[4]))
            holiday.append(bool(int(row[5])))
        if not times:
            raise GridError("dataset CSV has no rows")
        origin = times[0]
        for k, ts in enumerate(times):
            if ts != origin + k * STEP:
                raise GridError(f"dataset breaks the 15-minute progression at row {k + 2}")
        return IntervalSeries(
            origin=origin,
            demand=np.array(demand, dtype=np.int64),
            temperature=np.array(temp, dtype=np.float64),
            weekday=np.array(weekday, dtype=np.int8),
            month=np.array(month, dtype=np.int8),
            holiday=np.array(holiday, dtype=bool),
        )
    finally:
        if close:
            stream.close()
