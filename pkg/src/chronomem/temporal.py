"""Time points, intervals with open-ended bounds, and the interval algebra.

All times are naive (dataset-local). A bound stored at day or minute
granularity covers its whole unit: an end bound of ``2020-02-07`` reaches
``2020-02-07T23:59:59``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .errors import UnparseableTimestamp

__all__ = [
    "Granularity",
    "Recurrence",
    "Containment",
    "TimePoint",
    "TimeInterval",
    "parse_timestamp",
    "parse_bound",
    "render_bound",
    "find_timestamps",
    "same_instant",
    "overlaps",
    "gap_days",
    "containment",
]

SECONDS_PER_DAY = 86400


class Granularity(enum.IntEnum):
    """Precision of a time point; larger values are coarser."""

    SECOND = 0
    MINUTE = 1
    DAY = 2

    @property
    def seconds(self) -> int:
        return {Granularity.SECOND: 1, Granularity.MINUTE: 60, Granularity.DAY: SECONDS_PER_DAY}[self]

    @property
    def label(self) -> str:
        return self.name.lower()


class Recurrence(str, enum.Enum):
    NONE = "none"
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"
    YEARLY = "yearly"
    HABITUAL = "habitual"


class Containment(enum.Enum):
    FULL = "full"
    PARTIAL = "partial"
    NONE = "none"


_RENDER = {
    Granularity.DAY: "%Y-%m-%d",
    Granularity.MINUTE: "%Y-%m-%dT%H:%M",
    Granularity.SECOND: "%Y-%m-%dT%H:%M:%S",
}


def _truncate_dt(value: datetime, gran: Granularity) -> datetime:
    if gran is Granularity.DAY:
        return value.replace(hour=0, minute=0, second=0, microsecond=0)
    if gran is Granularity.MINUTE:
        return value.replace(second=0, microsecond=0)
    return value.replace(microsecond=0)


@dataclass(frozen=True)
class TimePoint:
    value: datetime
    granularity: Granularity = Granularity.SECOND

    def __post_init__(self):
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        object.__setattr__(self, "value", _truncate_dt(self.value, self.granularity))

    @classmethod
    def of(cls, *args: int) -> "TimePoint":
        """``TimePoint.of(2020, 2, 21)`` is a day; with h, m it is a minute; with h, m, s a second."""
        gran = {3: Granularity.DAY, 5: Granularity.MINUTE, 6: Granularity.SECOND}.get(len(args))
        if gran is None:
            raise TypeError("TimePoint.of takes 3, 5 or 6 integers")
        return cls(datetime(*args), gran)

    def render(self) -> str:
        return self.value.strftime(_RENDER[self.granularity])

    def render_long(self) -> str:
        """Human form, e.g. ``February 21, 2020`` or ``8:35 pm, February 21, 2020``."""
        date = f"{self.value.strftime('%B')} {self.value.day}, {self.value.year}"
        if self.granularity is Granularity.DAY:
            return date
        hour = self.value.hour % 12 or 12
        ampm = "am" if self.value.hour < 12 else "pm"
        if self.granularity is Granularity.MINUTE:
            return f"{hour}:{self.value.minute:02d} {ampm}, {date}"
        return f"{hour:02d}:{self.value.minute:02d}:{self.value.second:02d} {ampm}, {date}"

    def truncate(self, gran: Granularity) -> "TimePoint":
        return TimePoint(self.value, max(gran, self.granularity))

    def shift(self, delta: timedelta) -> "TimePoint":
        return TimePoint(self.value + delta, self.granularity)

    @property
    def first_second(self) -> int:
        """Seconds since 0001-01-01 of the first instant this point covers."""
        v = self.value
        return v.toordinal() * SECONDS_PER_DAY + v.hour * 3600 + v.minute * 60 + v.second

    @property
    def last_second(self) -> int:
        return self.first_second + self.granularity.seconds - 1

    def __str__(self) -> str:
        return self.render()


def same_instant(a: TimePoint, b: TimePoint) -> bool:
    """Unit-aware equality: compare after truncating both to the coarser granularity."""
    gran = max(a.granularity, b.granularity)
    return a.truncate(gran).value == b.truncate(gran).value


# --- parsing -----------------------------------------------------------------

_MONTHS = {
    name: i
    for i, names in enumerate(
        [
            ("january", "jan"),
            ("february", "feb"),
            ("march", "mar"),
            ("april", "apr"),
            ("may",),
            ("june", "jun"),
            ("july", "jul"),
            ("august", "aug"),
            ("september", "sep", "sept"),
            ("october", "oct"),
            ("november", "nov"),
            ("december", "dec"),
        ],
        start=1,
    )
    for name in names
}

_MONTH_RE = "(?:" + "|".join(sorted(_MONTHS, key=len, reverse=True)) + r")\.?"
_LONG_DATE = rf"(?P<month>{_MONTH_RE})\s+(?P<day>\d{{1,2}})(?:st|nd|rd|th)?,?\s+(?P<year>\d{{4}})"
_CLOCK = r"(?P<hour>\d{1,2}):(?P<minute>\d{2})(?::(?P<second>\d{2}))?\s*(?P<ampm>[ap]\.?\s?m\.?)?"

_GRAMMARS = [
    # 8:35 pm, February 21, 2020 / 02:30:00 pm, March 22, 2024
    re.compile(rf"{_CLOCK},?\s+(?:on\s+)?{_LONG_DATE}", re.IGNORECASE),
    # April 16, 2020, at 06:22
    re.compile(rf"{_LONG_DATE},?\s+at\s+{_CLOCK}", re.IGNORECASE),
    re.compile(
        r"(?P<year>\d{4})-(?P<mon>\d{2})-(?P<day>\d{2})[T ](?P<hour>\d{2}):(?P<minute>\d{2})"
        r"(?::(?P<second>\d{2})(?:\.\d+)?)?",
    ),
    re.compile(r"(?P<year>\d{4})-(?P<mon>\d{2})-(?P<day>\d{2})"),
    re.compile(_LONG_DATE, re.IGNORECASE),
]


def _point_from_match(m: re.Match) -> TimePoint:
    g = m.groupdict()
    if g.get("month"):
        month = _MONTHS[g["month"].lower().rstrip(".")]
    else:
        month = int(g["mon"])
    year, day = int(g["year"]), int(g["day"])
    if g.get("hour") is None:
        return TimePoint(datetime(year, month, day), Granularity.DAY)
    hour, minute = int(g["hour"]), int(g["minute"])
    ampm = g.get("ampm")
    if ampm:
        if not 1 <= hour <= 12:
            raise ValueError("12-hour clock out of range")
        pm = ampm.lower().startswith("p")
        hour = (hour % 12) + (12 if pm else 0)
    if g.get("second") is None:
        return TimePoint(datetime(year, month, day, hour, minute), Granularity.MINUTE)
    return TimePoint(datetime(year, month, day, hour, minute, int(g["second"])), Granularity.SECOND)


def parse_timestamp(text: str) -> TimePoint:
    """Parse one of the accepted timestamp grammars.

    Accepts ISO datetimes (``2020-02-21T20:35:00``, seconds optional), ISO
    dates, long dates (``September 24, 2025``) and clocked long dates
    (``8:35 pm, February 21, 2020``). The granularity of the result is the
    most precise field present. ``unknown`` is not a point; see
    :func:`parse_bound`.
    """
    if not isinstance(text, str):
        raise UnparseableTimestamp(repr(text))
    s = " ".join(text.strip().split())
    for grammar in _GRAMMARS:
        m = grammar.fullmatch(s)
        if m:
            try:
                return _point_from_match(m)
            except ValueError:
                break
    raise UnparseableTimestamp(text)


def parse_bound(text: str) -> TimePoint | None:
    """Like :func:`parse_timestamp` but maps ``unknown`` to ``None``."""
    if isinstance(text, str) and text.strip().lower() == "unknown":
        return None
    return parse_timestamp(text)


def render_bound(bound: TimePoint | None) -> str:
    return "unknown" if bound is None else bound.render()


def find_timestamps(text: str) -> list[TimePoint]:
    """All timestamp mentions in free text, in order of appearance."""
    taken: list[tuple[int, int, TimePoint]] = []
    for grammar in _GRAMMARS:
        for m in grammar.finditer(text):
            lo, hi = m.span()
            if any(lo < t_hi and t_lo < hi for t_lo, t_hi, _ in taken):
                continue
            # refuse matches glued to surrounding digits, e.g. "12020-01-01"
            if (lo > 0 and text[lo - 1].isdigit()) or (hi < len(text) and text[hi].isdigit()):
                continue
            try:
                taken.append((lo, hi, _point_from_match(m)))
            except ValueError:
                continue
    return [p for _, _, p in sorted(taken, key=lambda t: t[0])]


# --- intervals ---------------------------------------------------------------


@dataclass(frozen=True)
class TimeInterval:
    """A closed span whose bounds may be unknown (``None``).

    An unknown start extends to the distant past and an unknown end to the
    distant future. A single instant is ``start == end``.
    """

    start: TimePoint | None = None
    end: TimePoint | None = None
    recurring: Recurrence = field(default=Recurrence.NONE)

    def __post_init__(self):
        object.__setattr__(self, "recurring", Recurrence(self.recurring))
        if self.start is not None and self.end is not None and self.start.value > self.end.value:
            raise ValueError(f"interval start {self.start} is after end {self.end}")

    @classmethod
    def point(cls, p: TimePoint) -> "TimeInterval":
        return cls(p, p)

    @classmethod
    def unbounded(cls) -> "TimeInterval":
        return cls(None, None)

    @classmethod
    def full_days(cls, first: datetime, last: datetime) -> "TimeInterval":
        """``[first 00:00:00, last 23:59:59]`` at second granularity."""
        lo = datetime(first.year, first.month, first.day)
        hi = datetime(last.year, last.month, last.day, 23, 59, 59)
        return cls(TimePoint(lo), TimePoint(hi))

    @property
    def lo(self) -> float:
        return -math.inf if self.start is None else float(self.start.first_second)

    @property
    def hi(self) -> float:
        return math.inf if self.end is None else float(self.end.last_second)

    @property
    def is_bounded(self) -> bool:
        return self.start is not None and self.end is not None

    @property
    def is_unbounded(self) -> bool:
        return self.start is None and self.end is None

    def shift(self, delta: timedelta) -> "TimeInterval":
        return TimeInterval(
            None if self.start is None else self.start.shift(delta),
            None if self.end is None else self.end.shift(delta),
            self.recurring,
        )

    def to_dict(self) -> dict:
        d = {"start": render_bound(self.start), "end": render_bound(self.end)}
        if self.recurring is not Recurrence.NONE:
            d["recurring"] = self.recurring.value
        return d

    def __str__(self) -> str:
        return f"[{render_bound(self.start)}, {render_bound(self.end)}]"


def overlaps(a: TimeInterval, b: TimeInterval) -> bool:
    return a.lo <= b.hi and b.lo <= a.hi


def gap_days(a: TimeInterval, b: TimeInterval) -> float:
    """Smallest separation between the two spans in fractional days; 0 if they overlap."""
    if overlaps(a, b):
        return 0.0
    if a.hi < b.lo:
        return (b.lo - a.hi) / SECONDS_PER_DAY
    return (a.lo - b.hi) / SECONDS_PER_DAY


def containment(event: TimeInterval, window: TimeInterval) -> Containment:
    """How much of ``event`` lies inside ``window``.

    Recurring events with an open bound are scored PARTIAL against any
    window that has at least one known bound, whatever their overlap.
    """
    if (
        event.recurring is not Recurrence.NONE
        and not event.is_bounded
        and not window.is_unbounded
    ):
        return Containment.PARTIAL
    if window.lo <= event.lo and event.hi <= window.hi:
        return Containment.FULL
    if overlaps(event, window):
        return Containment.PARTIAL
    return Containment.NONE
