from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from chronomem.errors import UnparseableTimestamp
from chronomem.temporal import (
    Containment,
    Granularity,
    Recurrence,
    TimeInterval,
    TimePoint,
    containment,
    find_timestamps,
    gap_days,
    overlaps,
    parse_bound,
    parse_timestamp,
    same_instant,
)


def day(y, m, d):
    return TimePoint.of(y, m, d)


def sec(*args):
    return TimePoint.of(*args)


def days(a, b):
    return TimeInterval(day(*a), day(*b))


# --- parsing ------------------------------------------------------------------


def test_clocked_long_form():
    p = parse_timestamp("8:35 pm, February 21, 2020")
    assert p.value == datetime(2020, 2, 21, 20, 35, 0)
    # no seconds field, so the finest unit present is the minute
    assert p.granularity is Granularity.MINUTE
    assert p.render() == "2020-02-21T20:35"


def test_iso_and_long_date_are_same_day():
    a = parse_timestamp("2025-09-24")
    b = parse_timestamp("September 24, 2025")
    assert a == b
    assert a.render() == "2025-09-24"


@pytest.mark.parametrize("text", ["", "   ", "yesterday", "2020-13-01", "February 30, 2020", "25:00, May 1, 2020"])
def test_unparseable(text):
    with pytest.raises(UnparseableTimestamp):
        parse_timestamp(text)


@pytest.mark.parametrize(
    "text, expected, gran",
    [
        ("2020-04-16T06:22:00", datetime(2020, 4, 16, 6, 22), Granularity.SECOND),
        ("2020-04-16T06:22", datetime(2020, 4, 16, 6, 22), Granularity.MINUTE),
        ("2020-04-16 06:22:05", datetime(2020, 4, 16, 6, 22, 5), Granularity.SECOND),
        ("02:30:00 pm, March 22, 2024", datetime(2024, 3, 22, 14, 30), Granularity.SECOND),
        ("12:05 am, January 1, 2021", datetime(2021, 1, 1, 0, 5), Granularity.MINUTE),
        ("Sept 3, 2021", datetime(2021, 9, 3), Granularity.DAY),
        ("March 5th, 2019", datetime(2019, 3, 5), Granularity.DAY),
    ],
)
def test_grammars(text, expected, gran):
    p = parse_timestamp(text)
    assert p.value == expected
    assert p.granularity is gran


def test_parse_bound_unknown():
    assert parse_bound("unknown") is None
    assert parse_bound("Unknown ") is None
    assert parse_bound("2020-01-01") == day(2020, 1, 1)


def test_find_timestamps_in_question():
    q = "What did Debra do between April 1, 2020, and April 9, 2020?"
    assert find_timestamps(q) == [day(2020, 4, 1), day(2020, 4, 9)]
    assert find_timestamps("no dates here") == []


def test_render_long_round_trip():
    for p in (day(2020, 2, 21), sec(2020, 2, 21, 20, 35), sec(2024, 3, 22, 14, 30, 0)):
        assert parse_timestamp(p.render_long()) == p
        assert parse_timestamp(p.render()) == p


# --- comparison ---------------------------------------------------------------

points = st.builds(
    lambda dt, g: TimePoint(dt, g),
    st.datetimes(min_value=datetime(1990, 1, 1), max_value=datetime(2040, 12, 31)),
    st.sampled_from(list(Granularity)),
)


@given(points)
def test_render_parse_identity(p):
    assert parse_timestamp(p.render()) == p


@given(points, points, points)
def test_same_instant_is_reflexive_and_symmetric(a, b, c):
    assert same_instant(a, a)
    assert same_instant(a, b) == same_instant(b, a)


@given(st.datetimes(min_value=datetime(1990, 1, 1), max_value=datetime(2040, 12, 31)))
def test_same_instant_transitive_over_renderings(dt):
    # every rendering of one instant names the same day
    forms = [TimePoint(dt, g) for g in Granularity]
    texts = [f.render() for f in forms] + [f.render_long() for f in forms]
    parsed = [parse_timestamp(t) for t in texts]
    assert all(same_instant(a, b) for a in parsed for b in parsed)


def test_same_instant_coarser_granularity():
    assert same_instant(day(2020, 2, 21), sec(2020, 2, 21, 20, 35))
    assert not same_instant(day(2020, 2, 22), sec(2020, 2, 21, 20, 35))
    assert not same_instant(sec(2020, 2, 21, 20, 35, 1), sec(2020, 2, 21, 20, 35, 2))


# --- intervals ----------------------------------------------------------------


def test_interval_rejects_reversed_bounds():
    with pytest.raises(ValueError):
        TimeInterval(day(2020, 2, 2), day(2020, 2, 1))


def test_overlap_examples():
    assert overlaps(days((2020, 2, 1), (2020, 2, 7)), days((2020, 2, 7), (2020, 2, 10)))
    assert overlaps(TimeInterval(None, day(2020, 3, 9)), days((2020, 1, 1), (2020, 1, 2)))
    assert not overlaps(days((2020, 2, 1), (2020, 2, 7)), days((2020, 2, 10), (2020, 2, 12)))


def test_gap_examples():
    a = TimeInterval(sec(2020, 2, 1, 0, 0, 0), sec(2020, 2, 7, 23, 59, 59))
    b = TimeInterval.point(sec(2020, 2, 10, 23, 59, 59))
    assert gap_days(a, b) == pytest.approx(3.0, abs=1 / 86400)
    assert gap_days(a, a) == 0.0
    assert gap_days(a, days((2020, 2, 5), (2020, 3, 1))) == 0.0


def test_day_bound_covers_whole_day():
    # a day-granular end reaches 23:59:59, so a same-day instant overlaps
    w = days((2020, 4, 1), (2020, 4, 9))
    assert overlaps(w, TimeInterval.point(sec(2020, 4, 9, 22, 15, 0)))
    assert not overlaps(w, TimeInterval.point(sec(2020, 4, 10, 0, 0, 0)))


def test_containment_examples():
    w = days((2020, 4, 1), (2020, 4, 9))
    assert containment(days((2020, 4, 2), (2020, 4, 3)), w) is Containment.FULL
    assert containment(days((2020, 4, 8), (2020, 4, 12)), w) is Containment.PARTIAL
    assert containment(days((2020, 5, 1), (2020, 5, 2)), w) is Containment.NONE
    assert containment(TimeInterval(None, day(2020, 4, 3)), w) is Containment.PARTIAL


def test_recurring_open_event_is_partial():
    w = days((2020, 4, 1), (2020, 4, 9))
    weekly = TimeInterval(None, None, Recurrence.WEEKLY)
    assert containment(weekly, w) is Containment.PARTIAL
    # even when the open span would not overlap
    past = TimeInterval(None, day(2019, 1, 1), Recurrence.YEARLY)
    assert containment(past, w) is Containment.PARTIAL
    assert containment(TimeInterval(None, day(2019, 1, 1)), w) is Containment.NONE


@st.composite
def intervals(draw, allow_unknown=True, recurring=False):
    base = datetime(2020, 1, 1)
    a = draw(st.integers(0, 400 * 86400))
    b = draw(st.integers(0, 60 * 86400))
    start = TimePoint(base + timedelta(seconds=a))
    end = TimePoint(base + timedelta(seconds=a + b))
    if allow_unknown:
        if draw(st.booleans()) and draw(st.booleans()):
            start = None
        if draw(st.booleans()) and draw(st.booleans()):
            end = None
    rec = draw(st.sampled_from(list(Recurrence))) if recurring else Recurrence.NONE
    return TimeInterval(start, end, rec)


@given(intervals(), intervals())
def test_gap_symmetric_and_zero_iff_overlap(a, b):
    assert gap_days(a, b) == gap_days(b, a)
    assert (gap_days(a, b) == 0.0) == overlaps(a, b)
    assert gap_days(a, b) >= 0.0


@given(intervals(allow_unknown=False), intervals(allow_unknown=False))
def test_gap_matches_endpoint_scan(a, b):
    # brute force: the gap is the smallest distance between any endpoints, or 0 on overlap
    ends_a = [a.start.value, a.end.value]
    ends_b = [b.start.value, b.end.value]
    if a.start.value <= b.end.value and b.start.value <= a.end.value:
        expected = 0.0
    else:
        expected = min(abs((x - y).total_seconds()) for x in ends_a for y in ends_b) / 86400
    assert gap_days(a, b) == pytest.approx(expected, abs=1e-12)


@given(intervals(recurring=True), intervals())
def test_containment_consistent_with_overlap(e, w):
    c = containment(e, w)
    if c is Containment.FULL:
        assert overlaps(e, w)
    if e.recurring is Recurrence.NONE or e.is_bounded:
        assert (c is Containment.NONE) == (not overlaps(e, w))


@given(intervals(allow_unknown=False))
@settings(max_examples=50)
def test_shift_preserves_length(iv):
    moved = iv.shift(timedelta(days=17))
    assert moved.hi - moved.lo == iv.hi - iv.lo
    assert gap_days(iv, moved) == pytest.approx(max(0.0, 17 - (iv.hi - iv.lo) / 86400), abs=1e-9)
