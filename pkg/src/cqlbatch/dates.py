"""Day-resolution calendar arithmetic shared by the compiler, engine and oracle.

Dates are stored as integer days since 1970-01-01 ("epoch days").  All
intervals are closed on both ends.  Whole-year ages use the has-the-birthday-
occurred rule: the age increments on the (month, day) anniversary, with a
Feb 29 birthday treated as not yet reached on Feb 28 of a common year.
"""

from __future__ import annotations

import datetime as _dt

import numpy as np

_EPOCH = _dt.date(1970, 1, 1)


def from_iso(text: str) -> int:
    """Parse YYYY-MM-DD into epoch days."""
    return (_dt.date.fromisoformat(text) - _EPOCH).days


def to_iso(day: int) -> str:
    return (_EPOCH + _dt.timedelta(days=int(day))).isoformat()


def to_date(day: int) -> _dt.date:
    return _EPOCH + _dt.timedelta(days=int(day))


def from_date(d: _dt.date) -> int:
    return (d - _EPOCH).days


def age_in_years_at(birth_day: int, as_of_day: int) -> int:
    """Whole-year age on as_of_day for a birth date, both in epoch days."""
    b = to_date(birth_day)
    a = to_date(as_of_day)
    return a.year - b.year - (1 if (a.month, a.day) < (b.month, b.day) else 0)


def shift_years(day: int, years: int) -> int:
    """Move a date by whole calendar years; Feb 29 falls back to Feb 28."""
    d = to_date(day)
    try:
        return from_date(d.replace(year=d.year + years))
    except ValueError:
        return from_date(d.replace(year=d.year + years, day=28))


def birth_range_for_age(lo: int, hi: int, as_of_day: int) -> tuple[int, int]:
    """Inclusive birth-date range whose whole-year age at as_of is in [lo, hi].

    The returned bounds are exact for the (month, day) anniversary rule above.
    """
    # Oldest admissible birth: age would exceed hi one day earlier.
    earliest = shift_years(as_of_day, -(hi + 1)) + 1
    latest = shift_years(as_of_day, -lo)
    return earliest, latest


def ages_at(birth_days: np.ndarray, as_of_day: int) -> np.ndarray:
    """Vectorized whole-year ages for an int64 array of birth epoch days."""
    births = birth_days.astype("datetime64[D]")
    as_of = np.datetime64(to_iso(as_of_day), "D")
    b_year = births.astype("datetime64[Y]")
    a_year = as_of.astype("datetime64[Y]")
    years = (a_year - b_year).astype(np.int64)
    # (month, day) anniversary comparison, leap-safe.
    b_month = births.astype("datetime64[M]")
    a_month = as_of.astype("datetime64[M]")
    b_m = (b_month - b_year).astype(np.int64)
    a_m = (a_month - a_year).astype(np.int64)
    b_d = (births - b_month).astype(np.int64)
    a_d = (as_of - a_month).astype(np.int64)
    not_yet = (a_m < b_m) | ((a_m == b_m) & (a_d < b_d))
    return years - not_yet.astype(np.int64)
