"""Calendar arithmetic against the standard library as oracle."""

import datetime

import numpy as np
from hypothesis import given, strategies as st

from cqlbatch.dates import (
    age_in_years_at,
    ages_at,
    birth_range_for_age,
    from_date,
    from_iso,
    shift_years,
    to_date,
    to_iso,
)

EPOCH = datetime.date(1970, 1, 1)

days = st.integers(min_value=from_iso("1900-01-01"), max_value=from_iso("2100-12-31"))


def test_epoch_is_day_zero():
    assert from_iso("1970-01-01") == 0
    assert to_iso(0) == "1970-01-01"


def test_known_days():
    assert from_iso("2021-01-01") == 18628
    assert from_iso("2022-12-31") == 19357


@given(days)
def test_iso_round_trip(day):
    assert from_iso(to_iso(day)) == day


@given(days)
def test_date_bridge_matches_stdlib(day):
    d = to_date(day)
    assert (d - EPOCH).days == day
    assert from_date(d) == day
    assert to_iso(day) == d.isoformat()


def _age_oracle(birth: datetime.date, as_of: datetime.date) -> int:
    age = as_of.year - birth.year
    if (as_of.month, as_of.day) < (birth.month, birth.day):
        age -= 1
    return age


@given(days, days)
def test_age_matches_calendar_oracle(birth_day, as_of_day):
    expect = _age_oracle(to_date(birth_day), to_date(as_of_day))
    assert age_in_years_at(birth_day, as_of_day) == expect


def test_age_world_boundary():
    # turns 52 mid-year, still 52 at the period end
    assert age_in_years_at(from_iso("1970-06-01"), from_iso("2022-12-31")) == 52
    # one day short of the birthday
    assert age_in_years_at(from_iso("1970-06-01"), from_iso("2022-05-31")) == 51


def test_leap_day_birth():
    birth = from_iso("1972-02-29")
    assert age_in_years_at(birth, from_iso("2023-02-28")) == 50
    assert age_in_years_at(birth, from_iso("2023-03-01")) == 51


@given(days, st.integers(min_value=-120, max_value=120))
def test_shift_years_stdlib(day, years):
    d = to_date(day)
    try:
        expect = d.replace(year=d.year + years)
    except ValueError:  # Feb 29 in a non-leap target year
        expect = d.replace(year=d.year + years, day=28)
    assert to_date(shift_years(day, years)) == expect


@given(days)
def test_ages_at_matches_scalar(as_of_day):
    births = np.array([as_of_day - k for k in (0, 1, 365, 366, 10000, 30000)],
                      dtype=np.int64)
    got = ages_at(births, as_of_day)
    assert got.tolist() == [age_in_years_at(int(b), as_of_day) for b in births]


@given(st.integers(min_value=0, max_value=90),
       st.integers(min_value=0, max_value=30), days)
def test_birth_range_is_exact(lo, extra, as_of_day):
    hi = lo + extra
    b_lo, b_hi = birth_range_for_age(lo, hi, as_of_day)
    assert b_lo <= b_hi
    # every day inside maps into [lo, hi], both ends are tight
    for b in (b_lo, b_hi):
        assert lo <= age_in_years_at(b, as_of_day) <= hi
    assert not lo <= age_in_years_at(b_lo - 1, as_of_day) <= hi
    assert not lo <= age_in_years_at(b_hi + 1, as_of_day) <= hi
