"""Vectorized operator kernels.

Everything here is a pure function from arrays to arrays; counters live
with the caller.  Kernels are shared by all slots, which is safe because
nothing in this module mutates its inputs.
"""

from __future__ import annotations

import numpy as np

from .. import dates
from ..catalog import CompiledValueSet
from ..planner import AndPred, CmpOp, CodeInValueSet, FieldCmp, OrPred, Pred
from ..storage.colfile import ChunkInfo


# -- predicate evaluation ---------------------------------------------------

def member_mask(codes: np.ndarray, members: np.ndarray) -> np.ndarray:
    """Membership of each code in a sorted member array.

    Binary search beats np.isin here: member sets are small and presorted,
    and isin falls back to sorting the probe side once it grows.
    """
    idx = np.searchsorted(members, codes)
    hit = idx < len(members)
    hit[hit] = members[idx[hit]] == codes[hit]
    return hit


def pred_mask(pred: Pred, cols: dict[str, np.ndarray], bundle) -> np.ndarray:
    """Boolean mask of rows satisfying the predicate."""
    if isinstance(pred, FieldCmp):
        col = cols[pred.field]
        if pred.op == CmpOp.EQ:
            return col == pred.value
        if pred.op == CmpOp.LE:
            return col <= pred.value
        if pred.op == CmpOp.GE:
            return col >= pred.value
        lo, hi = pred.value
        return (col >= lo) & (col <= hi)
    if isinstance(pred, CodeInValueSet):
        vs = bundle[pred.valueset]
        return member_mask(cols[pred.field], vs.member_bytes)
    if isinstance(pred, AndPred):
        mask = pred_mask(pred.items[0], cols, bundle)
        for p in pred.items[1:]:
            mask &= pred_mask(p, cols, bundle)
        return mask
    if isinstance(pred, OrPred):
        mask = pred_mask(pred.items[0], cols, bundle)
        for p in pred.items[1:]:
            mask |= pred_mask(p, cols, bundle)
        return mask
    raise TypeError(f"cannot evaluate {type(pred).__name__}")


# -- zone-map consultation --------------------------------------------------

def chunk_may_match(pred: Pred, info: ChunkInfo, bundle) -> bool:
    """False only when the zone maps prove no row in the chunk matches."""
    if isinstance(pred, FieldCmp):
        if pred.field in info.minmax:
            lo, hi = info.minmax[pred.field]
            if pred.op == CmpOp.EQ:
                return lo <= pred.value <= hi
            if pred.op == CmpOp.LE:
                return lo <= pred.value
            if pred.op == CmpOp.GE:
                return hi >= pred.value
            plo, phi = pred.value
            return hi >= plo and lo <= phi
        dictionary = info.code_dict.get(pred.field)
        if dictionary is not None and pred.op == CmpOp.EQ:
            wanted = np.asarray([pred.value], dtype=dictionary.dtype)
            return bool(np.isin(wanted, dictionary)[0])
        return True
    if isinstance(pred, CodeInValueSet):
        dictionary = info.code_dict.get(pred.field)
        if dictionary is not None:
            vs = bundle[pred.valueset]
            return bool(np.isin(dictionary, vs.member_bytes).any())
        return True
    if isinstance(pred, AndPred):
        return all(chunk_may_match(p, info, bundle) for p in pred.items)
    if isinstance(pred, OrPred):
        return any(chunk_may_match(p, info, bundle) for p in pred.items)
    return True


# -- relational kernels -----------------------------------------------------

def semi_join_valueset(
    codes: np.ndarray, vs: CompiledValueSet, mode: str
) -> tuple[np.ndarray, int]:
    """Membership mask plus the state entries this join instance held.

    Both modes emit identical rows.  Broadcast reads the shared compiled
    set and holds no state of its own (the bundle is counted once per
    worker); the baseline builds its own table and remembers every match,
    so its state grows with the match count.
    """
    mask = member_mask(codes, vs.member_bytes)
    if mode == "broadcast":
        return mask, 0
    if mode == "hash-join-baseline":
        return mask, len(vs) + int(mask.sum())
    raise ValueError(f"unknown semi-join mode {mode!r}")


def age_filter(birth_dates: np.ndarray, lo: int, hi: int, as_of: int) -> np.ndarray:
    """Mask of rows whose whole-year age at as_of is in [lo, hi]."""
    ages = dates.ages_at(birth_dates, as_of)
    return (ages >= lo) & (ages <= hi)


def union_distinct_patients(streams) -> np.ndarray:
    """Distinct union of patient-id arrays, sorted."""
    arrays = [np.asarray(s, dtype=np.int64) for s in streams]
    if not arrays:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(arrays))


# -- coverage continuity ----------------------------------------------------

def coverage_pass_ids(
    patient_ids: np.ndarray,
    starts: np.ndarray,
    ends: np.ndarray,
    window: tuple[int, int],
    max_gap_days: int,
) -> np.ndarray:
    """Patients whose clipped coverage leaves no gap beyond the allowance.

    Batch form of the per-patient rule: sort intervals per patient, track
    the running covered-through day, and fail a patient on any uncovered
    run longer than max_gap_days, including the runs at the window edges.
    Patients with no usable rows never appear in the result.
    """
    w0, w1 = window
    pid = np.asarray(patient_ids, dtype=np.int64)
    s = np.clip(np.asarray(starts, dtype=np.int64), w0, None)
    e = np.clip(np.asarray(ends, dtype=np.int64), None, w1)
    keep = s <= e  # intervals entirely outside the window vanish
    pid, s, e = pid[keep], s[keep], e[keep]
    if len(pid) == 0:
        return np.empty(0, dtype=np.int64)

    # one composite-key sort beats lexsort; clipped starts fit in [0, span).
    # ties (equal pid and start) cannot open a gap whichever end sorts
    # first, so the unstable default sort is safe
    span = (w1 - w0) + 2
    if int(pid.max()) < (2**62) // span:
        order = np.argsort(pid * span + (s - w0))
    else:
        order = np.lexsort((s, pid))
    pid, s, e = pid[order], s[order], e[order]
    first = np.empty(len(pid), dtype=bool)
    first[0] = True
    first[1:] = pid[1:] != pid[:-1]
    group = np.cumsum(first) - 1

    # segmented running max of covered-through day: shift each group into
    # its own band so accumulate cannot carry across patients
    band = (int(e.max()) - int(e.min())) + 2
    covered = np.maximum.accumulate(e + group * band) - group * band
    prev = np.empty(len(pid), dtype=np.int64)
    prev[0] = w0 - 1
    prev[1:] = covered[:-1]
    prev[first] = w0 - 1  # before the first interval, covered through w0-1

    gap = s - prev - 1
    firsts = np.flatnonzero(first)
    bad = np.maximum.reduceat(gap, firsts) > max_gap_days

    last = np.empty(len(pid), dtype=bool)
    last[:-1] = first[1:]
    last[-1] = True
    tail_gap = w1 - covered[last]
    bad |= tail_gap > max_gap_days
    return pid[first][~bad]


def coverage_gap_eval(
    intervals, window: tuple[int, int], max_gap_days: int
) -> bool:
    """One patient's coverage rows -> continuity flag."""
    w0, w1 = window
    if w1 - w0 + 1 <= max_gap_days:
        return True  # the whole window fits in one allowable gap
    if len(intervals) == 0:
        return False
    arr = np.asarray(intervals, dtype=np.int64).reshape(-1, 2)
    pid = np.zeros(len(arr), dtype=np.int64)
    passed = coverage_pass_ids(pid, arr[:, 0], arr[:, 1], window, max_gap_days)
    return len(passed) == 1
