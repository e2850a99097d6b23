"""Deterministic synthetic workload generation with recorded ground truth.

Per patient, four independent flags are drawn: patient-row validity and
coverage validity (each √r, jointly the denominator), a numerator flag and an
exclusion flag (each r).  A flagged rule gets exactly one designated fully
valid row; every other generated row is deliberately invalid for every rule,
which is what makes TruthRecord, oracle, and engine agree exactly rather
than statistically.

All sampling is counter-based (see streams), so generation is block-order
independent, parallel-safe, and datasets are prefixes of larger ones.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources as ir

import numpy as np

from .. import dates
from ..catalog import load_valuesets
from ..tables import ALL_TABLES, partition_of
from ..storage import write_col_file, write_row_file
from ..storage.dataset import partition_filename, write_manifest
from . import streams
from .plan import DEFAULT_MEANS, GenerationPlan, derive_generation_plan

AGE_LO = 52
AGE_HI = 74
DEFAULT_MAX_GAP_DAYS = 45
DEFAULT_PARTITIONS = 8
PARTITION_PATIENTS = 12_500
_BLOCK = 200_000
_DAY = 1


def default_partitions(n_patients: int) -> int:
    """Partition count that keeps splits near a constant size.

    Scaling the split count with the data, not the split size, is what
    distributed file sources do; it also keeps per-partition state flat as
    workloads grow.
    """
    return max(DEFAULT_PARTITIONS, n_patients // PARTITION_PATIENTS)

TRUTH_DTYPE = np.dtype([
    ("patient_id", "<i8"),
    ("in_denominator", "u1"),
    ("in_numerator", "u1"),
    ("excluded", "u1"),
])

TABLE_ORDER = (
    "patient", "condition", "encounter", "medication",
    "procedure", "observation", "coverage",
)


@dataclass(frozen=True)
class TruthRecord:
    patient_id: int
    in_denominator: bool
    in_numerator: bool
    excluded: bool


@dataclass(frozen=True)
class TruthManifest:
    records: np.ndarray  # TRUTH_DTYPE, one row per patient
    seed: int
    r: float

    @property
    def counts(self) -> dict[str, int]:
        return {
            "patients": int(len(self.records)),
            "denominator": int(self.records["in_denominator"].sum()),
            "numerator": int(self.records["in_numerator"].sum()),
            "exclusion": int(self.records["excluded"].sum()),
        }

    def record(self, patient_id: int) -> TruthRecord:
        row = self.records[patient_id]
        return TruthRecord(
            patient_id=int(row["patient_id"]),
            in_denominator=bool(row["in_denominator"]),
            in_numerator=bool(row["in_numerator"]),
            excluded=bool(row["excluded"]),
        )


def _s16(values) -> np.ndarray:
    return np.array([v.encode() for v in values], dtype="S16")


def _noise_pool(prefix: str, n: int = 400) -> np.ndarray:
    return np.array([f"NOISE|{prefix}{i:05d}".encode() for i in range(n)], dtype="S24")


@dataclass(frozen=True)
class GeneratorContext:
    plan: GenerationPlan
    seed: int
    window: tuple[int, int]
    max_gap_days: int
    pools: dict[str, np.ndarray]
    birth_range: tuple[int, int]


def default_context(
    r: float,
    seed: int,
    window: tuple[int, int] | None = None,
    max_gap_days: int = DEFAULT_MAX_GAP_DAYS,
    plan: GenerationPlan | None = None,
) -> GeneratorContext:
    """Context targeting the bundled screening measure and registry."""
    if window is None:
        doc = json.loads((ir.files("cqlbatch") / "resources" / "params.json").read_text())
        mp = doc["Measurement Period"]
        window = (dates.from_iso(mp["start"]), dates.from_iso(mp["end"]))
    registry = load_valuesets((ir.files("cqlbatch") / "resources" / "valuesets.json").read_text())

    def members(vs_id: str) -> np.ndarray:
        return np.array(sorted(m.encoded for m in registry[vs_id].members), dtype="S24")

    pools = {
        "mammogram": members("Mammogram"),
        "hospice_encounter": members("Hospice Encounter"),
        "hospice_intervention": members("Hospice Intervention"),
        "mastectomy": members("Mastectomy"),
        "absence_of_breast": members("Absence of Breast"),
        "observation_noise": _noise_pool("OB"),
        "encounter_noise": _noise_pool("EN"),
        "procedure_noise": _noise_pool("PR"),
        "condition_noise": _noise_pool("CO"),
        "medication_noise": _noise_pool("ME"),
    }
    return GeneratorContext(
        plan=plan if plan is not None else derive_generation_plan(r),
        seed=seed,
        window=window,
        max_gap_days=max_gap_days,
        pools=pools,
        birth_range=dates.birth_range_for_age(AGE_LO, AGE_HI, window[1]),
    )


# -- flag and count draws ---------------------------------------------------

def patient_flags(ctx: GeneratorContext, pids: np.ndarray):
    """(patient_valid, coverage_valid, numerator, exclusion, clause)"""
    s, p = ctx.seed, ctx.plan
    pat = streams.uniform01(s, "flag/patient", pids) < p.p_patient_valid
    cov = streams.uniform01(s, "flag/coverage", pids) < p.p_coverage_valid
    num = streams.uniform01(s, "flag/numerator", pids) < p.p_numerator_flag
    exc = streams.uniform01(s, "flag/exclusion", pids) < p.p_exclusion_flag
    clause = streams.randint(s, "flag/clause", pids, 0, 0, 4)
    return pat, cov, num, exc, clause


def truth_block(ctx: GeneratorContext, pids: np.ndarray) -> np.ndarray:
    pat, cov, num, exc, _ = patient_flags(ctx, pids)
    out = np.empty(len(pids), dtype=TRUTH_DTYPE)
    out["patient_id"] = pids
    out["in_denominator"] = (pat & cov).astype("u1")
    out["in_numerator"] = num.astype("u1")
    out["excluded"] = exc.astype("u1")
    return out


def _row_counts(ctx: GeneratorContext, table: str, pids: np.ndarray) -> np.ndarray:
    s = ctx.seed
    mean = ctx.plan.means.by_table()[table]
    counts = streams.poisson(s, f"count/{table}", pids, mean)
    _, cov, num, exc, clause = patient_flags(ctx, pids)
    # a flagged rule needs its designated row to exist
    if table == "observation":
        need = num
    elif table == "coverage":
        need = cov
    elif table == "encounter":
        need = exc & (clause == 0)
    elif table == "procedure":
        need = exc & (clause >= 1) & (clause <= 3)
    elif table == "condition":
        need = exc & (clause == 4)
    else:
        need = np.zeros(len(pids), dtype=bool)
    return np.where(need, np.maximum(counts, 1), counts)


def _flatten(pids: np.ndarray, counts: np.ndarray):
    total = int(counts.sum())
    fp = np.repeat(pids, counts)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    fi = np.arange(total, dtype=np.int64) - offsets
    return fp, fi


def _vec_randint(u: np.ndarray, lo, hi) -> np.ndarray:
    """Closed-range integers with array-valued bounds."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    span = hi - lo + 1
    return lo + np.minimum((u * span).astype(np.int64), span - 1)


# -- per-table generators ---------------------------------------------------

_GENDER_BAD = _s16(["male", "other", "unknown"])
_GENDER_FREE = _s16(["female", "male"])
_OBS_STATUS_BAD = _s16(["amended", "preliminary", "cancelled"])
_OBS_STATUS_FREE = _s16(["final", "amended", "preliminary"])
_ENC_STATUS_BAD = _s16(["planned", "in-progress", "cancelled"])
_ENC_STATUS_FREE = _s16(["completed", "planned", "cancelled"])
_PROC_STATUS_FREE = _s16(["completed", "finished", "planned", "cancelled"])
_PROC_STATUS_HI_BAD = _s16(["completed", "planned", "cancelled"])
_PROC_STATUS_MA_BAD = _s16(["planned", "cancelled", "in-progress"])
_COND_STATUS = _s16(["active", "resolved", "inactive"])
_SEVERITY = _s16(["mild", "moderate", "severe"])
_MED_STATUS = _s16(["active", "completed", "stopped"])
_ROUTE = _s16(["oral", "iv", "topical"])


def _tag_str(seed: int, tag: str, pid, idx, prefix: bytes) -> np.ndarray:
    h = streams.hash64(seed, tag, pid, idx) % np.uint64(1_000_000)
    return np.char.add(prefix, h.astype("S12")).astype("S16")


def _gen_patient(ctx: GeneratorContext, pids: np.ndarray):
    s = ctx.seed
    pat, _, _, _, _ = patient_flags(ctx, pids)
    n = len(pids)
    lo, hi = ctx.birth_range

    birth_valid = streams.randint(s, "patient/birth_valid", pids, 0, lo, hi)
    below = streams.uniform01(s, "patient/birth_side", pids) < 0.5
    birth_bad = np.where(
        below,
        streams.randint(s, "patient/birth_below", pids, 0, lo - 14600, lo - 1),
        streams.randint(s, "patient/birth_above", pids, 0, hi + 1, hi + 10950),
    )
    birth_free = streams.randint(s, "patient/birth_free", pids, 0, lo - 14600, hi + 10950)

    # invalid patients violate gender or birth date; the other field is free
    bad_gender = streams.uniform01(s, "patient/violation", pids) < 0.5
    gender_bad = streams.pick(s, "patient/gender_bad", pids, 0, _GENDER_BAD)
    gender_free = streams.pick(s, "patient/gender_free", pids, 0, _GENDER_FREE)

    gender = np.where(pat, b"female", np.where(bad_gender, gender_bad, gender_free))
    birth = np.where(pat, birth_valid, np.where(bad_gender, birth_free, birth_bad))

    rows = np.empty(n, dtype=ALL_TABLES["patient"].numpy_dtype())
    rows["patient_id"] = pids
    rows["birth_date"] = birth
    rows["gender"] = gender.astype("S16")
    rows["given_name"] = _tag_str(s, "patient/given", pids, 0, b"g")
    rows["family_name"] = _tag_str(s, "patient/family", pids, 0, b"f")
    rows["postal_code"] = _tag_str(s, "patient/postal", pids, 0, b"z")
    return rows, pat.copy()


def _gen_observation(ctx: GeneratorContext, pids: np.ndarray):
    s = ctx.seed
    w0, w1 = ctx.window
    _, _, num, _, _ = patient_flags(ctx, pids)
    counts = _row_counts(ctx, "observation", pids)
    fp, fi = _flatten(pids, counts)
    designated = np.repeat(num, counts) & (fi == 0)

    v = streams.randint(s, "observation/violation", fp, fi, 0, 2)
    code_valid = streams.pick(s, "observation/code_valid", fp, fi, ctx.pools["mammogram"])
    code_noise = streams.pick(s, "observation/code_noise", fp, fi, ctx.pools["observation_noise"])
    mix = streams.uniform01(s, "observation/code_mix", fp, fi) < 0.15
    code_free = np.where(mix, code_valid, code_noise)
    code = np.where(designated, code_valid, np.where(v == 0, code_noise, code_free))

    status_bad = streams.pick(s, "observation/status_bad", fp, fi, _OBS_STATUS_BAD)
    status_free = streams.pick(s, "observation/status_free", fp, fi, _OBS_STATUS_FREE)
    status = np.where(designated, b"final", np.where(v == 1, status_bad, status_free))

    end_in = streams.randint(s, "observation/end_in", fp, fi, w0, w1)
    before = streams.uniform01(s, "observation/end_side", fp, fi) < 0.5
    end_out = np.where(
        before,
        streams.randint(s, "observation/end_before", fp, fi, w0 - 730, w0 - 1),
        streams.randint(s, "observation/end_after", fp, fi, w1 + 1, w1 + 730),
    )
    end_free = streams.randint(s, "observation/end_free", fp, fi, w0 - 730, w1 + 730)
    end = np.where(designated, end_in, np.where(v == 2, end_out, end_free))
    start = end - streams.randint(s, "observation/span", fp, fi, 0, 30)

    rows = np.empty(len(fp), dtype=ALL_TABLES["observation"].numpy_dtype())
    rows["patient_id"] = fp
    rows["code"] = code.astype("S24")
    rows["status"] = status.astype("S16")
    rows["effective_time_start"] = start
    rows["effective_time_end"] = end
    rows["value_quantity"] = streams.randint(s, "observation/value", fp, fi, 0, 1000)
    return rows, designated


def _gen_encounter(ctx: GeneratorContext, pids: np.ndarray):
    s = ctx.seed
    w0, w1 = ctx.window
    _, _, _, exc, clause = patient_flags(ctx, pids)
    flagged = exc & (clause == 0)
    counts = _row_counts(ctx, "encounter", pids)
    fp, fi = _flatten(pids, counts)
    designated = np.repeat(flagged, counts) & (fi == 0)

    v = streams.randint(s, "encounter/violation", fp, fi, 0, 2)
    code_valid = streams.pick(s, "encounter/code_valid", fp, fi, ctx.pools["hospice_encounter"])
    code_noise = streams.pick(s, "encounter/code_noise", fp, fi, ctx.pools["encounter_noise"])
    mix = streams.uniform01(s, "encounter/code_mix", fp, fi) < 0.15
    code_free = np.where(mix, code_valid, code_noise)
    code = np.where(designated, code_valid, np.where(v == 0, code_noise, code_free))

    status_bad = streams.pick(s, "encounter/status_bad", fp, fi, _ENC_STATUS_BAD)
    status_free = streams.pick(s, "encounter/status_free", fp, fi, _ENC_STATUS_FREE)
    status = np.where(designated, b"completed", np.where(v == 1, status_bad, status_free))

    u_start = streams.uniform01(s, "encounter/start_in", fp, fi)
    start_in = _vec_randint(u_start, w0, w1)
    end_in = _vec_randint(streams.uniform01(s, "encounter/end_in", fp, fi), start_in, w1)

    early = streams.uniform01(s, "encounter/out_side", fp, fi) < 0.5
    start_early = streams.randint(s, "encounter/start_early", fp, fi, w0 - 730, w0 - 1)
    end_late = streams.randint(s, "encounter/end_late", fp, fi, w1 + 1, w1 + 730)
    span = streams.randint(s, "encounter/out_span", fp, fi, 0, 400)
    start_out = np.where(early, start_early, end_late - span)
    end_out = np.where(early, start_early + span, end_late)

    start_free = streams.randint(s, "encounter/start_free", fp, fi, w0 - 365, w1 + 365)
    end_free = start_free + streams.randint(s, "encounter/free_span", fp, fi, 0, 365)

    start = np.where(designated, start_in, np.where(v == 2, start_out, start_free))
    end = np.where(designated, end_in, np.where(v == 2, end_out, end_free))

    rows = np.empty(len(fp), dtype=ALL_TABLES["encounter"].numpy_dtype())
    rows["patient_id"] = fp
    rows["code"] = code.astype("S24")
    rows["status"] = status.astype("S16")
    rows["period_start"] = start
    rows["period_end"] = end
    rows["enc_class"] = streams.pick(s, "encounter/class", fp, fi, _s16(["inpatient", "outpatient", "virtual"]))
    rows["provider_id"] = streams.randint(s, "encounter/provider", fp, fi, 1, 9999)
    return rows, designated


def _gen_procedure(ctx: GeneratorContext, pids: np.ndarray):
    s = ctx.seed
    w0, w1 = ctx.window
    _, _, _, exc, clause = patient_flags(ctx, pids)
    flagged = exc & (clause >= 1) & (clause <= 3)
    counts = _row_counts(ctx, "procedure", pids)
    fp, fi = _flatten(pids, counts)
    fclause = np.repeat(clause, counts)
    designated = np.repeat(flagged, counts) & (fi == 0)

    code_hi = streams.pick(s, "procedure/code_hi", fp, fi, ctx.pools["hospice_intervention"])
    code_ma = streams.pick(s, "procedure/code_ma", fp, fi, ctx.pools["mastectomy"])
    code_noise = streams.pick(s, "procedure/code_noise", fp, fi, ctx.pools["procedure_noise"])

    perf_in = streams.randint(s, "procedure/perf_in", fp, fi, w0, w1)
    early = streams.uniform01(s, "procedure/perf_side", fp, fi) < 0.5
    perf_out = np.where(
        early,
        streams.randint(s, "procedure/perf_early", fp, fi, w0 - 730, w0 - 1),
        streams.randint(s, "procedure/perf_late", fp, fi, w1 + 1, w1 + 730),
    )
    perf_free = streams.randint(s, "procedure/perf_free", fp, fi, w0 - 730, w1 + 730)

    # designated rows by clause: 1 = hospice intervention performed in window,
    # 2 = mastectomy completed, 3 = mastectomy finished
    d_code = np.where(fclause == 1, code_hi, code_ma)
    d_status = np.where(
        fclause == 1, b"finished", np.where(fclause == 2, b"completed", b"finished")
    )
    d_perf = np.where(fclause == 1, perf_in, perf_free)

    # invalid rows must satisfy no clause
    v = streams.randint(s, "procedure/violation", fp, fi, 0, 9)
    hi_bad_status = streams.pick(s, "procedure/hi_bad_status", fp, fi, _PROC_STATUS_HI_BAD)
    hi_out = streams.uniform01(s, "procedure/hi_variant", fp, fi) < 0.5
    hi_status = np.where(hi_out, b"finished", hi_bad_status)
    hi_perf = np.where(hi_out, perf_out, perf_free)
    ma_status = streams.pick(s, "procedure/ma_bad_status", fp, fi, _PROC_STATUS_MA_BAD)
    noise_status = streams.pick(s, "procedure/noise_status", fp, fi, _PROC_STATUS_FREE)

    inv_code = np.where(v <= 6, code_noise, np.where(v == 7, code_hi, code_ma))
    inv_status = np.where(v <= 6, noise_status, np.where(v == 7, hi_status, ma_status))
    inv_perf = np.where(v == 7, hi_perf, perf_free)

    rows = np.empty(len(fp), dtype=ALL_TABLES["procedure"].numpy_dtype())
    rows["patient_id"] = fp
    rows["code"] = np.where(designated, d_code, inv_code).astype("S24")
    rows["status"] = np.where(designated, d_status, inv_status).astype("S16")
    rows["performed"] = np.where(designated, d_perf, inv_perf)
    rows["body_site"] = streams.pick(s, "procedure/site", fp, fi, _s16(["breast", "arm", "chest"]))
    rows["outcome"] = streams.pick(s, "procedure/outcome", fp, fi, _s16(["successful", "unknown"]))
    return rows, designated


def _gen_condition(ctx: GeneratorContext, pids: np.ndarray):
    s = ctx.seed
    w0, w1 = ctx.window
    _, _, _, exc, clause = patient_flags(ctx, pids)
    flagged = exc & (clause == 4)
    counts = _row_counts(ctx, "condition", pids)
    fp, fi = _flatten(pids, counts)
    designated = np.repeat(flagged, counts) & (fi == 0)

    code_valid = streams.pick(s, "condition/code_valid", fp, fi, ctx.pools["absence_of_breast"])
    code_noise = streams.pick(s, "condition/code_noise", fp, fi, ctx.pools["condition_noise"])

    start_in = streams.randint(s, "condition/start_in", fp, fi, w0, w1)
    end_in = _vec_randint(streams.uniform01(s, "condition/end_in", fp, fi), start_in, w1)

    early = streams.uniform01(s, "condition/out_side", fp, fi) < 0.5
    start_early = streams.randint(s, "condition/start_early", fp, fi, w0 - 730, w0 - 1)
    end_late = streams.randint(s, "condition/end_late", fp, fi, w1 + 1, w1 + 730)
    span = streams.randint(s, "condition/out_span", fp, fi, 0, 900)
    start_out = np.where(early, start_early, end_late - span)
    end_out = np.where(early, start_early + span, end_late)

    start_free = streams.randint(s, "condition/start_free", fp, fi, w0 - 365, w1 + 365)
    end_free = start_free + streams.randint(s, "condition/free_span", fp, fi, 0, 365)

    # invalid: noise code with free dates, or a real code outside the window
    v = streams.uniform01(s, "condition/violation", fp, fi) < 0.7
    code = np.where(designated, code_valid, np.where(v, code_noise, code_valid))
    start = np.where(designated, start_in, np.where(v, start_free, start_out))
    end = np.where(designated, end_in, np.where(v, end_free, end_out))

    rows = np.empty(len(fp), dtype=ALL_TABLES["condition"].numpy_dtype())
    rows["patient_id"] = fp
    rows["code"] = code.astype("S24")
    rows["clinical_status"] = streams.pick(s, "condition/status", fp, fi, _COND_STATUS)
    rows["prevalence_start"] = start
    rows["prevalence_end"] = end
    rows["severity"] = streams.pick(s, "condition/severity", fp, fi, _SEVERITY)
    rows["recorded"] = end + streams.randint(s, "condition/recorded", fp, fi, 0, 30)
    return rows, designated


def _gen_medication(ctx: GeneratorContext, pids: np.ndarray):
    s = ctx.seed
    w0, w1 = ctx.window
    counts = _row_counts(ctx, "medication", pids)
    fp, fi = _flatten(pids, counts)
    rows = np.empty(len(fp), dtype=ALL_TABLES["medication"].numpy_dtype())
    rows["patient_id"] = fp
    rows["code"] = streams.pick(s, "medication/code", fp, fi, ctx.pools["medication_noise"])
    rows["status"] = streams.pick(s, "medication/status", fp, fi, _MED_STATUS)
    rows["authored"] = streams.randint(s, "medication/authored", fp, fi, w0 - 730, w1 + 730)
    rows["dosage"] = streams.randint(s, "medication/dosage", fp, fi, 1, 500)
    rows["route"] = streams.pick(s, "medication/route", fp, fi, _ROUTE)
    return rows, np.zeros(len(fp), dtype=bool)


def _gen_coverage(ctx: GeneratorContext, pids: np.ndarray):
    s = ctx.seed
    w0, w1 = ctx.window
    gap = ctx.max_gap_days
    _, cov, _, _, _ = patient_flags(ctx, pids)
    counts = _row_counts(ctx, "coverage", pids)
    fp, fi = _flatten(pids, counts)
    fcov = np.repeat(cov, counts)
    n = len(fp)
    start = np.zeros(n, dtype=np.int64)
    end = np.zeros(n, dtype=np.int64)

    # valid covering: sort per-patient cut points into segment boundaries,
    # then shrink segment starts by at most the allowed gap
    if fcov.any():
        vp, vi = fp[fcov], fi[fcov]
        cuts = _vec_randint(streams.uniform01(s, "coverage/cut", vp, vi), w0, w1)
        order = np.lexsort((cuts, vp))
        cuts_sorted = cuts[order]  # ascending within each patient group
        base = np.where(vi == 0, w0, cuts_sorted)
        is_last = np.empty(len(vp), dtype=bool)
        is_last[:-1] = vp[1:] != vp[:-1]
        if len(vp):
            is_last[-1] = True
        seg_end = np.empty(len(vp), dtype=np.int64)
        seg_end[:-1] = cuts_sorted[1:]
        seg_end[is_last] = w1
        shrink = _vec_randint(
            streams.uniform01(s, "coverage/shrink", vp, vi),
            0, np.minimum(gap, seg_end - base),
        )
        v_start = base + shrink
        trail = _vec_randint(
            streams.uniform01(s, "coverage/trail", vp, vi),
            0, np.minimum(gap, seg_end - v_start),
        )
        v_end = np.where(is_last, seg_end - trail, seg_end)
        # occasional extension outside the window; clipping handles it
        ext_pre = streams.uniform01(s, "coverage/ext_pre", vp, vi) < 0.3
        v_start = np.where(
            (vi == 0) & ext_pre,
            v_start - streams.randint(s, "coverage/pre_len", vp, vi, 1, 365),
            v_start,
        )
        ext_post = streams.uniform01(s, "coverage/ext_post", vp, vi) < 0.3
        v_end = np.where(
            is_last & ext_post,
            v_end + streams.randint(s, "coverage/post_len", vp, vi, 1, 365),
            v_end,
        )
        start[fcov] = v_start
        end[fcov] = v_end

    # invalid covering: carve one uncovered run longer than the allowance and
    # keep every interval clear of it
    inv = ~fcov
    if inv.any():
        ip, ii = fp[inv], fi[inv]
        gap_len = gap + 1 + streams.randint(s, "coverage/gap_len", ip, 0, 0, 89)
        gap_start = _vec_randint(
            streams.uniform01(s, "coverage/gap_start", ip, 0),
            w0 + 1, w1 - gap_len - 1,
        )
        left = streams.uniform01(s, "coverage/side", ip, ii) < 0.5
        lo = np.where(left, w0 - 365, gap_start + gap_len)
        hi = np.where(left, gap_start - 1, w1 + 365)
        a = _vec_randint(streams.uniform01(s, "coverage/a", ip, ii), lo, hi)
        span = streams.randint(s, "coverage/span", ip, ii, 0, 200)
        b = np.minimum(a + span, hi)
        start[inv] = a
        end[inv] = b

    rows = np.empty(n, dtype=ALL_TABLES["coverage"].numpy_dtype())
    rows["patient_id"] = fp
    rows["coverage_start"] = start
    rows["coverage_end"] = end
    rows["payer"] = streams.pick(s, "coverage/payer", fp, fi, _s16(["acme", "umbrella", "initech"]))
    rows["plan_type"] = streams.pick(s, "coverage/plan", fp, fi, _s16(["hmo", "ppo", "pos"]))
    rows["member_id"] = streams.randint(s, "coverage/member", fp, fi, 10_000_000, 99_999_999)
    return rows, np.zeros(n, dtype=bool)


_GENERATORS = {
    "patient": _gen_patient,
    "observation": _gen_observation,
    "encounter": _gen_encounter,
    "procedure": _gen_procedure,
    "condition": _gen_condition,
    "medication": _gen_medication,
    "coverage": _gen_coverage,
}


def generate_table(ctx: GeneratorContext, table: str, pids: np.ndarray):
    """Rows plus the designated-valid mask, for one block of patients."""
    rows, designated = _GENERATORS[table](ctx, np.asarray(pids, dtype=np.int64))
    return rows, designated


def generate_patient(seed: int, plan: GenerationPlan, patient_id: int):
    """All rows of one patient plus their ground-truth record."""
    ctx = default_context(plan.r, seed, plan=plan)
    pids = np.array([patient_id], dtype=np.int64)
    tables = {t: generate_table(ctx, t, pids)[0] for t in TABLE_ORDER}
    truth = truth_block(ctx, pids)
    rec = TruthRecord(
        patient_id=patient_id,
        in_denominator=bool(truth["in_denominator"][0]),
        in_numerator=bool(truth["in_numerator"][0]),
        excluded=bool(truth["excluded"][0]),
    )
    return tables, rec


def generate_workload(
    n_patients: int,
    r: float,
    seed: int,
    out_dir: str,
    fmt: str = "row",
    n_partitions: int = DEFAULT_PARTITIONS,
    max_gap_days: int = DEFAULT_MAX_GAP_DAYS,
    window: tuple[int, int] | None = None,
) -> TruthManifest:
    """Write a complete dataset directory and its ground-truth manifest.

    Tables are generated one at a time in patient blocks, so peak memory is
    one table, not the dataset.
    """
    if n_patients < 0:
        raise ValueError("n_patients must be >= 0")
    if fmt not in ("row", "col"):
        raise ValueError(f"unknown format {fmt!r}")
    ctx = default_context(r, seed, window=window, max_gap_days=max_gap_days)
    os.makedirs(out_dir, exist_ok=True)

    table_rows: dict[str, int] = {}
    for table in TABLE_ORDER:
        schema = ALL_TABLES[table]
        buckets: list[list[np.ndarray]] = [[] for _ in range(n_partitions)]
        for lo in range(0, n_patients, _BLOCK):
            pids = np.arange(lo, min(lo + _BLOCK, n_patients), dtype=np.int64)
            rows, _ = generate_table(ctx, table, pids)
            parts = partition_of(rows["patient_id"], n_partitions)
            order = np.argsort(parts, kind="stable")
            sorted_rows = rows[order]
            bounds = np.searchsorted(parts[order], np.arange(n_partitions + 1))
            for p in range(n_partitions):
                if bounds[p + 1] > bounds[p]:
                    buckets[p].append(sorted_rows[bounds[p]:bounds[p + 1]])
        total = 0
        for p in range(n_partitions):
            arr = (
                np.concatenate(buckets[p])
                if buckets[p]
                else np.empty(0, dtype=schema.numpy_dtype())
            )
            total += len(arr)
            path = os.path.join(out_dir, partition_filename(table, p, fmt))
            if fmt == "col":
                arr = arr[np.argsort(arr[schema.cluster_key], kind="stable")]
                write_col_file(path, schema, arr)
            else:
                write_row_file(path, schema, arr)
        table_rows[table] = total

    blocks = [
        truth_block(ctx, np.arange(lo, min(lo + _BLOCK, n_patients), dtype=np.int64))
        for lo in range(0, n_patients, _BLOCK)
    ]
    records = np.concatenate(blocks) if blocks else np.empty(0, dtype=TRUTH_DTYPE)
    manifest = TruthManifest(records=records, seed=seed, r=r)
    np.save(os.path.join(out_dir, "truth.npy"), records)
    w0, w1 = ctx.window
    write_manifest(
        out_dir, fmt, n_partitions, n_patients, table_rows,
        extra={
            "seed": seed,
            "match_rate": r,
            "max_gap_days": max_gap_days,
            "window": [dates.to_iso(w0), dates.to_iso(w1)],
            "truth_counts": manifest.counts,
        },
    )
    return manifest


def load_truth(dataset_dir: str) -> TruthManifest:
    records = np.load(os.path.join(dataset_dir, "truth.npy"))
    with open(os.path.join(dataset_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return TruthManifest(records=records, seed=int(doc["seed"]), r=float(doc["match_rate"]))
