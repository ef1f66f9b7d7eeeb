"""Core data types shared by the whole package.

Trial data live in two layouts:

* counting-process format (:class:`RecurrentEventTable`) — one row per at-risk
  interval ``(tstart, tstop]`` per subject, events marked on the row where the
  interval ends with an event;
* rank format (:class:`WLWTable`) — exactly K rows per subject, one per event
  rank, each measured from time zero.

Longitudinal disability scores are carried per subject in :class:`EDSSPanel`.
Model output is a :class:`FitResult`; Monte-Carlo scenarios are configured via
:class:`ScenarioConfig`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, EmptyInputError

# Ordinal disability grid: 12 pooled states. State 1 covers everything at or
# below 2.0 and is stored as 2.0; state 12 covers 7.5 and above.
EDSS_GRID = np.arange(2.0, 8.0, 0.5)

RECURRENT_CSV_COLUMNS = ["USUBJID", "ARMCD", "TSTART", "TSTOP", "TGAP", "EVENT", "SEVENT", "NEVENTS"]
WLW_CSV_COLUMNS = ["USUBJID", "ARMCD", "TSTOP", "EVENT", "SEVENT"]
EDSS_CSV_COLUMNS = ["USUBJID", "ARMCD", "DY", "AVAL"]


def state_to_score(state: int | np.ndarray) -> float | np.ndarray:
    """Map multistate index (1..12) to the stored EDSS score."""
    state = np.asarray(state)
    score = np.where(state <= 1, 2.0, (state + 3) / 2.0)
    return float(score) if score.ndim == 0 else score


def score_to_state(score: float | np.ndarray) -> int | np.ndarray:
    """Inverse of :func:`state_to_score` (scores below 2.0 clamp to state 1)."""
    score = np.asarray(score)
    state = np.where(score <= 2.0, 1, np.rint(2 * score - 3).astype(int))
    return int(state) if state.ndim == 0 else state


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# counting-process table


@dataclass(frozen=True, eq=False)
class RecurrentEventTable:
    """Counting-process trial data, column-oriented.

    Per subject the rows tile ``(0, C]`` contiguously: ``tstart`` of each row
    equals the previous row's ``tstop``, the first ``tstart`` is 0, and only
    the last row may be a censoring row (``event == 0``).  ``sevent`` is the
    1-based row index within subject and ``nevents`` the subject's total event
    count.  When the last event falls exactly on the censoring time, the event
    row doubles as the final row and no trailing censor row exists.
    """

    subject_id: np.ndarray
    arm: np.ndarray
    tstart: np.ndarray
    tstop: np.ndarray
    event: np.ndarray
    sevent: np.ndarray
    nevents: np.ndarray
    frailty: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "subject_id", _readonly(np.asarray(self.subject_id, dtype=object)))
        object.__setattr__(self, "arm", _readonly(np.asarray(self.arm, dtype=np.int64)))
        object.__setattr__(self, "tstart", _readonly(np.asarray(self.tstart, dtype=np.float64)))
        object.__setattr__(self, "tstop", _readonly(np.asarray(self.tstop, dtype=np.float64)))
        object.__setattr__(self, "event", _readonly(np.asarray(self.event, dtype=np.int64)))
        object.__setattr__(self, "sevent", _readonly(np.asarray(self.sevent, dtype=np.int64)))
        object.__setattr__(self, "nevents", _readonly(np.asarray(self.nevents, dtype=np.int64)))
        if self.frailty is not None:
            object.__setattr__(self, "frailty", _readonly(np.asarray(self.frailty, dtype=np.float64)))
        n = len(self.subject_id)
        for name in ("arm", "tstart", "tstop", "event", "sevent", "nevents"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if self.frailty is not None and len(self.frailty) != n:
            raise DataError("frailty column length mismatch")

    def __len__(self) -> int:
        return len(self.subject_id)

    @property
    def tgap(self) -> np.ndarray:
        return self.tstop - self.tstart

    def subject_codes(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (codes, unique ids) with ids in first-appearance order."""
        ids, codes = np.unique(self.subject_id.astype(str), return_inverse=True)
        # np.unique sorts; remap to first-appearance order for stable grouping
        first_pos = np.full(len(ids), len(self.subject_id), dtype=np.int64)
        np.minimum.at(first_pos, codes, np.arange(len(self.subject_id)))
        order = np.argsort(first_pos, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        return rank[codes], ids[order]

    @property
    def n_subjects(self) -> int:
        return len(np.unique(self.subject_id.astype(str)))

    def first_event_rows(self) -> "RecurrentEventTable":
        """Time-to-first-event view: the sevent == 1 rows."""
        return self._mask(self.sevent == 1)

    def _mask(self, m: np.ndarray) -> "RecurrentEventTable":
        return RecurrentEventTable(
            self.subject_id[m], self.arm[m], self.tstart[m], self.tstop[m],
            self.event[m], self.sevent[m], self.nevents[m],
            None if self.frailty is None else self.frailty[m],
        )

    def subject_counts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Aggregate to (ids, arm, event count, follow-up) per subject."""
        codes, ids = self.subject_codes()
        k = len(ids)
        arm = np.zeros(k, dtype=np.int64)
        count = np.zeros(k, dtype=np.int64)
        exposure = np.zeros(k, dtype=np.float64)
        arm[codes] = self.arm
        np.add.at(count, codes, self.event)
        np.maximum.at(exposure, codes, self.tstop)
        return ids, arm, count, exposure

    @classmethod
    def from_subject_events(
        cls,
        subjects: Iterable[tuple[str, int, Sequence[float], float] | tuple[str, int, Sequence[float], float, float]],
    ) -> "RecurrentEventTable":
        """Build a table from per-subject ``(id, arm, event_times, censor[, frailty])``.

        Event times must be strictly increasing and ``<=`` the censoring time; an
        event landing exactly on the censoring time absorbs the final row.
        """
        sid, arm, t0, t1, ev, sev, nev, fr = [], [], [], [], [], [], [], []
        any_frailty = False
        for rec in subjects:
            if len(rec) == 5:
                subject, z, times, censor, frail = rec
                any_frailty = True
            else:
                subject, z, times, censor = rec
                frail = 1.0
            times = list(times)
            if any(b <= a for a, b in zip(times, times[1:])):
                raise DataError(f"subject {subject}: event times not strictly increasing")
            if times and times[-1] > censor:
                raise DataError(f"subject {subject}: event beyond censoring time")
            stops = list(times)
            flags = [1] * len(times)
            if not times or times[-1] < censor:
                stops.append(censor)
                flags.append(0)
            prev = 0.0
            for row, (stop, flag) in enumerate(zip(stops, flags), start=1):
                sid.append(subject)
                arm.append(z)
                t0.append(prev)
                t1.append(stop)
                ev.append(flag)
                sev.append(row)
                nev.append(len(times))
                fr.append(frail)
                prev = stop
        if not sid:
            raise EmptyInputError("no subjects")
        return cls(
            np.array(sid, dtype=object), np.array(arm), np.array(t0), np.array(t1),
            np.array(ev), np.array(sev), np.array(nev),
            np.array(fr) if any_frailty else None,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "USUBJID": self.subject_id.astype(str),
            "ARMCD": self.arm,
            "TSTART": self.tstart,
            "TSTOP": self.tstop,
            "TGAP": self.tgap,
            "EVENT": self.event,
            "SEVENT": self.sevent,
            "NEVENTS": self.nevents,
        })


# ---------------------------------------------------------------------------
# rank-format (marginal) table


@dataclass(frozen=True, eq=False)
class WLWTable:
    """Rank-format data: every subject has exactly K rows, one per event rank.

    Row k carries the subject's k-th event time measured from randomization;
    ranks beyond the last observed event carry the censoring time with
    ``event = 0``.
    """

    subject_id: np.ndarray
    arm: np.ndarray
    tstop: np.ndarray
    event: np.ndarray
    sevent: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "subject_id", _readonly(np.asarray(self.subject_id, dtype=object)))
        object.__setattr__(self, "arm", _readonly(np.asarray(self.arm, dtype=np.int64)))
        object.__setattr__(self, "tstop", _readonly(np.asarray(self.tstop, dtype=np.float64)))
        object.__setattr__(self, "event", _readonly(np.asarray(self.event, dtype=np.int64)))
        object.__setattr__(self, "sevent", _readonly(np.asarray(self.sevent, dtype=np.int64)))

    def __len__(self) -> int:
        return len(self.subject_id)

    @property
    def k(self) -> int:
        return int(self.sevent.max()) if len(self) else 0

    def subject_codes(self) -> tuple[np.ndarray, np.ndarray]:
        ids, codes = np.unique(self.subject_id.astype(str), return_inverse=True)
        first_pos = np.full(len(ids), len(self.subject_id), dtype=np.int64)
        np.minimum.at(first_pos, codes, np.arange(len(self.subject_id)))
        order = np.argsort(first_pos, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        return rank[codes], ids[order]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "USUBJID": self.subject_id.astype(str),
            "ARMCD": self.arm,
            "TSTOP": self.tstop,
            "EVENT": self.event,
            "SEVENT": self.sevent,
        })


def to_wlw(table: RecurrentEventTable, k: int = 4) -> WLWTable:
    """Re-express a counting-process table in rank format with K rows per subject.

    Observed event ranks keep their event times; missing ranks are censored at
    the subject's last follow-up time.  Events beyond rank K are dropped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    codes, ids = table.subject_codes()
    sid, arm, stop, ev, rank = [], [], [], [], []
    for c, subject in enumerate(ids):
        m = codes == c
        times = table.tstop[m][table.event[m] == 1]
        censor = table.tstop[m].max()
        z = int(table.arm[m][0])
        for r in range(1, k + 1):
            sid.append(subject)
            arm.append(z)
            if r <= len(times):
                stop.append(float(times[r - 1]))
                ev.append(1)
            else:
                stop.append(float(censor))
                ev.append(0)
            rank.append(r)
    return WLWTable(np.array(sid, dtype=object), np.array(arm), np.array(stop), np.array(ev), np.array(rank))


# ---------------------------------------------------------------------------
# EDSS panels


@dataclass(frozen=True, eq=False)
class EDSSPanel:
    """One subject's longitudinal ordinal disability scores.

    ``visit_days`` are strictly increasing integers with the baseline always on
    day 1; ``scores`` sit on the half-point grid from 2.0 ("2.0 or less") to
    7.5 ("7.5 or more").
    """

    subject_id: str
    arm: int
    visit_days: np.ndarray
    scores: np.ndarray
    frailty: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "visit_days", _readonly(np.asarray(self.visit_days, dtype=np.int64)))
        object.__setattr__(self, "scores", _readonly(np.asarray(self.scores, dtype=np.float64)))
        if len(self.visit_days) != len(self.scores):
            raise DataError(f"subject {self.subject_id}: {len(self.visit_days)} visit days vs {len(self.scores)} scores")

    def __len__(self) -> int:
        return len(self.visit_days)


# ---------------------------------------------------------------------------
# fit results


@dataclass(frozen=True, eq=False)
class FitResult:
    """Estimate and inference output of one fitted model.

    ``beta`` has one element for common-effect and count models and one per
    event rank/stratum for event-specific variants; the companion arrays are
    aligned with it.  Wald p-values and confidence limits use the robust
    standard error when one is present, the naive one otherwise.
    """

    model_id: str
    beta: np.ndarray
    se_naive: np.ndarray
    se_robust: np.ndarray | None
    effect: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    p_value: np.ndarray
    converged: bool
    fallback_used: bool = False
    loglik: float = float("nan")
    iterations: int = 0
    dispersion: float | None = None
    intercept: float | None = None
    message: str = ""

    def __post_init__(self):
        for name in ("beta", "se_naive", "effect", "ci_low", "ci_high", "p_value"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if self.se_robust is not None:
            object.__setattr__(self, "se_robust", np.atleast_1d(np.asarray(self.se_robust, dtype=np.float64)))

    @property
    def se(self) -> np.ndarray:
        """Standard error used for inference (robust when available)."""
        return self.se_naive if self.se_robust is None else self.se_robust

    def to_frame(self) -> pd.DataFrame:
        k = len(self.beta)
        return pd.DataFrame({
            "model": [self.model_id] * k,
            "stratum": np.arange(1, k + 1) if k > 1 else [0],
            "beta": self.beta,
            "se_naive": self.se_naive,
            "se_robust": np.full(k, np.nan) if self.se_robust is None else self.se_robust,
            "effect": self.effect,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "p_value": self.p_value,
            "converged": [self.converged] * k,
            "fallback_used": [self.fallback_used] * k,
            "loglik": [self.loglik] * k,
            "iterations": [self.iterations] * k,
            "dispersion": [np.nan if self.dispersion is None else self.dispersion] * k,
        })


# ---------------------------------------------------------------------------
# scenario configuration


@dataclass(frozen=True)
class ScenarioConfig:
    """Flat description of one simulation scenario.

    ``effect`` is the multiplicative treatment effect on the simulated scale:
    the event-intensity ratio for setup S1, the upward-transition intensity
    ratio for setup S2.  Endpoint fields only matter for S2; ``eta``/``nu``
    only for S1.  ``baseline_probs`` and ``q0`` default to the built-in
    calibration when left as None.
    """

    setup: str = "S1"
    n: int = 1000
    effect: float = 0.7
    phi: float = 0.0
    dropout_rate: float = 0.00025
    end_recruit: float = 365.0
    design: str = "EVENT_DRIVEN"
    n_first_events: int = 246
    fixed_horizon: float | None = None
    eta: float = 0.0009675564
    nu: float = 0.9161516
    heterogeneity: str = "U1"
    event_timing: str = "CONFIRMATION"
    confirm_weeks: int = 12
    reference: str = "FIXED"
    roving_period_weeks: int = 24
    baseline_probs: np.ndarray | None = None
    q0: np.ndarray | None = None
    name: str = ""

    _SCALARS = (
        "setup", "n", "effect", "phi", "dropout_rate", "end_recruit", "design",
        "n_first_events", "fixed_horizon", "eta", "nu", "heterogeneity",
        "event_timing", "confirm_weeks", "reference", "roving_period_weeks", "name",
    )

    def __post_init__(self):
        if self.setup not in ("S1", "S2"):
            raise ValueError(f"unknown setup {self.setup!r}")
        if self.design not in ("EVENT_DRIVEN", "TIME_FIXED"):
            raise ValueError(f"unknown design {self.design!r}")
        if self.heterogeneity not in ("U1", "U2"):
            raise ValueError(f"unknown heterogeneity {self.heterogeneity!r}")
        if self.effect <= 0 or self.eta <= 0 or self.nu <= 0:
            raise ValueError("effect, eta and nu must be positive")
        if self.phi < 0:
            raise ValueError("phi must be >= 0")
        if self.design == "EVENT_DRIVEN" and not (1 <= self.n_first_events <= self.n):
            raise ValueError("n_first_events must lie in [1, n]")
        if self.baseline_probs is not None:
            p = np.asarray(self.baseline_probs, dtype=float)
            if p.shape != (12,) or (p < 0).any() or abs(p.sum() - 1.0) > 1e-4:
                raise ValueError("baseline_probs must be 12 non-negative values summing to 1")

    @property
    def horizon(self) -> float:
        """Fixed-design horizon in days (setup-specific default when unset)."""
        if self.fixed_horizon is not None:
            return self.fixed_horizon
        return 1513.0 if self.setup == "S1" else 673.0

    @property
    def true_beta(self) -> float | None:
        """Log effect on the analysis scale, when it exists (S1 only)."""
        return float(np.log(self.effect)) if self.setup == "S1" else None

    def to_flat_dict(self) -> dict[str, str]:
        out = {}
        for key in self._SCALARS:
            val = getattr(self, key)
            if val is None or val == "":
                continue
            out[key] = str(val)
        return out

    @classmethod
    def from_flat_dict(cls, mapping: dict[str, str], base: "ScenarioConfig | None" = None) -> "ScenarioConfig":
        """Build a config from flat ``key = value`` pairs, optionally over a base."""
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in mapping.items():
            if key not in types or key in ("baseline_probs", "q0"):
                raise ValueError(f"unknown scenario key {key!r}")
            raw = raw.strip()
            if key in ("setup", "design", "heterogeneity", "event_timing", "reference", "name"):
                kwargs[key] = raw
            elif key in ("n", "n_first_events", "confirm_weeks", "roving_period_weeks"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        if base is not None:
            return replace(base, **kwargs)
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        if self.ok:
            return "pass"
        return "\n".join(self.violations)


def validate_table(table: RecurrentEventTable) -> ValidationReport:
    """Check the counting-process invariants row by row.

    Diagnostic only: returns the full list of violations with row locations
    instead of raising.
    """
    v: list[str] = []
    codes, ids = table.subject_codes()
    bad_arm = ~np.isin(table.arm, (0, 1))
    for r in np.flatnonzero(bad_arm):
        v.append(f"row {r + 1} (subject {table.subject_id[r]}): arm must be 0 or 1")
    for c, subject in enumerate(ids):
        rows = np.flatnonzero(codes == c)
        t0, t1 = table.tstart[rows], table.tstop[rows]
        ev, sev, nev = table.event[rows], table.sevent[rows], table.nevents[rows]
        if len(np.unique(table.arm[rows])) > 1:
            v.append(f"subject {subject}: arm not constant")
        if t0[0] != 0:
            v.append(f"subject {subject} row 1: first tstart = {t0[0]}, expected 0")
        bad = np.flatnonzero(t0 >= t1)
        for i in bad:
            v.append(f"subject {subject} row {i + 1}: tstart < tstop violated ({t0[i]} >= {t1[i]})")
        gaps = np.flatnonzero(t0[1:] != t1[:-1])
        for i in gaps:
            v.append(f"subject {subject} row {i + 2}: tstart of row {i + 2} != tstop of row {i + 1}")
        if np.any(np.diff(t1) <= 0):
            v.append(f"subject {subject}: rows not ordered by tstop")
        nonev = np.flatnonzero(ev == 0)
        if len(nonev) > 1 or (len(nonev) == 1 and nonev[0] != len(rows) - 1):
            v.append(f"subject {subject}: event = 0 allowed on the last row only")
        if not np.array_equal(sev, np.arange(1, len(rows) + 1)):
            v.append(f"subject {subject}: sevent must number rows 1..{len(rows)}")
        total = int(ev.sum())
        if np.any(nev != total):
            v.append(f"subject {subject}: nevents = {nev[0]} but rows carry {total} events")
        if total == 0 and len(rows) != 1:
            v.append(f"subject {subject}: event-free subjects take exactly 1 row, found {len(rows)}")
        if total > 0 and len(rows) not in (total, total + 1):
            v.append(f"subject {subject}: {total} events need {total} or {total + 1} rows, found {len(rows)}")
    return ValidationReport(ok=not v, violations=v)


def validate_wlw(table: WLWTable) -> ValidationReport:
    """Check the rank-format invariants: K rows per subject, censored tail."""
    v: list[str] = []
    codes, ids = table.subject_codes()
    k = table.k
    for c, subject in enumerate(ids):
        rows = np.flatnonzero(codes == c)
        ev, rank, stop = table.event[rows], table.sevent[rows], table.tstop[rows]
        if not np.array_equal(rank, np.arange(1, len(rows) + 1)):
            v.append(f"subject {subject}: sevent must number ranks 1..K")
        if len(rows) != k:
            v.append(f"subject {subject}: {len(rows)} rows, expected K = {k}")
        if np.any(np.diff(stop) < 0):
            v.append(f"subject {subject}: tstop must be non-decreasing in rank")
        first_zero = np.argmax(ev == 0) if (ev == 0).any() else len(ev)
        if np.any(ev[first_zero:] != 0):
            v.append(f"subject {subject}: events must form a prefix of the ranks")
        tail = stop[first_zero:]
        if len(tail) and np.any(tail != tail[0]):
            v.append(f"subject {subject}: censored ranks must share the censoring time")
    return ValidationReport(ok=not v, violations=v)


# ---------------------------------------------------------------------------
# CSV interfaces


def write_recurrent_csv(table: RecurrentEventTable, path) -> None:
    table.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_recurrent_csv(path) -> RecurrentEventTable:
    df = _read_csv(path, RECURRENT_CSV_COLUMNS)
    tgap = df["TSTOP"].to_numpy(float) - df["TSTART"].to_numpy(float)
    if np.max(np.abs(df["TGAP"].to_numpy(float) - tgap), initial=0.0) > 1e-6:
        raise DataError("TGAP column inconsistent with TSTOP - TSTART")
    return RecurrentEventTable(
        df["USUBJID"].to_numpy(object), df["ARMCD"].to_numpy(), df["TSTART"].to_numpy(float),
        df["TSTOP"].to_numpy(float), df["EVENT"].to_numpy(), df["SEVENT"].to_numpy(),
        df["NEVENTS"].to_numpy(),
    )


def write_wlw_csv(table: WLWTable, path) -> None:
    table.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_wlw_csv(path) -> WLWTable:
    df = _read_csv(path, WLW_CSV_COLUMNS)
    return WLWTable(
        df["USUBJID"].to_numpy(object), df["ARMCD"].to_numpy(),
        df["TSTOP"].to_numpy(float), df["EVENT"].to_numpy(), df["SEVENT"].to_numpy(),
    )


def write_edss_csv(panels: Sequence[EDSSPanel], path) -> None:
    frames = [
        pd.DataFrame({
            "USUBJID": p.subject_id, "ARMCD": p.arm, "DY": p.visit_days, "AVAL": p.scores,
        })
        for p in panels
    ]
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.17g")


def read_edss_csv(path) -> list[EDSSPanel]:
    df = _read_csv(path, EDSS_CSV_COLUMNS)
    panels = []
    for subject, grp in df.groupby("USUBJID", sort=False):
        days = grp["DY"].to_numpy(np.int64)
        if np.any(np.diff(days) <= 0):
            raise DataError(f"subject {subject}: DY must be strictly increasing")
        arms = grp["ARMCD"].unique()
        if len(arms) != 1:
            raise DataError(f"subject {subject}: ARMCD not constant")
        panels.append(EDSSPanel(str(subject), int(arms[0]), days, grp["AVAL"].to_numpy(float)))
    if not panels:
        raise EmptyInputError("no EDSS rows")
    return panels


def _read_csv(path, required: list[str]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype={"USUBJID": str})
    except Exception as e:  # pragma: no cover - pandas error text varies
        raise DataError(f"cannot parse CSV: {e}") from e
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataError(f"missing required columns: {', '.join(missing)}")
    extra = [c for c in df.columns if c not in required and c != "PARAMCD"]
    if extra:
        raise DataError(f"unexpected columns: {', '.join(extra)}")
    if df.empty:
        raise EmptyInputError("CSV has no data rows")
    return df
