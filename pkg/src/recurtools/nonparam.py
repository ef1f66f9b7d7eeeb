"""Nonparametric estimators: cumulative hazard, survival, mean cumulative
function, and a two-sample test for CMF differences.

The first-event estimators work on plain ``(time, event)`` rows; the
recurrent-event ones take a :class:`~recurtools.data_model.RecurrentEventTable`
so the at-risk process of every subject is known.  Ties across subjects are
aggregated, so a jump may carry more than one event.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data_model import RecurrentEventTable
from .errors import DegenerateArmError, EmptyInputError


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function with jumps at event times.

    ``values[j]`` is the estimate at ``jump_times[j]`` (inclusive); before the
    first jump the function equals ``initial``.  ``variance`` is the pointwise
    variance at each jump when the estimator provides one.
    """

    jump_times: np.ndarray
    values: np.ndarray
    variance: np.ndarray | None = None
    initial: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "jump_times", np.asarray(self.jump_times, dtype=np.float64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.variance is not None:
            object.__setattr__(self, "variance", np.asarray(self.variance, dtype=np.float64))

    def __call__(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=np.float64)
        if len(self.jump_times) == 0:
            out = np.full(t.shape, self.initial)
        else:
            idx = np.searchsorted(self.jump_times, t, side="right") - 1
            out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], self.initial)
        return float(out) if out.ndim == 0 else out

    def confidence_band(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise log-transformed normal limits at each jump."""
        if self.variance is None:
            raise ValueError("estimator carries no variance")
        z = stats.norm.ppf(0.5 + level / 2)
        v = self.values
        se = np.sqrt(self.variance)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(v > 0, np.exp(z * se / np.where(v > 0, v, 1.0)), 1.0)
        low = np.where(v > 0, v / ratio, 0.0)
        high = np.where(v > 0, v * ratio, 0.0)
        return low, high


def _first_event_arrays(time, event) -> tuple[np.ndarray, np.ndarray]:
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event, dtype=np.int64)
    if time.size == 0:
        raise EmptyInputError("no observations")
    if time.shape != event.shape:
        raise ValueError("time and event must have equal length")
    return time, event


def nelson_aalen(time, event) -> StepFunction:
    """Cumulative hazard of the first event: sum of d(u)/Y(u) over event times."""
    time, event = _first_event_arrays(time, event)
    times = np.unique(time[event == 1])
    haz = np.zeros(len(times))
    var = np.zeros(len(times))
    for j, u in enumerate(times):
        d = np.sum((time == u) & (event == 1))
        y = np.sum(time >= u)
        haz[j] = d / y
        var[j] = d / y**2
    return StepFunction(times, np.cumsum(haz), np.cumsum(var), initial=0.0)


def kaplan_meier(time, event) -> StepFunction:
    """Survival of the first event as the product over 1 − d(u)/Y(u).

    The variance is Greenwood's formula; it is 0 wherever the estimate hits 0.
    """
    time, event = _first_event_arrays(time, event)
    times = np.unique(time[event == 1])
    surv = np.zeros(len(times))
    green = np.zeros(len(times))
    s, g = 1.0, 0.0
    for j, u in enumerate(times):
        d = np.sum((time == u) & (event == 1))
        y = np.sum(time >= u)
        s *= 1.0 - d / y
        g = g + d / (y * (y - d)) if d < y else 0.0
        surv[j] = s
        green[j] = s**2 * g
    return StepFunction(times, surv, green, initial=1.0)


def _subject_view(table: RecurrentEventTable):
    """Per-subject arrays plus the per-row subject code for event lookups."""
    codes, ids = table.subject_codes()
    k = len(ids)
    censor = np.zeros(k)
    arm = np.zeros(k, dtype=np.int64)
    np.maximum.at(censor, codes, table.tstop)
    arm[codes] = table.arm
    return codes, censor, arm


def cmf(table: RecurrentEventTable) -> StepFunction:
    """Mean cumulative event count over time.

    At each event time the increment is the number of events divided by the
    number of subjects still under observation.  The pointwise variance is the
    robust sum over subjects of their squared centered integrated increments,
    which stays valid when one subject contributes several events.
    """
    if len(table) == 0:
        raise EmptyInputError("empty table")
    codes, censor, _ = _subject_view(table)
    n = len(censor)
    ev = table.event == 1
    ev_times = np.unique(table.tstop[ev])
    mu = np.zeros(len(ev_times))
    var = np.zeros(len(ev_times))
    resid = np.zeros(n)  # per-subject running sum of (dN_i - dmu)/Y
    total = 0.0
    for j, u in enumerate(ev_times):
        at_risk = censor >= u
        y = at_risk.sum()
        dn = np.zeros(n)
        rows = ev & (table.tstop == u)
        np.add.at(dn, codes[rows], 1.0)
        dmu = dn[at_risk].sum() / y
        total += dmu
        mu[j] = total
        resid[at_risk] += (dn[at_risk] - dmu) / y
        var[j] = np.sum(resid**2)
    return StepFunction(ev_times, mu, var, initial=0.0)


def cmf_score(table: RecurrentEventTable, arms: tuple[int, int] = (0, 1),
              tau: float | None = None) -> tuple[float, float]:
    """Raw pseudo-score W(tau) and its robust variance estimate.

    W accumulates w(u)·(dmu1 − dmu0) over event times with the harmonic
    at-risk weight w(u) = Y1·Y0/(Y1+Y0); the variance is the empirical sum of
    squared per-subject integrated increments.
    """
    if len(table) == 0:
        raise EmptyInputError("empty table")
    codes, censor, arm = _subject_view(table)
    n = len(censor)
    in0, in1 = arm == arms[0], arm == arms[1]
    if not in0.any() or not in1.any():
        raise DegenerateArmError(f"need subjects in both arms {arms}")
    if tau is None:
        tau = float(censor.max())
    ev = table.event == 1
    ev_times = np.unique(table.tstop[ev])
    ev_times = ev_times[ev_times <= tau]
    w_stat = 0.0
    u_vec = np.zeros(n)
    for u in ev_times:
        at_risk = censor >= u
        y0 = np.sum(at_risk & in0)
        y1 = np.sum(at_risk & in1)
        if y0 == 0 or y1 == 0:
            continue
        w = y0 * y1 / (y0 + y1)
        dn = np.zeros(n)
        rows = ev & (table.tstop == u)
        np.add.at(dn, codes[rows], 1.0)
        dmu0 = dn[at_risk & in0].sum() / y0
        dmu1 = dn[at_risk & in1].sum() / y1
        w_stat += w * (dmu1 - dmu0)
        g0, g1 = at_risk & in0, at_risk & in1
        u_vec[g0] += -(w / y0) * (dn[g0] - dmu0)
        u_vec[g1] += (w / y1) * (dn[g1] - dmu1)
    return float(w_stat), float(np.sum(u_vec**2))


def cmf_test(table: RecurrentEventTable, arms: tuple[int, int] = (0, 1), tau: float | None = None) -> tuple[float, float]:
    """Two-sample pseudo-score test for equal mean cumulative functions.

    Returns ``(W²/V, p)`` with the p-value from the upper tail of
    chi-square(1).  A degenerate comparison (W = 0) yields p = 1; a zero
    variance with W != 0 yields p = NaN.
    """
    w_stat, v = cmf_score(table, arms, tau)
    if w_stat == 0.0:
        return 0.0, 1.0
    if v == 0.0:
        return float("nan"), float("nan")
    stat = w_stat**2 / v
    return float(stat), float(stats.chi2.sf(stat, df=1))
