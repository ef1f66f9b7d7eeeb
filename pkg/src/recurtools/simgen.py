"""Synthetic-trial generators.

Two data-generating setups share the trial machinery (block randomization,
gamma frailty, uniform recruitment, exponential dropout, event-driven or
fixed-horizon administrative censoring):

* **S1** draws recurrent event times directly from a mixed non-homogeneous
  Poisson process with Weibull-shaped rate, by inverting the conditional
  gap-time distribution;
* **S2** simulates ordinal disability scores on a 12-state grid from a
  time-homogeneous Markov process (visit schedule every 84 days with heavy-
  tailed integer noise), then derives confirmed-progression events from the
  scores via :mod:`recurtools.endpoint`.

Under the event-driven design the trial closes at the calendar day of the
``n_first_events``-th first event; subject follow-up is cut there.  In S2 the
events are derived from the complete panels first and the cut is applied to
the derived data, mirroring how an event-driven trial would monitor first
events while collecting further visits.

Reproducibility: every subject owns a private child of the replicate's seed
sequence (one extra child drives randomization), so trials are bit-for-bit
reproducible for a given (config, seed) regardless of how the caller
parallelizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .data_model import EDSSPanel, RecurrentEventTable, ScenarioConfig, state_to_score
from .endpoint import EndpointConfig, derive_cdp
from .errors import InsufficientEventsError, RecruitOverrunError

# Baseline per-day transition intensities between the 12 pooled EDSS states
# (row = from, column = to, states ≤2.0, 2.5, …, ≥7.5).  Off-diagonal entries
# are used verbatim; diagonals are rebuilt as negative row sums so each row
# sums to zero exactly (the printed diagonals are rounded).
_Q0_ROWS = [
    [-0.00571457, 0.00344927, 0.00213957, 0.00012573, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.00278110, -0.00979778, 0.00410048, 0.00113692, 0.00177928, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.00097883, 0.00173411, -0.00907440, 0.00436886, 0.00124637, 0.00074624, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.00016261, 0.00036194, 0.00197995, -0.00531696, 0.00179672, 0.00079744, 0.00021830, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.00038329, 0.00084327, 0.00212851, -0.00556463, 0.00161647, 0.00012261, 0.00047048, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.00058258, 0.00107844, 0.00164630, -0.00716624, 0.00204277, 0.00052749, 0.00128865, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.00067075, 0.00071686, 0.00431262, -0.01315725, 0.00525261, 0.00195771, 0.00024671, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.00065346, 0.00159607, 0.00321215, -0.01148634, 0.00588884, 0.00013581, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.00046211, 0.00022775, 0.00054228, -0.00288351, 0.00158707, 0.00006375, 0.00000055],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.00000346, 0.00135177, -0.00263882, 0.00120201, 0.00008158],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.00016236, 0.00481588, -0.01026036, 0.00528211],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.00000891, 0.00219949, -0.00220840],
]

# Baseline state distribution of a PPMS-like population over the 12 states.
# The printed values add up to 1.00001; they are renormalized on use.
DEFAULT_BASELINE_PROBS = np.array([
    0.00000, 0.00274, 0.08208, 0.18331, 0.17921, 0.09439,
    0.05746, 0.09986, 0.18057, 0.11902, 0.00137, 0.00000,
])

_DF_NOISE = 3.54
_NCP_NOISE = 0.25
_NOISE_CLAMP = 10
_VISIT_SPACING = 84
_DROPOUT_CAP_DAYS = 2000.0
_CLOSURE_EPSILON = 1e-4


@dataclass(frozen=True, eq=False)
class IntensityMatrix:
    """12×12 per-day transition intensity matrix.

    Transitions are restricted to a band of at most three states per step;
    rows sum to zero.
    """

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64)
        if q.shape != (12, 12):
            raise ValueError("intensity matrix must be 12x12")
        off = q - np.diag(np.diag(q))
        if (off < 0).any():
            raise ValueError("off-diagonal intensities must be >= 0")
        h, j = np.indices(q.shape)
        if np.any(off[np.abs(h - j) > 3] != 0):
            raise ValueError("transitions beyond three states per step must have zero intensity")
        if np.max(np.abs(q.sum(axis=1))) > 1e-12:
            raise ValueError("rows must sum to zero")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_offdiagonal(cls, q: np.ndarray) -> "IntensityMatrix":
        q = np.array(q, dtype=np.float64)
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return cls(q)


def default_q0() -> IntensityMatrix:
    """The built-in baseline intensity calibration."""
    return IntensityMatrix.from_offdiagonal(np.array(_Q0_ROWS))


@dataclass
class SubjectDraw:
    """Per-subject trial quantities drawn before any outcome data."""

    arm: int
    frailty: float
    recruit_day: float
    dropout_day: float
    followup_day: float = float("nan")


def block_randomize(n: int, rng: np.random.Generator) -> np.ndarray:
    """Permuted-block treatment assignment with block length 4."""
    if n < 1:
        raise ValueError("n must be >= 1")
    blocks = [rng.permutation([0, 0, 1, 1]) for _ in range((n + 3) // 4)]
    return np.concatenate(blocks)[:n].astype(np.int64)


def draw_frailty(phi: float, rng: np.random.Generator) -> float:
    """Multiplicative subject effect with mean 1 and variance phi.

    ``phi = 0`` short-circuits to the constant 1 without consuming a draw.
    """
    if phi < 0:
        raise ValueError("phi must be >= 0")
    if phi == 0:
        return 1.0
    return float(rng.gamma(1.0 / phi, phi))


def s1_generate_subject(draw: SubjectDraw, effect: float, eta: float, nu: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Event times of one S1 subject on (0, followup).

    Inverts the conditional gap-time distribution recursively: given the
    previous event at t, the next time is
    ``(-log(1-W)/(U*eta*HR^Z) + t^nu)^(1/nu)`` with W uniform.  Stops at the
    first time reaching the follow-up limit.
    """
    rate = draw.frailty * eta * effect**draw.arm
    times = []
    t = 0.0
    while True:
        w = rng.random()
        t = (-math.log1p(-w) / rate + t**nu) ** (1.0 / nu)
        if t >= draw.followup_day:
            return np.array(times)
        times.append(t)


def _s1_next_time(prev: float, rate: float, nu: float, rng: np.random.Generator) -> float:
    w = rng.random()
    return (-math.log1p(-w) / rate + prev**nu) ** (1.0 / nu)


def s2_generate_visits(c: float, rng: np.random.Generator) -> np.ndarray:
    """Integer visit days: 84-day schedule with heavy-tailed jitter.

    The baseline day 1 is exact; later visits get integer noise from a
    noncentral-t(3.54, 0.25), built as normal/sqrt(chi2/df) and clamped to
    ±10 days, so consecutive days stay strictly increasing.  Visits pushed
    past ``c`` are dropped.
    """
    if c < 1:
        raise ValueError("follow-up must cover at least day 1")
    sched = np.arange(1.0, c + 1.0, _VISIT_SPACING)
    m = len(sched) - 1
    if m > 0:
        raw = (rng.standard_normal(m) + _NCP_NOISE) / np.sqrt(rng.chisquare(_DF_NOISE, m) / _DF_NOISE)
        noise = np.clip(np.round(raw), -_NOISE_CLAMP, _NOISE_CLAMP)
        sched[1:] += noise
    days = sched[sched <= c]
    return days.astype(np.int64)


def s2_build_q(z: int, u: float, effect: float, heterogeneity: str,
               q0: IntensityMatrix | None = None) -> IntensityMatrix:
    """Subject-specific intensity matrix.

    The treatment effect multiplies the upward (worsening) transition
    intensities; the frailty multiplies upward ones under ``U1`` and all
    off-diagonal ones under ``U2``.
    """
    if u <= 0 or effect <= 0:
        raise ValueError("frailty and effect must be positive")
    if heterogeneity not in ("U1", "U2"):
        raise ValueError(f"unknown heterogeneity {heterogeneity!r}")
    base = (q0 or default_q0()).q
    q = base - np.diag(np.diag(base))
    h, j = np.indices(q.shape)
    up = (j > h) & (j - h <= 3)
    if z == 1:
        q = np.where(up, q * effect, q)
    scaled = up if heterogeneity == "U1" else (h != j) & (np.abs(h - j) <= 3)
    q = np.where(scaled, q * u, q)
    return IntensityMatrix.from_offdiagonal(q)


def matrix_exp(q: IntensityMatrix, t: float) -> np.ndarray:
    """Transition probabilities over ``t`` days: exp(tQ), clipped to [0, 1]."""
    if t < 0:
        raise ValueError("t must be >= 0")
    p = expm(t * q.q)
    return np.clip(p, 0.0, 1.0)


class TransitionCache:
    """Memoizes row-cumulated transition matrices per (key, gap).

    Without frailty the matrix depends on the arm alone, so one cache entry
    serves every subject of that arm; with frailty the key is the subject.
    """

    def __init__(self):
        self._store: dict[tuple, np.ndarray] = {}

    def cumulative_rows(self, key, q: IntensityMatrix, dt: int) -> np.ndarray:
        full_key = (key, int(dt))
        hit = self._store.get(full_key)
        if hit is None:
            hit = np.cumsum(matrix_exp(q, float(dt)), axis=1)
            self._store[full_key] = hit
        return hit

    def __len__(self) -> int:
        return len(self._store)


def _sample_state(cum_row: np.ndarray, rng: np.random.Generator) -> int:
    return int(min(np.searchsorted(cum_row, rng.random(), side="right"), 11))


def s2_generate_panel(draw: SubjectDraw, visits: np.ndarray, baseline_probs: np.ndarray,
                      q: IntensityMatrix, rng: np.random.Generator,
                      subject_id: str = "1", cache: TransitionCache | None = None,
                      cache_key=None) -> EDSSPanel:
    """Ordinal disability scores of one subject along its visit days."""
    p = np.asarray(baseline_probs, dtype=float)
    p = p / p.sum()
    cache = cache if cache is not None else TransitionCache()
    cache_key = cache_key if cache_key is not None else id(q)
    state = _sample_state(np.cumsum(p), rng)
    states = [state]
    for dt in np.diff(visits):
        rows = cache.cumulative_rows(cache_key, q, int(dt))
        state = _sample_state(rows[state], rng)
        states.append(state)
    scores = state_to_score(np.array(states) + 1)
    return EDSSPanel(subject_id, draw.arm, visits, np.atleast_1d(scores), draw.frailty)


def apply_trial_design(recruit: np.ndarray, first_event: np.ndarray, dropout: np.ndarray,
                       cfg: ScenarioConfig) -> tuple[np.ndarray, float]:
    """Administrative censoring under the configured design.

    Event-driven: the study closes at the calendar day of the
    ``n_first_events``-th first event (a hair past it, so that event is kept);
    each subject's follow-up is the earlier of dropout and closure, measured
    from their recruitment.  Time-fixed: follow-up is dropout capped at the
    horizon, and the horizon stands in for the closure day.

    Returns (follow-up per subject, study duration).
    """
    if cfg.design == "TIME_FIXED":
        followup = np.minimum(dropout, cfg.horizon)
        return followup, float(cfg.horizon)
    observed = first_event <= dropout  # first event seen before dropout
    observed &= np.isfinite(first_event)
    n_seen = int(observed.sum())
    if n_seen < cfg.n_first_events:
        raise InsufficientEventsError(
            f"only {n_seen} first events available, need {cfg.n_first_events}")
    calendar = np.sort(recruit[observed] + first_event[observed])
    closure = float(calendar[cfg.n_first_events - 1]) + _CLOSURE_EPSILON
    if closure < cfg.end_recruit:
        raise RecruitOverrunError(
            f"target first events reached on day {closure:.1f}, before recruitment ends "
            f"({cfg.end_recruit:.0f})")
    followup = np.minimum(recruit + dropout, closure) - recruit
    return followup, closure


@dataclass(frozen=True)
class TrialSummary:
    """Per-trial aggregates used by the Monte-Carlo harness."""

    study_duration: float
    total_events: int
    first_events: int
    n_subjects: int
    n_dropped: int
    events_hist: str


def _hist_string(counts: np.ndarray) -> str:
    bc = np.bincount(counts)
    return ";".join(f"{k}:{bc[k]}" for k in range(len(bc)) if bc[k] > 0)


def _spawn_streams(seed, n: int):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(n + 1)
    return np.random.default_rng(children[0]), children[1:]


def generate_trial(cfg: ScenarioConfig, seed) -> tuple[RecurrentEventTable, list[EDSSPanel] | None, TrialSummary]:
    """One complete synthetic trial.

    Returns the analysis table, the (censored) score panels for S2 setups,
    and the trial summary.  ``seed`` may be an integer or a
    ``numpy.random.SeedSequence``.
    """
    if cfg.setup == "S1":
        return _generate_s1(cfg, seed)
    return _generate_s2(cfg, seed)


def _draw_subject_basics(cfg: ScenarioConfig, arm: int, rng: np.random.Generator,
                         integer_days: bool) -> SubjectDraw:
    frailty = draw_frailty(cfg.phi, rng)
    recruit = rng.uniform(0.0, cfg.end_recruit)
    if cfg.dropout_rate > 0:
        dropout = rng.exponential(1.0 / cfg.dropout_rate)
    else:
        dropout = math.inf
    if integer_days:
        recruit = float(np.round(recruit))
        dropout = max(1.0, float(np.round(min(dropout, _DROPOUT_CAP_DAYS))))
    return SubjectDraw(arm, frailty, recruit, dropout)


def _generate_s1(cfg: ScenarioConfig, seed):
    rng_trial, subject_seeds = _spawn_streams(seed, cfg.n)
    arms = block_randomize(cfg.n, rng_trial)
    rngs = [np.random.default_rng(s) for s in subject_seeds]
    draws: list[SubjectDraw] = []
    first = np.empty(cfg.n)
    for i in range(cfg.n):
        d = _draw_subject_basics(cfg, int(arms[i]), rngs[i], integer_days=False)
        rate = d.frailty * cfg.eta * cfg.effect**d.arm
        first[i] = _s1_next_time(0.0, rate, cfg.nu, rngs[i])
        draws.append(d)
    followup, duration = apply_trial_design(
        np.array([d.recruit_day for d in draws]), first,
        np.array([d.dropout_day for d in draws]), cfg)
    subjects = []
    for i, d in enumerate(draws):
        d.followup_day = float(followup[i])
        rate = d.frailty * cfg.eta * cfg.effect**d.arm
        times = []
        t = first[i]
        while t < d.followup_day:
            times.append(t)
            t = _s1_next_time(t, rate, cfg.nu, rngs[i])
        subjects.append((f"{i + 1:04d}", d.arm, times, d.followup_day, d.frailty))
    table = RecurrentEventTable.from_subject_events(subjects)
    return table, None, _summarize_trial(table, duration, n_dropped=0)


def _generate_s2(cfg: ScenarioConfig, seed):
    rng_trial, subject_seeds = _spawn_streams(seed, cfg.n)
    arms = block_randomize(cfg.n, rng_trial)
    rngs = [np.random.default_rng(s) for s in subject_seeds]
    endpoint_cfg = EndpointConfig(cfg.event_timing, cfg.confirm_weeks,
                                  cfg.reference, cfg.roving_period_weeks)
    baseline = DEFAULT_BASELINE_PROBS if cfg.baseline_probs is None else np.asarray(cfg.baseline_probs)
    q0 = default_q0() if cfg.q0 is None else IntensityMatrix(np.asarray(cfg.q0))
    cache = TransitionCache()
    time_fixed = cfg.design == "TIME_FIXED"

    draws: list[SubjectDraw] = []
    panels: list[EDSSPanel] = []
    flags: list[np.ndarray] = []
    first = np.full(cfg.n, np.nan)
    for i in range(cfg.n):
        d = _draw_subject_basics(cfg, int(arms[i]), rngs[i], integer_days=True)
        horizon = min(d.dropout_day, cfg.horizon) if time_fixed else d.dropout_day
        q = s2_build_q(d.arm, d.frailty, cfg.effect, cfg.heterogeneity, q0)
        key = ("arm", d.arm) if cfg.phi == 0 else ("subject", i)
        visits = s2_generate_visits(horizon, rngs[i])
        panel = s2_generate_panel(d, visits, baseline, q, rngs[i],
                                  subject_id=f"{i + 1:04d}", cache=cache, cache_key=key)
        f = derive_cdp(panel, endpoint_cfg)
        if f.any():
            first[i] = float(panel.visit_days[f == 1][0])
        draws.append(d)
        panels.append(panel)
        flags.append(f)

    followup, duration = apply_trial_design(
        np.array([d.recruit_day for d in draws]), first,
        np.array([d.dropout_day for d in draws]), cfg)

    subjects = []
    kept_panels: list[EDSSPanel] = []
    n_dropped = 0
    for i, (d, panel, f) in enumerate(zip(draws, panels, flags)):
        d.followup_day = float(followup[i])
        keep = panel.visit_days <= d.followup_day
        if not keep.any():
            n_dropped += 1
            continue
        days = panel.visit_days[keep]
        event_days = days[f[keep] == 1].astype(float)
        subjects.append((panel.subject_id, d.arm, event_days, float(days[-1]), d.frailty))
        kept_panels.append(EDSSPanel(panel.subject_id, panel.arm, days,
                                     panel.scores[keep], panel.frailty))
    table = RecurrentEventTable.from_subject_events(subjects)
    return table, kept_panels, _summarize_trial(table, duration, n_dropped)


def _summarize_trial(table: RecurrentEventTable, duration: float, n_dropped: int) -> TrialSummary:
    _, _, counts, _ = table.subject_counts()
    return TrialSummary(
        study_duration=float(duration),
        total_events=int(table.event.sum()),
        first_events=int((counts > 0).sum()),
        n_subjects=int(len(counts)),
        n_dropped=int(n_dropped),
        events_hist=_hist_string(counts),
    )
