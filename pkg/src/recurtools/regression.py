"""Likelihood-based estimation.

One partial-likelihood engine (Breslow tie handling) drives every
hazard/rate-type model here; the models differ only in how table rows are
mapped to risk sets, baseline strata, and coefficients:

================  ===============  ===========  ==============  ========
model             risk set         baseline     effect          variance
================  ===============  ===========  ==============  ========
COX (first ev.)   unrestricted     common       common          naive
AG                unrestricted     common       common          naive
LWYY              unrestricted     common       common          robust
PWP_CP            restricted       event rank   common or rank  naive
PCRB              restricted       event rank   common          robust
WLW               semi-restricted  event rank   rank            robust
LWA               semi-restricted  common       common          robust
================  ===============  ===========  ==============  ========

"Restricted" risk sets admit a subject to the rank-k stratum only after k−1
events (counting-process rows carry that structure already);
"semi-restricted" ones keep every subject at risk for all K ranks from time
zero, which is the rank-format layout.  Poisson and negative-binomial models
for subject-level counts with log-exposure offsets complete the set.

Because the treatment indicator is the single covariate and every baseline
stratum feeds exactly one coefficient, the Newton iterations decouple into
independent scalar problems — one per coefficient — each summing score and
information over its strata.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .data_model import FitResult, RecurrentEventTable, WLWTable, to_wlw
from .errors import DegenerateArmError, NoEventsError

_SCORE_TOL = 1e-8
_MAX_ITER = 50
_MAX_STEP = 5.0
_BETA_BOUND = 15.0

MODEL_IDS = ("COX", "POISSON", "NB", "AG", "LWYY", "PWP_CP", "PCRB", "WLW", "LWA")


@dataclass(frozen=True)
class PartialLikelihoodSpec:
    """How table rows become risk sets, strata, and coefficients.

    ``k`` caps the event rank used for event-specific effects (ranks beyond it
    pool into the last stratum) and sets the number of ranks when a
    counting-process table must first be re-expressed in rank format.
    """

    risk_set_kind: str = "UNRESTRICTED"
    baseline: str = "COMMON"
    effect: str = "COMMON"
    variance: str = "NAIVE"
    first_event_only: bool = False
    k: int | None = None

    _PAIRS = {
        ("UNRESTRICTED", "COMMON"),
        ("RESTRICTED", "EVENT_SPECIFIC"),
        ("SEMI_RESTRICTED", "EVENT_SPECIFIC"),
        ("SEMI_RESTRICTED", "COMMON"),
    }

    def __post_init__(self):
        if self.risk_set_kind not in ("UNRESTRICTED", "RESTRICTED", "SEMI_RESTRICTED"):
            raise ValueError(f"unknown risk_set_kind {self.risk_set_kind!r}")
        if self.baseline not in ("COMMON", "EVENT_SPECIFIC"):
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.effect not in ("COMMON", "EVENT_SPECIFIC"):
            raise ValueError(f"unknown effect {self.effect!r}")
        if self.variance not in ("NAIVE", "ROBUST"):
            raise ValueError(f"unknown variance {self.variance!r}")
        if (self.risk_set_kind, self.baseline) not in self._PAIRS:
            raise ValueError(f"unsupported combination {(self.risk_set_kind, self.baseline)}")
        if self.effect == "EVENT_SPECIFIC" and self.baseline != "EVENT_SPECIFIC":
            raise ValueError("event-specific effects need event-specific baselines")
        if self.first_event_only and (self.risk_set_kind != "UNRESTRICTED" or self.effect != "COMMON"):
            raise ValueError("first_event_only implies an unrestricted common-effect fit")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")


MODEL_SPECS: dict[str, PartialLikelihoodSpec] = {
    "COX": PartialLikelihoodSpec(first_event_only=True),
    "AG": PartialLikelihoodSpec(),
    "LWYY": PartialLikelihoodSpec(variance="ROBUST"),
    "PWP_CP": PartialLikelihoodSpec(risk_set_kind="RESTRICTED", baseline="EVENT_SPECIFIC"),
    "PCRB": PartialLikelihoodSpec(risk_set_kind="RESTRICTED", baseline="EVENT_SPECIFIC", variance="ROBUST"),
    "WLW": PartialLikelihoodSpec(risk_set_kind="SEMI_RESTRICTED", baseline="EVENT_SPECIFIC",
                                 effect="EVENT_SPECIFIC", variance="ROBUST"),
    "LWA": PartialLikelihoodSpec(risk_set_kind="SEMI_RESTRICTED", variance="ROBUST"),
}


def model_spec(model_id: str, k: int | None = None) -> PartialLikelihoodSpec:
    """Spec for a named hazard/rate model; ``k`` selects event-specific PWP
    effects or the rank count of the semi-restricted layouts."""
    base = MODEL_SPECS.get(model_id.upper())
    if base is None:
        raise ValueError(f"unknown partial-likelihood model {model_id!r}")
    if k is not None:
        effect = "EVENT_SPECIFIC" if model_id.upper() in ("PWP_CP", "WLW") else base.effect
        return PartialLikelihoodSpec(base.risk_set_kind, base.baseline, effect,
                                     base.variance, base.first_event_only, k)
    return base


# ---------------------------------------------------------------------------
# partial-likelihood engine


@dataclass
class _Stratum:
    coef: int
    times: np.ndarray      # distinct event times
    d: np.ndarray          # events per time
    dz: np.ndarray         # treated events per time
    y0: np.ndarray         # untreated at risk per time
    y1: np.ndarray         # treated at risk per time
    rows: np.ndarray       # row indices belonging to the stratum


class _PLData:
    """Rows (a, b] with event flag, arm, cluster, stratum, coefficient."""

    def __init__(self, a, b, e, z, cluster, stratum, coef):
        self.a, self.b, self.e, self.z = a, b, e, z
        self.cluster, self.stratum, self.coef = cluster, stratum, coef
        self.n_coef = int(coef.max()) + 1
        self.n_cluster = int(cluster.max()) + 1
        self.strata: list[_Stratum] = []
        for s in np.unique(stratum):
            rows = np.flatnonzero(stratum == s)
            eb = b[rows][e[rows] == 1]
            ez = z[rows][e[rows] == 1]
            times = np.unique(eb)
            d = np.zeros(len(times))
            dz = np.zeros(len(times))
            idx = np.searchsorted(times, eb)
            np.add.at(d, idx, 1.0)
            np.add.at(dz, idx, ez.astype(float))
            a0 = np.sort(a[rows][z[rows] == 0])
            b0 = np.sort(b[rows][z[rows] == 0])
            a1 = np.sort(a[rows][z[rows] == 1])
            b1 = np.sort(b[rows][z[rows] == 1])
            # at risk at t: entered strictly before t, not yet out (a < t <= b)
            y0 = np.searchsorted(a0, times, side="left") - np.searchsorted(b0, times, side="left")
            y1 = np.searchsorted(a1, times, side="left") - np.searchsorted(b1, times, side="left")
            self.strata.append(_Stratum(int(coef[rows[0]]), times, d, dz,
                                        y0.astype(float), y1.astype(float), rows))

    def by_coef(self, k: int) -> list[_Stratum]:
        return [s for s in self.strata if s.coef == k]


def _stratum_loglik(s: _Stratum, beta: float) -> float:
    x = math.exp(beta)
    return float(np.sum(beta * s.dz - s.d * np.log(s.y0 + s.y1 * x)))


def _stratum_score_info(s: _Stratum, beta: float) -> tuple[float, float]:
    x = math.exp(beta)
    s0 = s.y0 + s.y1 * x
    zbar = np.divide(s.y1 * x, s0, out=np.zeros_like(s0), where=s0 > 0)
    u = float(np.sum(s.dz - s.d * zbar))
    info = float(np.sum(s.d * zbar * (1.0 - zbar)))
    return u, info


def _build_pl_data(table: RecurrentEventTable | WLWTable, spec: PartialLikelihoodSpec) -> _PLData:
    if spec.risk_set_kind == "SEMI_RESTRICTED" and isinstance(table, RecurrentEventTable):
        table = to_wlw(table, spec.k or 4)
    if isinstance(table, WLWTable):
        if spec.risk_set_kind != "SEMI_RESTRICTED":
            raise ValueError("rank-format tables fit semi-restricted models only")
        cluster, _ = table.subject_codes()
        a = np.zeros(len(table))
        b = table.tstop.astype(float)
        e = table.event.astype(np.int64)
        z = table.arm.astype(np.int64)
        rank = table.sevent - 1
        stratum = rank if spec.baseline == "EVENT_SPECIFIC" else np.zeros(len(table), dtype=np.int64)
        coef = rank if spec.effect == "EVENT_SPECIFIC" else np.zeros(len(table), dtype=np.int64)
    else:
        if spec.first_event_only:
            table = table.first_event_rows()
        cluster, _ = table.subject_codes()
        a = table.tstart.astype(float)
        b = table.tstop.astype(float)
        e = table.event.astype(np.int64)
        z = table.arm.astype(np.int64)
        if spec.baseline == "EVENT_SPECIFIC":
            if spec.effect == "EVENT_SPECIFIC":
                cap = spec.k if spec.k is not None else 3
                stratum = np.minimum(table.sevent, cap) - 1
            else:
                stratum = table.sevent - 1
            coef = stratum if spec.effect == "EVENT_SPECIFIC" else np.zeros(len(table), dtype=np.int64)
        else:
            stratum = np.zeros(len(table), dtype=np.int64)
            coef = np.zeros(len(table), dtype=np.int64)
    if e.sum() == 0:
        raise NoEventsError("no events in the data")
    return _PLData(a, b, e, z, cluster, stratum.astype(np.int64), coef.astype(np.int64))


def _newton(data: _PLData, k: int) -> tuple[float, float, int, bool, str]:
    """Maximize the coefficient-k log partial likelihood.

    Returns (beta, information, iterations, converged, message).
    """
    strata = data.by_coef(k)
    beta = 0.0
    message = ""
    for it in range(1, _MAX_ITER + 1):
        u = info = 0.0
        for s in strata:
            us, inf_s = _stratum_score_info(s, beta)
            u += us
            info += inf_s
        if abs(u) <= _SCORE_TOL:
            return beta, info, it - 1, True, message
        if info <= 0.0:
            return beta, info, it - 1, False, "information vanished away from the optimum"
        step = u / info
        step = math.copysign(min(abs(step), _MAX_STEP), step)
        ll_old = sum(_stratum_loglik(s, beta) for s in strata)
        # Accept anything that does not genuinely decrease the likelihood:
        # near the optimum the comparison sits at rounding-noise level, and
        # rejecting those steps would stall the iteration short of the root.
        slack = 1e-10 * (1.0 + abs(ll_old))
        cand = beta + step
        for _ in range(30):
            if sum(_stratum_loglik(s, cand) for s in strata) >= ll_old - slack:
                break
            step /= 2.0
            cand = beta + step
        beta = cand
        if abs(beta) > _BETA_BOUND:
            beta = math.copysign(_BETA_BOUND, beta)
            u = info = 0.0
            for s in strata:
                us, inf_s = _stratum_score_info(s, beta)
                u += us
                info += inf_s
            return beta, info, it, False, "MONOTONE_LIKELIHOOD"
    u = info = 0.0
    for s in strata:
        us, inf_s = _stratum_score_info(s, beta)
        u += us
        info += inf_s
    return beta, info, _MAX_ITER, False, "NON_CONVERGENCE"


def _cluster_residuals(data: _PLData, beta: np.ndarray) -> np.ndarray:
    """Per-cluster score residuals, one column per coefficient."""
    r = np.zeros((data.n_cluster, data.n_coef))
    for s in data.strata:
        x = math.exp(beta[s.coef])
        s0 = s.y0 + s.y1 * x
        zbar = np.divide(s.y1 * x, s0, out=np.zeros_like(s0), where=s0 > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            inc = np.where(s0 > 0, s.d / s0, 0.0)
        cum_a = np.concatenate(([0.0], np.cumsum(inc)))
        cum_b = np.concatenate(([0.0], np.cumsum(inc * zbar)))
        rows = s.rows
        ia = np.searchsorted(s.times, data.a[rows], side="right")
        ib = np.searchsorted(s.times, data.b[rows], side="right")
        zr = data.z[rows].astype(float)
        expo = np.exp(beta[s.coef] * zr) * (zr * (cum_a[ib] - cum_a[ia]) - (cum_b[ib] - cum_b[ia]))
        contrib = -expo
        ev = data.e[rows] == 1
        je = np.searchsorted(s.times, data.b[rows[ev]])
        contrib[ev] += zr[ev] - zbar[je]
        np.add.at(r[:, s.coef], data.cluster[rows], contrib)
    return r


def _pl_core(table, spec: PartialLikelihoodSpec) -> dict:
    data = _build_pl_data(table, spec)
    kk = data.n_coef
    beta = np.zeros(kk)
    info = np.zeros(kk)
    iters = 0
    converged = True
    messages = []
    for k in range(kk):
        bk, ik, it, ok, msg = _newton(data, k)
        beta[k], info[k] = bk, ik
        iters = max(iters, it)
        converged &= ok
        if msg:
            messages.append(f"coef {k + 1}: {msg}" if kk > 1 else msg)
    with np.errstate(divide="ignore"):
        se_naive = np.where(info > 0, 1.0 / np.sqrt(np.where(info > 0, info, 1.0)), np.inf)
    se_robust = None
    if spec.variance == "ROBUST":
        resid = _cluster_residuals(data, beta)
        meat = np.sum(resid**2, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            se_robust = np.where(info > 0, np.sqrt(meat) / np.where(info > 0, info, 1.0), np.inf)
    loglik = sum(_stratum_loglik(s, beta[s.coef]) for s in data.strata)
    return {
        "beta": beta, "se_naive": se_naive, "se_robust": se_robust,
        "loglik": float(loglik), "iterations": iters,
        "converged": converged, "message": "; ".join(messages),
    }


def _wald(beta: np.ndarray, se: np.ndarray):
    zq = stats.norm.ppf(0.975)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(se > 0, np.abs(beta) / se, np.nan)
    p = 2.0 * stats.norm.sf(ratio)
    # an infinite SE (clamped divergent coefficient) legitimately yields
    # limits of 0 and inf
    with np.errstate(over="ignore"):
        return np.exp(beta), np.exp(beta - zq * se), np.exp(beta + zq * se), p


def pl_fit(table: RecurrentEventTable | WLWTable, spec: PartialLikelihoodSpec,
           model_id: str = "") -> FitResult:
    """Fit one partial-likelihood model.

    Newton-Raphson from zero with step-halving; convergence means the score
    drops below 1e-8 in absolute value.  A diverging coefficient is clamped at
    ±15 and reported unconverged rather than raised, so Monte-Carlo loops can
    count such replicates.  Confidence limits and p-values are Wald-type on
    the log scale and use the robust (cluster) standard error whenever the
    spec requests one.
    """
    core = _pl_core(table, spec)
    se_inf = core["se_naive"] if core["se_robust"] is None else core["se_robust"]
    effect, lo, hi, p = _wald(core["beta"], se_inf)
    if not model_id:
        model_id = "PL"
    return FitResult(
        model_id=model_id, beta=core["beta"], se_naive=core["se_naive"],
        se_robust=core["se_robust"], effect=effect, ci_low=lo, ci_high=hi,
        p_value=p, converged=core["converged"], loglik=core["loglik"],
        iterations=core["iterations"], message=core["message"],
    )


def fit_ag_lwyy(table: RecurrentEventTable) -> tuple[FitResult, FitResult]:
    """One shared fit reported under both its names.

    The two models solve the same estimating equation, so the estimates are
    identical by construction; they differ only in which standard error backs
    the inference (model-based vs cluster-robust).
    """
    core = _pl_core(table, MODEL_SPECS["LWYY"])
    eff_n, lo_n, hi_n, p_n = _wald(core["beta"], core["se_naive"])
    eff_r, lo_r, hi_r, p_r = _wald(core["beta"], core["se_robust"])
    common = dict(beta=core["beta"], se_naive=core["se_naive"], loglik=core["loglik"],
                  iterations=core["iterations"], converged=core["converged"],
                  message=core["message"])
    ag = FitResult(model_id="AG", se_robust=None, effect=eff_n, ci_low=lo_n,
                   ci_high=hi_n, p_value=p_n, **common)
    lwyy = FitResult(model_id="LWYY", se_robust=core["se_robust"], effect=eff_r,
                     ci_low=lo_r, ci_high=hi_r, p_value=p_r, **common)
    return ag, lwyy


def score_gradient_check(table, spec: PartialLikelihoodSpec, beta) -> float:
    """Largest gap between the analytic score and central finite differences."""
    data = _build_pl_data(table, spec)
    beta = np.broadcast_to(np.atleast_1d(np.asarray(beta, dtype=float)), (data.n_coef,)).copy()
    h = 1e-5
    worst = 0.0
    for k in range(data.n_coef):
        u = sum(_stratum_score_info(s, beta[k])[0] for s in data.by_coef(k))
        up = sum(_stratum_loglik(s, beta[k] + h) for s in data.by_coef(k))
        dn = sum(_stratum_loglik(s, beta[k] - h) for s in data.by_coef(k))
        worst = max(worst, abs(u - (up - dn) / (2 * h)))
    return worst


def breslow_baseline(table, spec: PartialLikelihoodSpec, beta=None) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Cumulative baseline estimate per stratum at the fitted coefficients."""
    data = _build_pl_data(table, spec)
    if beta is None:
        beta = _pl_core(table, spec)["beta"]
    beta = np.broadcast_to(np.atleast_1d(np.asarray(beta, dtype=float)), (data.n_coef,))
    out = {}
    for i, s in enumerate(data.strata):
        x = math.exp(beta[s.coef])
        s0 = s.y0 + s.y1 * x
        with np.errstate(divide="ignore", invalid="ignore"):
            inc = np.where(s0 > 0, s.d / s0, 0.0)
        out[i] = (s.times.copy(), np.cumsum(inc))
    return out


# ---------------------------------------------------------------------------
# count models


@dataclass(frozen=True, eq=False)
class CountData:
    """Per-subject event counts with follow-up exposure in days."""

    arm: np.ndarray
    count: np.ndarray
    exposure: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "arm", np.asarray(self.arm, dtype=np.int64))
        object.__setattr__(self, "count", np.asarray(self.count, dtype=np.int64))
        object.__setattr__(self, "exposure", np.asarray(self.exposure, dtype=np.float64))
        if not (len(self.arm) == len(self.count) == len(self.exposure)):
            raise ValueError("arm, count and exposure must have equal length")
        if (self.count < 0).any():
            raise ValueError("counts must be non-negative")
        if (self.exposure <= 0).any():
            raise ValueError("exposures must be positive")

    def __len__(self) -> int:
        return len(self.arm)

    @classmethod
    def from_table(cls, table: RecurrentEventTable) -> "CountData":
        _, arm, count, exposure = table.subject_counts()
        return cls(arm, count, exposure)


def _poisson_loglik(count, mu) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(count > 0, count * np.log(mu), 0.0)
    return float(np.sum(term - mu - gammaln(count + 1.0)))


def poisson_fit(data: CountData, model_id: str = "POISSON") -> FitResult:
    """Two-group Poisson rate model with log-exposure offset, in closed form.

    An arm without any event makes the rate ratio collapse to 0 or diverge;
    the log estimate is then clamped at ±15 and flagged unconverged with NaN
    inference, mirroring the monotone-likelihood convention of the
    partial-likelihood engine.
    """
    z1 = data.arm == 1
    z0 = data.arm == 0
    if not z0.any() or not z1.any():
        raise DegenerateArmError("both arms are required")
    n1, c1 = float(data.count[z1].sum()), float(data.exposure[z1].sum())
    n0, c0 = float(data.count[z0].sum()), float(data.exposure[z0].sum())
    if n0 + n1 == 0:
        raise NoEventsError("no events in either arm")
    zero_arm = n0 == 0 or n1 == 0
    if zero_arm:
        b0 = math.log(n0 / c0) if n0 > 0 else -_BETA_BOUND
        b1 = _BETA_BOUND if n0 == 0 else -_BETA_BOUND
        se = np.array([np.nan])
        beta = np.array([b1])
        mu = data.exposure * np.exp(b0 + b1 * data.arm)
        return FitResult(
            model_id=model_id, beta=beta, se_naive=se, se_robust=None,
            effect=np.exp(beta), ci_low=np.array([np.nan]), ci_high=np.array([np.nan]),
            p_value=np.array([np.nan]), converged=False,
            loglik=_poisson_loglik(data.count, mu), intercept=b0,
            message="ZERO_COUNT_ARM",
        )
    b0 = math.log(n0 / c0)
    b1 = math.log((n1 / c1) / (n0 / c0))
    se = np.array([math.sqrt(1.0 / n1 + 1.0 / n0)])
    beta = np.array([b1])
    effect, lo, hi, p = _wald(beta, se)
    mu = data.exposure * np.exp(b0 + b1 * data.arm)
    return FitResult(
        model_id=model_id, beta=beta, se_naive=se, se_robust=None, effect=effect,
        ci_low=lo, ci_high=hi, p_value=p, converged=True,
        loglik=_poisson_loglik(data.count, mu), intercept=b0,
    )


def _nb_loglik(count, mu, phi) -> float:
    n = count.astype(float)
    max_n = int(count.max())
    j = np.arange(max_n, dtype=float)
    mask = j[None, :] < n[:, None]
    head = np.sum(np.log1p(phi * j)[None, :] * mask)
    return float(head + np.sum(-gammaln(n + 1.0) + n * np.log(mu) - (n + 1.0 / phi) * np.log1p(phi * mu)))


def _nb_phi_score(count, mu, phi, j, jsq):
    """Score in phi and its derivative, at fixed means."""
    n = count.astype(float)
    mask = j[None, :] < n[:, None]
    denom_j = 1.0 + phi * j
    a = np.sum((j / denom_j)[None, :] * mask)
    da = -np.sum((jsq / denom_j**2)[None, :] * mask)
    denom = 1.0 + phi * mu
    log_term = np.log1p(phi * mu)
    u = a - np.sum(mu * (n + 1.0 / phi) / denom) + np.sum(log_term) / phi**2
    du = (da
          + np.sum(mu * (denom / phi**2 + (n + 1.0 / phi) * mu) / denom**2)
          - 2.0 * np.sum(log_term) / phi**3
          + np.sum(mu / denom) / phi**2)
    return float(u), float(du)


def nb_fit(data: CountData, fixed_phi: float | None = None) -> FitResult:
    """Negative-binomial rate model with log-exposure offset.

    Maximizes the joint likelihood in (intercept, log rate ratio, dispersion)
    by alternating Fisher steps in the regression part with damped Newton
    steps in the dispersion.  When the data carry no overdispersion signal
    (the moment check at the Poisson fit is non-positive) or the iteration
    leaves the admissible dispersion range, the fit falls back to the Poisson
    model and says so via ``fallback_used`` — the estimates are then exactly
    the Poisson ones.  ``fixed_phi`` pins the dispersion instead of
    estimating it; 0 reproduces :func:`poisson_fit` identically.
    """
    pois = poisson_fit(data, model_id="NB")
    if not pois.converged:
        return _as_fallback(pois)
    if fixed_phi is not None and fixed_phi == 0.0:
        return pois
    b0 = float(pois.intercept)
    b1 = float(pois.beta[0])
    n = data.count.astype(float)
    zf = data.arm.astype(float)
    mu = data.exposure * np.exp(b0 + b1 * zf)
    max_n = int(data.count.max())
    j = np.arange(max_n, dtype=float)
    jsq = j**2
    if fixed_phi is None:
        t_stat = float(np.sum((n - mu) ** 2 - n))
        if t_stat <= 0.0:
            return _as_fallback(pois)
        phi = min(max(t_stat / float(np.sum(mu**2)), 1e-6), 1e3)
    else:
        phi = float(fixed_phi)
    estimate_phi = fixed_phi is None
    converged = False
    iterations = 0
    for iterations in range(1, 101):
        mu = data.exposure * np.exp(b0 + b1 * zf)
        denom = 1.0 + phi * mu
        u0 = float(np.sum((n - mu) / denom))
        u1 = float(np.sum(zf * (n - mu) / denom))
        if estimate_phi:
            u_phi, du_phi = _nb_phi_score(data.count, mu, phi, j, jsq)
        else:
            u_phi, du_phi = 0.0, -1.0
        if abs(u0) <= _SCORE_TOL and abs(u1) <= _SCORE_TOL and abs(u_phi) <= _SCORE_TOL:
            converged = True
            break
        w = mu / denom
        s_all, s_trt = float(np.sum(w)), float(np.sum(zf * w))
        det = s_all * s_trt - s_trt**2
        if det <= 0:
            break
        d0 = (s_trt * u0 - s_trt * u1) / det
        d1 = (-s_trt * u0 + s_all * u1) / det
        b0 += d0
        b1 += d1
        if abs(b1) > _BETA_BOUND or abs(b0) > _BETA_BOUND:
            break
        if estimate_phi:
            if du_phi < 0 and math.isfinite(du_phi):
                phi_new = phi - u_phi / du_phi
            else:
                phi_new = phi / 2.0
            if not math.isfinite(phi_new) or phi_new <= 0:
                phi_new = phi / 2.0
            phi = phi_new
            if not (1e-8 < phi < 1e3):
                break
    if not converged:
        return _as_fallback(pois)
    mu = data.exposure * np.exp(b0 + b1 * zf)
    w = mu / (1.0 + phi * mu)
    s1w, s0w = float(np.sum(w[data.arm == 1])), float(np.sum(w[data.arm == 0]))
    se = np.array([math.sqrt(1.0 / s1w + 1.0 / s0w)])
    beta = np.array([b1])
    effect, lo, hi, p = _wald(beta, se)
    return FitResult(
        model_id="NB", beta=beta, se_naive=se, se_robust=None, effect=effect,
        ci_low=lo, ci_high=hi, p_value=p, converged=True,
        loglik=_nb_loglik(data.count, mu, phi) if phi > 0 else _poisson_loglik(data.count, mu),
        iterations=iterations, dispersion=phi, intercept=b0,
    )


def _as_fallback(pois: FitResult) -> FitResult:
    return FitResult(
        model_id="NB", beta=pois.beta, se_naive=pois.se_naive, se_robust=None,
        effect=pois.effect, ci_low=pois.ci_low, ci_high=pois.ci_high,
        p_value=pois.p_value, converged=pois.converged, fallback_used=True,
        loglik=pois.loglik, iterations=pois.iterations, dispersion=0.0,
        intercept=pois.intercept, message=pois.message,
    )


def fit_model(model_id: str, table, k: int | None = None) -> FitResult:
    """Dispatch a model name to its estimator.

    Hazard/rate models run through the partial-likelihood engine; POISSON and
    NB aggregate the table to per-subject counts first.
    """
    mid = model_id.upper().replace("-", "_")
    if mid == "POISSON":
        return poisson_fit(table if isinstance(table, CountData) else CountData.from_table(table))
    if mid == "NB":
        return nb_fit(table if isinstance(table, CountData) else CountData.from_table(table))
    return pl_fit(table, model_spec(mid, k), model_id=mid)
