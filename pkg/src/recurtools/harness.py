"""Monte-Carlo scenario runner.

Each replicate simulates one trial and fits the four headline models — COX
(time to first event), NB (subject counts), AG and LWYY (full recurrent
table, shared estimate, model-based vs robust variance) — producing four rows
per replicate.  Failures stay contained: a failed trial or fit yields rows
flagged ``converged=False`` that the aggregation excludes (and counts), with
one exception — an NB fit falling back to Poisson is a regular, converged
result carrying ``fallback_used=True``.

Replicate seeds are spawned from the master seed by index before any work is
scheduled, so results are identical no matter how many worker processes run
them.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
import pandas as pd

from .data_model import ScenarioConfig
from .errors import RecurtoolsError, TooFewReplicatesError
from .regression import MODEL_SPECS, CountData, fit_ag_lwyy, nb_fit, pl_fit
from .simgen import TrialSummary, generate_trial

HARNESS_MODELS = ("COX", "NB", "AG", "LWYY")


@dataclass
class ReplicateResult:
    """One model's outcome on one simulated trial, flattened for CSV."""

    scenario: str
    replicate: int
    model: str
    beta: float
    se: float
    se_naive: float
    se_robust: float
    effect: float
    ci_low: float
    ci_high: float
    p_value: float
    converged: bool
    fallback_used: bool
    dispersion: float
    message: str
    study_duration: float
    total_events: int
    first_events: int
    n_subjects: int
    n_dropped: int
    events_hist: str

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EvaluationSummary:
    """Aggregate measures for one (scenario, model) cell.

    ``mean_effect`` is the effect-scale value of the average log estimate;
    bias and MSE are on the log scale; ``se`` is the sampling SD of the
    estimates while ``see`` averages the models' own standard errors.  When no
    true effect is known (multistate scenarios), bias, MSE and coverage are
    NaN.
    """

    scenario: str
    model: str
    n_converged: int
    n_failed: int
    mean_effect: float
    bias: float
    mse: float
    se: float
    see: float
    coverage: float
    rejection_rate: float
    fallback_rate: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _result_row(scenario: str, replicate: int, model: str, fit, trial: TrialSummary) -> ReplicateResult:
    return ReplicateResult(
        scenario=scenario, replicate=replicate, model=model,
        beta=float(fit.beta[0]), se=float(fit.se[0]), se_naive=float(fit.se_naive[0]),
        se_robust=float("nan") if fit.se_robust is None else float(fit.se_robust[0]),
        effect=float(fit.effect[0]), ci_low=float(fit.ci_low[0]), ci_high=float(fit.ci_high[0]),
        p_value=float(fit.p_value[0]), converged=bool(fit.converged),
        fallback_used=bool(fit.fallback_used),
        dispersion=float("nan") if fit.dispersion is None else float(fit.dispersion),
        message=fit.message,
        study_duration=trial.study_duration, total_events=trial.total_events,
        first_events=trial.first_events, n_subjects=trial.n_subjects,
        n_dropped=trial.n_dropped, events_hist=trial.events_hist,
    )


def _failure_row(scenario: str, replicate: int, model: str, message: str,
                 trial: TrialSummary | None = None) -> ReplicateResult:
    nan = float("nan")
    t = trial or TrialSummary(nan, 0, 0, 0, 0, "")
    return ReplicateResult(
        scenario=scenario, replicate=replicate, model=model,
        beta=nan, se=nan, se_naive=nan, se_robust=nan, effect=nan,
        ci_low=nan, ci_high=nan, p_value=nan, converged=False,
        fallback_used=False, dispersion=nan, message=message,
        study_duration=t.study_duration, total_events=t.total_events,
        first_events=t.first_events, n_subjects=t.n_subjects,
        n_dropped=t.n_dropped, events_hist=t.events_hist,
    )


def _replicate_worker(task) -> list[ReplicateResult]:
    """Simulate one trial and fit all harness models (must stay picklable)."""
    cfg, scenario, idx, seed = task
    try:
        table, _, trial = generate_trial(cfg, seed)
    except RecurtoolsError as e:
        return [_failure_row(scenario, idx, m, e.code) for m in HARNESS_MODELS]
    rows = []
    try:
        fit = pl_fit(table, MODEL_SPECS["COX"], model_id="COX")
        rows.append(_result_row(scenario, idx, "COX", fit, trial))
    except RecurtoolsError as e:
        rows.append(_failure_row(scenario, idx, "COX", e.code, trial))
    try:
        fit = nb_fit(CountData.from_table(table))
        rows.append(_result_row(scenario, idx, "NB", fit, trial))
    except RecurtoolsError as e:
        rows.append(_failure_row(scenario, idx, "NB", e.code, trial))
    try:
        ag, lwyy = fit_ag_lwyy(table)
        rows.append(_result_row(scenario, idx, "AG", ag, trial))
        rows.append(_result_row(scenario, idx, "LWYY", lwyy, trial))
    except RecurtoolsError as e:
        rows.append(_failure_row(scenario, idx, "AG", e.code, trial))
        rows.append(_failure_row(scenario, idx, "LWYY", e.code, trial))
    return rows


def replicate_frame(results: list[ReplicateResult]) -> pd.DataFrame:
    return pd.DataFrame([r.as_dict() for r in results])


def load_replicates(path) -> list[ReplicateResult]:
    """Read back a persisted replicates.csv with exact float round-trip."""
    df = pd.read_csv(path, keep_default_na=False, na_values=[""])
    out = []
    for rec in df.to_dict("records"):
        rec["converged"] = str(rec["converged"]) == "True"
        rec["fallback_used"] = str(rec["fallback_used"]) == "True"
        rec["message"] = str(rec.get("message", "") or "")
        rec["events_hist"] = str(rec.get("events_hist", "") or "")
        for f in fields(ReplicateResult):
            if f.type == "float":
                rec[f.name] = float(rec[f.name]) if rec[f.name] != "" else float("nan")
            elif f.type == "int":
                rec[f.name] = int(rec[f.name])
        out.append(ReplicateResult(**rec))
    return out


def summarize(results: list[ReplicateResult], true_beta: float | None = None,
              alpha: float = 0.05) -> list[EvaluationSummary]:
    """Aggregate replicate rows into the evaluation measures.

    Only converged rows enter the averages; each cell needs at least two of
    them.  Rejection compares the two-sided p-value against ``alpha``;
    coverage asks whether the effect-scale interval holds the true effect.
    """
    scenarios = list(dict.fromkeys(r.scenario for r in results))
    models = list(dict.fromkeys(r.model for r in results))
    out = []
    for scen in scenarios:
        for model in models:
            rows = [r for r in results if r.scenario == scen and r.model == model]
            if not rows:
                continue
            ok = [r for r in rows if r.converged]
            if len(ok) < 2:
                raise TooFewReplicatesError(
                    f"{scen}/{model}: {len(ok)} converged replicates, need at least 2")
            beta = np.array([r.beta for r in ok])
            see = float(np.mean([r.se for r in ok]))
            p = np.array([r.p_value for r in ok])
            if true_beta is None:
                bias = mse = coverage = float("nan")
            else:
                bias = float(np.mean(beta) - true_beta)
                mse = float(np.mean((beta - true_beta) ** 2))
                eff = math.exp(true_beta)
                lo = np.array([r.ci_low for r in ok])
                hi = np.array([r.ci_high for r in ok])
                coverage = float(np.mean((lo <= eff) & (eff <= hi)))
            out.append(EvaluationSummary(
                scenario=scen, model=model, n_converged=len(ok),
                n_failed=len(rows) - len(ok),
                mean_effect=float(np.exp(np.mean(beta))),
                bias=bias, mse=mse,
                se=float(np.std(beta, ddof=1)),
                see=see, coverage=coverage,
                rejection_rate=float(np.mean(p <= alpha)),
                fallback_rate=float(np.mean([r.fallback_used for r in ok])),
            ))
    return out


def summary_frame(summaries: list[EvaluationSummary]) -> pd.DataFrame:
    return pd.DataFrame([s.as_dict() for s in summaries])


def _write_config_echo(path, cfg: ScenarioConfig, n_replicates: int, master_seed: int,
                       threads: int) -> None:
    lines = [f"{k} = {v}" for k, v in cfg.to_flat_dict().items()]
    lines += [f"replicates = {n_replicates}", f"seed = {master_seed}", f"threads = {threads}"]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run_scenario(cfg: ScenarioConfig, n_replicates: int, master_seed: int,
                 threads: int = 1, out_dir: str | None = None,
                 scenario_name: str | None = None, alpha: float = 0.05,
                 ) -> tuple[list[ReplicateResult], list[EvaluationSummary]]:
    """Simulate and fit ``n_replicates`` trials, then aggregate.

    Deterministic for a given (cfg, master_seed) whatever ``threads`` is.
    With ``out_dir`` set, writes ``replicates.csv`` (appending every 100
    replicates so long runs leave partial results), ``summary.csv``, and
    ``config.echo``.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    name = scenario_name or cfg.name or f"{cfg.setup}/custom"
    seeds = np.random.SeedSequence(master_seed).spawn(n_replicates)
    tasks = [(cfg, name, i, seeds[i]) for i in range(n_replicates)]
    rep_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_config_echo(os.path.join(out_dir, "config.echo"), cfg, n_replicates,
                           master_seed, threads)
        rep_path = os.path.join(out_dir, "replicates.csv")
        if os.path.exists(rep_path):
            os.remove(rep_path)
    results: list[ReplicateResult] = []
    flushed = 0

    def _flush(force: bool = False) -> None:
        nonlocal flushed
        if rep_path is None:
            return
        done = len(results) // (4 * 100) * (4 * 100)
        upto = len(results) if force else done
        if upto > flushed:
            frame = replicate_frame(results[flushed:upto])
            frame.to_csv(rep_path, index=False, float_format="%.17g",
                         mode="a", header=flushed == 0)
            flushed = upto

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for rows in pool.map(_replicate_worker, tasks, chunksize=4):
                results.extend(rows)
                _flush()
    else:
        for task in tasks:
            results.extend(_replicate_worker(task))
            _flush()
    _flush(force=True)
    summaries = summarize(results, cfg.true_beta, alpha)
    if out_dir is not None:
        summary_frame(summaries).to_csv(os.path.join(out_dir, "summary.csv"),
                                        index=False, float_format="%.17g")
    return results, summaries
