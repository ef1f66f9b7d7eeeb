"""Command-line interface.

One executable, eight subcommands: simulate a single trial, run a replicated
study, fit a model to a CSV table, derive progression events from score
panels, estimate mean cumulative functions, compute sample sizes, list the
built-in scenarios, and validate input files.

Every randomized subcommand takes an explicit ``--seed``; identical
invocations produce byte-identical outputs.  Exit codes: 0 success, 1 usage
error, 2 data/validation error, 3 numerical failure.
"""
from __future__ import annotations

import logging
import math
import os
import sys
from dataclasses import dataclass, replace

import click
import pandas as pd

from .data_model import (
    ScenarioConfig,
    WLW_CSV_COLUMNS,
    EDSS_CSV_COLUMNS,
    RecurrentEventTable,
    read_edss_csv,
    read_recurrent_csv,
    read_wlw_csv,
    validate_table,
    validate_wlw,
    write_edss_csv,
    write_recurrent_csv,
)
from .design import CensoringModel, RateModel, lwyy_sample_size, nb_sample_size, schoenfeld_events
from .endpoint import EndpointConfig, derive_cdp
from .errors import DataError, NonConvergenceError, NumericError
from .harness import run_scenario, summary_frame
from .nonparam import cmf, cmf_test
from .regression import MODEL_IDS, fit_model
from .simgen import generate_trial

log = logging.getLogger("recurtools")

_FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# scenario library


@dataclass(frozen=True)
class ScenarioLibraryEntry:
    """A named, fully specified simulation scenario."""

    name: str
    config: ScenarioConfig


def _build_library() -> dict[str, ScenarioLibraryEntry]:
    effects = (("effect", 0.7), ("noeffect", 1.0))
    frailty = (("homo", 0.0), ("hetero1", 0.15), ("hetero2", 1.0))
    out: dict[str, ScenarioLibraryEntry] = {}
    for setup in ("S1", "S2"):
        for elabel, hr in effects:
            for flabel, phi in frailty:
                name = f"{setup}/PPMS/{elabel}/{flabel}"
                cfg = ScenarioConfig(setup=setup, effect=hr, phi=phi, name=name)
                out[name] = ScenarioLibraryEntry(name, cfg)
    return out


SCENARIO_LIBRARY = _build_library()


# ---------------------------------------------------------------------------
# helpers


def _read_flat_config(path: str) -> dict[str, str]:
    """Parse a ``key = value`` file, ignoring blanks and ``#`` comments."""
    mapping: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, _, value = text.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping


def _sniff_columns(path: str) -> list[str]:
    with open(path) as fh:
        header = fh.readline().strip()
    return [c.strip() for c in header.split(",")]


def _load_event_data(path: str):
    """Read a recurrent or rank-format event table, plus its validation report."""
    if set(_sniff_columns(path)) == set(WLW_CSV_COLUMNS):
        table = read_wlw_csv(path)
        return table, validate_wlw(table)
    table = read_recurrent_csv(path)
    return table, validate_table(table)


def _write_text(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w") as fh:
            fh.write(text)
        log.info("wrote %s", out)


def _scenario_overrides(cfg: ScenarioConfig, **kwargs) -> ScenarioConfig:
    upper = ("setup", "design", "heterogeneity", "event_timing", "reference")
    overrides = {}
    for key, value in kwargs.items():
        if value is None:
            continue
        overrides[key] = value.upper() if key in upper else value
    return replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# command group


@click.group(name="recurtools")
@click.option("--verbose", is_flag=True, help="Log progress details to stderr.")
def cli(verbose: bool) -> None:
    """Simulation and analysis toolbox for recurrent disability progression."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@cli.command()
@click.option("--scenario", "scenario_name", type=click.Choice(sorted(SCENARIO_LIBRARY)),
              default=None, help="Start from a library scenario.")
@click.option("--setup", type=click.Choice(["S1", "S2"], case_sensitive=False), default=None)
@click.option("--n", type=int, default=None, help="Subjects per trial.")
@click.option("--hr", "effect", type=float, default=None, help="Treatment effect ratio.")
@click.option("--phi", type=float, default=None, help="Frailty variance.")
@click.option("--design", type=click.Choice(["EVENT_DRIVEN", "TIME_FIXED"], case_sensitive=False),
              default=None)
@click.option("--n-first-events", type=int, default=None)
@click.option("--fixed-horizon", type=float, default=None)
@click.option("--dropout-rate", type=float, default=None)
@click.option("--end-recruit", type=float, default=None)
@click.option("--eta", type=float, default=None)
@click.option("--nu", type=float, default=None)
@click.option("--heterogeneity", type=click.Choice(["U1", "U2"], case_sensitive=False), default=None)
@click.option("--timing", "event_timing", type=click.Choice(["CONFIRMATION", "ONSET"], case_sensitive=False),
              default=None)
@click.option("--confirm-weeks", type=int, default=None)
@click.option("--reference", type=click.Choice(["FIXED", "ROVING"], case_sensitive=False), default=None)
@click.option("--roving-weeks", "roving_period_weeks", type=int, default=None)
@click.option("--seed", type=int, required=True, help="RNG seed (required).")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Destination for the event-table CSV.")
@click.option("--edss-out", type=click.Path(dir_okay=False), default=None,
              help="Also write the simulated score panels (S2 only).")
def simulate(scenario_name, seed, out, edss_out, **overrides) -> None:
    """Simulate one trial and write its event table."""
    base = SCENARIO_LIBRARY[scenario_name].config if scenario_name else ScenarioConfig()
    cfg = _scenario_overrides(base, **overrides)
    table, panels, trial = generate_trial(cfg, seed)
    write_recurrent_csv(table, out)
    if edss_out is not None:
        if panels is None:
            raise click.UsageError("--edss-out applies to S2 setups only")
        write_edss_csv(panels, edss_out)
    click.echo(
        f"wrote {out}: {trial.n_subjects} subjects, {trial.total_events} events "
        f"({trial.first_events} first), duration {trial.study_duration:.2f} days"
    )
    if edss_out is not None:
        click.echo(f"wrote {edss_out}: score panels for {len(panels)} subjects")


@cli.command("simulate-study")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Flat key=value scenario file.")
@click.option("--scenario", "scenario_name", type=click.Choice(sorted(SCENARIO_LIBRARY)),
              default=None, help="Use a library scenario instead of --config.")
@click.option("--replicates", type=int, required=True)
@click.option("--threads", type=int, default=None,
              help="Worker processes (default: available parallelism).")
@click.option("--seed", type=int, required=True, help="Master RNG seed (required).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True,
              help="Output directory for replicates.csv, summary.csv, config.echo.")
def simulate_study(config_path, scenario_name, replicates, threads, seed, out_dir) -> None:
    """Run a replicated simulation study and aggregate the fits."""
    if (config_path is None) == (scenario_name is None):
        raise click.UsageError("provide exactly one of --config or --scenario")
    if config_path is not None:
        cfg = ScenarioConfig.from_flat_dict(_read_flat_config(config_path))
        name = cfg.name or os.path.splitext(os.path.basename(config_path))[0]
    else:
        cfg = SCENARIO_LIBRARY[scenario_name].config
        name = scenario_name
    threads = threads if threads is not None else (os.cpu_count() or 1)
    log.info("running %s: %d replicates on %d workers", name, replicates, threads)
    _, summaries = run_scenario(cfg, replicates, seed, threads=threads,
                                out_dir=out_dir, scenario_name=name)
    click.echo(summary_frame(summaries).to_string(index=False))
    click.echo(f"wrote {out_dir}/replicates.csv, summary.csv, config.echo")


@cli.command()
@click.option("--model", required=True,
              type=click.Choice(list(MODEL_IDS), case_sensitive=False))
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False))
@click.option("--k", type=int, default=None,
              help="Event-specific coefficient cap (PWP_CP) or rank count (WLW).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the result row here instead of stdout.")
def fit(model, data_path, k, out) -> None:
    """Fit one model to an event-table CSV and print the estimate row."""
    table, report = _load_event_data(data_path)
    if not report.ok:
        click.echo(str(report), err=True)
        raise DataError(f"{data_path} failed validation")
    result = fit_model(model, table, k=k)
    _write_text(result.to_frame().to_csv(index=False, float_format=_FLOAT_FMT), out)
    if not result.converged:
        raise NonConvergenceError(result.message or "estimate did not converge")


@cli.command()
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False),
              help="Score-panel CSV (one row per visit).")
@click.option("--timing", type=click.Choice(["CONFIRMATION", "ONSET"], case_sensitive=False),
              default="CONFIRMATION", show_default=True)
@click.option("--confirm-weeks", type=int, default=12, show_default=True)
@click.option("--reference", type=click.Choice(["FIXED", "ROVING"], case_sensitive=False),
              default="FIXED", show_default=True)
@click.option("--roving-weeks", type=int, default=24, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Destination for the derived event-table CSV.")
def derive(data_path, timing, confirm_weeks, reference, roving_weeks, out) -> None:
    """Derive confirmed-progression events from disability score panels."""
    panels = read_edss_csv(data_path)
    cfg = EndpointConfig(event_timing=timing.upper(), confirm_weeks=confirm_weeks,
                         reference=reference.upper(), roving_period_weeks=roving_weeks)
    subjects = []
    n_events = 0
    for panel in panels:
        flags = derive_cdp(panel, cfg)
        event_days = panel.visit_days[flags == 1].astype(float)
        n_events += len(event_days)
        subjects.append((panel.subject_id, panel.arm, event_days,
                         float(panel.visit_days[-1]), panel.frailty))
    table = RecurrentEventTable.from_subject_events(subjects)
    write_recurrent_csv(table, out)
    click.echo(f"wrote {out}: {len(panels)} subjects, {n_events} progression events "
               f"({cfg.label()})")


@cli.command()
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False))
@click.option("--by-arm", is_flag=True, help="One curve per treatment arm.")
@click.option("--test", "run_test", is_flag=True,
              help="Two-sample mean-function comparison instead of curves.")
@click.option("--tau", type=float, default=None, help="Truncation time for --test.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def mcf(data_path, by_arm, run_test, tau, out) -> None:
    """Mean cumulative function estimates (or the two-sample test) for a table."""
    table, report = _load_event_data(data_path)
    if not report.ok:
        click.echo(str(report), err=True)
        raise DataError(f"{data_path} failed validation")
    if not isinstance(table, RecurrentEventTable):
        raise DataError("mean cumulative functions need the counting-process table format")
    if run_test:
        stat, p = cmf_test(table, tau=tau)
        click.echo(f"statistic = {stat:.6f}, p = {p:.6f}")
        return
    frames = []
    if by_arm:
        for arm in (0, 1):
            sf = cmf(table._mask(table.arm == arm))
            frames.append(pd.DataFrame({"ARMCD": arm, "TIME": sf.jump_times,
                                        "ESTIMATE": sf.values, "VARIANCE": sf.variance}))
    else:
        sf = cmf(table)
        frames.append(pd.DataFrame({"TIME": sf.jump_times, "ESTIMATE": sf.values,
                                    "VARIANCE": sf.variance}))
    text = pd.concat(frames, ignore_index=True).to_csv(index=False, float_format=_FLOAT_FMT)
    _write_text(text, out)


@cli.group()
def samplesize() -> None:
    """Planning calculators."""


@samplesize.command("schoenfeld")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--power", type=float, default=0.8, show_default=True)
@click.option("--hr", type=float, required=True)
def samplesize_schoenfeld(alpha, power, hr) -> None:
    """Required first events for a two-arm time-to-event comparison."""
    res = schoenfeld_events(alpha, power, hr)
    click.echo(f"required first events: {res.raw:.2f} (planned: {res.n})")


@samplesize.command("nb")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--power", type=float, default=0.8, show_default=True)
@click.option("--hr", type=float, required=True, help="Alternative rate ratio.")
@click.option("--hr-null", type=float, default=1.0, show_default=True)
@click.option("--base-rate", type=float, required=True, help="Control-arm events per day.")
@click.option("--phi", type=float, default=0.0, show_default=True)
@click.option("--tau", type=float, default=365.0, show_default=True, help="Study length in days.")
@click.option("--dropout-rate", type=float, default=0.0, show_default=True)
def samplesize_nb(alpha, power, hr, hr_null, base_rate, phi, tau, dropout_rate) -> None:
    """Per-group size for a negative-binomial rate comparison."""
    censoring = (CensoringModel("exponential", dropout_rate) if dropout_rate > 0
                 else CensoringModel())
    res = nb_sample_size(alpha, power, math.log(hr_null), math.log(hr),
                         math.log(base_rate), phi, censoring, tau)
    click.echo(f"required subjects per group: {res.raw:.2f} (planned: {res.n})")


@samplesize.command("lwyy")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--power", type=float, default=0.8, show_default=True)
@click.option("--hr", type=float, required=True, help="Planned rate ratio.")
@click.option("--phi", type=float, default=0.0, show_default=True)
@click.option("--alloc", type=float, default=0.5, show_default=True,
              help="Fraction allocated to the treated arm.")
@click.option("--rate", type=float, default=None, help="Constant baseline rate per day.")
@click.option("--eta", type=float, default=None, help="Weibull-type scale.")
@click.option("--nu", type=float, default=None, help="Weibull-type shape.")
@click.option("--tau", type=float, default=365.0, show_default=True, help="Study length in days.")
@click.option("--dropout-rate", type=float, default=0.0, show_default=True)
def samplesize_lwyy(alpha, power, hr, phi, alloc, rate, eta, nu, tau, dropout_rate) -> None:
    """Total size for a robust recurrent-event rate comparison."""
    if (eta is None) != (nu is None):
        raise click.UsageError("--eta and --nu go together")
    if rate is not None and eta is not None:
        raise click.UsageError("give either --rate or --eta/--nu, not both")
    if eta is not None:
        rate_model = RateModel("weibull", eta=eta, nu=nu)
    else:
        rate_model = RateModel("constant", rate=rate if rate is not None else 1.0)
    censoring = (CensoringModel("exponential", dropout_rate) if dropout_rate > 0
                 else CensoringModel())
    res = lwyy_sample_size(alpha, power, math.log(hr), phi, alloc, 1.0 - alloc,
                           rate_model, censoring, tau)
    click.echo(f"required subjects in total: {res.raw:.2f} (planned: {res.n})")


@cli.command("list-scenarios")
def list_scenarios() -> None:
    """Print the built-in scenario library."""
    header = f"{'name':<28} {'design':<13} {'n':>5} {'effect':>6} {'phi':>5}  endpoint"
    click.echo(header)
    click.echo("-" * len(header))
    for name in sorted(SCENARIO_LIBRARY):
        cfg = SCENARIO_LIBRARY[name].config
        endpoint = "-"
        if cfg.setup == "S2":
            endpoint = (f"{cfg.heterogeneity} {cfg.event_timing}/{cfg.confirm_weeks}wk/"
                        f"{cfg.reference}")
        click.echo(f"{name:<28} {cfg.design:<13} {cfg.n:>5} {cfg.effect:>6.2f} "
                   f"{cfg.phi:>5.2f}  {endpoint}")


@cli.command()
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False))
@click.option("--kind", type=click.Choice(["auto", "recurrent", "wlw", "edss"]),
              default="auto", show_default=True)
def validate(data_path, kind) -> int | None:
    """Check an input CSV against the format rules (exit 2 when invalid)."""
    if kind == "auto":
        cols = set(_sniff_columns(data_path))
        if cols == set(WLW_CSV_COLUMNS):
            kind = "wlw"
        elif cols == set(EDSS_CSV_COLUMNS) or cols == set(EDSS_CSV_COLUMNS) | {"PARAMCD"}:
            kind = "edss"
        else:
            kind = "recurrent"
    if kind == "edss":
        panels = read_edss_csv(data_path)  # raises DataError when malformed
        click.echo(f"OK: {len(panels)} score panels")
        return None
    if kind == "wlw":
        table = read_wlw_csv(data_path)
        report = validate_wlw(table)
    else:
        table = read_recurrent_csv(data_path)
        report = validate_table(table)
    if report.ok:
        click.echo(f"OK: {table.n_subjects} subjects, {len(table)} rows")
        return None
    click.echo(str(report))
    return 2


# ---------------------------------------------------------------------------
# entry points


def main(argv: list[str] | None = None) -> int:
    """Dispatch ``argv`` and return the process exit code."""
    try:
        rv = cli.main(args=argv, prog_name="recurtools", standalone_mode=False)
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except DataError as e:
        click.echo(f"error [{e.code}]: {e}", err=True)
        return 2
    except NumericError as e:
        click.echo(f"error [{e.code}]: {e}", err=True)
        return 3
    except (ValueError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        return 1
    return int(rv) if isinstance(rv, int) else 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
