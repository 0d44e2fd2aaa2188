"""Command-line front end: fit, ci, test-one-inflation, simulate.

Reports are JSON by default (floats kept at full round-trip precision)
or flat CSV; every report embeds the schema version, library version,
and the configuration that produced it.  Error classes map to distinct
exit codes: 2 input/validation, 3 missingness fit, 4 EL fit, 5 variance
or interval, 6 bootstrap/simulation failures, 7 configuration.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import __version__
from .data import CaptureModelSpec, read_csv, validate
from .el import FitOptions, fit_mele
from .exceptions import ConfigError, ELCaptureError
from .inference import (
    abundance_se,
    estimate_variance,
    one_inflation_test,
    parameter_se,
    scaled_ci,
)
from .missingness import fit_missingness
from .simulate import SimulationScenario, run_study

_MIN_BOOTSTRAP = 50


def _fail(exc: ELCaptureError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, "" if obj is None else repr(obj)))


def _emit(report: dict, out: str | None, fmt: str):
    if fmt == "json":
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    else:
        rows = []
        _flatten("", report, rows)
        text = "key,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _check_level(level_a: float):
    if not 0.0 < level_a < 1.0:
        raise ConfigError(f"--level must lie in (0, 1), got {level_a}")


def _load(input_path, model, k, one_inflated):
    dataset = read_csv(input_path)
    if model == "binomial" and k is None:
        raise ConfigError("--K is required for the binomial model")
    spec = CaptureModelSpec(family=model, n_occasions=k,
                            one_inflated=one_inflated,
                            dim_x=dataset.dim_x, dim_y=dataset.dim_y)
    return validate(dataset, spec), spec


def _fit_pipeline(dataset, spec):
    eta_fit = fit_missingness(dataset)
    fit = fit_mele(dataset, spec, eta_fit)
    variance = estimate_variance(fit, dataset, spec, eta_fit)
    return eta_fit, fit, variance


def _fit_report(config, dataset, spec, eta_fit, fit, variance):
    se_params = parameter_se(fit, variance)
    p = len(fit.params.beta)
    report = dict(
        schema_version=1,
        library_version=__version__,
        command=config["command"],
        config=config,
        n=dataset.n,
        m=dataset.m,
        missingness=dict(
            eta=list(eta_fit.eta_hat),
            se=list(eta_fit.eta_se),
            loglik=eta_fit.loglik,
            converged=eta_fit.converged,
            iterations=eta_fit.iterations,
        ),
        estimates=dict(
            N=fit.params.N,
            se_N=abundance_se(fit, variance),
            beta=list(fit.params.beta),
            se_beta=list(se_params[:p]),
            alpha=fit.params.alpha,
            se_alpha=float(se_params[-1]),
            loglik=fit.loglik,
        ),
        diagnostics=dict(
            converged=fit.converged,
            grad_norm=fit.trace.get("grad_norm"),
            cap_hit=fit.cap_hit,
            boundary_omega=fit.boundary_omega,
            scale=variance.scale,
            sigma2=variance.sigma2,
        ),
    )
    if spec.one_inflated:
        report["estimates"]["omega"] = fit.params.omega
        report["estimates"]["se_omega"] = float(se_params[p])
    return report


_common = [
    click.option("--input", "input_path", required=True,
                 type=click.Path(exists=True, dir_okay=False),
                 help="Input CSV (columns: d, x:<name>, y:<name>, optional r)."),
    click.option("--model", type=click.Choice(["binomial", "poisson"]),
                 default="binomial", show_default=True),
    click.option("--K", "k", type=int, default=None,
                 help="Number of capture occasions (binomial model)."),
    click.option("--one-inflated", is_flag=True, default=False,
                 help="Fit the one-inflated count model."),
    click.option("--out", type=click.Path(dir_okay=False), default=None,
                 help="Write the report here instead of stdout."),
    click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
                 default="json", show_default=True),
]


def _with_common(cmd):
    for opt in reversed(_common):
        cmd = opt(cmd)
    return cmd


@click.group()
@click.version_option(version=__version__)
def main():
    """Abundance estimation from capture-recapture data with missing
    covariates."""


@main.command("fit")
@_with_common
def cmd_fit(input_path, model, k, one_inflated, out, fmt):
    """Two-step fit: missingness model, EL maximization, standard errors."""
    config = dict(command="fit", input=input_path, model=model, K=k,
                  one_inflated=one_inflated)
    try:
        dataset, spec = _load(input_path, model, k, one_inflated)
        eta_fit, fit, variance = _fit_pipeline(dataset, spec)
        report = _fit_report(config, dataset, spec, eta_fit, fit, variance)
    except ELCaptureError as exc:
        _fail(exc)
    _emit(report, out, fmt)


@main.command("ci")
@_with_common
@click.option("--level", "level_a", type=float, default=0.05, show_default=True,
              help="Significance level a; the interval has confidence 1 - a.")
def cmd_ci(input_path, model, k, one_inflated, out, fmt, level_a):
    """Fit plus a scaled likelihood-ratio confidence interval for N."""
    config = dict(command="ci", input=input_path, model=model, K=k,
                  one_inflated=one_inflated, level=level_a)
    try:
        _check_level(level_a)
        dataset, spec = _load(input_path, model, k, one_inflated)
        eta_fit, fit, variance = _fit_pipeline(dataset, spec)
        ci = scaled_ci(fit, dataset, spec, eta_fit, level_a=level_a,
                       variance=variance)
        report = _fit_report(config, dataset, spec, eta_fit, fit, variance)
        report["interval"] = dict(
            lower=ci.lower,
            upper=None if ci.unbounded_above else ci.upper,
            level=level_a,
            unbounded_above=ci.unbounded_above,
        )
    except ELCaptureError as exc:
        _fail(exc)
    _emit(report, out, fmt)


@main.command("test-one-inflation")
@_with_common
@click.option("--level", "level_a", type=float, default=0.05, show_default=True)
@click.option("--bootstrap", "n_boot", type=int, default=500, show_default=True,
              help="Bootstrap replicates for the null variance.")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_test(input_path, model, k, one_inflated, out, fmt, level_a, n_boot,
             seed):
    """Score-like test of no one-inflation among the capture counts."""
    config = dict(command="test-one-inflation", input=input_path, model=model,
                  K=k, level=level_a, bootstrap=n_boot, seed=seed)
    try:
        _check_level(level_a)
        if n_boot < _MIN_BOOTSTRAP:
            raise ConfigError(f"--bootstrap must be at least {_MIN_BOOTSTRAP}")
        dataset, spec = _load(input_path, model, k, False)
        eta_fit = fit_missingness(dataset)
        fit = fit_mele(dataset, spec, eta_fit)
        result = one_inflation_test(dataset, spec, eta_fit, fit, B=n_boot,
                                    seed=seed)
        report = dict(
            schema_version=1,
            library_version=__version__,
            command="test-one-inflation",
            config=config,
            n=dataset.n,
            m=dataset.m,
            test=dict(
                statistic=result.statistic,
                p_value=result.p_value,
                U_s=result.U_s,
                sigma_s2=result.sigma_s2,
                B=result.B,
                n_failed=result.n_failed,
                level=level_a,
                reject=bool(result.p_value <= level_a),
            ),
        )
    except ELCaptureError as exc:
        _fail(exc)
    _emit(report, out, fmt)


@main.command("simulate")
@click.option("--scenario", type=click.Choice(["A", "B", "C", "D"]),
              required=True)
@click.option("--n0", type=int, default=200, show_default=True)
@click.option("--reps", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--omega0", type=float, default=None,
              help="One-inflation truth for scenario D.")
@click.option("--with-one-inflated", is_flag=True, default=False,
              help="Also fit the one-inflated estimator.")
@click.option("--with-test", is_flag=True, default=False,
              help="Run the one-inflation test in every replicate.")
@click.option("--no-ci", is_flag=True, default=False,
              help="Skip coverage computations.")
@click.option("--bootstrap", "n_boot", type=int, default=500, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Report path; QQ data lands next to it with a _qq.csv "
                   "suffix.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
def cmd_simulate(scenario, n0, reps, seed, omega0, with_one_inflated,
                 with_test, no_ci, n_boot, out, fmt):
    """Run a Monte Carlo study and write its report and QQ data."""
    try:
        if reps < 1:
            raise ConfigError("--reps must be at least 1")
        if with_test and n_boot < _MIN_BOOTSTRAP:
            raise ConfigError(f"--bootstrap must be at least {_MIN_BOOTSTRAP}")
        overrides = dict(N0=n0, reps=reps, seed=seed)
        if omega0 is not None:
            overrides["omega0"] = omega0
        scen = SimulationScenario.preset(scenario, **overrides)
        estimators = ("two-step", "one-inflated") if with_one_inflated \
            else ("two-step",)
        report = run_study(scen, reps=reps, estimators=estimators,
                           include_ci=not no_ci, include_test=with_test,
                           B=n_boot)
    except ELCaptureError as exc:
        _fail(exc)
    out = out or f"simulation_{scenario}.{ 'json' if fmt == 'json' else 'csv'}"
    if fmt == "json":
        report.to_json(out)
    else:
        report.to_csv(out)
    stem = out.rsplit(".", 1)[0]
    report.qq_to_csv(f"{stem}_qq.csv")
    click.echo(f"wrote {out} and {stem}_qq.csv "
               f"(wall time {report.wall_time_s:.1f}s)", err=True)


if __name__ == "__main__":
    main()
