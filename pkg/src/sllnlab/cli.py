"""Command-line front end.

Exit status: 0 on success, 2 on usage or parameter errors, 1 when a
computation fails (for instance a divergent series asked for as a number).
Outputs go to stdout unless ``--output`` is given; relative output paths are
resolved against ``$SLLNLAB_OUTPUT_DIR`` when it is set.  Files are written
atomically.
"""

from __future__ import annotations

import functools
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import conditions as cond
from .errors import ConfigError, ParameterError
from .estimators import SWEEP_COLUMNS, hill_sweep, load_sample_csv, sweep_rows
from .io import PATH_COLUMNS, atomic_write_text, check_writable, csv_text, json_text, path_rows, path_to_dict
from .montecarlo import SUMMARY_COLUMNS, load_config, run
from .process import (ProcessParams, WeightFunction, expected_path_value, limit_of_expected,
                      newman_bound, product_cov, product_mean, product_var, simulate_path)
from .sampling import QuantileRep, SeededStream, draw_exponentials, draw_normals, draw_uniforms, sample_weibull_domain

DEFAULT_SEED = 20240917
OUTPUT_DIR_ENV = "SLLNLAB_OUTPUT_DIR"
REPORT_COLUMNS = ("condition_id", "index", "value")


def _number(x: float) -> str:
    return f"{float(x):.17g}"


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ParameterError, ConfigError, IndexError) as exc:
            raise click.UsageError(str(exc)) from exc
        except (ArithmeticError, ValueError, OSError) as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc
    return wrapper


def _resolve_output(output):
    if output is None:
        return None
    p = Path(output)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return check_writable(p)


def _emit(output, fmt: str, header, rows, obj) -> None:
    text = csv_text(header, rows) if fmt == "csv" else json_text(obj)
    path = _resolve_output(output)
    if path is None:
        click.echo(text, nl=False)
    else:
        atomic_write_text(path, text)


def _parse_ks(text: str) -> list:
    """``"10,20,50"`` or ``"10:100:10"`` (inclusive range)."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            return list(range(start, stop + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"cannot parse k list {text!r}") from exc


output_option = click.option("--output", "-o", type=click.Path(dir_okay=False),
                             help=f"Output file (default stdout; relative to ${OUTPUT_DIR_ENV} if set).")
format_option = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                             show_default=True, help="Output format.")
seed_option = click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True,
                           help="Stream seed.")


@click.group()
@click.version_option(package_name="sllnlab")
def main():
    """Strong-law diagnostics for dependent sequences and functional Hill statistics."""


# --------------------------------------------------------------------------


@main.command("simulate-wk")
@click.option("--gamma", type=float, required=True, help="Tail parameter of the spacing products.")
@click.option("--tau", type=float, default=1.0, show_default=True, help="Weight exponent, f(j) = j**tau.")
@click.option("--kmax", type=int, required=True, help="Last index k.")
@click.option("--cutoff", type=int, default=10, show_default=True)
@click.option("--delta", type=float, default=0.5, show_default=True)
@seed_option
@output_option
@format_option
@_handle_errors
def simulate_wk(gamma, tau, kmax, cutoff, delta, seed, output, fmt):
    """Simulate one path of the weighted spacing-product sum.

    Columns: k, value = A_k / f(k), raw = f(k-1) - A_k, where
    A_k = sum_{j<k} (f(j) - f(j-1)) exp(-gamma sum_{h=j}^{k-1} E_h / h).
    """
    params = ProcessParams.power(gamma, tau, cutoff=cutoff, delta=delta)
    _resolve_output(output)
    path = simulate_path(SeededStream(seed), params, kmax)
    _emit(output, fmt, PATH_COLUMNS, path_rows(path), path_to_dict(path, params.to_dict()))


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False),
              help="CSV with one observation per line.")
@click.option("--log/--no-log", "take_log", default=False, help="Take logs of the input values.")
@click.option("--simulate-n", type=int, help="Instead of --input, simulate n draws.")
@click.option("--gamma", type=float, default=2.0, show_default=True, help="Tail parameter for --simulate-n.")
@click.option("--mode", type=click.Choice(["gamma", "inverse_gamma"]), default="inverse_gamma",
              show_default=True, help="Endpoint distance c*u**gamma or c*u**(1/gamma).")
@click.option("--y0", type=float, help="Upper endpoint; enables the ratio column.")
@click.option("--k", "ks", required=True, help="k values: '10,20,50' or 'start:stop[:step]'.")
@click.option("--tau", type=float, default=1.0, show_default=True, help="Weight exponent, f(j) = j**tau.")
@seed_option
@output_option
@format_option
@_handle_errors
def hill(input_path, take_log, simulate_n, gamma, mode, y0, ks, tau, seed, output, fmt):
    """Functional Hill statistic sum_j f(j) (Y_{n-j+1,n} - Y_{n-j,n}) / f(k).

    With --y0 the ratio column divides by y0 - Y_{n-k,n}.  Columns: k, statistic, ratio.
    """
    if (input_path is None) == (simulate_n is None):
        raise click.UsageError("give exactly one of --input and --simulate-n")
    _resolve_output(output)
    if input_path is not None:
        sample = load_sample_csv(input_path, take_log=take_log)
    else:
        rep = QuantileRep(y0=0.0 if y0 is None else y0, gamma=gamma, exponent_mode=mode)
        sample = sample_weibull_domain(SeededStream(seed), simulate_n, rep)
    estimates = hill_sweep(sample, _parse_ks(ks), WeightFunction.power(tau), y0=y0)
    obj = [{"k": e.k, "statistic": e.statistic, "ratio": e.ratio} for e in estimates]
    _emit(output, fmt, SWEEP_COLUMNS, sweep_rows(estimates), obj)


# --------------------------------------------------------------------------

CONDITION_TARGETS = ("evt", "gcip", "gchr", "variance-growth", "kolmogorov", "birkel",
                     "stationary-gchr", "stationary-variance", "cesaro", "newman")


def _independent(a: float):
    return cond.IndependentModel(lambda i: np.asarray(i, dtype=np.float64) ** a)


def _stationary(p: float, scale: float):
    def rho(lag):
        lag = np.asarray(lag, dtype=np.float64)
        safe = np.where(lag == 0, 1.0, lag)
        return np.where(lag == 0, 1.0, scale * safe ** -p)
    return cond.StationaryModel(rho)


@main.command("check-conditions")
@click.argument("target", type=click.Choice(CONDITION_TARGETS))
@click.option("--gamma", type=float, default=2.0, show_default=True)
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--delta", type=float, default=0.5, show_default=True)
@click.option("--cutoff", type=int, default=10, show_default=True)
@click.option("--kmax", type=int, default=100_000, show_default=True, help="Horizon for evt.")
@click.option("--variance-exponent", type=float, default=0.0, show_default=True,
              help="Independent terms with Var(X_i) = i**a.")
@click.option("--lag-exponent", type=float, default=2.0, show_default=True,
              help="Stationary rho(l) = scale * l**-p for l >= 1, rho(0) = 1.")
@click.option("--lag-scale", type=float, default=0.5, show_default=True)
@click.option("--r", type=float, default=2.0, show_default=True)
@click.option("--b-exponent", type=float, default=1.0, show_default=True, help="b_i = i**b.")
@click.option("--nu", type=float, default=0.0, show_default=True)
@click.option("--nmax", type=int, default=10_000, show_default=True)
@output_option
@format_option
@_handle_errors
def check_conditions(target, gamma, tau, delta, cutoff, kmax, variance_exponent, lag_exponent,
                     lag_scale, r, b_exponent, nu, nmax, output, fmt):
    """Tabulate a sufficient condition and print one verdict line per quantity.

    \b
    evt                  five variance sums of the centered spacing-product process
    gcip                 Var(S_q)/q**((3-delta)/2) and square-block sup / q**(3-delta)
    gchr                 sum_i b_i**-r Cov(X_i, S_n)
    variance-growth      n**-(1+nu) sum Var(X_i)
    kolmogorov           sum Var(X_i)/i**2
    birkel               sum i**-2 Cov(X_i, S_i)
    stationary-gchr      sum_{j>=2} rho(j-1)
    stationary-variance  Var(S_q)/q**(1+nu)
    cesaro               n**-1 sum_{j<=n} rho(j-1), must tend to zero
    newman               rho(0) + 2 sum_l rho(l), printed as a number

    Independent targets use --variance-exponent; stationary targets use
    --lag-exponent and --lag-scale.
    """
    _resolve_output(output)
    if target == "newman":
        res = cond.newman_sigma2(_stationary(lag_exponent, lag_scale))
        click.echo(f"newman_sigma2: {_number(res.require())}")
        return
    if target == "evt":
        reports = cond.eval_process_conditions(
            ProcessParams.power(gamma, tau, cutoff=cutoff, delta=delta), kmax)
    elif target == "gcip":
        reports = list(cond.eval_gcip(_independent(variance_exponent), delta, nmax))
    elif target == "gchr":
        reports = [cond.eval_gchr(_independent(variance_exponent),
                                  lambda i: i**b_exponent, r, nmax)]
    elif target == "variance-growth":
        reports = [cond.eval_variance_growth(_independent(variance_exponent), nu, nmax)]
    elif target == "kolmogorov":
        reports = [cond.eval_kolmogorov(_independent(variance_exponent), nmax)]
    elif target == "birkel":
        reports = [cond.eval_birkel(_stationary(lag_exponent, lag_scale), nmax)]
    elif target == "stationary-gchr":
        reports = [cond.eval_stationary_gchr(_stationary(lag_exponent, lag_scale), nmax)]
    elif target == "stationary-variance":
        reports = [cond.eval_stationary_variance(_stationary(lag_exponent, lag_scale), nu, nmax)]
    else:
        reports = [cond.eval_cesaro(_stationary(lag_exponent, lag_scale), nmax)]
    for rep in reports:
        click.echo(rep.summary_line())
    if output is not None:
        rows = [(rep.condition_id, int(i), repr(float(v)))
                for rep in reports for i, v in zip(rep.index, rep.values)]
        _emit(output, fmt, REPORT_COLUMNS, rows, [rep.to_dict() for rep in reports])


# --------------------------------------------------------------------------


def _centered_sampler(distribution: str):
    def sample(stream, n):
        if distribution == "normal":
            return draw_normals(stream, n)
        if distribution == "exponential":
            return draw_exponentials(stream, n) - 1.0
        return (draw_uniforms(stream, n) - 0.5) * np.sqrt(12.0)
    return sample


@main.command("probe-maxvar")
@click.option("--r", type=float, default=2.0, show_default=True, help="Exponent of lambda.")
@click.option("--n", type=int, default=100, show_default=True, help="Path length.")
@click.option("--reps", type=int, default=1000, show_default=True)
@click.option("--distribution", type=click.Choice(["normal", "exponential", "uniform"]),
              default="normal", show_default=True, help="Centered unit-variance iid terms.")
@seed_option
@output_option
@format_option
@_handle_errors
def probe_maxvar(r, n, reps, distribution, seed, output, fmt):
    """Estimate sup_lambda lambda**r P(max_l |S_l| >= lambda) / Var(S_n).

    Replicate t uses seed SEED + t.  Also reports E max_l S_l**2 / Var(S_n).
    CSV columns: lambda, ratio.
    """
    _resolve_output(output)
    rep = cond.maxvar_probe(_centered_sampler(distribution), r, n, reps=reps, base_seed=seed,
                            var_sn=float(n))
    click.echo(f"constant: {rep.constant:.6g} (se {rep.standard_error:.3g}) at lambda={rep.lambda_star:.6g}",
               err=output is None)
    click.echo(f"e_max_ratio: {rep.e_max_ratio:.6g} (se {rep.e_max_se:.3g})", err=output is None)
    if output is not None:
        rows = [(repr(a), repr(b)) for a, b in zip(rep.lambdas, rep.ratios)]
        _emit(output, fmt, ("lambda", "ratio"), rows, rep.to_dict())


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", type=click.Path(file_okay=False),
              help=f"Directory for relative output paths (default ${OUTPUT_DIR_ENV} or cwd).")
@click.option("--threads", type=int, default=None, help="Cap on worker processes.")
@_handle_errors
def experiment(config_path, output_dir, threads):
    """Run a replication experiment described by a YAML or JSON file.

    Prints the summary table (columns x, mean, se, q05, q50, q95, target, z).
    """
    config = load_config(config_path)
    if threads is not None and threads < 1:
        raise click.BadParameter("--threads must be positive")
    result = run(config, output_dir=output_dir or os.environ.get(OUTPUT_DIR_ENV),
                 max_workers=threads)
    if result.points:
        click.echo(csv_text(SUMMARY_COLUMNS, result.summary_rows()), nl=False)
    for cid, verdict in result.extras.get("verdicts", {}).items():
        click.echo(f"{cid}: {verdict}")


# --------------------------------------------------------------------------


@main.group()
def oracle():
    """Exact moments and limits, printed to full precision."""


@oracle.command("mean")
@click.option("--j", type=int, required=True)
@click.option("--k", type=int, required=True)
@click.option("--gamma", type=float, required=True)
@_handle_errors
def oracle_mean(j, k, gamma):
    """E exp(-gamma sum_{h=j}^{k-1} E_h/h) = prod_{h=j}^{k-1} h/(h+gamma)."""
    click.echo(_number(product_mean(j, k, gamma)))


@oracle.command("var")
@click.option("--j", type=int, required=True)
@click.option("--k", type=int, required=True)
@click.option("--gamma", type=float, required=True)
@_handle_errors
def oracle_var(j, k, gamma):
    """Variance of the block product from j to k."""
    click.echo(_number(product_var(j, k, gamma)))


@oracle.command("cov")
@click.option("--i", type=int, required=True)
@click.option("--j", type=int, required=True)
@click.option("--k", type=int, required=True)
@click.option("--gamma", type=float, required=True)
@_handle_errors
def oracle_cov(i, j, k, gamma):
    """Covariance of the block products from i to k and from j to k (i <= j)."""
    click.echo(_number(product_cov(i, j, k, gamma)))


@oracle.command("newman")
@click.option("--j", type=int, required=True)
@click.option("--k", type=int, required=True)
@click.option("--gamma", type=float, required=True)
@_handle_errors
def oracle_newman(j, k, gamma):
    """Covariance bound gamma**2 sum_{h=j}^{k-1} h**-2 and its integral bound gamma**2/(j-1)."""
    b = newman_bound(j, k, gamma)
    click.echo(f"{_number(b.exact)} {_number(b.integral)}")


@oracle.command("path-mean")
@click.option("--k", type=int, required=True)
@click.option("--gamma", type=float, required=True)
@click.option("--tau", type=float, default=1.0, show_default=True)
@_handle_errors
def oracle_path_mean(k, gamma, tau):
    """Exact E[A_k] / f(k) for f(j) = j**tau."""
    click.echo(_number(expected_path_value(ProcessParams.power(gamma, tau), k)))


@oracle.command("limit")
@click.option("--gamma", type=float, required=True)
@click.option("--tau", type=float, default=1.0, show_default=True)
@_handle_errors
def oracle_limit(gamma, tau):
    """Extrapolated limit of E[A_k] / f(k); exits 1 if it does not settle."""
    est = limit_of_expected(ProcessParams.power(gamma, tau))
    click.echo(f"{_number(est.require())} +- {est.error:.3g}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
