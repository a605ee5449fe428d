"""CLI interface for nngp-impute.

Usage:
    # Impute a CSV (writes data.imp1.csv .. data.imp10.csv and data.diag.json)
    nngp-impute impute data.csv -o out/ --method mi-nngp2 --m 10 --seed 7

    # Rows not grouped by missingness pattern
    nngp-impute impute data.csv -o out/ --sort-rows

    # Benchmark a preset scenario
    nngp-impute benchmark p250-gaussian-mar --mc 20 -o table.csv

    # Pool regressions fitted on imputations made elsewhere
    nngp-impute pool "out/data.imp*.csv" --response y --predictor x1 --predictor x2

    # Validate the analytic kernel against Monte-Carlo sampling
    nngp-impute kernel-check

Options given on the command line win over values from --config.
"""

from __future__ import annotations

import contextlib
import json
import logging
from pathlib import Path
from typing import Any, Iterator, Optional

import typer
from rich.console import Console
from rich.table import Table

from . import __version__
from .errors import InputDataError, NngpImputeError, NumericalError, PatternValidationError

app = typer.Typer(
    name="nngp-impute",
    help="Multiple imputation of high-dimensional incomplete data with NNGP posterior sampling.",
    add_completion=False,
)
console = Console()

THREADS_ENV = "NNGP_IMPUTE_THREADS"


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)-7s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


@contextlib.contextmanager
def _exit_on_error() -> Iterator[None]:
    """Print library errors and exit with their code."""
    try:
        yield
    except NngpImputeError as exc:
        console.print(f"[red]{exc}[/red]")
        raise typer.Exit(exc.exit_code)
    except ValueError as exc:
        console.print(f"[red]{exc}[/red]")
        raise typer.Exit(InputDataError.exit_code)


def _load_config(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputDataError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputDataError(f"config {path} must hold a JSON object")
    return data


def _pick(flag: Any, file_config: dict, key: str, default: Any) -> Any:
    """Flag value if given, else the config file value, else the default."""
    if flag is not None:
        return flag
    return file_config.get(key, default)


def _network(file_config: dict, depth, activation, weight_variance, bias_variance):
    from .kernel_engine import NetworkConfig

    return NetworkConfig(
        depth=_pick(depth, file_config, "depth", 3),
        activation=_pick(activation, file_config, "activation", "relu"),
        weight_variance=_pick(weight_variance, file_config, "weight_variance", 1.0),
        bias_variance=_pick(bias_variance, file_config, "bias_variance", 0.0),
    )


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _show_version(value: bool) -> None:
    if value:
        console.print(f"nngp-impute {__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: bool = typer.Option(
        False, "--version", "-V", help="Show version", callback=_show_version, is_eager=True,
    ),
) -> None:
    """Multiple imputation of incomplete CSV data with NNGP posterior sampling."""


@app.command()
def impute(
    input_csv: Path = typer.Argument(..., help="Incomplete CSV (empty field or NA = missing)"),
    output_dir: Path = typer.Option(Path("./output"), "--output", "-o", help="Output directory"),
    method: Optional[str] = typer.Option(
        None, "--method",
        help="mi-nngp1, mi-nngp1-bs, mi-nngp2 (default), mi-nngp2-bs or colmean",
    ),
    m_imputations: Optional[int] = typer.Option(None, "--m", help="Number of imputations M"),
    burn_in: Optional[int] = typer.Option(None, "--burn-in", help="MI-NNGP2 burn-in cycles N"),
    thinning: Optional[int] = typer.Option(None, "--thinning", help="MI-NNGP2 sampling interval T"),
    init: Optional[str] = typer.Option(
        None, "--init", help="MI-NNGP2 initialization: mi-nngp1, colmean or automatic if omitted",
    ),
    depth: Optional[int] = typer.Option(None, "--depth", help="Hidden layers of the network"),
    activation: Optional[str] = typer.Option(None, "--activation", help="relu or erf"),
    weight_variance: Optional[float] = typer.Option(None, "--weight-variance"),
    bias_variance: Optional[float] = typer.Option(None, "--bias-variance"),
    noise: Optional[float] = typer.Option(None, "--noise", help="Observation noise variance"),
    center: Optional[bool] = typer.Option(None, "--center/--no-center", help="Center columns first"),
    binary: Optional[list[str]] = typer.Option(None, "--binary", "-b", help="Binary (0/1) column"),
    response: Optional[str] = typer.Option(None, "--response", help="Fully observed response column"),
    sort_rows: bool = typer.Option(False, "--sort-rows", help="Group rows by missingness pattern"),
    no_header: bool = typer.Option(False, "--no-header", help="CSV has no header row"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Random seed"),
    threads: Optional[int] = typer.Option(None, "--threads", envvar=THREADS_ENV, help="Worker threads"),
    config_path: Optional[Path] = typer.Option(None, "--config", help="JSON file with option values"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Impute an incomplete CSV M times and write one CSV per imputation."""
    _setup_logging(verbose)
    from .dataset_io import export_imputed_set, output_stem, read_incomplete_csv
    from .imputers import ImputationConfig, Method, impute as run_impute
    from .pattern_model import detect_patterns, sort_rows as group_rows

    with _exit_on_error():
        cfg = _load_config(config_path)
        config = ImputationConfig(
            m_imputations=_pick(m_imputations, cfg, "m", 10),
            burn_in=_pick(burn_in, cfg, "burn_in", 2),
            thinning=_pick(thinning, cfg, "thinning", 1),
            network=_network(cfg, depth, activation, weight_variance, bias_variance),
            init_method=_pick(init, cfg, "init", None),
            observation_noise=_pick(noise, cfg, "noise", 0.0),
            seed=_pick(seed, cfg, "seed", 0),
            threads=_pick(threads, cfg, "threads", 1),
            center=_pick(center, cfg, "center", False),
        )
        chosen = Method(_pick(method, cfg, "method", Method.MI_NNGP2.value))
        sort_rows = sort_rows or bool(cfg.get("sort_rows", False))
        no_header = no_header or bool(cfg.get("no_header", False))

        dataset = read_incomplete_csv(
            input_csv,
            header=not no_header,
            binary_cols=_pick(binary or None, cfg, "binary", []) or [],
            response_col=_pick(response, cfg, "response", None),
        )

        order = None
        if sort_rows:
            dataset, order = group_rows(dataset)
        elif not detect_patterns(dataset).is_block_ordered():
            raise PatternValidationError(
                "rows of the same missingness pattern are not contiguous; "
                "rerun with --sort-rows to group them"
            )

        result = run_impute(dataset, chosen, config)
        paths = export_imputed_set(
            result, dataset, output_dir, output_stem(input_csv),
            header=not no_header, order=order,
            extra_diagnostics={"sorted_rows": sort_rows},
        )

    table = Table(title=f"Patterns in {input_csv.name}")
    table.add_column("Pattern", style="cyan")
    table.add_column("Rows")
    table.add_column("Observed cols")
    table.add_column("Missing cols")
    for entry in result.diagnostics.patterns:
        table.add_row(
            str(entry["pattern"]), str(entry["rows"]),
            str(entry["observed_cols"]), str(entry["missing_cols"]),
        )
    console.print(table)
    console.print(
        f"[bold]{chosen.value}[/bold]: {result.m} imputations in "
        f"{result.diagnostics.total_seconds:.2f}s, "
        f"jitter events {sum(result.diagnostics.jitter_events)}"
    )
    for path in paths:
        console.print(f"  Written: {path}")


@app.command()
def benchmark(
    scenario: str = typer.Argument(..., help="Preset name or path to a JSON scenario"),
    mc: Optional[int] = typer.Option(None, "--mc", help="Monte-Carlo replicates"),
    methods: Optional[list[str]] = typer.Option(None, "--method", help="Method to include (repeatable)"),
    m_imputations: Optional[int] = typer.Option(None, "--m", help="Imputations per method"),
    burn_in: Optional[int] = typer.Option(None, "--burn-in", help="MI-NNGP2 burn-in cycles"),
    bootstrap_burn_in: Optional[int] = typer.Option(None, "--bs-burn-in", help="MI-NNGP2-BS burn-in"),
    thinning: Optional[int] = typer.Option(None, "--thinning"),
    depth: Optional[int] = typer.Option(None, "--depth"),
    activation: Optional[str] = typer.Option(None, "--activation"),
    weight_variance: Optional[float] = typer.Option(None, "--weight-variance"),
    bias_variance: Optional[float] = typer.Option(None, "--bias-variance"),
    coefficient: Optional[int] = typer.Option(None, "--coefficient", help="Reported predictor, 1-3"),
    confidence: Optional[float] = typer.Option(None, "--confidence"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s"),
    threads: Optional[int] = typer.Option(None, "--threads", envvar=THREADS_ENV),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Metrics table file"),
    fmt: str = typer.Option("csv", "--format", "-f", help="csv, json or text"),
    config_path: Optional[Path] = typer.Option(None, "--config", help="JSON file with option values"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Run a Monte-Carlo benchmark and print one metrics row per method."""
    _setup_logging(verbose)
    from .benchmark import ALL_METHODS, BenchmarkConfig, run_benchmark
    from .report import export_benchmark_table

    with _exit_on_error():
        cfg = _load_config(config_path)
        target: Any = scenario
        if scenario.endswith(".json"):
            target = _load_config(Path(scenario))
        config = BenchmarkConfig(
            scenario=target,
            mc=_pick(mc, cfg, "mc", 20),
            seed=_pick(seed, cfg, "seed", 0),
            methods=tuple(_pick(methods or None, cfg, "methods", list(ALL_METHODS))),
            m_imputations=_pick(m_imputations, cfg, "m", 10),
            burn_in=_pick(burn_in, cfg, "burn_in", 10),
            bootstrap_burn_in=_pick(bootstrap_burn_in, cfg, "bootstrap_burn_in", 2),
            thinning=_pick(thinning, cfg, "thinning", 1),
            network=_network(cfg, depth, activation, weight_variance, bias_variance),
            confidence_level=_pick(confidence, cfg, "confidence", 0.95),
            coefficient=_pick(coefficient, cfg, "coefficient", 1) - 1,
            threads=_pick(threads, cfg, "threads", 1),
        )
        result = run_benchmark(config)
        if output is not None:
            export_benchmark_table(result, output, format=fmt)

    table = Table(title=f"Benchmark: {result.scenario} ({config.mc} replicates)")
    columns = ["Method", "Time(s)", "Imp MSE", "Bias", "CR", "SE", "SD"]
    if result.include_accuracy:
        columns.append("Imp accu")
    for name in columns:
        table.add_column(name, style="cyan" if name == "Method" else None)
    for row in result.rows:
        cells = [
            row.method,
            _fmt(row.wall_seconds_per_imputation, 3) if row.imp_mse is not None else "-",
            _fmt(row.imp_mse),
            _fmt(row.bias),
            _fmt(row.coverage_rate, 2),
            _fmt(row.mean_se),
            _fmt(row.sd_across_mc),
        ]
        if result.include_accuracy:
            cells.append(_fmt(row.imp_accuracy, 3))
        table.add_row(*cells)
    console.print(table)
    if output is not None:
        console.print(f"Metrics written to: {output}")


@app.command()
def pool(
    files: list[str] = typer.Argument(..., help="Imputed CSV files or glob patterns"),
    response: str = typer.Option(..., "--response", help="Response column"),
    predictors: Optional[list[str]] = typer.Option(
        None, "--predictor", help="Predictor column (repeatable, default: all other columns)",
    ),
    no_intercept: bool = typer.Option(False, "--no-intercept"),
    confidence: float = typer.Option(0.95, "--confidence"),
    no_header: bool = typer.Option(False, "--no-header", help="CSVs have no header row"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Pooled JSON file"),
    seed: int = typer.Option(0, "--seed", "-s", help="Recorded in provenance; pooling draws nothing"),
    threads: int = typer.Option(
        1, "--threads", envvar=THREADS_ENV, help="Worker threads for the per-file fits",
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Fit the regression on every imputed CSV and pool with Rubin's rule."""
    _setup_logging(verbose)
    from .dataset_io import expand_inputs, read_imputed_csvs
    from .inference import RegressionSpec, fit_imputations, rubin_pool
    from .report import export_pooled, provenance

    with _exit_on_error():
        paths = expand_inputs(files)
        if not paths:
            raise InputDataError(f"no files match {files}")
        matrices, names = read_imputed_csvs(paths, header=not no_header)
        missing = [c for c in [response, *(predictors or [])] if c not in names]
        if missing:
            raise InputDataError(f"unknown columns {missing}; available: {names}")
        chosen = predictors or [c for c in names if c != response]
        spec = RegressionSpec(
            tuple(names.index(c) for c in chosen),
            names.index(response),
            intercept=not no_intercept,
        )
        fits = fit_imputations(matrices, spec, threads)
        pooled = rubin_pool(
            [(fit.beta, fit.cov_beta) for fit in fits],
            matrices[0].shape[0],
            confidence,
            spec.coefficient_names(names),
        )
        meta = provenance(
            {"files": [str(p) for p in paths], "regression": spec.to_dict(),
             "confidence_level": confidence},
            seed=seed,
        )
        if output is not None:
            export_pooled(pooled, output, meta)

    table = Table(title=f"Pooled estimates (M={pooled.m})")
    for name in ("Coefficient", "Estimate", "SE", "dof", "CI low", "CI high", "B"):
        table.add_column(name, style="cyan" if name == "Coefficient" else None)
    for c in pooled.coefficients:
        table.add_row(
            c.name, _fmt(c.estimate), _fmt(c.std_error),
            "inf" if c.dof == float("inf") else f"{c.dof:.1f}",
            _fmt(c.ci_low), _fmt(c.ci_high), _fmt(c.between_variance),
        )
    console.print(table)
    if pooled.single_fit:
        console.print("[yellow]Single imputation: plain OLS inference reported[/yellow]")
    elif pooled.zero_between_variance:
        console.print("[yellow]Between-imputation variance is zero for every coefficient[/yellow]")
    if output is not None:
        console.print(f"Pooled estimates written to: {output}")
    else:
        console.print_json(json.dumps({"pooled": pooled.to_dict(), "provenance": meta}))


@app.command("kernel-check")
def kernel_check_command(
    cases: int = typer.Option(50, "--cases", help="Random input pairs"),
    samples: int = typer.Option(100_000, "--samples", help="Monte-Carlo samples per layer"),
    max_depth: int = typer.Option(3, "--max-depth"),
    seed: int = typer.Option(0, "--seed", "-s"),
    threads: int = typer.Option(1, "--threads", envvar=THREADS_ENV, help="Worker threads"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Compare the analytic kernel with a Monte-Carlo oracle."""
    _setup_logging(verbose)
    from .kernel_engine import kernel_check

    with _exit_on_error():
        report = kernel_check(
            cases=cases, samples=samples, seed=seed, max_depth=max_depth, threads=threads,
        )

    console.print(
        f"Oracle agreement: {report.agreeing}/{report.cases}, "
        f"halving law {'ok' if report.halving_law_ok else 'violated'} "
        f"(max error {report.max_halving_error:.2e})"
    )
    for failure in report.failures:
        console.print(
            f"  case {failure['case']} depth {failure['depth']}: "
            f"analytic {failure['analytic']:.6f} vs {failure['estimate']:.6f} "
            f"+/- {failure['std_error']:.2e}"
        )
    if report.passed:
        console.print("[green]PASS[/green]")
        return
    console.print("[red]FAIL[/red]")
    with _exit_on_error():
        raise NumericalError(
            f"analytic kernel disagrees with the oracle in {report.cases - report.agreeing} "
            f"of {report.cases} cases"
            + ("" if report.halving_law_ok else " and the ReLU diagonal law is violated")
        )


if __name__ == "__main__":
    app()
