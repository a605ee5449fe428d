"""Monte-Carlo benchmark harness.

For every replicate r the harness derives a data seed and an imputation seed
from SeedSequence(seed, spawn_key=(r,)), generates one synthetic scenario,
runs every selected method, fits the analysis regression on each imputed
matrix, pools with Rubin's rule and finally aggregates the replicates into one
MetricsReport row per method.

Replicates may run on a thread pool; results are collected in replicate order,
so the table does not depend on the thread count.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import InputDataError, NumericalError, UnsupportedInputError
from .imputers import ImputationConfig, Method, impute
from .inference import (
    ReplicateResult,
    MetricsReport,
    evaluate_run,
    fit_imputations,
    rubin_pool,
)
from .kernel_engine import NetworkConfig
from .report import BenchmarkTable, provenance
from .synthetic import (
    Distribution,
    Mechanism,
    SynthConfig,
    SyntheticSample,
    generate_scenario,
    varying_rate_config,
)

logger = logging.getLogger(__name__)

COMPLETE_DATA = "complete-data"
COMPLETE_CASE = "complete-case"

ALL_METHODS = (
    Method.MI_NNGP1.value,
    Method.MI_NNGP1_BS.value,
    Method.MI_NNGP2.value,
    Method.MI_NNGP2_BS.value,
    Method.COLMEAN.value,
    COMPLETE_CASE,
    COMPLETE_DATA,
)

# ---------------------------------------------------------------------------
# Scenario presets
# ---------------------------------------------------------------------------

_GAUSSIAN_A = (1.0, -2.0, 3.0, 0.0, 2.0, -2.0)
_EXPONENTIAL_A = (-3.0, -1.0, 1.5, 1.0, 1.5, -1.0)
_DISCRETE_A = (-1.0, -2.0, 3.0, 1.0, 2.0, -2.0)
_Q = {50: (40, 44, 48), 250: (210, 220, 230), 1000: (650, 700, 750)}


def _gaussian(p: int, mechanism: Mechanism) -> SynthConfig:
    return SynthConfig(p=p, q=_Q[p], a=_GAUSSIAN_A, mechanism=mechanism)


def _exponential(mechanism: Mechanism) -> SynthConfig:
    return SynthConfig(
        p=1000,
        rho=0.75,
        noise=Distribution.EXPONENTIAL,
        noise_scale=0.4,
        first_col=Distribution.EXPONENTIAL,
        first_col_scale=2.0,
        sigma1=1.0,
        q=_Q[1000],
        a=_EXPONENTIAL_A,
        mechanism=mechanism,
    )


def _discrete(mechanism: Mechanism, p: int = 1000) -> SynthConfig:
    q = (p + 1, round(0.7 * p) + 1, round(0.75 * p) + 1)
    return SynthConfig(p=p, q=q, a=_DISCRETE_A, mechanism=mechanism, binary_append=True)


SCENARIOS: dict[str, SynthConfig] = {
    "p50-gaussian-mar": _gaussian(50, Mechanism.MAR),
    "p50-gaussian-mnar": _gaussian(50, Mechanism.MNAR),
    "p250-gaussian-mar": _gaussian(250, Mechanism.MAR),
    "p250-gaussian-mnar": _gaussian(250, Mechanism.MNAR),
    "p1000-gaussian-mar": _gaussian(1000, Mechanism.MAR),
    "p1000-gaussian-mnar": _gaussian(1000, Mechanism.MNAR),
    "p1000-exp-mar": _exponential(Mechanism.MAR),
    "p1000-exp-mnar": _exponential(Mechanism.MNAR),
    "discrete-mar": _discrete(Mechanism.MAR),
    "discrete-mnar": _discrete(Mechanism.MNAR),
    **{f"varying-rate-{rate}": varying_rate_config(rate) for rate in (20, 40, 60, 80)},
}


def resolve_scenario(scenario: Union[str, dict, SynthConfig]) -> tuple[str, SynthConfig]:
    """Preset name, JSON-style dict or SynthConfig -> (label, config)."""
    if isinstance(scenario, SynthConfig):
        return "custom", scenario
    if isinstance(scenario, dict):
        return "custom", SynthConfig.from_dict(scenario)
    if scenario not in SCENARIOS:
        raise InputDataError(
            f"unknown scenario {scenario!r}; choose one of {', '.join(sorted(SCENARIOS))}"
        )
    return scenario, SCENARIOS[scenario]


@dataclass(frozen=True)
class BenchmarkConfig:
    """Harness settings.

    burn_in applies to mi-nngp2; bootstrap_burn_in to every mi-nngp2-bs track.
    coefficient selects the reported predictor (0 = beta_1).
    """
    scenario: Union[str, SynthConfig] = "p250-gaussian-mar"
    mc: int = 20
    seed: int = 0
    methods: tuple[str, ...] = ALL_METHODS
    m_imputations: int = 10
    burn_in: int = 10
    bootstrap_burn_in: int = 2
    thinning: int = 1
    network: NetworkConfig = field(default_factory=NetworkConfig)
    confidence_level: float = 0.95
    coefficient: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            raise InputDataError(f"unknown methods {unknown}; choose from {list(ALL_METHODS)}")
        if self.mc < 1:
            raise ValueError(f"mc must be >= 1, got {self.mc}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if not 0 <= self.coefficient < 3:
            raise ValueError(f"coefficient must select one of 3 predictors, got {self.coefficient}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def to_dict(self) -> dict:
        label, synth = resolve_scenario(self.scenario)
        return {
            "scenario": label,
            "synth": synth.to_dict(),
            "mc": self.mc,
            "seed": self.seed,
            "methods": list(self.methods),
            "m_imputations": self.m_imputations,
            "burn_in": self.burn_in,
            "bootstrap_burn_in": self.bootstrap_burn_in,
            "thinning": self.thinning,
            "network": self.network.to_dict(),
            "confidence_level": self.confidence_level,
            "coefficient": self.coefficient,
        }


def replicate_seeds(seed: int, replicate: int) -> tuple[int, int]:
    """(data seed, imputation seed) for one replicate."""
    state = np.random.SeedSequence(seed, spawn_key=(replicate,)).generate_state(2)
    return int(state[0]), int(state[1])


def _imputation_config(config: BenchmarkConfig, method: str, seed: int, threads: int) -> ImputationConfig:
    burn_in = config.bootstrap_burn_in if method == Method.MI_NNGP2_BS.value else config.burn_in
    return ImputationConfig(
        m_imputations=config.m_imputations,
        burn_in=burn_in,
        thinning=config.thinning,
        network=config.network,
        seed=seed,
        threads=threads,
    )


def _run_method(
    method: str,
    sample: SyntheticSample,
    config: BenchmarkConfig,
    seed: int,
    threads: int,
) -> ReplicateResult:
    spec = sample.regression
    names = spec.coefficient_names(sample.dataset.column_names)
    n = sample.dataset.n_rows
    started = time.perf_counter()

    if method == COMPLETE_DATA:
        matrices, imputations = [sample.truth], None
    elif method == COMPLETE_CASE:
        rows = np.flatnonzero(sample.mask.all(axis=1))
        matrices, imputations, n = [sample.truth[rows]], None, rows.size
    else:
        result = impute(sample.dataset, method, _imputation_config(config, method, seed, threads))
        matrices = imputations = result.imputations

    fits = fit_imputations(matrices, spec)
    pooled = rubin_pool(
        [(fit.beta, fit.cov_beta) for fit in fits], n, config.confidence_level, names
    )
    return ReplicateResult(
        truth=sample.truth,
        mask=sample.mask,
        pooled=pooled,
        imputations=imputations,
        seconds=time.perf_counter() - started if imputations is not None else 0.0,
        binary_cols=sample.binary_cols,
    )


def _run_replicate(
    replicate: int, config: BenchmarkConfig, synth: SynthConfig, threads: int
) -> dict[str, Optional[ReplicateResult]]:
    data_seed, impute_seed = replicate_seeds(config.seed, replicate)
    sample = generate_scenario(replace(synth, seed=data_seed))
    results: dict[str, Optional[ReplicateResult]] = {}
    for method in config.methods:
        try:
            results[method] = _run_method(method, sample, config, impute_seed, threads)
        except (NumericalError, UnsupportedInputError) as exc:
            logger.warning("Replicate %d, %s failed: %s", replicate, method, exc)
            results[method] = None
    logger.info("Replicate %d/%d done", replicate + 1, config.mc)
    return results


def run_benchmark(config: BenchmarkConfig) -> BenchmarkTable:
    """Run every replicate and aggregate one MetricsReport per method."""
    label, synth = resolve_scenario(config.scenario)
    started = time.perf_counter()
    outer = min(config.threads, config.mc)
    inner = 1 if outer > 1 else config.threads

    if outer > 1:
        with ThreadPoolExecutor(max_workers=outer) as executor:
            per_replicate = list(executor.map(
                lambda r: _run_replicate(r, config, synth, inner), range(config.mc)
            ))
    else:
        per_replicate = [_run_replicate(r, config, synth, inner) for r in range(config.mc)]

    coefficient = config.coefficient + 1
    rows = []
    true_beta = np.array([0.0, 1.0, 1.0, 1.0])
    for method in config.methods:
        done = [results[method] for results in per_replicate if results[method] is not None]
        failures = config.mc - len(done)
        if not done:
            rows.append(MetricsReport(
                method=method, replicates=0, coefficient=f"beta{coefficient}",
                bias=float("nan"), coverage_rate=float("nan"), mean_se=float("nan"),
                failures=failures,
            ))
            continue
        report = evaluate_run(method, done, true_beta, coefficient, f"beta{coefficient}")
        report.failures = failures
        rows.append(report)

    table = BenchmarkTable(
        scenario=label,
        rows=rows,
        include_accuracy=synth.binary_append,
        provenance=provenance(config.to_dict(), config.seed),
    )
    logger.info(
        "Benchmark %s: %d replicates x %d methods in %.1fs",
        label, config.mc, len(config.methods), time.perf_counter() - started,
    )
    return table
