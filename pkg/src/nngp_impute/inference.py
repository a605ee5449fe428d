"""Downstream regression, Rubin pooling and benchmark metrics.

Each imputed matrix is fitted by ordinary least squares (statsmodels OLS
behind a rank check). The M fits are pooled with Rubin's rule:

    estimate = mean of the M estimates
    W        = mean within-imputation variance
    B        = between-imputation sample variance
    T        = W + (1 + 1/M) B
    dof      = (M - 1) (1 + W / ((1 + 1/M) B))^2

Confidence intervals use the t quantile with `dof` degrees of freedom, or the
normal quantile when B = 0. A single imputation (M = 1) is reported as the
plain fit with n - q residual degrees of freedom and flagged.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import statsmodels.api as sm
from scipy import stats

from .errors import InputDataError, SingularDesignError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegressionSpec:
    """Analysis model: response ~ predictors (+ intercept)."""
    predictor_cols: tuple[int, ...]
    response_col: int
    intercept: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "predictor_cols", tuple(int(c) for c in self.predictor_cols))
        if not self.predictor_cols:
            raise ValueError("predictor_cols must not be empty")
        if self.response_col in self.predictor_cols:
            raise ValueError(f"response column {self.response_col} is also a predictor")
        if len(set(self.predictor_cols)) != len(self.predictor_cols):
            raise ValueError("predictor_cols contains duplicates")

    @property
    def n_coefficients(self) -> int:
        return len(self.predictor_cols) + int(self.intercept)

    def coefficient_names(self, column_names: Optional[Sequence[str]] = None) -> list[str]:
        label = (lambda c: column_names[c]) if column_names else (lambda c: f"x{c}")
        names = [label(c) for c in self.predictor_cols]
        return ["intercept", *names] if self.intercept else names

    def coefficient_index(self, predictor: int = 0) -> int:
        """Position of the `predictor`-th predictor's coefficient (0 = beta_1)."""
        return predictor + int(self.intercept)

    def design(self, matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split a complete matrix into (predictors, response)."""
        matrix = np.asarray(matrix, dtype=np.float64)
        p = matrix.shape[1]
        if max(*self.predictor_cols, self.response_col) >= p:
            raise InputDataError(f"regression columns out of range for {p} columns")
        return matrix[:, list(self.predictor_cols)], matrix[:, self.response_col]

    def to_dict(self) -> dict:
        return {
            "predictor_cols": list(self.predictor_cols),
            "response_col": self.response_col,
            "intercept": self.intercept,
        }


class OlsFit(NamedTuple):
    beta: np.ndarray
    cov_beta: np.ndarray
    residual_variance: float


@dataclass
class CoefficientSummary:
    name: str
    estimate: float
    within_variance: float
    between_variance: float
    total_variance: float
    std_error: float
    dof: float
    ci_low: float
    ci_high: float

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "within_variance": self.within_variance,
            "between_variance": self.between_variance,
            "total_variance": self.total_variance,
            "std_error": self.std_error,
            "dof": self.dof if math.isfinite(self.dof) else None,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }


@dataclass
class PooledEstimate:
    coefficients: list[CoefficientSummary]
    m: int
    confidence_level: float = 0.95
    single_fit: bool = False

    @property
    def zero_between_variance(self) -> bool:
        return all(c.between_variance == 0 for c in self.coefficients)

    def __getitem__(self, index: int) -> CoefficientSummary:
        return self.coefficients[index]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "confidence_level": self.confidence_level,
            "single_fit": self.single_fit,
            "zero_between_variance": self.zero_between_variance,
            "coefficients": [c.to_dict() for c in self.coefficients],
        }


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------

def ols_fit(design: np.ndarray, response: np.ndarray, spec: Optional[RegressionSpec] = None) -> OlsFit:
    """Least squares with statsmodels after a rank check.

    `design` holds the predictor columns only; the intercept column is
    prepended when spec.intercept is set (default when spec is None).

    Raises:
        SingularDesignError when the augmented design is rank deficient.
    """
    x = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64).ravel()
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] != y.size:
        raise InputDataError(f"design has {x.shape[0]} rows, response {y.size}")
    if spec is None or spec.intercept:
        x = sm.add_constant(x, prepend=True, has_constant="add")
    n, q = x.shape
    if n <= q:
        raise SingularDesignError(f"need more rows than coefficients, got n={n}, q={q}")
    rank = int(np.linalg.matrix_rank(x))
    if rank < q:
        raise SingularDesignError(f"design matrix is rank deficient (rank {rank} < {q} columns)")

    result = sm.OLS(y, x).fit()
    return OlsFit(
        np.asarray(result.params, dtype=np.float64),
        np.asarray(result.cov_params(), dtype=np.float64),
        float(result.scale),
    )


def fit_imputations(
    matrices: Sequence[np.ndarray], spec: RegressionSpec, threads: int = 1
) -> list[OlsFit]:
    """ols_fit on every completed matrix, in input order."""
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")

    def fit(matrix: np.ndarray) -> OlsFit:
        x, y = spec.design(matrix)
        return ols_fit(x, y, spec)

    if threads == 1:
        return [fit(matrix) for matrix in matrices]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fit, matrices))


# ---------------------------------------------------------------------------
# Rubin's rule
# ---------------------------------------------------------------------------

def rubin_pool(
    estimates: Sequence[tuple[np.ndarray, np.ndarray]],
    n_obs: int,
    confidence_level: float = 0.95,
    names: Optional[Sequence[str]] = None,
) -> PooledEstimate:
    """Pool M (beta, cov_beta) pairs with Rubin's rule."""
    if not estimates:
        raise InputDataError("nothing to pool")
    if not 0 < confidence_level < 1:
        raise ValueError(f"confidence_level must be in (0, 1), got {confidence_level}")
    betas = [np.asarray(b, dtype=np.float64).ravel() for b, _ in estimates]
    sizes = {b.size for b in betas}
    if len(sizes) > 1:
        raise InputDataError(f"imputations have different coefficient counts {sorted(sizes)}")
    q = betas[0].size
    variances = []
    for _, cov in estimates:
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        if cov.shape != (q, q):
            raise InputDataError(f"covariance shape {cov.shape} does not match {q} coefficients")
        variances.append(np.diag(cov))
    names = list(names) if names is not None else [f"b{j}" for j in range(q)]

    m = len(betas)
    beta_matrix = np.vstack(betas)
    within = np.vstack(variances).mean(axis=0)
    estimate = beta_matrix.mean(axis=0)
    upper = (1 + confidence_level) / 2

    coefficients = []
    if m == 1:
        dof = float(n_obs - q)
        quantile = float(stats.t.ppf(upper, dof)) if dof > 0 else float(stats.norm.ppf(upper))
        for j in range(q):
            se = math.sqrt(within[j])
            coefficients.append(CoefficientSummary(
                names[j], float(estimate[j]), float(within[j]), 0.0, float(within[j]), se,
                dof, float(estimate[j]) - quantile * se, float(estimate[j]) + quantile * se,
            ))
        return PooledEstimate(coefficients, m, confidence_level, single_fit=True)

    between = beta_matrix.var(axis=0, ddof=1)
    inflation = 1 + 1 / m
    for j in range(q):
        total = within[j] + inflation * between[j]
        se = math.sqrt(total)
        if between[j] > 0:
            dof = (m - 1) * (1 + within[j] / (inflation * between[j])) ** 2
            quantile = float(stats.t.ppf(upper, dof))
        else:
            dof = math.inf
            quantile = float(stats.norm.ppf(upper))
        coefficients.append(CoefficientSummary(
            names[j], float(estimate[j]), float(within[j]), float(between[j]), float(total), se,
            float(dof), float(estimate[j]) - quantile * se, float(estimate[j]) + quantile * se,
        ))
    return PooledEstimate(coefficients, m, confidence_level)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    """One benchmark table row."""
    method: str
    replicates: int
    coefficient: str = "beta1"
    imp_mse: Optional[float] = None
    bias: float = 0.0
    coverage_rate: float = 0.0
    mean_se: float = 0.0
    sd_across_mc: Optional[float] = None
    imp_accuracy: Optional[float] = None
    wall_seconds_per_imputation: float = 0.0
    failures: int = 0

    def to_row(self, include_accuracy: bool = False) -> dict:
        row = {
            "Method": self.method,
            "Time(s)": self.wall_seconds_per_imputation,
            "Imp MSE": self.imp_mse,
            "Bias": self.bias,
            "CR": self.coverage_rate,
            "SE": self.mean_se,
            "SD": self.sd_across_mc,
        }
        if include_accuracy:
            row["Imp accu"] = self.imp_accuracy
        return row

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "replicates": self.replicates,
            "coefficient": self.coefficient,
            "imp_mse": self.imp_mse,
            "bias": self.bias,
            "coverage_rate": self.coverage_rate,
            "mean_se": self.mean_se,
            "sd_across_mc": self.sd_across_mc,
            "imp_accuracy": self.imp_accuracy,
            "wall_seconds_per_imputation": self.wall_seconds_per_imputation,
            "failures": self.failures,
        }


@dataclass
class ReplicateResult:
    """Everything evaluate_run needs from one Monte-Carlo replicate.

    `imputations` is None for methods that impute nothing (complete data,
    complete case).
    """
    truth: np.ndarray
    mask: np.ndarray
    pooled: PooledEstimate
    imputations: Optional[Sequence[np.ndarray]] = None
    seconds: float = 0.0
    binary_cols: Sequence[int] = field(default_factory=tuple)


def evaluate_run(
    method: str,
    replicates: Sequence[ReplicateResult],
    true_beta: Sequence[float],
    coefficient: int = 1,
    coefficient_name: str = "beta1",
) -> MetricsReport:
    """Aggregate replicates into a MetricsReport.

    Imp MSE averages squared errors over continuous missing cells, all
    imputations and all replicates. Imp accuracy is the fraction of binary
    missing cells imputed with the right class.
    """
    if not replicates:
        raise InputDataError("no replicates to evaluate")
    truth_value = float(np.asarray(true_beta, dtype=np.float64)[coefficient])

    sq_error, n_cont, correct, n_bin = 0.0, 0, 0, 0
    imputed_any = False
    for rep in replicates:
        if rep.imputations is None:
            continue
        imputed_any = True
        missing = ~np.asarray(rep.mask, dtype=bool)
        binary = np.zeros(missing.shape[1], dtype=bool)
        binary[list(rep.binary_cols)] = True
        cont_cells = missing & ~binary
        bin_cells = missing & binary
        for matrix in rep.imputations:
            if matrix.shape != rep.truth.shape:
                raise InputDataError(
                    f"imputed shape {matrix.shape} differs from truth {rep.truth.shape}"
                )
            diff = matrix[cont_cells] - rep.truth[cont_cells]
            sq_error += float(diff @ diff)
            n_cont += int(cont_cells.sum())
            correct += int((matrix[bin_cells] == rep.truth[bin_cells]).sum())
            n_bin += int(bin_cells.sum())

    estimates = np.array([rep.pooled[coefficient].estimate for rep in replicates])
    std_errors = np.array([rep.pooled[coefficient].std_error for rep in replicates])
    covered = sum(rep.pooled[coefficient].contains(truth_value) for rep in replicates)
    imputations = sum(rep.pooled.m for rep in replicates)

    report = MetricsReport(
        method=method,
        replicates=len(replicates),
        coefficient=coefficient_name,
        imp_mse=sq_error / n_cont if imputed_any and n_cont else None,
        bias=float(np.mean(estimates) - truth_value),
        coverage_rate=covered / len(replicates),
        mean_se=float(np.mean(std_errors)),
        sd_across_mc=float(np.std(estimates, ddof=1)) if len(replicates) > 1 else None,
        imp_accuracy=correct / n_bin if imputed_any and n_bin else None,
        wall_seconds_per_imputation=sum(rep.seconds for rep in replicates) / max(imputations, 1),
    )
    logger.info(
        "%s: bias %.4f, coverage %.2f over %d replicates",
        method, report.bias, report.coverage_rate, report.replicates,
    )
    return report
