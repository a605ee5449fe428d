"""Infinite-width NNGP covariance for fully connected networks.

The kernel is computed by the layer-wise recursion

    K^0(x, x') = sigma_b^2 + sigma_w^2 * (x . x') / d_in
    K^l(x, x') = sigma_b^2 + sigma_w^2 * E[phi(z) phi(z')],  (z, z') ~ N(0, K^{l-1} 2x2 block)

where the expectation has a closed form for ReLU (degree-1 arc-cosine kernel)
and erf. The kernel matrix is evaluated over feature COLUMNS of the data
matrix: each column restricted to the input rows is one kernel input point.

A Monte-Carlo oracle that samples the expectation directly is provided for
validating the closed forms.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np
from scipy.special import erf

from .errors import KernelDimensionError, KernelDomainError

logger = logging.getLogger(__name__)

# Relative slack allowed on |K_xx'| <= sqrt(K_xx K_x'x') before rejecting a triple.
_CORRELATION_TOL = 1e-8


class Activation(str, Enum):
    RELU = "relu"
    ERF = "erf"


@dataclass(frozen=True)
class NetworkConfig:
    """NNGP hyperparameters. They fully determine the kernel."""
    depth: int = 3
    activation: Activation = Activation.RELU
    weight_variance: float = 1.0
    bias_variance: float = 0.0

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if not self.weight_variance > 0:
            raise ValueError(
                f"weight_variance must be > 0, got {self.weight_variance}"
            )
        if self.bias_variance < 0:
            raise ValueError(f"bias_variance must be >= 0, got {self.bias_variance}")
        if not isinstance(self.activation, Activation):
            object.__setattr__(self, "activation", Activation(self.activation))

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "activation": self.activation.value,
            "weight_variance": self.weight_variance,
            "bias_variance": self.bias_variance,
        }


@dataclass
class KernelMatrix:
    """Symmetric p x p NNGP kernel over p feature columns."""
    entries: np.ndarray
    config: NetworkConfig
    input_dim: int

    @property
    def size(self) -> int:
        return self.entries.shape[0]


# ---------------------------------------------------------------------------
# Scalar recursion
# ---------------------------------------------------------------------------

def base_kernel(x: Sequence[float], x_prime: Sequence[float], config: NetworkConfig) -> float:
    """K^0(x, x') = sigma_b^2 + sigma_w^2 * (x . x') / d_in."""
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.ndim != 1 or x_prime.ndim != 1 or x.shape != x_prime.shape:
        raise KernelDimensionError(
            f"kernel inputs must be vectors of equal length, got {x.shape} and {x_prime.shape}"
        )
    d_in = x.shape[0]
    if d_in == 0:
        raise KernelDomainError("kernel inputs must have positive length")
    return float(config.bias_variance + config.weight_variance * (np.dot(x, x_prime) / d_in))


def _check_triple(k_xx: float, k_xxp: float, k_xpxp: float) -> float:
    if not (k_xx > 0 and k_xpxp > 0):
        raise KernelDomainError(
            f"diagonal kernel values must be positive, got {k_xx} and {k_xpxp}"
        )
    norm = math.sqrt(k_xx * k_xpxp)
    if abs(k_xxp) > norm * (1.0 + _CORRELATION_TOL):
        raise KernelDomainError(
            f"|K(x,x')| = {abs(k_xxp)} exceeds sqrt(K(x,x) K(x',x')) = {norm}"
        )
    return norm


def relu_layer_step(k_xx: float, k_xxp: float, k_xpxp: float, config: NetworkConfig) -> float:
    """One ReLU layer of the recursion via the arc-cosine closed form."""
    norm = _check_triple(k_xx, k_xxp, k_xpxp)
    theta = math.acos(min(1.0, max(-1.0, k_xxp / norm)))
    expectation = norm * (math.sin(theta) + (math.pi - theta) * math.cos(theta)) / (2 * math.pi)
    return config.bias_variance + config.weight_variance * expectation


def erf_layer_step(k_xx: float, k_xxp: float, k_xpxp: float, config: NetworkConfig) -> float:
    """One erf layer of the recursion."""
    _check_triple(k_xx, k_xxp, k_xpxp)
    ratio = 2 * k_xxp / math.sqrt((1 + 2 * k_xx) * (1 + 2 * k_xpxp))
    expectation = (2 / math.pi) * math.asin(min(1.0, max(-1.0, ratio)))
    return config.bias_variance + config.weight_variance * expectation


_LAYER_STEPS = {
    Activation.RELU: relu_layer_step,
    Activation.ERF: erf_layer_step,
}


def kernel_value(x: Sequence[float], x_prime: Sequence[float], config: NetworkConfig) -> float:
    """K^L(x, x') for a depth-L network."""
    step = _LAYER_STEPS[config.activation]
    k_xx = base_kernel(x, x, config)
    k_xxp = base_kernel(x, x_prime, config)
    k_xpxp = base_kernel(x_prime, x_prime, config)
    for _ in range(config.depth):
        k_xx, k_xxp, k_xpxp = (
            step(k_xx, k_xx, k_xx, config),
            step(k_xx, k_xxp, k_xpxp, config),
            step(k_xpxp, k_xpxp, k_xpxp, config),
        )
    return k_xxp


# ---------------------------------------------------------------------------
# Matrix form
# ---------------------------------------------------------------------------

def _mirror_upper(matrix: np.ndarray) -> np.ndarray:
    upper = np.triu(matrix)
    return upper + np.triu(matrix, 1).T


def _relu_expectation(k: np.ndarray, diag: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.outer(diag, diag))
    cos_theta = np.clip(k / norms, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    return norms * (np.sin(theta) + (np.pi - theta) * cos_theta) / (2 * np.pi)


def _erf_expectation(k: np.ndarray, diag: np.ndarray) -> np.ndarray:
    scale = np.sqrt(np.outer(1 + 2 * diag, 1 + 2 * diag))
    return (2 / np.pi) * np.arcsin(np.clip(2 * k / scale, -1.0, 1.0))


FeatureColumns = Union[np.ndarray, Sequence[Sequence[float]]]


def _as_column_matrix(feature_columns: FeatureColumns) -> np.ndarray:
    """Stack feature columns into a d_in x p array (one kernel point per column)."""
    if isinstance(feature_columns, np.ndarray):
        if feature_columns.ndim != 2:
            raise KernelDimensionError(
                f"feature matrix must be 2-D, got shape {feature_columns.shape}"
            )
        return np.asarray(feature_columns, dtype=np.float64)
    lengths = {len(col) for col in feature_columns}
    if len(lengths) > 1:
        raise KernelDimensionError(f"ragged feature columns, lengths {sorted(lengths)}")
    return np.column_stack([np.asarray(col, dtype=np.float64) for col in feature_columns])


def build_kernel_matrix(feature_columns: FeatureColumns, config: NetworkConfig) -> KernelMatrix:
    """Kernel matrix over feature columns.

    Args:
        feature_columns: Either a list of equal-length vectors (one per feature)
            or a 2-D array whose COLUMNS are the features, rows being the input
            cases (the IS rows).
        config: Network hyperparameters.

    Returns:
        KernelMatrix whose (u, v) entry is K^L(column_u, column_v).
    """
    columns = _as_column_matrix(feature_columns)
    d_in, p = columns.shape
    if p < 2:
        raise KernelDimensionError(f"need at least 2 feature columns, got {p}")
    if d_in == 0:
        raise KernelDomainError("feature columns must have positive length")

    k = config.bias_variance + config.weight_variance * (columns.T @ columns) / d_in
    k = _mirror_upper(k)

    degenerate = np.flatnonzero(np.diag(k) <= 0).tolist()
    if degenerate:
        raise KernelDomainError(
            f"feature columns {degenerate} have a zero kernel diagonal "
            "(all-zero column with bias_variance 0)"
        )

    expectation = (
        _relu_expectation if config.activation is Activation.RELU else _erf_expectation
    )
    for layer in range(config.depth):
        diag = np.diag(k).copy()
        k = config.bias_variance + config.weight_variance * expectation(k, diag)
        k = _mirror_upper(k)
        logger.debug("Kernel layer %d: mean diagonal %.4g", layer + 1, float(np.mean(np.diag(k))))

    return KernelMatrix(entries=k, config=config, input_dim=d_in)


# ---------------------------------------------------------------------------
# Monte-Carlo oracle
# ---------------------------------------------------------------------------

_ACTIVATIONS = {
    Activation.RELU: lambda z: np.maximum(z, 0.0),
    Activation.ERF: erf,
}


def mc_oracle_kernel(
    x: Sequence[float],
    x_prime: Sequence[float],
    config: NetworkConfig,
    samples: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Estimate K^L(x, x') by sampling each layer's expectation directly.

    At every layer, `samples` bivariate-normal pairs are drawn with the
    previous layer's 2x2 covariance. The cross term's standard error is
    accumulated across layers (sum of per-layer errors times sigma_w^2).

    Returns:
        (estimate, std_error)
    """
    rng = np.random.default_rng(seed)
    phi = _ACTIVATIONS[config.activation]
    k_xx = base_kernel(x, x, config)
    k_xxp = base_kernel(x, x_prime, config)
    k_xpxp = base_kernel(x_prime, x_prime, config)
    std_error = 0.0

    for _ in range(config.depth):
        _check_triple(k_xx, k_xxp, k_xpxp)
        g = rng.standard_normal((2, samples))
        sd_x = math.sqrt(k_xx)
        loading = k_xxp / sd_x
        residual_sd = math.sqrt(max(k_xpxp - loading**2, 0.0))
        z = sd_x * g[0]
        z_prime = loading * g[0] + residual_sd * g[1]
        f, f_prime = phi(z), phi(z_prime)

        cross = f * f_prime
        std_error += config.weight_variance * float(np.std(cross, ddof=1)) / math.sqrt(samples)
        k_xx, k_xxp, k_xpxp = (
            config.bias_variance + config.weight_variance * float(np.mean(f * f)),
            config.bias_variance + config.weight_variance * float(np.mean(cross)),
            config.bias_variance + config.weight_variance * float(np.mean(f_prime * f_prime)),
        )

    return k_xxp, std_error


@dataclass
class KernelCheckReport:
    """Outcome of comparing the analytic kernel with the Monte-Carlo oracle."""
    cases: int = 0
    agreeing: int = 0
    halving_law_ok: bool = True
    max_halving_error: float = 0.0
    failures: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.halving_law_ok and self.agreeing >= math.ceil(0.96 * self.cases)

    def to_dict(self) -> dict:
        return {
            "cases": self.cases,
            "agreeing": self.agreeing,
            "halving_law_ok": self.halving_law_ok,
            "max_halving_error": self.max_halving_error,
            "passed": self.passed,
            "failures": self.failures,
        }


def kernel_check(
    cases: int = 50,
    samples: int = 100_000,
    seed: int = 0,
    max_depth: int = 3,
    dim: int = 8,
    threads: int = 1,
) -> KernelCheckReport:
    """Validate kernel_value against mc_oracle_kernel on random inputs.

    Also checks the ReLU diagonal law K^l(x,x) = K^{l-1}(x,x)/2 for
    sigma_w^2 = 1, sigma_b^2 = 0. Inputs are drawn before the oracle runs,
    so `threads` never changes the outcome.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    rng = np.random.default_rng(seed)
    report = KernelCheckReport(cases=cases)

    drawn = []
    for case in range(cases):
        depth = int(rng.integers(1, max_depth + 1))
        config = NetworkConfig(
            depth=depth,
            weight_variance=float(rng.uniform(0.5, 2.0)),
            bias_variance=float(rng.uniform(0.0, 0.5)),
        )
        drawn.append((case, config, rng.standard_normal(dim), rng.standard_normal(dim)))

    def compare(item) -> dict:
        case, config, x, x_prime = item
        estimate, std_error = mc_oracle_kernel(x, x_prime, config, samples, seed + case + 1)
        return {
            "case": case,
            "depth": config.depth,
            "analytic": kernel_value(x, x_prime, config),
            "estimate": estimate,
            "std_error": std_error,
        }

    with ThreadPoolExecutor(max_workers=threads) as executor:
        outcomes = list(executor.map(compare, drawn))

    for outcome in outcomes:
        if abs(outcome["analytic"] - outcome["estimate"]) <= 4 * outcome["std_error"]:
            report.agreeing += 1
        else:
            report.failures.append(outcome)

    unit = NetworkConfig(depth=1, weight_variance=1.0, bias_variance=0.0)
    for _, _, x, _ in drawn:
        previous = base_kernel(x, x, unit)
        for layer in range(1, max_depth + 1):
            current = kernel_value(x, x, NetworkConfig(depth=layer))
            error = abs(current - previous / 2)
            report.max_halving_error = max(report.max_halving_error, error)
            if error > 1e-12 * max(1.0, abs(previous)):
                report.halving_law_ok = False
            previous = current

    logger.info(
        "Kernel check: %d/%d oracle agreements, halving law %s",
        report.agreeing, report.cases, "ok" if report.halving_law_ok else "VIOLATED",
    )
    return report
