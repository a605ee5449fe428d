"""Conditional Gaussian posterior for one missingness pattern.

Given the kernel matrix over all p feature columns and a split into observed
columns (obs) and missing columns (mis), the missing entries of a row follow

    x_mis | x_obs ~ N(S21 S11^-1 x_obs, S22 - S21 S11^-1 S12)

S11^-1 is never formed: every application goes through the Cholesky factor of
S11. When S11 is numerically singular (duplicated or near-duplicated features),
a jitter proportional to the mean diagonal is added and escalated until the
factorization succeeds.

Randomness is drawn from RngStream objects: a seed plus a tuple key, mapped
through SeedSequence into a counter-based Philox generator, so every
(imputation, pattern, cycle, row) combination owns an independent stream that
does not depend on thread scheduling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .errors import InputDataError, SamplingError, SingularKernelError
from .kernel_engine import KernelMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class JitterPolicy:
    """Jitter multipliers tried in order, relative to the mean diagonal.

    A factor whose smallest pivot squared falls below `pivot_floor` times the
    mean diagonal is treated as a failed factorization.
    """
    multipliers: tuple[float, ...] = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
    pivot_floor: float = 1e-12

    def __post_init__(self) -> None:
        if not self.multipliers:
            raise ValueError("jitter schedule must not be empty")
        if any(m < 0 for m in self.multipliers):
            raise ValueError(f"jitter multipliers must be >= 0, got {self.multipliers}")
        if list(self.multipliers) != sorted(self.multipliers):
            raise ValueError("jitter multipliers must be non-decreasing")


DEFAULT_JITTER = JitterPolicy()


@dataclass
class PosteriorBlocks:
    """Block split of the kernel for one pattern.

    chol11 @ chol11.T reproduces sigma11 + (noise + jitter_used) * I.
    sigma21 is sigma12.T and is not stored.
    """
    sigma11: np.ndarray
    sigma12: np.ndarray
    sigma22: np.ndarray
    chol11: np.ndarray
    jitter_used: float = 0.0
    noise: float = 0.0

    @property
    def n_obs(self) -> int:
        return self.sigma11.shape[0]

    @property
    def n_mis(self) -> int:
        return self.sigma22.shape[0]


@dataclass(frozen=True)
class RngStream:
    """Independent random stream identified by (seed, key)."""
    seed: int
    key: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if any(part < 0 for part in self.key):
            raise ValueError(f"stream key parts must be non-negative, got {self.key}")

    def child(self, *parts: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(p) for p in parts))

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(sequence))


# ---------------------------------------------------------------------------
# Factorization
# ---------------------------------------------------------------------------

def _try_cholesky(matrix: np.ndarray, floor: float) -> Optional[np.ndarray]:
    try:
        chol = linalg.cholesky(matrix, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    if np.min(np.diag(chol)) ** 2 < floor:
        return None
    return chol


def jittered_cholesky(
    matrix: np.ndarray, policy: JitterPolicy = DEFAULT_JITTER
) -> tuple[Optional[np.ndarray], float]:
    """Lower Cholesky factor of matrix + jitter * I, escalating the jitter.

    Returns:
        (factor, jitter) with factor None when every step of the schedule failed.
    """
    if not np.all(np.isfinite(matrix)):
        return None, 0.0
    scale = float(np.mean(np.diag(matrix)))
    if scale <= 0:
        return None, 0.0
    floor = policy.pivot_floor * scale
    eye = np.eye(matrix.shape[0])
    for multiplier in policy.multipliers:
        jitter = multiplier * scale
        chol = _try_cholesky(matrix + jitter * eye if jitter else matrix, floor)
        if chol is not None:
            if jitter:
                logger.debug("Cholesky needed jitter %.3e (mean diagonal %.3e)", jitter, scale)
            return chol, jitter
    return None, policy.multipliers[-1] * scale


def _index_array(cols: Sequence[int], p: int, label: str) -> np.ndarray:
    idx = np.asarray(cols, dtype=int).ravel()
    if idx.size == 0:
        raise InputDataError(f"{label} column set must be nonempty")
    if idx.min() < 0 or idx.max() >= p:
        raise InputDataError(f"{label} columns out of range [0, {p})")
    if np.unique(idx).size != idx.size:
        raise InputDataError(f"{label} columns contain duplicates")
    return idx


def partition_sigma(
    kernel: Union[KernelMatrix, np.ndarray],
    obs_cols: Sequence[int],
    mis_cols: Sequence[int],
    jitter_policy: JitterPolicy = DEFAULT_JITTER,
    noise: float = 0.0,
    pattern: Optional[int] = None,
) -> PosteriorBlocks:
    """Extract the (obs, mis) blocks and factor the observed block.

    Args:
        kernel: p x p kernel over feature columns.
        obs_cols: Columns observed in the pattern.
        mis_cols: Columns missing in the pattern.
        jitter_policy: Escalation schedule for the factorization.
        noise: Observation noise variance added to the sigma11 diagonal.
        pattern: Pattern index, used only in error messages.

    Raises:
        SingularKernelError if sigma11 cannot be factored at the largest jitter.
    """
    entries = kernel.entries if isinstance(kernel, KernelMatrix) else np.asarray(kernel)
    p = entries.shape[0]
    obs = _index_array(obs_cols, p, "observed")
    mis = _index_array(mis_cols, p, "missing")
    if np.intersect1d(obs, mis).size:
        raise InputDataError("observed and missing column sets overlap")
    if noise < 0:
        raise ValueError(f"observation noise must be >= 0, got {noise}")

    sigma11 = entries[np.ix_(obs, obs)]
    sigma12 = entries[np.ix_(obs, mis)]
    sigma22 = entries[np.ix_(mis, mis)]

    target = sigma11 + noise * np.eye(obs.size) if noise else sigma11
    chol, jitter = jittered_cholesky(target, jitter_policy)
    if chol is None:
        condition = float(np.linalg.cond(sigma11)) if np.all(np.isfinite(sigma11)) else float("inf")
        where = f" for pattern {pattern}" if pattern is not None else ""
        raise SingularKernelError(
            f"observed kernel block{where} is singular even with jitter {jitter:.3e} "
            f"(condition estimate {condition:.3e})",
            pattern=pattern,
            condition=condition,
        )
    if jitter > 0:
        logger.warning(
            "Pattern %s: added jitter %.3e to a %d x %d observed kernel block",
            pattern if pattern is not None else "?", jitter, obs.size, obs.size,
        )
    return PosteriorBlocks(sigma11, sigma12, sigma22, chol, jitter_used=jitter, noise=noise)


# ---------------------------------------------------------------------------
# Posterior
# ---------------------------------------------------------------------------

def posterior_covariance(blocks: PosteriorBlocks) -> tuple[np.ndarray, int]:
    """S22 - S21 S11^-1 S12, symmetrized, with negative diagonal entries clamped.

    Returns:
        (cov, clamped) where clamped counts the diagonal entries set to zero.
    """
    v = linalg.solve_triangular(blocks.chol11, blocks.sigma12, lower=True, check_finite=False)
    cov = blocks.sigma22 - v.T @ v
    cov = (cov + cov.T) / 2
    diag = np.diag(cov)
    negative = diag < 0
    clamped = int(negative.sum())
    if clamped:
        logger.warning(
            "Clamped %d negative posterior variances (smallest %.3e)", clamped, float(diag.min())
        )
        cov[np.diag_indices_from(cov)] = np.where(negative, 0.0, diag)
    return cov, clamped


def posterior_mean(blocks: PosteriorBlocks, x_obs: np.ndarray) -> np.ndarray:
    """S21 S11^-1 x_obs for one row (1-D) or a block of rows (2-D, rows x obs)."""
    x_obs = np.asarray(x_obs, dtype=np.float64)
    if x_obs.shape[-1] != blocks.n_obs or x_obs.ndim not in (1, 2):
        raise InputDataError(
            f"x_obs has shape {x_obs.shape}, expected trailing dimension {blocks.n_obs}"
        )
    alpha = linalg.cho_solve((blocks.chol11, True), x_obs.T, check_finite=False)
    return (blocks.sigma12.T @ alpha).T


def posterior_params(blocks: PosteriorBlocks, x_obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and covariance of the missing entries.

    x_obs may be one row or a 2-D block of rows sharing the pattern; the
    covariance is the same for every row.
    """
    mean = posterior_mean(blocks, x_obs)
    cov, _ = posterior_covariance(blocks)
    return mean, cov


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

@dataclass
class CovarianceFactor:
    """Square-root factor of a PSD covariance restricted to its active coordinates.

    Coordinates with (numerically) zero variance are left at the mean.
    """
    active: np.ndarray
    chol: np.ndarray
    size: int
    jitter: float = 0.0


def factor_covariance(
    cov: np.ndarray, policy: JitterPolicy = DEFAULT_JITTER, tol: float = 1e-12
) -> CovarianceFactor:
    """Factor a posterior covariance for repeated sampling.

    Raises:
        SamplingError when cov is indefinite beyond the jitter budget.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InputDataError(f"covariance must be square, got shape {cov.shape}")
    size = cov.shape[0]
    diag = np.diag(cov)
    top = float(diag.max()) if size else 0.0
    if size and diag.min() < -1e-8 * max(top, 1.0):
        raise SamplingError(f"covariance has negative variance {diag.min():.3e}")
    if top <= 0:
        return CovarianceFactor(np.empty(0, dtype=int), np.empty((0, 0)), size)

    active = np.flatnonzero(diag > tol * top)
    sub = cov[np.ix_(active, active)]
    chol, jitter = jittered_cholesky(sub, policy)
    if chol is None:
        raise SamplingError(
            f"covariance of size {active.size} is not positive semidefinite "
            f"within jitter {jitter:.3e}"
        )
    return CovarianceFactor(active, chol, size, jitter)


def sample_mvn(
    mean: np.ndarray,
    cov: Optional[np.ndarray],
    rng: Union[RngStream, np.random.Generator],
    factor: Optional[CovarianceFactor] = None,
) -> np.ndarray:
    """One draw from N(mean, cov).

    A precomputed factor from factor_covariance may be passed to skip the
    factorization. A zero covariance returns the mean exactly.
    """
    mean = np.asarray(mean, dtype=np.float64)
    if factor is None:
        if cov is None:
            raise InputDataError("either cov or factor must be given")
        factor = factor_covariance(cov)
    if mean.shape != (factor.size,):
        raise InputDataError(f"mean has shape {mean.shape}, covariance size {factor.size}")

    draw = mean.copy()
    if factor.active.size == 0:
        return draw
    generator = rng.generator() if isinstance(rng, RngStream) else rng
    z = generator.standard_normal(factor.active.size)
    draw[factor.active] += factor.chol @ z
    return draw
