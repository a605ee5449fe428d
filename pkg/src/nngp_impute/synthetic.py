"""Synthetic incomplete datasets with known ground truth.

Generation runs in four steps:
1. AR(1) columns: a_1 from the first-column distribution, then
   a_j = rho * a_{j-1} + eps_j with Gaussian or exponential white noise.
2. Column rearrangement, so that the columns driving the response are
   spread away from their autoregressive neighbours:
   - five-block scheme: the 4th then the 5th column of every five moves right
   - ten-block scheme: the 7th/9th then the 8th/10th of every ten move right
   An optional binary column 1{x_10 + x_50 + x_100 > 0} can be appended.
3. Response y = x_q1 + x_q2 + x_q3 + N(0, sigma1^2), so the true beta is (1, 1, 1).
4. Missingness in two column blocks, one Bernoulli indicator per row and
   block drawn from a logit model (MAR, MNAR), a fixed rate (MCAR) or a
   user-supplied injection rule set. Each row therefore falls in one of at
   most four patterns.

Column references in configs are 1-based and inclusive; they are converted
to 0-based indices internally.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import InputDataError
from .inference import RegressionSpec
from .pattern_model import ColumnKind, Dataset

logger = logging.getLogger(__name__)

ColumnRange = tuple[int, int]


class Distribution(str, Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"


class Mechanism(str, Enum):
    MCAR = "mcar"
    MAR = "mar"
    MNAR = "mnar"


class Rearrangement(str, Enum):
    NONE = "none"
    FIVE_BLOCK = "five"
    TEN_BLOCK = "ten"


# ---------------------------------------------------------------------------
# Missingness injection rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InjectionRule:
    """logit P(block missing) = intercept + driver_coef * mean(drivers) + response_coef * y."""
    target_cols: ColumnRange
    intercept: float
    driver_cols: Optional[ColumnRange] = None
    driver_coef: float = 0.0
    response_coef: float = 0.0

    def to_dict(self) -> dict:
        return {
            "target_cols": list(self.target_cols),
            "intercept": self.intercept,
            "driver_cols": list(self.driver_cols) if self.driver_cols else None,
            "driver_coef": self.driver_coef,
            "response_coef": self.response_coef,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InjectionRule":
        drivers = data.get("driver_cols")
        return cls(
            target_cols=tuple(data["target_cols"]),
            intercept=float(data["intercept"]),
            driver_cols=tuple(drivers) if drivers else None,
            driver_coef=float(data.get("driver_coef", 0.0)),
            response_coef=float(data.get("response_coef", 0.0)),
        )


@dataclass(frozen=True)
class InjectionSpec:
    rules: tuple[InjectionRule, ...]
    mechanism: Mechanism = Mechanism.MAR

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        if not self.rules:
            raise ValueError("injection spec needs at least one rule")

    def to_dict(self) -> dict:
        return {"mechanism": self.mechanism.value, "rules": [r.to_dict() for r in self.rules]}

    @classmethod
    def from_dict(cls, data: dict) -> "InjectionSpec":
        return cls(
            rules=tuple(InjectionRule.from_dict(r) for r in data["rules"]),
            mechanism=Mechanism(data.get("mechanism", "mar")),
        )


def _to_slice(cols: ColumnRange, width: int, label: str) -> slice:
    first, last = int(cols[0]), int(cols[1])
    if not 1 <= first <= last <= width:
        raise InputDataError(f"{label} range {cols} outside columns 1..{width}")
    return slice(first - 1, last)


def adni_injection_spec(mechanism: Mechanism | str = Mechanism.MAR) -> InjectionSpec:
    """Two-block injection used on a 10000-feature real-data panel.

    Targets are columns 1-1000 and 1001-2000. MAR rules are driven by the means
    of columns 2001-2100 and 2201-2300; MNAR rules by columns 1001-1005 and 1-5.
    """
    mechanism = Mechanism(mechanism)
    if mechanism is Mechanism.MAR:
        drivers = ((2001, 2100), (2201, 2300))
    elif mechanism is Mechanism.MNAR:
        drivers = ((1001, 1005), (1, 5))
    else:
        raise ValueError("the real-data protocol defines MAR and MNAR rules only")
    return InjectionSpec(
        rules=(
            InjectionRule((1, 1000), -1.0, drivers[0], -3.0, 3.0),
            InjectionRule((1001, 2000), -1.0, drivers[1], -3.0, 2.0),
        ),
        mechanism=mechanism,
    )


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """One synthetic scenario.

    noise_scale is the SD of Gaussian noise or the mean of exponential noise;
    first_col_scale likewise for column a_1. q holds 1-based predictor columns
    of the generated X (binary column included when appended).
    """
    n: int = 200
    p: int = 50
    rho: float = 0.95
    noise: Distribution = Distribution.GAUSSIAN
    noise_scale: float = 0.1
    first_col: Distribution = Distribution.GAUSSIAN
    first_col_scale: float = 1.0
    sigma1: float = 0.5
    q: tuple[int, int, int] = (40, 44, 48)
    a: tuple[float, ...] = (1.0, -2.0, 3.0, 0.0, 2.0, -2.0)
    mechanism: Mechanism = Mechanism.MAR
    mcar_rate: float = 0.4
    binary_append: bool = False
    rearrangement: Rearrangement = Rearrangement.FIVE_BLOCK
    injection: Optional[InjectionSpec] = None
    seed: int = 0

    def __post_init__(self) -> None:
        for name, enum in (
            ("noise", Distribution), ("first_col", Distribution),
            ("mechanism", Mechanism), ("rearrangement", Rearrangement),
        ):
            object.__setattr__(self, name, enum(getattr(self, name)))
        object.__setattr__(self, "q", tuple(int(j) for j in self.q))
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.p < 5:
            raise ValueError(f"p must be >= 5, got {self.p}")
        if not -1 < self.rho < 1:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if len(self.q) != 3:
            raise ValueError(f"q must hold 3 predictor columns, got {self.q}")
        if any(not 1 <= j <= self.width for j in self.q):
            raise ValueError(f"q {self.q} outside columns 1..{self.width}")
        if len(self.a) != 6:
            raise ValueError(f"a must hold 6 logit coefficients, got {len(self.a)}")
        if not 0 <= self.mcar_rate <= 1:
            raise ValueError(f"mcar_rate must be in [0, 1], got {self.mcar_rate}")
        if self.binary_append and self.p < 100:
            raise ValueError("binary_append needs p >= 100")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    @property
    def width(self) -> int:
        """Number of X columns (p, plus one for the binary column)."""
        return self.p + int(self.binary_append)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "rho": self.rho,
            "noise": self.noise.value,
            "noise_scale": self.noise_scale,
            "first_col": self.first_col.value,
            "first_col_scale": self.first_col_scale,
            "sigma1": self.sigma1,
            "q": list(self.q),
            "a": list(self.a),
            "mechanism": self.mechanism.value,
            "mcar_rate": self.mcar_rate,
            "binary_append": self.binary_append,
            "rearrangement": self.rearrangement.value,
            "injection": self.injection.to_dict() if self.injection else None,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputDataError(f"unknown scenario fields: {sorted(unknown)}")
        if data.get("injection"):
            data["injection"] = InjectionSpec.from_dict(data["injection"])
        if "q" in data:
            data["q"] = tuple(data["q"])
        if "a" in data:
            data["a"] = tuple(data["a"])
        return cls(**data)


@dataclass
class SyntheticSample:
    """A generated dataset together with everything needed to score imputations."""
    dataset: Dataset
    truth: np.ndarray
    true_beta: np.ndarray
    regression: RegressionSpec
    config: SynthConfig

    @property
    def mask(self) -> np.ndarray:
        return self.dataset.mask

    @property
    def binary_cols(self) -> list[int]:
        return self.dataset.binary_cols


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------

def _draw(dist: Distribution, scale: float, size, rng: np.random.Generator) -> np.ndarray:
    if dist is Distribution.GAUSSIAN:
        return rng.normal(0.0, scale, size=size)
    return rng.exponential(scale, size=size)


def gen_ar1(config: SynthConfig, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """n x p matrix A with AR(1) dependence along the columns."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    a = np.empty((config.n, config.p))
    a[:, 0] = _draw(config.first_col, config.first_col_scale, config.n, rng)
    noise = _draw(config.noise, config.noise_scale, (config.n, config.p - 1), rng)
    for j in range(1, config.p):
        a[:, j] = config.rho * a[:, j - 1] + noise[:, j - 1]
    return a


def rearrangement_order(p: int, scheme: Rearrangement | str = Rearrangement.FIVE_BLOCK) -> np.ndarray:
    """0-based permutation such that X = A[:, order].

    Columns past the largest multiple of the block size keep their place at
    the end.
    """
    scheme = Rearrangement(scheme)
    if scheme is Rearrangement.NONE:
        return np.arange(p)
    if scheme is Rearrangement.FIVE_BLOCK:
        block, first, second = 5, (3,), (4,)
    else:
        block, first, second = 10, (6, 8), (7, 9)
    prefix = (p // block) * block
    offsets = np.arange(prefix) % block
    idx = np.arange(prefix)
    moved = set(first) | set(second)
    stay = idx[~np.isin(offsets, list(moved))]
    group1 = idx[np.isin(offsets, first)]
    group2 = idx[np.isin(offsets, second)]
    return np.concatenate([stay, group1, group2, np.arange(prefix, p)])


def rearrange_columns(a: np.ndarray, scheme: Rearrangement | str = Rearrangement.FIVE_BLOCK) -> np.ndarray:
    return a[:, rearrangement_order(a.shape[1], scheme)]


def gen_response(
    x: np.ndarray, q: Sequence[int], sigma1: float, rng: np.random.Generator
) -> np.ndarray:
    """y = x_q1 + x_q2 + x_q3 + N(0, sigma1^2), q 1-based."""
    cols = [int(j) - 1 for j in q]
    if any(not 0 <= c < x.shape[1] for c in cols):
        raise InputDataError(f"q {tuple(q)} outside columns 1..{x.shape[1]}")
    y = x[:, cols].sum(axis=1)
    if sigma1 > 0:
        y = y + rng.normal(0.0, sigma1, size=x.shape[0])
    return y


def append_binary(x: np.ndarray) -> np.ndarray:
    """Append 1{x_10 + x_50 + x_100 > 0} as a new last column."""
    if x.shape[1] < 100:
        raise InputDataError(f"binary column needs at least 100 columns, got {x.shape[1]}")
    indicator = (x[:, 9] + x[:, 49] + x[:, 99] > 0).astype(np.float64)
    return np.column_stack([x, indicator])


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------

def default_blocks(p: int, width: Optional[int] = None) -> tuple[ColumnRange, ColumnRange]:
    """The two maskable blocks (3p/5, 4p/5] and (4p/5, width], 1-based."""
    width = width or p
    return (3 * p // 5 + 1, 4 * p // 5), (4 * p // 5 + 1, width)


def _block_mask(
    n: int,
    width: int,
    blocks: Sequence[ColumnRange],
    probabilities: Sequence[np.ndarray],
    rng: np.random.Generator,
) -> np.ndarray:
    """Observation mask: block b is missing in the rows where R_b = 1."""
    observed = np.ones((n, width), dtype=bool)
    for cols, prob in zip(blocks, probabilities):
        missing_rows = rng.random(n) < prob
        observed[np.ix_(missing_rows, np.arange(width)[_to_slice(cols, width, "block")])] = False
    return observed


def gen_mar_mask(
    x: np.ndarray,
    y: np.ndarray,
    a: Sequence[float],
    p: int,
    rng: np.random.Generator,
    blocks: Optional[Sequence[ColumnRange]] = None,
) -> np.ndarray:
    """MAR observation mask (True = observed) driven by the always-observed columns 1..3p/5 and y.

    With the default coefficients about 90% of rows lose at least one block
    and the two maskable blocks cover 40% of the features. The share of
    missing cells is lower, near 0.23, since each row drops one block or both.
    """
    blocks = blocks or default_blocks(p, x.shape[1])
    driver = x[:, : 3 * p // 5].mean(axis=1)
    eta1 = a[0] + a[1] * driver + a[2] * y
    eta2 = a[3] + a[4] * driver + a[5] * y
    return _block_mask(x.shape[0], x.shape[1], blocks, (expit(eta1), expit(eta2)), rng)


def gen_mnar_mask(
    x: np.ndarray,
    y: np.ndarray,
    a: Sequence[float],
    p: int,
    rng: np.random.Generator,
    blocks: Optional[Sequence[ColumnRange]] = None,
) -> np.ndarray:
    """MNAR observation mask: each block's indicator depends on the other maskable block.

    Rates match gen_mar_mask: about 90% incomplete rows over 40% of the features.
    """
    blocks = blocks or default_blocks(p, x.shape[1])
    lower, upper = 3 * p // 5, 4 * p // 5
    eta1 = a[0] + a[1] * x[:, upper:p].mean(axis=1) + a[2] * y
    eta2 = a[3] + a[4] * x[:, lower:upper].mean(axis=1) + a[5] * y
    return _block_mask(x.shape[0], x.shape[1], blocks, (expit(eta1), expit(eta2)), rng)


def gen_mcar_mask(
    n: int,
    width: int,
    rate: float,
    rng: np.random.Generator,
    blocks: Optional[Sequence[ColumnRange]] = None,
    p: Optional[int] = None,
) -> np.ndarray:
    """MCAR observation mask: each block is missing in a row with probability `rate`."""
    blocks = blocks or default_blocks(p or width, width)
    full = np.full(n, rate)
    return _block_mask(n, width, blocks, (full, full), rng)


def inject_missingness(
    complete: Dataset,
    spec: InjectionSpec,
    rng: Optional[np.random.Generator] = None,
    seed: int = 0,
) -> Dataset:
    """Mask blocks of a fully observed dataset according to `spec`.

    Values are kept untouched so the input doubles as ground truth.
    """
    if not complete.is_complete:
        raise InputDataError("missingness can only be injected into a fully observed dataset")
    rng = rng if rng is not None else np.random.default_rng(seed)
    width = complete.n_cols
    y = complete.values[:, complete.response_col] if complete.response_col is not None else None

    targets = [np.arange(width)[_to_slice(r.target_cols, width, "target")] for r in spec.rules]
    all_targets = np.unique(np.concatenate(targets))
    if complete.response_col is not None and complete.response_col in all_targets:
        raise InputDataError("injection rules must not target the response column")

    probabilities = []
    for rule in spec.rules:
        eta = np.full(complete.n_rows, rule.intercept)
        if rule.driver_cols is not None and rule.driver_coef:
            drivers = _to_slice(rule.driver_cols, width, "driver")
            if spec.mechanism is Mechanism.MAR and np.isin(np.arange(width)[drivers], all_targets).any():
                raise InputDataError(
                    f"MAR driver columns {rule.driver_cols} overlap a target block"
                )
            eta = eta + rule.driver_coef * complete.values[:, drivers].mean(axis=1)
        if rule.response_coef:
            if y is None:
                raise InputDataError("rule uses the response but the dataset has none")
            eta = eta + rule.response_coef * y
        probabilities.append(expit(eta))

    mask = _block_mask(
        complete.n_rows, width, [r.target_cols for r in spec.rules], probabilities, rng
    )
    injected = Dataset(
        values=complete.values.copy(),
        mask=mask,
        column_kinds=list(complete.column_kinds),
        response_col=complete.response_col,
        column_names=complete.column_names,
    )
    logger.info(
        "Injected %s missingness: %.1f%% of cells, %.1f%% of rows incomplete",
        spec.mechanism.value, 100 * (~mask).mean(), 100 * (~mask).any(axis=1).mean(),
    )
    return injected


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

def generate_scenario(config: SynthConfig) -> SyntheticSample:
    """Generate X, y and the mask for one Monte-Carlo replicate."""
    rng = np.random.default_rng(config.seed)
    x = rearrange_columns(gen_ar1(config, rng), config.rearrangement)
    if config.binary_append:
        x = append_binary(x)
    y = gen_response(x, config.q, config.sigma1, rng)

    width = x.shape[1]
    truth = np.column_stack([x, y])
    kinds = [ColumnKind.CONTINUOUS] * width + [ColumnKind.CONTINUOUS]
    if config.binary_append:
        kinds[width - 1] = ColumnKind.BINARY
    names = [f"x{j + 1}" for j in range(width)] + ["y"]

    if config.injection is not None:
        complete = Dataset(truth, np.ones_like(truth, dtype=bool), kinds, width, names)
        dataset = inject_missingness(complete, config.injection, rng)
    else:
        if config.mechanism is Mechanism.MAR:
            observed = gen_mar_mask(x, y, config.a, config.p, rng)
        elif config.mechanism is Mechanism.MNAR:
            observed = gen_mnar_mask(x, y, config.a, config.p, rng)
        else:
            observed = gen_mcar_mask(config.n, width, config.mcar_rate, rng, p=config.p)
        mask = np.column_stack([observed, np.ones(config.n, dtype=bool)])
        dataset = Dataset(truth.copy(), mask, kinds, width, names)

    regression = RegressionSpec(tuple(j - 1 for j in config.q), response_col=width)
    true_beta = np.array([0.0, 1.0, 1.0, 1.0])
    logger.debug(
        "Scenario seed %d: %.1f%% missing cells", config.seed, 100 * (~dataset.mask).mean()
    )
    return SyntheticSample(dataset, truth, true_beta, regression, config)


_VARYING_BLOCKS = {
    20: ((0.8, 0.9), (0.9, 1.0)),
    40: ((0.6, 0.8), (0.8, 1.0)),
    60: ((0.4, 0.7), (0.7, 1.0)),
    80: ((0.2, 0.6), (0.6, 1.0)),
}


def varying_rate_config(rate: int, seed: int = 0, p: int = 1000, n: int = 200) -> SynthConfig:
    """Scenario whose maskable blocks cover `rate` percent of the columns.

    The mask model is fixed: logit P(R1) = 1 - 2 mean(x_1..x_{p/10}) + 3y and
    logit P(R2) = 2 mean(x_1..x_{p/10}) - 2y.
    """
    if rate not in _VARYING_BLOCKS:
        raise InputDataError(f"rate must be one of {sorted(_VARYING_BLOCKS)}, got {rate}")
    (s1, e1), (s2, e2) = _VARYING_BLOCKS[rate]
    block1 = (round(s1 * p) + 1, round(e1 * p))
    block2 = (round(s2 * p) + 1, round(e2 * p))
    drivers = (1, max(p // 10, 1))
    injection = InjectionSpec(
        rules=(
            InjectionRule(block1, 1.0, drivers, -2.0, 3.0),
            InjectionRule(block2, 0.0, drivers, 2.0, -2.0),
        ),
        mechanism=Mechanism.MAR,
    )
    return SynthConfig(
        n=n,
        p=p,
        q=(round(0.91 * p), round(0.95 * p), round(0.99 * p)),
        rearrangement=Rearrangement.TEN_BLOCK,
        injection=injection,
        seed=seed,
    )


def gen_varying_rate(rate: int, seed: int = 0, p: int = 1000, n: int = 200) -> SyntheticSample:
    return generate_scenario(varying_rate_config(rate, seed, p, n))
