"""Shared fixtures: a small 4-pattern dataset in block order."""

from __future__ import annotations

import numpy as np
import pytest

from nngp_impute.pattern_model import Dataset

N_ROWS = 40
N_COLS = 6


def _toy_values(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(N_ROWS, 3))
    mixing = rng.normal(size=(3, N_COLS))
    return latent @ mixing + 0.1 * rng.normal(size=(N_ROWS, N_COLS))


def _toy_mask() -> np.ndarray:
    # rows 0-9 complete, 10-19 miss col 4, 20-29 miss col 5, 30-39 miss both
    mask = np.ones((N_ROWS, N_COLS), dtype=bool)
    mask[10:20, 4] = False
    mask[20:30, 5] = False
    mask[30:40, 4:6] = False
    return mask


@pytest.fixture
def toy_truth() -> np.ndarray:
    return _toy_values(0)


@pytest.fixture
def toy_dataset(toy_truth) -> Dataset:
    mask = _toy_mask()
    values = np.where(mask, toy_truth, np.nan)
    names = [f"x{j + 1}" for j in range(N_COLS)]
    return Dataset(values=values, mask=mask, column_names=names)


@pytest.fixture
def duplicate_dataset() -> Dataset:
    """Column 5 is an exact copy of column 0 and is missing in rows 20-39."""
    values = _toy_values(1)
    values[:, 5] = values[:, 0]
    mask = np.ones_like(values, dtype=bool)
    mask[20:, 5] = False
    return Dataset(values=np.where(mask, values, np.nan), mask=mask)


@pytest.fixture
def no_complete_dataset(toy_truth) -> Dataset:
    mask = np.ones_like(toy_truth, dtype=bool)
    mask[:20, 4] = False
    mask[20:, 5] = False
    return Dataset(values=np.where(mask, toy_truth, np.nan), mask=mask)
