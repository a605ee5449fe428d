"""Incomplete-data representation and K-pattern structure.

A dataset is a value matrix plus a boolean observation mask (True = observed).
Rows sharing the same mask row form one pattern; pattern 0 is the complete-case
pattern whenever complete cases exist. Remaining patterns are ordered by the
number of missing columns, ties broken by the first row in which the pattern
occurs.

Binary columns are imputed through a two-column zero-mean one-hot encoding
(-0.5 for the wrong class, +0.5 for the right one) and decoded by argmax.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import InputDataError, PatternValidationError

logger = logging.getLogger(__name__)


class ColumnKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass
class Dataset:
    """n x p incomplete data matrix. The mask is authoritative; values under
    masked-out cells are never read."""
    values: np.ndarray
    mask: np.ndarray
    column_kinds: list[ColumnKind] = field(default_factory=list)
    response_col: Optional[int] = None
    column_names: Optional[list[str]] = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2:
            raise InputDataError(f"values must be 2-D, got shape {self.values.shape}")
        if self.mask.shape != self.values.shape:
            raise InputDataError(
                f"mask shape {self.mask.shape} differs from values shape {self.values.shape}"
            )
        if not self.column_kinds:
            self.column_kinds = [ColumnKind.CONTINUOUS] * self.n_cols
        self.column_kinds = [ColumnKind(kind) for kind in self.column_kinds]
        if len(self.column_kinds) != self.n_cols:
            raise InputDataError(
                f"{len(self.column_kinds)} column kinds for {self.n_cols} columns"
            )
        if self.column_names is not None and len(self.column_names) != self.n_cols:
            raise InputDataError(
                f"{len(self.column_names)} column names for {self.n_cols} columns"
            )
        for j in self.binary_cols:
            observed = self.values[self.mask[:, j], j]
            if not np.isin(observed, (0.0, 1.0)).all():
                name = self.column_label(j)
                raise InputDataError(f"binary column {name} has values outside {{0, 1}}")
        if self.response_col is not None:
            if not 0 <= self.response_col < self.n_cols:
                raise InputDataError(f"response column {self.response_col} out of range")
            if not self.mask[:, self.response_col].all():
                raise InputDataError(
                    f"response column {self.column_label(self.response_col)} must be fully observed"
                )

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def binary_cols(self) -> list[int]:
        return [j for j, kind in enumerate(self.column_kinds) if kind is ColumnKind.BINARY]

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def column_label(self, j: int) -> str:
        if self.column_names is not None:
            return self.column_names[j]
        return str(j)

    def masked_values(self) -> np.ndarray:
        """Copy of values with NaN under every missing cell."""
        out = self.values.copy()
        out[~self.mask] = np.nan
        return out

    def take_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return replace(self, values=self.values[rows], mask=self.mask[rows])

    @classmethod
    def from_frame(
        cls,
        df: pd.DataFrame,
        binary_cols: Sequence[str] = (),
        response_col: Optional[str] = None,
    ) -> "Dataset":
        """Build a Dataset from a DataFrame where NaN marks missing cells."""
        names = [str(c) for c in df.columns]
        unknown = [c for c in [*binary_cols, *([response_col] if response_col else [])]
                   if c not in names]
        if unknown:
            raise InputDataError(f"unknown columns: {unknown}")
        try:
            values = df.to_numpy(dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise InputDataError(f"non-numeric data: {exc}") from exc
        kinds = [
            ColumnKind.BINARY if name in binary_cols else ColumnKind.CONTINUOUS
            for name in names
        ]
        return cls(
            values=values,
            mask=~np.isnan(values),
            column_kinds=kinds,
            response_col=names.index(response_col) if response_col else None,
            column_names=names,
        )


@dataclass
class PatternPartition:
    """K-pattern decomposition: row sets and observed/missing column sets."""
    rows: list[np.ndarray]
    obs_cols: list[np.ndarray]
    mis_cols: list[np.ndarray]
    n_rows: int
    n_cols: int

    @property
    def k(self) -> int:
        return len(self.rows)

    @property
    def has_complete_cases(self) -> bool:
        return self.k > 0 and self.mis_cols[0].size == 0

    @property
    def complete_rows(self) -> np.ndarray:
        if self.has_complete_cases:
            return self.rows[0]
        return np.empty(0, dtype=int)

    def incomplete_patterns(self) -> list[int]:
        """Indices of patterns with at least one missing column."""
        return [k for k in range(self.k) if self.mis_cols[k].size > 0]

    def complement_rows(self, k: int) -> np.ndarray:
        """P_{-k}: every row not in pattern k, ascending."""
        keep = np.ones(self.n_rows, dtype=bool)
        keep[self.rows[k]] = False
        return np.flatnonzero(keep)

    def is_block_ordered(self) -> bool:
        """True when each pattern occupies one contiguous run of rows."""
        return all(
            rows.size == 0 or rows[-1] - rows[0] + 1 == rows.size
            for rows in self.rows
        )

    def summary(self) -> list[dict]:
        return [
            {
                "pattern": k,
                "rows": int(self.rows[k].size),
                "observed_cols": int(self.obs_cols[k].size),
                "missing_cols": int(self.mis_cols[k].size),
            }
            for k in range(self.k)
        ]


# ---------------------------------------------------------------------------
# Pattern detection
# ---------------------------------------------------------------------------

def detect_patterns(dataset: Dataset) -> PatternPartition:
    """Group rows by identical mask rows into a PatternPartition."""
    n, p = dataset.mask.shape
    if n < 2 or p < 2:
        raise InputDataError(f"need at least 2 rows and 2 columns, got {n} x {p}")

    groups: dict[bytes, list[int]] = {}
    for i in range(n):
        groups.setdefault(dataset.mask[i].tobytes(), []).append(i)

    ordered = sorted(
        groups.values(),
        key=lambda members: (int((~dataset.mask[members[0]]).sum()), members[0]),
    )

    all_cols = np.arange(p)
    rows, obs_cols, mis_cols = [], [], []
    for members in ordered:
        row_mask = dataset.mask[members[0]]
        rows.append(np.asarray(members, dtype=int))
        obs_cols.append(all_cols[row_mask])
        mis_cols.append(all_cols[~row_mask])

    partition = PatternPartition(rows, obs_cols, mis_cols, n_rows=n, n_cols=p)
    logger.info(
        "Detected %d patterns over %d rows (%s complete cases)",
        partition.k, n, partition.complete_rows.size,
    )
    return partition


def assert_k_pattern(dataset: Dataset, partition: Optional[PatternPartition] = None) -> None:
    """Validate that `partition` describes `dataset` exactly.

    Without an explicit partition, the one from detect_patterns is checked.

    Raises:
        PatternValidationError naming the first offending row or column.
    """
    if partition is None:
        partition = detect_patterns(dataset)
    n, p = dataset.mask.shape

    seen = np.full(n, -1, dtype=int)
    for k, rows in enumerate(partition.rows):
        for i in rows:
            if not 0 <= i < n:
                raise PatternValidationError(f"pattern {k} references row {i} outside [0, {n})")
            if seen[i] >= 0:
                raise PatternValidationError(
                    f"row {i} appears in patterns {seen[i]} and {k}"
                )
            seen[i] = k
    unassigned = np.flatnonzero(seen < 0)
    if unassigned.size:
        raise PatternValidationError(f"row {unassigned[0]} is not assigned to any pattern")

    for k in range(partition.k):
        obs, mis = partition.obs_cols[k], partition.mis_cols[k]
        if np.intersect1d(obs, mis).size or np.union1d(obs, mis).size != p:
            raise PatternValidationError(
                f"pattern {k}: observed and missing columns must split [0, {p})"
            )
        expected = np.zeros(p, dtype=bool)
        expected[obs] = True
        for i in partition.rows[k]:
            if not np.array_equal(dataset.mask[i], expected):
                raise PatternValidationError(
                    f"row {i} does not match the mask of pattern {k}"
                )


def sort_rows(dataset: Dataset) -> tuple[Dataset, np.ndarray]:
    """Reorder rows so each pattern is one contiguous block.

    Returns:
        (sorted_dataset, order) where sorted_dataset row r is dataset row order[r].
    """
    partition = detect_patterns(dataset)
    order = np.concatenate(partition.rows)
    return dataset.take_rows(order), order


def restore_order(matrix: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Undo sort_rows on an output matrix."""
    restored = np.empty_like(matrix)
    restored[order] = matrix
    return restored


# ---------------------------------------------------------------------------
# Binary encoding
# ---------------------------------------------------------------------------

@dataclass
class BinaryEncoding:
    """Column layout map produced by encode_binary.

    `layout[j]` lists the encoded columns for original column j: one index for
    continuous columns, (class-0, class-1) for binary ones.
    """
    layout: list[tuple[int, ...]]
    n_encoded: int

    @property
    def pairs(self) -> dict[int, tuple[int, int]]:
        return {j: cols for j, cols in enumerate(self.layout) if len(cols) == 2}

    @property
    def n_original(self) -> int:
        return len(self.layout)


def encode_binary(dataset: Dataset) -> tuple[Dataset, BinaryEncoding]:
    """Replace each binary column with a zero-mean one-hot pair."""
    n = dataset.n_rows
    blocks_v, blocks_m, kinds, names, layout = [], [], [], [], []
    cursor = 0
    for j, kind in enumerate(dataset.column_kinds):
        col_v = dataset.values[:, j]
        col_m = dataset.mask[:, j]
        label = dataset.column_label(j)
        if kind is ColumnKind.BINARY:
            observed = col_v[col_m]
            if not np.isin(observed, (0.0, 1.0)).all():
                raise InputDataError(f"binary column {label} has values outside {{0, 1}}")
            class1 = np.where(col_v == 1.0, 0.5, -0.5)
            pair = np.column_stack([-class1, class1])
            pair[~col_m] = np.nan
            blocks_v.append(pair)
            blocks_m.append(np.column_stack([col_m, col_m]))
            kinds.extend([ColumnKind.CONTINUOUS, ColumnKind.CONTINUOUS])
            names.extend([f"{label}__0", f"{label}__1"])
            layout.append((cursor, cursor + 1))
            cursor += 2
        else:
            blocks_v.append(col_v.reshape(n, 1))
            blocks_m.append(col_m.reshape(n, 1))
            kinds.append(kind)
            names.append(label)
            layout.append((cursor,))
            cursor += 1

    response = None
    if dataset.response_col is not None:
        response = layout[dataset.response_col][0]

    encoded = Dataset(
        values=np.hstack(blocks_v),
        mask=np.hstack(blocks_m),
        column_kinds=kinds,
        response_col=response,
        column_names=names if dataset.column_names is not None else None,
    )
    return encoded, BinaryEncoding(layout=layout, n_encoded=cursor)


def decode_binary(imputed: np.ndarray, encoding: BinaryEncoding) -> np.ndarray:
    """Collapse encoded pairs back to 0/1 columns; class 1 wins only on a strict lead."""
    imputed = np.asarray(imputed, dtype=np.float64)
    if imputed.ndim != 2 or imputed.shape[1] != encoding.n_encoded:
        raise InputDataError(
            f"matrix has {imputed.shape[-1]} columns, encoding expects {encoding.n_encoded}"
        )
    out = np.empty((imputed.shape[0], encoding.n_original), dtype=np.float64)
    for j, cols in enumerate(encoding.layout):
        if len(cols) == 2:
            out[:, j] = (imputed[:, cols[1]] > imputed[:, cols[0]]).astype(np.float64)
        else:
            out[:, j] = imputed[:, cols[0]]
    return out
