"""CSV input and output for incomplete and imputed datasets.

Missing cells are read from empty fields or the literal ``NA``. Imputed
matrices are written with 17 significant digits so that re-reading them
reproduces the in-memory values bit for bit.
"""

from __future__ import annotations

import glob
import logging
import re
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import InputDataError
from .imputers import ImputedSet
from .pattern_model import Dataset, restore_order
from .report import export_diagnostics

logger = logging.getLogger(__name__)

_FLOAT_FORMAT = "%.17g"


def _read_frame(path: Path, header: bool) -> pd.DataFrame:
    try:
        df = pd.read_csv(
            path,
            header=0 if header else None,
            na_values=["NA", ""],
            keep_default_na=False,
            float_precision="round_trip",
        )
    except FileNotFoundError as exc:
        raise InputDataError(f"file not found: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputDataError(f"cannot parse {path}: {exc}") from exc
    if not header:
        df.columns = [f"c{j + 1}" for j in range(df.shape[1])]
    df.columns = [str(c) for c in df.columns]
    return df


def read_incomplete_csv(
    path: str | Path,
    header: bool = True,
    binary_cols: Sequence[str] = (),
    response_col: Optional[str] = None,
) -> Dataset:
    """Load a CSV with missing cells into a Dataset.

    Without a header, columns are named c1..cp and binary/response columns
    are referred to by those names.
    """
    path = Path(path)
    df = _read_frame(path, header)
    if df.shape[0] < 2 or df.shape[1] < 2:
        raise InputDataError(f"{path}: need at least 2 rows and 2 columns, got {df.shape}")
    dataset = Dataset.from_frame(df, binary_cols=binary_cols, response_col=response_col)
    logger.info(
        "Read %s: %d rows x %d columns, %.1f%% missing",
        path, dataset.n_rows, dataset.n_cols, 100 * (~dataset.mask).mean(),
    )
    return dataset


def write_matrix_csv(
    matrix: np.ndarray,
    path: str | Path,
    column_names: Optional[Sequence[str]] = None,
    header: bool = True,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(matrix, columns=list(column_names) if column_names else None)
    df.to_csv(path, index=False, header=header, float_format=_FLOAT_FORMAT, lineterminator="\n")
    return path


def output_stem(input_path: str | Path) -> str:
    """File stem with anything outside [A-Za-z0-9_.-] replaced by '_'."""
    return re.sub(r"[^\w.-]", "_", Path(input_path).stem)


def imputation_path(output_dir: str | Path, stem: str, m: int) -> Path:
    """<stem>.imp<m>.csv with m counted from 1."""
    return Path(output_dir) / f"{stem}.imp{m}.csv"


def diagnostics_path(output_dir: str | Path, stem: str) -> Path:
    return Path(output_dir) / f"{stem}.diag.json"


def export_imputed_set(
    imputed: ImputedSet,
    dataset: Dataset,
    output_dir: str | Path,
    stem: str,
    header: bool = True,
    order: Optional[np.ndarray] = None,
    extra_diagnostics: Optional[dict] = None,
) -> list[str]:
    """Write every imputation plus the diagnostics JSON.

    Args:
        imputed: Result of imputers.impute.
        dataset: The dataset that was imputed (for column names).
        output_dir: Directory to write files to.
        stem: Output file stem.
        header: Write a header row.
        order: Row order produced by pattern_model.sort_rows; rows are put
            back into input order before writing.
        extra_diagnostics: Additional entries merged into the diagnostics.

    Returns:
        List of file paths created.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for m, matrix in enumerate(imputed.imputations, start=1):
        if order is not None:
            matrix = restore_order(matrix, order)
        path = write_matrix_csv(
            matrix, imputation_path(output_dir, stem, m), dataset.column_names, header
        )
        paths.append(str(path))
        logger.info("Exported imputation %d: %s", m, path)

    diagnostics = imputed.diagnostics.to_dict()
    if extra_diagnostics:
        diagnostics.update(extra_diagnostics)
    diag = diagnostics_path(output_dir, stem)
    export_diagnostics(diagnostics, diag, imputed.provenance)
    paths.append(str(diag))
    return paths


def expand_inputs(patterns: Sequence[str]) -> list[Path]:
    """Expand glob patterns into a sorted, de-duplicated file list."""
    found: set[str] = set()
    for pattern in patterns:
        matches = glob.glob(pattern)
        if not matches and Path(pattern).exists():
            matches = [pattern]
        found.update(matches)
    return [Path(p) for p in sorted(found)]


def read_imputed_csvs(paths: Sequence[str | Path], header: bool = True) -> tuple[list[np.ndarray], list[str]]:
    """Load completed matrices, checking they are complete and share one shape."""
    if not paths:
        raise InputDataError("no imputed files given")
    matrices, names = [], None
    for path in paths:
        df = _read_frame(Path(path), header)
        values = Dataset.from_frame(df).values
        if np.isnan(values).any():
            raise InputDataError(f"{path} still contains missing cells")
        if matrices and values.shape != matrices[0].shape:
            raise InputDataError(
                f"{path} has shape {values.shape}, expected {matrices[0].shape}"
            )
        if names is not None and list(df.columns) != names:
            raise InputDataError(f"{path} has different column names")
        names = list(df.columns)
        matrices.append(values)
    return matrices, names
