"""
Dataset container, CSV loading and per-column standardization
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from dine.core.exceptions import DataError

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    """Aligned samples of X (n x d_X), Y (n x d_Y) and Z (n x d_Z, d_Z may be 0)"""
    x: np.ndarray
    y: np.ndarray
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = self._as_matrix(self.x, "x")
        self.y = self._as_matrix(self.y, "y")
        n = len(self.x)
        self.z = np.zeros((n, 0)) if self.z is None else self._as_matrix(self.z, "z")
        if not (len(self.y) == n and len(self.z) == n):
            raise DataError(
                f"Row counts differ: x has {n}, y has {len(self.y)}, z has {len(self.z)}")
        if n < 2:
            raise DataError(f"At least 2 samples are required, got {n}")
        for label, values in (("x", self.x), ("y", self.y), ("z", self.z)):
            if not np.all(np.isfinite(values)):
                row = int(np.argwhere(~np.isfinite(values))[0][0])
                raise DataError(f"Non-finite value in {label} at row {row + 1}", row=row + 1, column=label)

    @staticmethod
    def _as_matrix(values, label: str) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError(f"{label} must be a matrix, got shape {values.shape}")
        return values

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.x.shape[1], self.y.shape[1], self.z.shape[1]


class DataPreprocessor:
    """Standardize every column of a Dataset to mean 0, variance 1"""

    def fit_transform(self, data: Dataset) -> Dataset:
        parts = {}
        for label in ("x", "y", "z"):
            values = getattr(data, label)
            if values.shape[1] == 0:
                parts[label] = values
                continue
            parts[label] = StandardScaler().fit_transform(values)
            constant = np.flatnonzero(values.std(axis=0) == 0)
            if len(constant):
                logger.warning(f"Constant column(s) {list(constant)} in {label}; left centred only")
        return Dataset(parts["x"], parts["y"], parts["z"])


def default_columns(columns: Sequence[str], prefix: str) -> List[str]:
    """Columns named <prefix>0, <prefix>1, ... in index order"""
    picked = [c for c in columns if c.startswith(prefix) and c[len(prefix):].isdigit()]
    return sorted(picked, key=lambda c: int(c[len(prefix):]))


def read_dataset(path, x_cols: Optional[Sequence[str]] = None, y_cols: Optional[Sequence[str]] = None,
                 z_cols: Optional[Sequence[str]] = None) -> Dataset:
    """
    Load a Dataset from a CSV with a header row. Rows are reported 1-based,
    counting data rows only (the header is not a row).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Input file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"Malformed CSV {path}: {exc}") from exc

    x_cols = list(x_cols) if x_cols else default_columns(frame.columns, "x")
    y_cols = list(y_cols) if y_cols else default_columns(frame.columns, "y")
    z_cols = list(z_cols) if z_cols is not None else default_columns(frame.columns, "z")
    if not x_cols or not y_cols:
        raise DataError("Both x and y columns are required")
    missing = [c for c in x_cols + y_cols + z_cols if c not in frame.columns]
    if missing:
        raise DataError(f"Columns not found in {path}: {missing}")

    numeric = {}
    for column in dict.fromkeys(x_cols + y_cols + z_cols):
        raw = frame[column].str.strip()
        try:
            # exact decimal parse; pd.to_numeric may be off in the last bit
            values = raw.astype(float).to_numpy()
        except (TypeError, ValueError):
            values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float, na_value=np.nan)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.flatnonzero(bad)[0]) + 1
            raise DataError(
                f"Non-numeric or missing value {raw.iloc[row - 1]!r} at row {row}, column {column}",
                row=row, column=column)
        numeric[column] = values

    def block(columns):
        return np.column_stack([numeric[c] for c in columns]) if columns else np.zeros((len(frame), 0))

    logger.info(f"Loaded {len(frame)} rows from {path} (x={x_cols}, y={y_cols}, z={z_cols})")
    return Dataset(block(x_cols), block(y_cols), block(z_cols))


def write_dataset(data: Dataset, path) -> Path:
    """CSV with columns x0.., y0.., z0..; '.' decimal separator, UTF-8"""
    columns = {}
    for label in ("x", "y", "z"):
        values = getattr(data, label)
        for j in range(values.shape[1]):
            columns[f"{label}{j}"] = values[:, j]
    path = Path(path)
    pd.DataFrame(columns).to_csv(path, index=False, float_format="%.17g", encoding="utf-8")
    return path
