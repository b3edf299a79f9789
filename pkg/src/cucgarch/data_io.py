"""Return panels: CSV ingestion, centring, whitening and model persistence."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .errors import DataError, ParseError, RankDeficiencyError, SchemaError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ReturnPanel:
    """A T x d matrix of returns with column labels and optional time tags."""

    values: np.ndarray
    labels: tuple[str, ...] = ()
    timestamps: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError("return panel must be two-dimensional")
        T, d = values.shape
        labels = tuple(self.labels) if self.labels else tuple(f"y{i + 1}" for i in range(d))
        if len(labels) != d:
            raise DataError(f"{len(labels)} labels for {d} columns")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {bad[0]}, column {bad[1]}")
        if T < d + 2:
            raise DataError(f"need at least d+2={d + 2} observations, got {T}")
        if self.timestamps is not None and len(self.timestamps) != T:
            raise DataError("timestamp count does not match row count")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        if self.timestamps is not None:
            object.__setattr__(self, "timestamps", tuple(self.timestamps))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray, labels: Optional[Sequence[str]] = None) -> "ReturnPanel":
        return ReturnPanel(values, tuple(labels) if labels is not None else self.labels, self.timestamps)


@dataclass(frozen=True)
class WhitenTransform:
    """Affine map X = diag(eigvals)^(-1/2) eigvecs^T (Y - mean) and its inverse."""

    mean: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).ravel()
        P = np.atleast_2d(np.asarray(self.eigvecs, dtype=float))
        lam = np.asarray(self.eigvals, dtype=float).ravel()
        d = mean.size
        if P.shape != (d, d) or lam.size != d:
            raise DataError("whitening transform has inconsistent dimensions")
        if not np.all(lam > 0):
            raise DataError("whitening eigenvalues must be positive")
        if np.max(np.abs(P.T @ P - np.eye(d))) > 1e-10:
            raise DataError("whitening eigenvector matrix is not orthogonal")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "eigvecs", P)
        object.__setattr__(self, "eigvals", lam)

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def loading(self) -> np.ndarray:
        """W_base = P diag(eigvals)^(1/2); maps whitened rows back to centred returns."""
        return self.eigvecs * np.sqrt(self.eigvals)

    def apply(self, Y: np.ndarray) -> np.ndarray:
        return (np.asarray(Y, dtype=float) - self.mean) @ self.eigvecs / np.sqrt(self.eigvals)

    def invert(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.loading.T + self.mean

    @classmethod
    def identity(cls, d: int) -> "WhitenTransform":
        return cls(np.zeros(d), np.eye(d), np.ones(d))


@dataclass
class CsvOptions:
    """How :func:`load_returns` interprets a file.

    ``header`` and ``date_column`` accept ``None`` for auto-detection.
    """

    header: Optional[bool] = None
    date_column: Optional[bool] = None
    delimiter: str = ","
    columns: Optional[Sequence[str]] = None


def _is_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _is_iso_date(cell: str) -> bool:
    cell = cell.strip()
    if not cell or _is_float(cell):
        return False
    try:
        datetime.fromisoformat(cell)
    except ValueError:
        try:
            date.fromisoformat(cell)
        except ValueError:
            return False
    return True


def load_returns(path: str | Path, config: Optional[CsvOptions] = None) -> ReturnPanel:
    """Read a comma-separated return panel.

    The file may start with a header row and may carry ISO-8601 dates in its
    first column; both are detected automatically unless fixed in ``config``.
    Missing or non-numeric cells are rejected, never imputed.
    """
    config = config or CsvOptions()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=config.delimiter) if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")

    has_dates = config.date_column
    if has_dates is None:
        probe = rows[1] if len(rows) > 1 else rows[0]
        has_dates = _is_iso_date(probe[0])
    header = config.header
    if header is None:
        first = rows[0][1:] if has_dates else rows[0]
        header = not all(_is_float(c) for c in first)

    labels: Optional[list[str]] = None
    if header:
        labels = [c.strip() for c in (rows[0][1:] if has_dates else rows[0])]
        rows = rows[1:]
    width = len(rows[0]) if rows else 0
    stamps: list[str] = []
    values = []
    for i, row in enumerate(rows):
        line = i + 1 + int(bool(header))
        if len(row) != width:
            raise ParseError(f"{path}: row {line} has {len(row)} fields, expected {width}")
        if has_dates:
            if not _is_iso_date(row[0]):
                raise ParseError(f"{path}: row {line}, column 1: invalid date {row[0]!r}")
            stamps.append(row[0].strip())
            row = row[1:]
        parsed = []
        for j, cell in enumerate(row):
            col = j + 1 + int(bool(has_dates))
            cell = cell.strip()
            if cell == "":
                raise ParseError(f"{path}: row {line}, column {col}: missing value")
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {line}, column {col}: non-numeric value {cell!r}") from None
            if not math.isfinite(x):
                raise ParseError(f"{path}: row {line}, column {col}: non-finite value {cell!r}")
            parsed.append(x)
        values.append(parsed)
    if not values or not values[0]:
        raise ParseError(f"{path}: no numeric data")
    arr = np.array(values, dtype=float)
    if labels is not None and len(labels) != arr.shape[1]:
        raise ParseError(f"{path}: header has {len(labels)} names for {arr.shape[1]} columns")
    if config.columns is not None:
        names = labels or [f"y{i + 1}" for i in range(arr.shape[1])]
        try:
            idx = [names.index(c) for c in config.columns]
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
        arr = arr[:, idx]
        labels = [names[i] for i in idx]
    return ReturnPanel(arr, tuple(labels) if labels else (), tuple(stamps) if has_dates else None)


def mean_delete(panel: ReturnPanel) -> ReturnPanel:
    return panel.with_values(panel.values - panel.values.mean(axis=0))


def _sorted_eigh(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, P = np.linalg.eigh(S)
    order = np.argsort(lam)[::-1]
    lam, P = lam[order], P[:, order]
    # deterministic sign: largest-magnitude entry of each eigenvector positive
    pivot = np.argmax(np.abs(P), axis=0)
    signs = np.sign(P[pivot, np.arange(P.shape[1])])
    signs[signs == 0] = 1.0
    return lam, P * signs


def whiten(panel: ReturnPanel) -> tuple[ReturnPanel, WhitenTransform]:
    """Centre and rotate/scale the panel to unit sample covariance.

    Uses the eigendecomposition S = P diag(lam) P^T of the sample covariance
    (divisor T-1) and returns X_t = diag(lam)^(-1/2) P^T (Y_t - mean).
    """
    Y = panel.values
    mean = Y.mean(axis=0)
    S = np.atleast_2d(np.cov(Y, rowvar=False, ddof=1))
    lam, P = _sorted_eigh(S)
    if lam[-1] <= 1e-12 * lam[0] or lam[0] <= 0:
        raise RankDeficiencyError(
            f"sample covariance is rank deficient (eigenvalues {lam.min():.3g} .. {lam.max():.3g})"
        )
    transform = WhitenTransform(mean, P, lam)
    X = transform.apply(Y)
    labels = tuple(f"x{i + 1}" for i in range(panel.d))
    return ReturnPanel(X, labels, panel.timestamps), transform


# --- model persistence ---------------------------------------------------


def _emit(obj: Any) -> str:
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise DataError("cannot serialize non-finite number")
        return format(x, ".17g")
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_emit(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_emit(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(_emit(obj) + "\n", encoding="utf-8")


def save_model(model, path: str | Path) -> None:
    """Write a fitted :class:`~cucgarch.model.CucModel` as JSON."""
    write_json({"schema_version": SCHEMA_VERSION, **model.to_dict()}, path)


def load_model(path: str | Path):
    """Read a model written by :func:`save_model`, re-checking all invariants."""
    from .model import CucModel

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed model file ({exc})") from exc
    if not isinstance(payload, dict):
        raise SchemaError(f"{path}: model file must hold a JSON object")
    version = payload.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema_version {version!r} unsupported (expected {SCHEMA_VERSION})")
    try:
        return CucModel.from_dict(payload)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: missing or malformed field {exc}") from exc
