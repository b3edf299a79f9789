"""Conditional covariance, correlation and portfolio risk from CUC volatilities."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError


@dataclass
class VolatilityPaths:
    """Per-time CUC variances (T x d) and covariance matrices H (T x d x d)."""

    cuc_var: np.ndarray
    H: np.ndarray

    def __post_init__(self) -> None:
        if self.H.ndim != 3 or self.H.shape[1] != self.H.shape[2]:
            raise DataError("H must have shape (T, d, d)")
        if self.cuc_var.shape[0] != self.H.shape[0]:
            raise DataError("cuc_var and H disagree on T")

    @property
    def diagonals(self) -> np.ndarray:
        return np.diagonal(self.H, axis1=1, axis2=2)


def _loading(model_or_W) -> np.ndarray:
    W = getattr(model_or_W, "W", model_or_W)
    return np.atleast_2d(np.asarray(W, dtype=float))


def reconstruct_H(model, cuc_var: np.ndarray) -> VolatilityPaths:
    """H_t = W diag(sigma2_t) W^T with W = P diag(lam)^(1/2) A_hat.

    ``model`` may be a :class:`~cucgarch.model.CucModel` or the matrix W.
    """
    W = _loading(model)
    cuc_var = np.atleast_2d(np.asarray(cuc_var, dtype=float))
    if cuc_var.shape[1] != W.shape[1]:
        raise DataError(f"cuc_var has {cuc_var.shape[1]} columns, W has {W.shape[1]}")
    if np.any(cuc_var <= 0):
        raise DataError("CUC variances must be positive")
    H = np.einsum("ik,tk,jk->tij", W, cuc_var, W)
    # exact symmetry regardless of summation order
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    return VolatilityPaths(cuc_var, H)


def pair_labels(d: int, names: Optional[Sequence[str]] = None) -> list[str]:
    names = [str(i + 1) for i in range(d)] if names is None else list(names)
    return [f"rho_{names[i]}_{names[j]}" for i in range(d) for j in range(i + 1, d)]


def correlation_matrices(H: np.ndarray) -> np.ndarray:
    diag = np.diagonal(H, axis1=1, axis2=2)
    if np.any(diag <= 0):
        raise DataError("conditional variance with non-positive diagonal")
    s = np.sqrt(diag)
    return np.clip(H / (s[:, :, None] * s[:, None, :]), -1.0, 1.0)


def conditional_correlations(paths: VolatilityPaths) -> np.ndarray:
    """T x d(d-1)/2 matrix of rho_t,ij in (1,2), (1,3), ..., (d-1,d) order."""
    R = correlation_matrices(paths.H)
    iu = np.triu_indices(R.shape[1], k=1)
    return R[:, iu[0], iu[1]]


def portfolio_vol(model, cuc_var: np.ndarray, b1: np.ndarray, b2: Optional[np.ndarray] = None) -> np.ndarray:
    """Conditional variance of b1'Y_t, or covariance of b1'Y_t and b2'Y_t.

    The weights are mapped to CUC loadings c = W^T b, after which the
    variance is sum_j c1_j c2_j sigma2_tj; no covariance matrix is formed.
    """
    W = _loading(model)
    b1 = np.asarray(b1, dtype=float).ravel()
    b2 = b1 if b2 is None else np.asarray(b2, dtype=float).ravel()
    if b1.size != W.shape[0] or b2.size != W.shape[0]:
        raise DataError("portfolio weights do not match the number of assets")
    if not (np.all(np.isfinite(b1)) and np.all(np.isfinite(b2))):
        raise DataError("portfolio weights must be finite")
    c1, c2 = W.T @ b1, W.T @ b2
    return np.atleast_2d(cuc_var) @ (c1 * c2)


def _write_csv(path: Path, header: list[str], rows: np.ndarray, index: Sequence[str]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *header])
        for idx, row in zip(index, rows):
            w.writerow([idx, *(format(float(x), ".17g") for x in row)])


def write_paths(
    paths: VolatilityPaths,
    out_dir: str | Path,
    labels: Optional[Sequence[str]] = None,
    timestamps: Optional[Sequence[str]] = None,
    prefix: str = "",
) -> dict[str, Path]:
    """Write vols.csv (CUC variances), rho.csv (pair correlations) and hdiag.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T, d = paths.cuc_var.shape[0], paths.H.shape[1]
    labels = list(labels) if labels is not None else [str(i + 1) for i in range(d)]
    index = list(timestamps) if timestamps is not None else [str(t + 1) for t in range(T)]
    files = {
        "vols": out / f"{prefix}vols.csv",
        "rho": out / f"{prefix}rho.csv",
        "hdiag": out / f"{prefix}hdiag.csv",
    }
    _write_csv(files["vols"], [f"cuc_{j + 1}" for j in range(paths.cuc_var.shape[1])], paths.cuc_var, index)
    _write_csv(files["rho"], pair_labels(d, labels), conditional_correlations(paths), index)
    _write_csv(files["hdiag"], [f"h_{x}" for x in labels], paths.diagonals, index)
    return files
