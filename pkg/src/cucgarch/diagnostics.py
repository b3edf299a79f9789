"""Portmanteau diagnostics: Ljung-Box with GARCH-bootstrap p-values and
Q(ij, M) statistics on cross products of standardized residuals."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2

from .errors import DataError
from .garch import qmle_fit, standardized_residuals
from .rng import STREAM_QBOOT, child_rng
from .simulator import garch_filter

logger = logging.getLogger(__name__)

FLAG_LEVELS = ((0.01, "***"), (0.05, "**"), (0.10, "*"))


def sample_autocorrelation(x: np.ndarray, K: int) -> np.ndarray:
    """r_1..r_K with the divide-by-n autocovariance."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if not 1 <= K < n:
        raise DataError(f"need 1 <= K < n, got K={K}, n={n}")
    c = x - x.mean()
    c0 = c @ c
    if c0 <= 0:
        raise DataError("constant series has no autocorrelation")
    return np.array([c[k:] @ c[:-k] for k in range(1, K + 1)]) / c0


def ljung_box(series: np.ndarray, K: int = 10) -> float:
    """Q(K) = n(n+2) sum_k r_k^2 / (n - k)."""
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    r = sample_autocorrelation(x, K)
    k = np.arange(1, K + 1)
    return float(n * (n + 2) * np.sum(r**2 / (n - k)))


@dataclass
class QBootstrap:
    Q: float
    p_value: float
    Q_star: np.ndarray
    alpha: float
    beta: float


def q_pvalue_bootstrap(
    series: np.ndarray, K: int = 10, B: int = 199, seed: int = 0, burn_in: int = 500, nu: int = 1
) -> QBootstrap:
    """Bootstrap p-value of the Ljung-Box statistic under a GARCH(1,1) null.

    The mean-deleted series is scaled to unit variance and fitted with a
    variance-targeted GARCH(1,1); bootstrap series are regenerated from the
    fitted recursion driven by resampled standardized residuals, and
    p = #{Q* > Q} / B.
    """
    if B < 19:
        raise DataError(f"bootstrap p-values need B >= 19, got {B}")
    y = np.asarray(series, dtype=float).ravel()
    y = y - y.mean()
    sd = y.std(ddof=1)
    if not sd > 0:
        raise DataError("constant series")
    z = (y / sd)[:, None]
    q_obs = ljung_box(y, K)
    fit = qmle_fit(z, 0, nu=nu)
    if not fit.converged:
        logger.warning("GARCH fit for the Q bootstrap did not converge")
    p = fit.params
    e = standardized_residuals(z, p, nu)
    e = (e - e.mean()) / e.std()
    rng = child_rng(seed, STREAM_QBOOT)
    n = y.size
    a = np.array([[p.alpha[0]]])
    b = np.array([p.beta])
    q_star = np.empty(B)
    for i in range(B):
        eps = e[rng.integers(0, e.size, size=n + burn_in)][:, None]
        Zs, _ = garch_filter(eps, a, b)
        q_star[i] = ljung_box(Zs[burn_in:, 0], K)
    pval = float(np.count_nonzero(q_star > q_obs) / B)
    return QBootstrap(q_obs, pval, q_star, float(p.alpha[0]), p.beta)


def standardized_units(Y: np.ndarray, H: np.ndarray) -> np.ndarray:
    """u_ti = Y_ti / sigma_t,ii^(1/2)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    diag = np.diagonal(H, axis1=1, axis2=2)
    if diag.shape != Y.shape:
        raise DataError(f"H diagonals {diag.shape} do not match Y {Y.shape}")
    if np.any(diag <= 0):
        raise DataError("conditional variances must be positive")
    return Y / np.sqrt(diag)


def cross_product_series(Y: np.ndarray, H: np.ndarray, i: int, j: int) -> np.ndarray:
    """C_t,ij = u_ti^2 - 1 for i = j, u_ti u_tj - rho_t,ij otherwise (0-based i, j)."""
    d = H.shape[1]
    if not (0 <= i < d and 0 <= j < d):
        raise DataError(f"pair ({i}, {j}) out of range for d={d}")
    u = standardized_units(Y, H)
    if i == j:
        return u[:, i] ** 2 - 1.0
    rho = H[:, i, j] / np.sqrt(H[:, i, i] * H[:, j, j])
    return u[:, i] * u[:, j] - rho


def cross_product_Q(Y: np.ndarray, H: np.ndarray, i: int, j: int, M: int = 10) -> float:
    """Q(ij, M) = n sum_{k<=M} r_ij,k^2 on the cross-product series."""
    if M < 1:
        raise DataError("M must be at least 1")
    C = cross_product_series(Y, H, i, j)
    r = sample_autocorrelation(C, M)
    return float(C.size * np.sum(r**2))


def significance_flag(p: float) -> str:
    for level, mark in FLAG_LEVELS:
        if p < level:
            return mark
    return ""


@dataclass
class QDiagnostics:
    """Q statistics keyed by (i, j, M) with 1-based i <= j."""

    Q: dict[tuple[int, int, int], float] = field(default_factory=dict)
    p_values: dict[tuple[int, int, int], float] = field(default_factory=dict)
    reference: str = "chi2_M"

    @property
    def flags(self) -> dict[tuple[int, int, int], str]:
        return {k: significance_flag(p) for k, p in self.p_values.items()}


def cross_product_table(
    Y: np.ndarray, H: np.ndarray, M: int = 10, pairs: Optional[Sequence[tuple[int, int]]] = None
) -> QDiagnostics:
    """Q(ij, M) for all pairs i <= j (or the given 0-based pairs), chi2_M p-values."""
    d = H.shape[1]
    pairs = pairs if pairs is not None else [(i, j) for i in range(d) for j in range(i, d)]
    out = QDiagnostics()
    for i, j in pairs:
        q = cross_product_Q(Y, H, i, j, M)
        key = (i + 1, j + 1, M)
        out.Q[key] = q
        out.p_values[key] = float(chi2.sf(q, M))
    return out
