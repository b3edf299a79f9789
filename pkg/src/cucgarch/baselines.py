"""Reference models: orthogonal GARCH and Engle's DCC."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .data_io import ReturnPanel, WhitenTransform, mean_delete
from .errors import DataError
from .garch import DEFAULT_NU, ExtGarchParams, qmle_fit, sigma_path
from .model import FitConfig, fit_cuc_garch
from .optim import nelder_mead
from .reconstruction import VolatilityPaths, reconstruct_H

logger = logging.getLogger(__name__)

THETA_CAP = 1.0 - 1e-4


@dataclass
class OgarchModel:
    whiten: WhitenTransform
    components: list[ExtGarchParams]


def fit_ogarch(panel: ReturnPanel, nu: int = DEFAULT_NU) -> tuple[OgarchModel, VolatilityPaths]:
    """Univariate GARCH(1,1) on each standardized principal component.

    This is the CUC pipeline with the rotation fixed at the identity.
    """
    d = panel.d
    res = fit_cuc_garch(panel, FitConfig(nu=nu, fixed_A=np.eye(d)))
    return OgarchModel(res.model.whiten, res.model.components), reconstruct_H(res.model, res.cuc_var)


@dataclass
class DccParams:
    theta1: float
    theta2: float
    S: np.ndarray
    scale: np.ndarray
    marginals: list[ExtGarchParams]
    S_source: str = "residuals"
    at_boundary: bool = False

    def __post_init__(self) -> None:
        if self.theta1 < 0 or self.theta2 < 0 or self.theta1 + self.theta2 >= 1:
            raise DataError("DCC parameters need theta >= 0 and theta1 + theta2 < 1")
        S = np.asarray(self.S, dtype=float)
        if np.max(np.abs(S - S.T)) > 1e-12 or np.max(np.abs(np.diag(S) - 1)) > 1e-12:
            raise DataError("S must be a symmetric unit-diagonal matrix")


def _sample_corr(E: np.ndarray) -> np.ndarray:
    S = np.corrcoef(E, rowvar=False)
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 1.0)
    return S


def dcc_quasi_correlations(E: np.ndarray, S: np.ndarray, theta1: float, theta2: float) -> np.ndarray:
    """Raw recursion Q_t = S(1 - t1 - t2) + t1 e_{t-1} e_{t-1}' + t2 Q_{t-1}, Q_1 = S."""
    T, d = E.shape
    outer = np.einsum("ti,tj->tij", E, E).reshape(T, d * d)
    # Q_t depends on e up to t-1: shift the driving term by one step
    drive = np.empty_like(outer)
    drive[0] = S.ravel()
    drive[1:] = (1 - theta1 - theta2) * S.ravel() + theta1 * outer[:-1]
    if theta2 == 0:
        Q = drive
    else:
        zi = theta2 * S.ravel()[None, :]
        Q, _ = lfilter([1.0], [1.0, -theta2], drive[1:], axis=0, zi=zi)
        Q = np.vstack([S.ravel()[None, :], Q])
    return Q.reshape(T, d, d)


def normalize_correlations(Q: np.ndarray) -> np.ndarray:
    s = np.sqrt(np.diagonal(Q, axis1=1, axis2=2))
    R = Q / (s[:, :, None] * s[:, None, :])
    idx = np.arange(Q.shape[1])
    R[:, idx, idx] = 1.0
    return R


def dcc_correlations(E: np.ndarray, S: np.ndarray, theta1: float, theta2: float) -> np.ndarray:
    return normalize_correlations(dcc_quasi_correlations(E, S, theta1, theta2))


def dcc_loglik(E: np.ndarray, S: np.ndarray, theta1: float, theta2: float) -> float:
    """Correlation part of the Gaussian log-likelihood, -0.5 sum(log|R_t| + e'R_t^-1 e)."""
    R = dcc_correlations(E, S, theta1, theta2)
    sign, logdet = np.linalg.slogdet(R)
    if np.any(sign <= 0):
        return -np.inf
    quad = np.einsum("ti,ti->t", E, np.linalg.solve(R, E[..., None])[..., 0])
    return float(-0.5 * np.sum(logdet + quad))


def _theta_of(x: np.ndarray) -> tuple[float, float]:
    # softmax-style map onto {t >= 0, t1 + t2 <= THETA_CAP}
    e = np.exp(np.concatenate([[0.0], np.clip(x, -30, 30)]))
    w = THETA_CAP * e[1:] / e.sum()
    return float(w[0]), float(w[1])


def _x_of(theta1: float, theta2: float) -> np.ndarray:
    t = np.maximum([theta1, theta2], 1e-8)
    rest = max(1 - (t[0] + t[1]) / THETA_CAP, 1e-8)
    return np.log(t / THETA_CAP / rest)


def fit_dcc(
    panel: ReturnPanel,
    nu: int = DEFAULT_NU,
    S_source: str = "residuals",
    grid: int = 9,
    max_evals: int = 400,
) -> tuple[DccParams, VolatilityPaths]:
    """Two-step DCC: univariate GARCH(1,1) marginals, then (theta1, theta2).

    The marginals are variance-targeted GARCH fits on each mean-deleted
    series scaled by its sample standard deviation.  ``S_source`` selects
    the correlation target: ``"residuals"`` (standardized residuals) or
    ``"data"`` (the returns themselves).
    """
    if panel.d < 2:
        raise DataError("DCC needs at least two series")
    if S_source not in ("residuals", "data"):
        raise DataError(f"unknown S_source {S_source!r}")
    Y = mean_delete(panel).values
    scale = Y.std(axis=0, ddof=1)
    Zs = Y / scale
    marginals, var = [], []
    for j in range(panel.d):
        col = Zs[:, [j]]
        p = qmle_fit(col, 0, nu=nu).params
        marginals.append(ExtGarchParams(j, np.eye(panel.d)[j] * p.alpha[0], p.beta, (j,)))
        var.append(sigma_path(col, 0, p))
    var = np.column_stack(var)
    E = Zs / np.sqrt(var)
    S = _sample_corr(E if S_source == "residuals" else Y)
    En = E[nu:]

    best, best_ll = (0.0, 0.0), dcc_loglik(En, S, 0.0, 0.0)
    ll0 = best_ll
    pts = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    for t1 in pts * 0.3:
        for t2 in pts:
            if t1 + t2 < THETA_CAP:
                ll = dcc_loglik(En, S, t1, t2)
                if ll > best_ll:
                    best, best_ll = (t1, t2), ll
    res = nelder_mead(lambda x: -dcc_loglik(En, S, *_theta_of(x)), _x_of(*best), step=0.5, max_evals=max_evals)
    if -res.fun > best_ll:
        best, best_ll = _theta_of(res.x), -res.fun
    if best_ll < ll0:
        best = (0.0, 0.0)
    t1, t2 = best
    boundary = min(t1, t2) < 1e-6 or t1 + t2 > THETA_CAP - 1e-6
    if boundary:
        logger.warning("DCC estimate (%.3g, %.3g) lies on the parameter boundary", t1, t2)
    params = DccParams(t1, t2, S, scale, marginals, S_source, boundary)
    R = dcc_correlations(E, S, t1, t2)
    sd = np.sqrt(var) * scale
    H = sd[:, :, None] * R * sd[:, None, :]
    return params, VolatilityPaths(var * scale**2, H)
