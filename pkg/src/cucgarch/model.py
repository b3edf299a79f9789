"""The fitted CUC-GARCH model and the end-to-end fitting pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cuc import BallFamily, CucConfig, CucFit, build_ball_family, estimate_cuc
from .data_io import ReturnPanel, WhitenTransform, whiten
from .errors import DataError
from .garch import (
    DEFAULT_NU,
    ExtGarchParams,
    QuasiDensity,
    Selection,
    lade_fit,
    qmle_fit,
    select_causal_components,
    sigma_path,
)

logger = logging.getLogger(__name__)

ESTIMATORS = ("qmle", "lade")


@dataclass
class CucModel:
    """Whitening transform, CUC rotation and one GARCH model per CUC.

    The returns relate to the CUCs through Y_t = mean + W Z_t with
    W = P diag(lam)^(1/2) A_hat.
    """

    whiten: WhitenTransform
    A_hat: np.ndarray
    components: list[ExtGarchParams]
    estimator: str = "qmle"
    n: int = 0
    nu: int = DEFAULT_NU
    k0: int = 1
    objective: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.A_hat = np.atleast_2d(np.asarray(self.A_hat, dtype=float))
        d = self.whiten.d
        if self.A_hat.shape != (d, d):
            raise DataError(f"A_hat has shape {self.A_hat.shape}, expected {(d, d)}")
        if np.max(np.abs(self.A_hat.T @ self.A_hat - np.eye(d))) > 1e-10:
            raise DataError("A_hat is not orthogonal")
        if len(self.components) != d:
            raise DataError(f"{len(self.components)} component models for d={d}")
        for j, p in enumerate(self.components):
            if p.own != j or p.d != d:
                raise DataError(f"component model {j} has inconsistent indices")
        if self.estimator not in ESTIMATORS:
            raise DataError(f"unknown estimator {self.estimator!r}")

    @property
    def d(self) -> int:
        return self.whiten.d

    @property
    def W(self) -> np.ndarray:
        return self.whiten.loading @ self.A_hat

    def cucs(self, Y: np.ndarray) -> np.ndarray:
        """CUC series Z_t = A_hat^T X_t for raw returns Y (T x d)."""
        return self.whiten.apply(Y) @ self.A_hat

    def cuc_variances(self, Z: np.ndarray) -> np.ndarray:
        """T x d matrix of fitted conditional variances of the CUCs."""
        return np.column_stack([sigma_path(Z, j, p) for j, p in enumerate(self.components)])

    def to_dict(self) -> dict:
        return {
            "mean": self.whiten.mean.tolist(),
            "eigvecs": self.whiten.eigvecs.tolist(),
            "eigvals": self.whiten.eigvals.tolist(),
            "A_hat": self.A_hat.tolist(),
            "components": [p.to_dict() for p in self.components],
            "estimator": self.estimator,
            "fit": {"n": self.n, "nu": self.nu, "k0": self.k0, "objective": self.objective, **self.meta},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CucModel":
        tr = WhitenTransform(np.asarray(data["mean"]), np.asarray(data["eigvecs"]), np.asarray(data["eigvals"]))
        comps = [ExtGarchParams.from_dict(j, c) for j, c in enumerate(data["components"])]
        fit = dict(data.get("fit", {}))
        n, nu, k0, obj = fit.pop("n", 0), fit.pop("nu", DEFAULT_NU), fit.pop("k0", 1), fit.pop("objective", 0.0)
        return cls(tr, np.asarray(data["A_hat"]), comps, data["estimator"], int(n), int(nu), int(k0), float(obj), fit)


@dataclass
class FitConfig:
    k0: int = 1
    min_count: Optional[int] = None
    epsilon0: Optional[float] = None
    cuc: CucConfig = field(default_factory=CucConfig)
    nu: int = DEFAULT_NU
    estimator: str = "qmle"
    density: QuasiDensity = field(default_factory=QuasiDensity)
    select_bic: bool = False
    max_add: Optional[int] = None
    fixed_A: Optional[np.ndarray] = None


@dataclass
class FitResult:
    model: CucModel
    X: np.ndarray
    Z: np.ndarray
    cuc_var: np.ndarray
    balls: Optional[BallFamily]
    cuc_fit: Optional[CucFit]
    selections: list[Optional[Selection]]
    converged: bool


def fit_components(Z: np.ndarray, config: FitConfig) -> tuple[list[ExtGarchParams], list[Optional[Selection]], bool, dict]:
    """Fit one GARCH model per CUC column, optionally choosing causal terms by BIC."""
    d = Z.shape[1]
    params, selections, ok = [], [], True
    v0 = []
    for j in range(d):
        active: tuple[int, ...] = (j,)
        sel = None
        if config.select_bic and d > 1:
            sel = select_causal_components(Z, j, config.nu, config.density, config.max_add)
            active = sel.active
        if config.estimator == "lade":
            g = lade_fit(Z, j, active, config.nu)
            v0.append(g.v0)
        elif sel is not None:
            g = sel.best
        else:
            g = qmle_fit(Z, j, active, config.nu, config.density)
        ok &= g.converged
        params.append(g.params)
        selections.append(sel)
    meta = {"v0": v0} if v0 else {}
    return params, selections, ok, meta


def fit_cuc_garch(panel: ReturnPanel, config: Optional[FitConfig] = None) -> FitResult:
    """Whiten, estimate the CUC rotation, then fit each CUC's volatility."""
    config = config or FitConfig()
    if config.estimator not in ESTIMATORS:
        raise DataError(f"unknown estimator {config.estimator!r}")
    Xp, tr = whiten(panel)
    X = Xp.values
    balls = None
    cuc_fit = None
    if config.fixed_A is not None:
        A_hat = np.asarray(config.fixed_A, dtype=float)
        objective = float("nan")
    else:
        balls = build_ball_family(X, config.k0, config.min_count, config.epsilon0)
        cuc_fit = estimate_cuc(X, balls, config.cuc)
        A_hat, objective = cuc_fit.A_hat, cuc_fit.value
        if not cuc_fit.converged:
            logger.warning("CUC rotation search hit its evaluation budget")
    Z = X @ A_hat
    params, selections, ok, meta = fit_components(Z, config)
    if config.fixed_A is not None:
        meta["fixed_A"] = True
    model = CucModel(
        tr, A_hat, params, config.estimator, panel.n, config.nu, config.k0,
        objective if np.isfinite(objective) else 0.0, meta,
    )
    cuc_var = model.cuc_variances(Z)
    converged = ok and (cuc_fit is None or cuc_fit.converged)
    return FitResult(model, X, Z, cuc_var, balls, cuc_fit, selections, converged)
