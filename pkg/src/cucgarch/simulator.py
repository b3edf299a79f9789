"""Simulation from CUC-GARCH models and the Monte Carlo accuracy study."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cuc import CucConfig, build_ball_family, d_distance, estimate_cuc, match_columns
from .data_io import ReturnPanel, mean_delete, whiten
from .errors import CucError, DataError, StationarityError
from .garch import DEFAULT_NU, ExtGarchParams, check_stationarity, qmle_fit
from .parallel import parallel_map
from .rng import STREAM_MC, child_rng, derive_int

logger = logging.getLogger(__name__)

# The three-component design used throughout the tests and the study.
REFERENCE_A = np.array([[0.0, 0.5, 0.866], [0.0, 0.866, -0.5], [-1.0, 0.0, 0.0]])
REFERENCE_ALPHA = (0.08, 0.10, 0.12)
REFERENCE_BETA = (0.90, 0.80, 0.60)


def reference_matrix() -> np.ndarray:
    """The design matrix with its rounded entries re-orthonormalized."""
    u, _, vt = np.linalg.svd(REFERENCE_A)
    return u @ vt


def reference_params() -> list[ExtGarchParams]:
    return [ExtGarchParams.standard(i, 3, a, b) for i, (a, b) in enumerate(zip(REFERENCE_ALPHA, REFERENCE_BETA))]


@dataclass
class SimConfig:
    A: np.ndarray
    params: Sequence[ExtGarchParams]
    n: int = 1000
    burn_in: int = 1000
    innovation: str = "normal"
    df: float = 5.0
    replications: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        d = self.A.shape[0]
        if self.A.shape != (d, d) or np.max(np.abs(self.A.T @ self.A - np.eye(d))) > 1e-10:
            raise DataError("simulation matrix A must be orthogonal")
        if len(self.params) != d or any(p.d != d or p.own != j for j, p in enumerate(self.params)):
            raise DataError("need one parameter set per component, in component order")
        report = check_stationarity(self.params)
        if not report.ok:
            raise StationarityError(f"non-stationary configuration (margins {report.margins})")
        if self.innovation not in ("normal", "t"):
            raise DataError(f"unknown innovation law {self.innovation!r}")
        if self.innovation == "t" and self.df <= 2:
            raise DataError("t innovations need df > 2")

    @classmethod
    def reference(cls, n: int = 1000, **kw) -> "SimConfig":
        return cls(reference_matrix(), reference_params(), n, **kw)


def draw_innovations(rng: np.random.Generator, size: tuple[int, ...], law: str = "normal", df: float = 5.0) -> np.ndarray:
    if law == "normal":
        return rng.standard_normal(size)
    return rng.standard_t(df, size) / np.sqrt(df / (df - 2))


def garch_filter(
    eps: np.ndarray, alpha: np.ndarray, beta: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Run the joint recursion Z_t = sigma_t eps_t from sigma2 = 1, Z = 0.

    ``alpha`` is the d x d matrix with rows alpha_j; returns (Z, sigma2).
    """
    eps = np.asarray(eps, dtype=float)
    T, d = eps.shape
    alpha = np.asarray(alpha, dtype=float).reshape(d, d)
    beta = np.asarray(beta, dtype=float).reshape(d)
    gamma = 1.0 - beta - alpha.sum(axis=1)
    Z = np.empty((T, d))
    S = np.empty((T, d))
    if not np.any(alpha - np.diag(np.diag(alpha))):
        # components decouple: scalar loops are much faster than tiny arrays
        for j in range(d):
            g, a, b = float(gamma[j]), float(alpha[j, j]), float(beta[j])
            e = eps[:, j].tolist()
            zs, ss = [0.0] * T, [0.0] * T
            z2, s2 = 0.0, 1.0
            for t in range(T):
                s2 = g + a * z2 + b * s2
                z = math.sqrt(s2) * e[t]
                zs[t], ss[t] = z, s2
                z2 = z * z
            Z[:, j], S[:, j] = zs, ss
        return Z, S
    z2 = np.zeros(d)
    s2 = np.ones(d)
    for t in range(T):
        s2 = gamma + alpha @ z2 + beta * s2
        z = np.sqrt(s2) * eps[t]
        Z[t] = z
        S[t] = s2
        z2 = z * z
    return Z, S


def simulate_cuc_garch(config: SimConfig, rng: Optional[np.random.Generator] = None) -> tuple[ReturnPanel, np.ndarray, np.ndarray]:
    """Draw X_t = A Z_t; returns (panel of X, Z, true sigma2), burn-in removed."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    d = config.A.shape[0]
    total = config.n + config.burn_in
    eps = draw_innovations(rng, (total, d), config.innovation, config.df)
    alpha = np.vstack([p.alpha for p in config.params])
    beta = np.array([p.beta for p in config.params])
    Z, S = garch_filter(eps, alpha, beta)
    Z, S = Z[config.burn_in :], S[config.burn_in :]
    X = Z @ config.A.T
    return ReturnPanel(X), Z, S


# --- Monte Carlo study -----------------------------------------------------


@dataclass
class StudyConfig:
    sim: SimConfig
    k0: int = 1
    nu: int = DEFAULT_NU
    cuc: CucConfig = field(default_factory=CucConfig)
    use_true_A: bool = False
    whiten: bool = False
    workers: int = 1


def _one_replication(args: tuple[StudyConfig, int]) -> dict:
    cfg, rep = args
    sim = cfg.sim
    rng = child_rng(sim.seed, STREAM_MC, rep)
    panel, _, _ = simulate_cuc_garch(sim, rng)
    d = sim.A.shape[0]
    if cfg.use_true_A:
        Z = panel.values @ sim.A
        A_eff = sim.A
        dist = 0.0
    else:
        # The design already has unit covariance; whitening is optional and
        # adds the sampling error of the covariance estimate to D.
        if cfg.whiten:
            Xp, tr = whiten(panel)
            X, back = Xp.values, tr.eigvecs
        else:
            X, back = mean_delete(panel).values, np.eye(d)
        balls = build_ball_family(X, cfg.k0)
        cuc_cfg = CucConfig(**{**cfg.cuc.__dict__, "seed": derive_int(sim.seed, STREAM_MC, rep)})
        fit = estimate_cuc(X, balls, cuc_cfg)
        A_eff = back @ fit.A_hat
        Z = X @ fit.A_hat
        dist = d_distance(sim.A, A_eff)
    perm, _ = match_columns(sim.A, A_eff)
    row = {"replication": rep, "D": dist}
    for i in range(d):
        g = qmle_fit(Z, int(perm[i]), nu=cfg.nu)
        row[f"alpha{i + 1}"] = float(g.params.alpha[perm[i]])
        row[f"beta{i + 1}"] = g.params.beta
    return row


def monte_carlo_study(cfg: StudyConfig) -> tuple[list[dict], dict]:
    """Replicate simulate -> estimate A -> per-CUC qMLE and summarize errors.

    Returns the per-replication rows and a summary mapping each column
    (``D``, ``alpha1``, ``beta1``, ...) to mean / median / std / bias / rmse.
    Failed replications are logged and excluded; their count is reported.
    """
    if cfg.sim.replications < 2:
        raise DataError("a study needs at least two replications")

    rows = parallel_map(_safe_replication, [(cfg, r) for r in range(cfg.sim.replications)], cfg.workers)
    good = [r for r in rows if r is not None]
    return good, summarize(good, cfg.sim, failures=len(rows) - len(good))


def _safe_replication(args: tuple[StudyConfig, int]) -> Optional[dict]:
    try:
        return _one_replication(args)
    except CucError as exc:
        logger.warning("replication %d failed: %s", args[1], exc)
        return None


def summarize(rows: list[dict], sim: SimConfig, failures: int = 0) -> dict:
    truth = {"D": None}
    for p in sim.params:
        truth[f"alpha{p.own + 1}"] = float(p.alpha[p.own])
        truth[f"beta{p.own + 1}"] = p.beta
    out: dict = {"replications": len(rows), "failures": failures, "seed": sim.seed, "n": sim.n}
    for key, true in truth.items():
        v = np.array([r[key] for r in rows])
        stats = {"mean": float(v.mean()), "median": float(np.median(v)), "std": float(v.std(ddof=1))}
        if true is not None:
            stats["bias"] = float(v.mean() - true)
            stats["rmse"] = float(np.sqrt(np.mean((v - true) ** 2)))
        out[key] = stats
    return out
