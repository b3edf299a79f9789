"""Residual bootstrap for CUC-GARCH models.

A bootstrap panel is produced by (i) resampling each component's
standardized residuals with replacement, independently across components,
(ii) running the fitted GARCH recursions on the resampled innovations and
(iii) rotating the simulated CUCs back with A_hat.  Repeating the CUC
estimation on each panel gives the null distribution of the minimized
objective (existence test), the spread of D(A_hat, A*) (confidence set for
A) and bootstrap GARCH estimates (parameter intervals).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cuc import BallFamily, CucConfig, PsiObjective, build_ball_family, d_distance, estimate_cuc, match_columns
from .data_io import ReturnPanel, whiten
from .errors import ConvergenceError, CucError, DataError
from .garch import DEFAULT_NU, ExtGarchParams, lade_fit, qmle_fit, standardized_residuals
from .parallel import parallel_map
from .rng import STREAM_BOOT, child_rng, derive_int
from .simulator import garch_filter

logger = logging.getLogger(__name__)


def residual_pools(model, Z: np.ndarray, nu: Optional[int] = None) -> list[np.ndarray]:
    """Standardized (mean 0, variance 1) residuals Z_tj / sigma_tj for t > nu."""
    nu = model.nu if nu is None else nu
    pools = []
    for p in model.components:
        e = standardized_residuals(Z, p, nu)
        pools.append((e - e.mean()) / e.std())
    return pools


def draw_bootstrap_sample(
    model,
    residuals: Sequence[np.ndarray],
    n: int,
    burn_in: int = 500,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One bootstrap panel X* = A_hat Z* (n x d) and its CUCs Z*.

    ``model`` is anything with ``A_hat`` and ``components`` attributes,
    normally a :class:`~cucgarch.model.CucModel`.  The recursion starts from
    sigma* = 1, Z* = 0 and runs ``burn_in`` discarded steps before the ``n``
    retained ones.
    """
    A_hat, components = model.A_hat, model.components
    if burn_in < 0:
        raise DataError("burn_in must be non-negative")
    if n < 1:
        raise DataError("n must be positive")
    d = len(components)
    if len(residuals) != d or any(len(r) == 0 for r in residuals):
        raise DataError("need a non-empty residual pool for every component")
    rng = rng if rng is not None else np.random.default_rng(seed)
    total = n + burn_in
    eps = np.column_stack([r[rng.integers(0, len(r), size=total)] for r in residuals])
    alpha = np.vstack([p.alpha for p in components])
    beta = np.array([p.beta for p in components])
    Z, _ = garch_filter(eps, alpha, beta)
    Z = Z[burn_in:]
    return Z @ np.asarray(A_hat).T, Z


@dataclass
class BootConfig:
    B: int = 99
    burn_in: int = 500
    seed: int = 0
    k0: int = 1
    min_count: Optional[int] = None
    epsilon0: Optional[float] = None
    cuc: CucConfig = field(default_factory=CucConfig)
    refit_garch: bool = False
    estimator: str = "qmle"
    nu: int = DEFAULT_NU
    whiten: bool = True
    workers: int = 1


@dataclass
class BootstrapDraws:
    """Raw replicate output; ``theta`` maps e.g. ``"beta1"`` to B draws."""

    psi_star: np.ndarray
    D_star: np.ndarray
    theta: dict[str, np.ndarray]
    failures: int
    B: int
    seed: int


@dataclass
class BootstrapResult:
    statistics: np.ndarray
    observed: float
    p_value: float
    c_alpha: dict[float, float]
    reject: dict[float, bool]
    B: int
    seed: int
    failures: int = 0


def _param_names(components: Sequence[ExtGarchParams]) -> list[tuple[str, int, Optional[int]]]:
    out = []
    for p in components:
        j = p.own
        out.append((f"gamma{j + 1}", j, None))
        for i in p.active:
            out.append((f"alpha{j + 1}" if i == j else f"alpha{j + 1}_{i + 1}", j, i))
        out.append((f"beta{j + 1}", j, -1))
    return out


def _replicate(args) -> Optional[dict]:
    n, model, residuals, cfg, b = args
    A_hat, components = model.A_hat, model.components
    for attempt in range(2):
        rng = child_rng(cfg.seed, STREAM_BOOT, b, attempt)
        try:
            Xs, _ = draw_bootstrap_sample(model, residuals, n, cfg.burn_in, rng=rng)
            if cfg.whiten:
                # same preprocessing as the observed panel went through
                Xp, tr = whiten(ReturnPanel(Xs))
                Xs, back = Xp.values, tr.eigvecs / np.sqrt(tr.eigvals)
            else:
                back = np.eye(Xs.shape[1])
            balls = build_ball_family(Xs, cfg.k0, cfg.min_count, cfg.epsilon0)
            ccfg = CucConfig(**{**cfg.cuc.__dict__, "seed": derive_int(cfg.seed, STREAM_BOOT, b, attempt)})
            fit = estimate_cuc(Xs, balls, ccfg)
            # loading of the bootstrap CUCs in the coordinates of A_hat
            A_star = back @ fit.A_hat
            A_star = A_star / np.linalg.norm(A_star, axis=0)
            out = {"psi": fit.value, "D": d_distance(A_hat, A_star)}
            if cfg.refit_garch:
                out["theta"] = _refit_theta(Xs @ fit.A_hat, A_hat, A_star, components, cfg)
            return out
        except CucError as exc:
            logger.warning("bootstrap replicate %d attempt %d failed: %s", b, attempt, exc)
    return None


def _refit_theta(Zs, A_hat, A_star, components, cfg) -> dict[str, float]:
    # bootstrap CUC perm[j] plays the role of fitted CUC j
    perm, _ = match_columns(A_hat, A_star)
    theta = {}
    for p in components:
        j = p.own
        own = int(perm[j])
        active = tuple(int(perm[i]) for i in p.active)
        if cfg.estimator == "lade":
            g = lade_fit(Zs, own, active, cfg.nu).params
        else:
            g = qmle_fit(Zs, own, active, cfg.nu).params
        for name, jj, i in _param_names([p]):
            if i is None:
                theta[name] = g.gamma
            elif i == -1:
                theta[name] = g.beta
            else:
                theta[name] = float(g.alpha[perm[i]])
    return theta


def run_bootstrap(
    X: np.ndarray,
    model,
    residuals: Sequence[np.ndarray],
    config: Optional[BootConfig] = None,
) -> BootstrapDraws:
    """Draw B panels and re-estimate A* (and optionally the GARCH parameters).

    Each bootstrap panel is whitened before A* is estimated (unless
    ``config.whiten`` is off), mirroring the treatment of the observed data.
    A replicate that raises is retried once with a fresh stream; if 5% or
    more of the replicates still fail the run is aborted.
    """
    cfg = config or BootConfig()
    if cfg.B < 1:
        raise DataError("B must be at least 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    jobs = [(X.shape[0], model, list(residuals), cfg, b) for b in range(cfg.B)]
    results = parallel_map(_replicate, jobs, cfg.workers)
    good = [r for r in results if r is not None]
    failures = len(results) - len(good)
    if failures >= 0.05 * cfg.B and failures > 0:
        raise ConvergenceError(f"{failures} of {cfg.B} bootstrap replicates failed")
    theta: dict[str, np.ndarray] = {}
    if cfg.refit_garch and good:
        theta = {k: np.array([r["theta"][k] for r in good]) for k in good[0]["theta"]}
    return BootstrapDraws(
        np.array([r["psi"] for r in good]), np.array([r["D"] for r in good]), theta, failures, cfg.B, cfg.seed
    )


def rank_index(B: int, alpha: float) -> int:
    """[B alpha] as a 1-based rank, never below 1."""
    return max(1, math.floor(B * alpha + 1e-9))


def kth_largest(values: np.ndarray, k: int) -> float:
    return float(np.sort(np.asarray(values))[::-1][k - 1])


def existence_test(
    X: np.ndarray,
    model,
    residuals: Sequence[np.ndarray],
    config: Optional[BootConfig] = None,
    alphas: Sequence[float] = (0.01, 0.05, 0.10),
    draws: Optional[BootstrapDraws] = None,
    balls: Optional[BallFamily] = None,
) -> BootstrapResult:
    """Bootstrap test of the null that CUCs exist.

    The observed statistic is the minimized objective on the (whitened) data;
    the null is rejected at level a when it exceeds the [B a]-th largest
    bootstrap value.  ``p_value`` is the fraction of bootstrap values at or
    above the observed one.
    """
    cfg = config or BootConfig()
    if cfg.B < 19:
        raise DataError(f"existence test needs B >= 19, got {cfg.B}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if balls is None:
        balls = build_ball_family(X, cfg.k0, cfg.min_count, cfg.epsilon0)
    observed = PsiObjective(X, balls, cfg.cuc.weighted, cfg.cuc.aggregate)(model.A_hat)
    if draws is None:
        draws = run_bootstrap(X, model, residuals, cfg)
    stats = draws.psi_star
    B = stats.size
    p_value = float(np.count_nonzero(stats >= observed) / B)
    crit = {a: kth_largest(stats, rank_index(B, a)) for a in alphas}
    reject = {a: bool(observed > c) for a, c in crit.items()}
    return BootstrapResult(stats, float(observed), p_value, crit, reject, B, cfg.seed, draws.failures)


def confidence_set_A(D_star: np.ndarray, alpha: float) -> float:
    """c_alpha: the [B alpha]-th largest bootstrap D(A_hat, A*)."""
    D_star = np.asarray(D_star, dtype=float)
    B = D_star.size
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    if B < math.ceil(1 / alpha - 1e-9):
        raise DataError(f"B={B} too small for alpha={alpha}")
    return kth_largest(D_star, rank_index(B, alpha))


def in_confidence_set(A_hat: np.ndarray, A: np.ndarray, c_alpha: float) -> bool:
    return d_distance(A_hat, A) <= c_alpha


def param_intervals(draws: dict[str, np.ndarray], alpha: float) -> dict[str, tuple[float, float]]:
    """Percentile intervals (theta*_(b1), theta*_(b2)), b1 = [B a/2], b2 = [B(1 - a/2)]."""
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    out = {}
    for name, v in draws.items():
        v = np.sort(np.asarray(v, dtype=float))
        B = v.size
        if B < math.ceil(2 / alpha - 1e-9):
            raise DataError(f"B={B} too small for a {1 - alpha:.0%} interval")
        b1 = max(1, math.floor(B * alpha / 2 + 1e-9))
        b2 = max(b1, math.floor(B * (1 - alpha / 2) + 1e-9))
        out[name] = (float(v[b1 - 1]), float(v[b2 - 1]))
    return out
