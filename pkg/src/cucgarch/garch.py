"""Extended GARCH(1,1) volatility models for the individual CUCs.

Component j follows

    sigma2_t = gamma + sum_i alpha_i Z_{t-1,i}^2 + beta sigma2_{t-1},
    gamma = 1 - beta - sum_i alpha_i,

so that every CUC has unit unconditional variance.  Only the own lag is
included by default; other lagged squared components ("causal in variance")
can be added by BIC forward selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter
from scipy.special import expit, gammaln, logit

from .errors import DataError, StationarityError
from .optim import nelder_mead

SUM_CAP = 1.0 - 1e-4
DEFAULT_NU = 10


@dataclass(frozen=True)
class ExtGarchParams:
    """Coefficients of one component; ``alpha`` has one entry per CUC."""

    own: int
    alpha: np.ndarray
    beta: float
    active: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        alpha = np.array(self.alpha, dtype=float).ravel()
        active = tuple(sorted(set(int(i) for i in self.active))) or (self.own,)
        d = alpha.size
        if not 0 <= self.own < d:
            raise DataError(f"own index {self.own} out of range for d={d}")
        if self.own not in active:
            raise DataError("active set must contain the component's own index")
        if any(not 0 <= i < d for i in active):
            raise DataError("active index out of range")
        if not np.all(np.isfinite(alpha)) or not math.isfinite(self.beta):
            raise StationarityError("GARCH coefficients must be finite")
        if np.any(alpha < 0):
            raise StationarityError(f"negative alpha in component {self.own}: {alpha}")
        inactive = np.setdiff1d(np.arange(d), active)
        if np.any(alpha[inactive] != 0):
            raise DataError("alpha must vanish outside the active set")
        if not 0 <= self.beta < 1:
            raise StationarityError(f"beta={self.beta} outside [0, 1) in component {self.own}")
        if alpha.sum() + self.beta >= 1:
            raise StationarityError(
                f"alpha sum + beta = {alpha.sum() + self.beta:.6g} >= 1 in component {self.own}"
            )
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def d(self) -> int:
        return self.alpha.size

    @property
    def gamma(self) -> float:
        return 1.0 - self.beta - float(self.alpha.sum())

    @property
    def persistence(self) -> float:
        return float(self.alpha.sum()) + self.beta

    @classmethod
    def standard(cls, own: int, d: int, alpha: float, beta: float) -> "ExtGarchParams":
        a = np.zeros(d)
        a[own] = alpha
        return cls(own, a, beta, (own,))

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "alpha": self.alpha.tolist(), "beta": self.beta, "active": list(self.active)}

    @classmethod
    def from_dict(cls, own: int, data: dict) -> "ExtGarchParams":
        p = cls(own, np.asarray(data["alpha"], dtype=float), float(data["beta"]), tuple(data["active"]))
        if "gamma" in data and abs(float(data["gamma"]) - p.gamma) > 1e-10:
            raise StationarityError(f"component {own}: gamma is not 1 - beta - sum(alpha)")
        return p


@dataclass
class StationarityReport:
    ok: bool
    r: int
    margins: list[float]


def check_stationarity(params: Sequence[ExtGarchParams]) -> StationarityReport:
    """Sufficient condition r * max_i alpha_ji + beta_j < 1 for every j.

    ``r`` is the largest number of non-zero alphas in any component.
    """
    r = max(int(np.count_nonzero(p.alpha)) for p in params)
    margins = [1.0 - (r * float(p.alpha.max()) + p.beta) for p in params]
    return StationarityReport(all(m > 0 for m in margins), r, margins)


def _as_matrix(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    return Z[:, None] if Z.ndim == 1 else Z


def sigma_path(Z: np.ndarray, j: int, params: ExtGarchParams, sigma2_init: Optional[float] = None) -> np.ndarray:
    """Conditional variances sigma2_t of component ``j`` for t = 1..T.

    By default the infinite-past series is evaluated with Z_t = 0 for t <= 0,
    i.e. the recursion is started from sigma2_0 = gamma / (1 - beta).  A
    different pre-sample variance can be supplied through ``sigma2_init``.
    """
    Z = _as_matrix(Z)
    if params.own != j:
        raise DataError(f"parameters belong to component {params.own}, not {j}")
    if Z.shape[1] != params.d:
        raise DataError(f"Z has {Z.shape[1]} columns, parameters expect {params.d}")
    return _sigma_path(Z[:, list(params.active)], params.alpha[list(params.active)], params.beta, sigma2_init)


def _sigma_path(Za: np.ndarray, alpha: np.ndarray, beta: float, sigma2_init: Optional[float] = None) -> np.ndarray:
    # filter the deviation u_t = sigma2_t - 1, which obeys
    # u_t = sum_i alpha_i (Z_{t-1,i}^2 - 1) + beta u_{t-1}; the unit fixed point is then exact
    a_sum = float(alpha.sum())
    v = np.empty(Za.shape[0])
    v[0] = -a_sum
    v[1:] = (Za[:-1] ** 2 - 1.0) @ alpha
    u0 = -a_sum / (1.0 - beta) if sigma2_init is None else sigma2_init - 1.0
    u, _ = lfilter([1.0], [1.0, -beta], v, zi=[beta * u0])
    return u + 1.0


# --- quasi densities ---------------------------------------------------------


@dataclass(frozen=True)
class QuasiDensity:
    """Unit-variance working density for the innovations.

    ``shape`` is the degrees of freedom for ``"t"`` and the exponent for
    ``"ged"``; it is ignored for ``"normal"``.
    """

    name: str = "normal"
    shape: Optional[float] = None

    def __post_init__(self) -> None:
        if self.name not in ("normal", "t", "ged"):
            raise ValueError(f"unknown density {self.name!r}")
        if self.shape is None:
            object.__setattr__(self, "shape", {"normal": 0.0, "t": 6.0, "ged": 1.5}[self.name])
        if self.name == "t" and self.shape <= 2:
            raise ValueError("t density needs more than 2 degrees of freedom")
        if self.name == "ged" and self.shape <= 0:
            raise ValueError("GED shape must be positive")

    def neg_log(self, z: np.ndarray) -> np.ndarray:
        """-log f(z)."""
        if self.name == "normal":
            return 0.5 * z * z + 0.5 * math.log(2 * math.pi)
        if self.name == "t":
            v = self.shape
            c = gammaln((v + 1) / 2) - gammaln(v / 2) - 0.5 * math.log(math.pi * (v - 2))
            return -c + (v + 1) / 2 * np.log1p(z * z / (v - 2))
        s = self.shape
        lam = math.exp(0.5 * (gammaln(1 / s) - gammaln(3 / s)))
        c = math.log(s) - math.log(2 * lam) - gammaln(1 / s)
        return -c + np.abs(z / lam) ** s


# --- parameter transforms ------------------------------------------------


def _softplus(u: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, u)


def _inv_softplus(a: np.ndarray) -> np.ndarray:
    a = np.maximum(np.asarray(a, dtype=float), 1e-10)
    return a + np.log(-np.expm1(-a))


def _to_constrained(x: np.ndarray) -> tuple[np.ndarray, float]:
    alpha = _softplus(x[:-1])
    beta = float(expit(x[-1]))
    s = alpha.sum() + beta
    if s > SUM_CAP:
        alpha, beta = alpha * (SUM_CAP / s), beta * (SUM_CAP / s)
    return alpha, beta


def _to_free(alpha: np.ndarray, beta: float) -> np.ndarray:
    beta = min(max(beta, 1e-6), 1 - 1e-6)
    return np.concatenate([_inv_softplus(alpha), [logit(beta)]])


def heuristic_start(active: Sequence[int], own: int) -> tuple[np.ndarray, float]:
    alpha = np.array([0.05 if i == own else 0.01 for i in active])
    return alpha, 0.90


# --- fitting ---------------------------------------------------------------


@dataclass
class GarchFit:
    params: ExtGarchParams
    objective: float
    converged: bool
    nfev: int
    extra: dict = field(default_factory=dict)


def _prepare(Z: np.ndarray, j: int, active: Optional[Sequence[int]], nu: int) -> tuple[np.ndarray, tuple[int, ...]]:
    Z = _as_matrix(Z)
    n, d = Z.shape
    if not 0 <= j < d:
        raise DataError(f"component index {j} out of range for d={d}")
    active = tuple(sorted(set(active))) if active is not None else (j,)
    if j not in active:
        raise DataError("active set must contain the fitted component")
    if nu < 1:
        raise DataError("nu must be at least 1")
    if n - nu < 10 * (len(active) + 1):
        raise DataError(f"sample of {n} too short for {len(active) + 1} parameters with nu={nu}")
    if not np.any(Z[:, j] != 0):
        raise DataError(f"component {j} is identically zero")
    return Z, active


def _params(j: int, d: int, active: tuple[int, ...], alpha_a: np.ndarray, beta: float) -> ExtGarchParams:
    alpha = np.zeros(d)
    alpha[list(active)] = alpha_a
    return ExtGarchParams(j, alpha, beta, active)


def _minimize(obj, x0: np.ndarray, max_evals: int) -> tuple[np.ndarray, float, bool, int]:
    """Simplex search restarted from its own optimum until it stops improving."""
    res = nelder_mead(obj, x0, step=0.5, max_evals=max_evals, xatol=1e-7, fatol=1e-10)
    x, fx, used, conv = res.x, res.fun, res.nfev, res.converged
    while used < max_evals:
        again = nelder_mead(obj, x, step=0.05, max_evals=max_evals - used, xatol=1e-7, fatol=1e-10)
        used += again.nfev
        conv = again.converged
        improved = again.fun < fx - 1e-9
        if again.fun < fx:
            x, fx = again.x, again.fun
        if not improved:
            break
    return x, fx, conv, used


def qmle_objective(
    Z: np.ndarray, params: ExtGarchParams, nu: int = DEFAULT_NU, density: Optional[QuasiDensity] = None
) -> float:
    """Negative quasi log-likelihood sum_{t>nu} [log sigma_t - log f(Z_t / sigma_t)]."""
    density = density or QuasiDensity()
    Z = _as_matrix(Z)
    s2 = sigma_path(Z, params.own, params)[nu:]
    z = Z[nu:, params.own]
    return float(np.sum(0.5 * np.log(s2) + density.neg_log(z / np.sqrt(s2))))


def qmle_fit(
    Z: np.ndarray,
    j: int,
    active: Optional[Sequence[int]] = None,
    nu: int = DEFAULT_NU,
    density: Optional[QuasiDensity] = None,
    start: Optional[ExtGarchParams] = None,
    max_evals: int = 2000,
) -> GarchFit:
    """Quasi-maximum likelihood fit of component ``j`` on the given CUC series."""
    density = density or QuasiDensity()
    Z, active = _prepare(Z, j, active, nu)
    d = Z.shape[1]
    Za = Z[:, list(active)]
    z = Z[nu:, j]

    def obj(x: np.ndarray) -> float:
        alpha, beta = _to_constrained(x)
        s2 = _sigma_path(Za, alpha, beta)[nu:]
        if np.any(s2 <= 0):
            return np.inf
        return float(np.sum(0.5 * np.log(s2) + density.neg_log(z / np.sqrt(s2))))

    if start is not None:
        a0, b0 = start.alpha[list(active)], start.beta
        a0 = np.where(a0 > 0, a0, 0.01)
    else:
        a0, b0 = heuristic_start(active, j)
    x, fx, conv, used = _minimize(obj, _to_free(a0, b0), max_evals)
    alpha, beta = _to_constrained(x)
    return GarchFit(_params(j, d, active, alpha, beta), fx, conv, used)


def standardized_residuals(Z: np.ndarray, params: ExtGarchParams, nu: int = DEFAULT_NU) -> np.ndarray:
    """Z_t / sigma_t for t > nu."""
    Z = _as_matrix(Z)
    s2 = sigma_path(Z, params.own, params)
    return Z[nu:, params.own] / np.sqrt(s2[nu:])


@dataclass
class LadeFit(GarchFit):
    v0: float = 1.0
    iterations: int = 0


def lade_fit(
    Z: np.ndarray,
    j: int,
    active: Optional[Sequence[int]] = None,
    nu: int = DEFAULT_NU,
    max_outer: int = 50,
    tol: float = 1e-6,
    max_evals: int = 2000,
    v0_rule: str = "median",
) -> LadeFit:
    """Least absolute deviations fit on log-squared observations.

    The initial estimate minimizes sum |log Z_t^2 - log sigma2_t - log v0^2|
    jointly in (theta, v0).  Theta is then refined by iteratively reweighted
    least squares with weights 1 / |previous residual|, re-estimating v0 from
    the residuals eps_t = Z_t / sigma_t after every step, until theta moves by
    less than ``tol``.

    ``v0_rule="median"`` sets v0^2 = median(eps_t^2), the value implied by
    median(e_t^2) = 1.  ``"std"`` sets v0 = 1 / std(eps_t); under variance
    targeting std(eps_t) is close to one, so that rule pins v0 near 1 and
    biases alpha upwards for Gaussian data.
    """
    if v0_rule not in ("median", "std"):
        raise ValueError("v0_rule must be 'median' or 'std'")
    Z, active = _prepare(Z, j, active, nu)
    d = Z.shape[1]
    Za = Z[:, list(active)]
    z2 = Z[:, j] ** 2
    floor = 1e-12 * z2.mean()
    logz2 = np.log(np.maximum(z2, floor))[nu:]
    zt = Z[nu:, j]

    def log_s2(x: np.ndarray) -> np.ndarray:
        alpha, beta = _to_constrained(x)
        return np.log(_sigma_path(Za, alpha, beta)[nu:])

    def l1(y: np.ndarray) -> float:
        return float(np.abs(logz2 - log_s2(y[:-1]) - y[-1]).sum())

    a0, b0 = heuristic_start(active, j)
    x0 = _to_free(a0, b0)
    y0 = np.append(x0, np.median(logz2 - log_s2(x0)))
    y, _, _, used = _minimize(l1, y0, max_evals)
    x = y[:-1]

    def v0_of(x: np.ndarray) -> float:
        eps = zt / np.exp(0.5 * log_s2(x))
        if v0_rule == "median":
            return float(np.sqrt(np.median(eps * eps)))
        return float(1.0 / np.std(eps, ddof=1))

    v0 = v0_of(x)
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        shift = 2.0 * math.log(v0)
        w = 1.0 / np.maximum(np.abs(logz2 - log_s2(x) - shift), 1e-4)

        def wls(xx: np.ndarray) -> float:
            r = logz2 - log_s2(xx) - shift
            return float(np.sum(w * r * r))

        x_new, _, _, n_used = _minimize(wls, x, max_evals)
        used += n_used
        theta_old = np.concatenate(_to_constrained(x), axis=None)
        theta_new = np.concatenate(_to_constrained(x_new), axis=None)
        x = x_new
        v0 = v0_of(x)
        if np.max(np.abs(theta_new - theta_old)) < tol:
            converged = True
            break
    alpha, beta = _to_constrained(x)
    params = _params(j, d, active, alpha, beta)
    objective = float(np.abs(logz2 - log_s2(x) - 2 * math.log(v0)).sum())
    return LadeFit(params, objective, converged, used, v0=v0, iterations=it)


# --- causal component selection ----------------------------------------------


@dataclass
class Selection:
    active: tuple[int, ...]
    order: list[int]
    nll: list[float]
    bic: list[float]
    fits: list[GarchFit]

    @property
    def best(self) -> GarchFit:
        return self.fits[len(self.active) - 1]


def bic_value(nll: float, k: int, n: int, nu: int) -> float:
    return nll + (k + 2) * math.log(n - nu)


def select_causal_components(
    Z: np.ndarray,
    j: int,
    nu: int = DEFAULT_NU,
    density: Optional[QuasiDensity] = None,
    max_add: Optional[int] = None,
) -> Selection:
    """Forward stepwise addition of lagged squared CUCs, scored by BIC.

    Step k adds the candidate whose inclusion gives the smallest negative
    quasi log-likelihood; the returned active set minimizes
    BIC(k) = l(k) + (k + 2) log(n - nu) over the visited steps.
    """
    Z = _as_matrix(Z)
    n, d = Z.shape
    max_add = d - 1 if max_add is None else min(max_add, d - 1)
    fit = qmle_fit(Z, j, (j,), nu, density)
    active = [j]
    order: list[int] = []
    fits = [fit]
    nlls = [fit.objective]
    bics = [bic_value(fit.objective, 0, n, nu)]
    for k in range(1, max_add + 1):
        best = None
        for cand in range(d):
            if cand in active:
                continue
            trial = tuple(sorted(active + [cand]))
            if n - nu < 10 * (len(trial) + 1):
                continue
            f = qmle_fit(Z, j, trial, nu, density, start=_extend(fit.params, trial))
            if best is None or f.objective < best[1].objective:
                best = (cand, f)
        if best is None:
            break
        cand, fit = best
        active.append(cand)
        order.append(cand)
        fits.append(fit)
        nlls.append(fit.objective)
        bics.append(bic_value(fit.objective, k, n, nu))
    k_best = int(np.argmin(bics))
    chosen = tuple(sorted([j] + order[:k_best]))
    return Selection(chosen, order, nlls, bics, fits)


def _extend(params: ExtGarchParams, active: tuple[int, ...]) -> ExtGarchParams:
    alpha = params.alpha.copy()
    for i in active:
        if alpha[i] == 0:
            alpha[i] = 0.01
    s = alpha.sum() + params.beta
    beta = params.beta
    if s > SUM_CAP:
        alpha, beta = alpha * SUM_CAP / s * 0.999, beta * SUM_CAP / s * 0.999
    return ExtGarchParams(params.own, alpha, beta, active)
