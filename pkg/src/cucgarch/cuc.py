"""Estimation of the conditionally uncorrelated components (CUCs).

The mixing matrix A is orthogonal and is charted by d(d-1)/2 Givens angles.
It is chosen to minimize an objective that sums, over component pairs, the
largest absolute conditional cross moment over a family of lagged ball
events.  Everything here operates on whitened data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError
from .optim import nelder_mead
from .rng import STREAM_RESTARTS, child_rng


def n_angles(d: int) -> int:
    return d * (d - 1) // 2


def angle_pairs(d: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i < j, in the order the angles are stored."""
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


def wrap_angles(phi: np.ndarray) -> np.ndarray:
    """Reduce angles into (-pi, pi]."""
    out = np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) - np.pi
    out[out == -np.pi] = np.pi
    return out


def givens_compose(phi: np.ndarray, d: int) -> np.ndarray:
    """Orthogonal matrix E_12(phi_12) E_13(phi_13) ... E_{d-1,d}(phi_{d-1,d}).

    E_ij is the identity with cos(phi) at (i,i) and (j,j), sin(phi) at (i,j)
    and -sin(phi) at (j,i).
    """
    phi = np.asarray(phi, dtype=float).ravel()
    if phi.size != n_angles(d):
        raise ValueError(f"expected {n_angles(d)} angles for d={d}, got {phi.size}")
    if not np.all(np.isfinite(phi)):
        raise ValueError("rotation angles must be finite")
    A = np.eye(d)
    for (i, j), p in zip(angle_pairs(d), phi):
        c, s = math.cos(p), math.sin(p)
        ai, aj = A[:, i].copy(), A[:, j]
        A[:, i] = c * ai - s * aj
        A[:, j] = s * ai + c * aj
    return A


def d_distance(A: np.ndarray, B: np.ndarray) -> float:
    """1 - (1/d) sum_i max_j |a_i^T b_j| over the columns of A and B.

    Zero exactly when the columns of B are a signed permutation of those of A.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise DataError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return float(max(0.0, 1.0 - np.abs(A.T @ B).max(axis=1).mean()))


def match_columns(reference: np.ndarray, estimate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Greedy assignment of estimate columns to reference columns.

    Repeatedly pairs the (reference, estimate) columns with the largest
    |inner product|.  Returns ``perm`` with ``estimate[:, perm[i]]`` matched to
    ``reference[:, i]`` and the signs that align them.
    """
    G = np.asarray(reference, dtype=float).T @ np.asarray(estimate, dtype=float)
    absG = np.abs(G)
    d = G.shape[0]
    perm = np.full(d, -1)
    for _ in range(d):
        i, j = np.unravel_index(np.argmax(absG), absG.shape)
        perm[i] = j
        absG[i, :] = -1.0
        absG[:, j] = -1.0
    signs = np.sign(G[np.arange(d), perm])
    signs[signs == 0] = 1.0
    return perm, signs


# --- ball family -----------------------------------------------------------


def default_min_count(n: int) -> int:
    return max(30, math.ceil(0.1 * n))


@dataclass(frozen=True)
class BallFamily:
    """Balls {x : |x - c| <= radius} used as lagged conditioning events."""

    centers: np.ndarray
    radius: float
    k0: int = 1
    epsilon0: float = 0.0
    min_count: int = 30

    def __post_init__(self) -> None:
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if centers.shape[0] < 1:
            raise DataError("ball family is empty")
        if not self.radius > 0:
            raise DataError("ball radius must be positive")
        if self.k0 < 1:
            raise DataError("k0 must be a positive integer")
        if self.epsilon0 < 0:
            raise DataError("epsilon0 must be non-negative")
        object.__setattr__(self, "centers", centers)

    def membership(self, X: np.ndarray) -> np.ndarray:
        """Boolean (n_balls, n) matrix: row b flags the points inside ball b."""
        diff = np.asarray(X, dtype=float)[None, :, :] - self.centers[:, None, :]
        return np.einsum("btk,btk->bt", diff, diff) <= self.radius**2


def decile_centers(X: np.ndarray) -> np.ndarray:
    """Row indices of observations holding a 10%, ..., 90% nearest-rank percentile."""
    X = np.atleast_2d(X)
    n, d = X.shape
    picked: list[int] = []
    for c in range(d):
        order = np.argsort(X[:, c], kind="stable")
        for q in range(1, 10):
            rank = max(1, math.ceil(q * n / 10))
            t = int(order[rank - 1])
            if t not in picked:
                picked.append(t)
    return np.array(picked, dtype=int)


def build_ball_family(
    X: np.ndarray,
    k0: int = 1,
    min_count: Optional[int] = None,
    epsilon0: Optional[float] = None,
) -> BallFamily:
    """Balls centred on decile observations with a common data-driven radius.

    The radius is the smallest one for which every ball holds at least
    ``min_count`` sample points (default ``max(30, ceil(0.1 n))``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and X.shape[1] > 1:
        X = X.T
    n = X.shape[0]
    min_count = default_min_count(n) if min_count is None else int(min_count)
    if min_count < 1:
        raise DataError("min_count must be positive")
    if n < min_count:
        raise DataError(f"cannot place balls holding {min_count} points in a sample of size {n}")
    if not 1 <= k0 < n - 1:
        raise DataError(f"k0={k0} out of range for n={n}")
    centers = X[decile_centers(X)]
    dist = np.sqrt(((X[None, :, :] - centers[:, None, :]) ** 2).sum(axis=2))
    kth = np.partition(dist, min_count - 1, axis=1)[:, min_count - 1]
    radius = float(kth.max())
    if radius <= 0:
        # all points coincide with the centres; any positive radius covers them
        radius = float(np.finfo(float).eps)
    eps0 = 1.0 / n if epsilon0 is None else float(epsilon0)
    return BallFamily(centers, radius * (1 + 1e-12), k0, eps0, min_count)


# --- objective ---------------------------------------------------------------


def ball_moments(X: np.ndarray, balls: BallFamily, weighted: bool = False) -> np.ndarray:
    """Conditional second-moment matrices, shape (k0, n_balls, d, d).

    Unweighted: C[k, b] = (n-k)^-1 sum_{t>k} X_t X_t^T 1{X_{t-k} in b}.
    Weighted:   C[k, b] = sum X_t X_t^T (1{.} + eps0) / sum (1{.} + eps0).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    inside = balls.membership(X).astype(float)
    out = np.empty((balls.k0, inside.shape[0], d, d))
    for k in range(1, balls.k0 + 1):
        Xk = X[k:]
        w = inside[:, : n - k]
        if weighted:
            w = w + balls.epsilon0
            denom = w.sum(axis=1)
            safe = np.where(denom > 0, denom, 1.0)
            C = np.einsum("bt,ti,tj->bij", w, Xk, Xk) / safe[:, None, None]
            C[denom <= 0] = 0.0
        else:
            C = np.einsum("bt,ti,tj->bij", w, Xk, Xk) / (n - k)
        out[k - 1] = C
    return out


class PsiObjective:
    """Psi(A) evaluated from precomputed ball moments.

    ``aggregate="sup"`` takes the supremum over balls and lags for each pair;
    ``"sum"`` takes the supremum over balls and sums over lags.
    """

    def __init__(self, X: np.ndarray, balls: BallFamily, weighted: bool = False, aggregate: str = "sup"):
        if aggregate not in ("sup", "sum"):
            raise ValueError("aggregate must be 'sup' or 'sum'")
        self.moments = ball_moments(X, balls, weighted)
        self.d = self.moments.shape[-1]
        self.aggregate = aggregate
        self._iu = np.triu_indices(self.d, k=1)

    def __call__(self, A: np.ndarray) -> float:
        if self.d < 2:
            return 0.0
        A = np.asarray(A, dtype=float)
        M = np.abs((A.T @ self.moments @ A)[..., self._iu[0], self._iu[1]])
        per_lag = M.max(axis=1)  # (k0, pairs)
        if self.aggregate == "sup":
            return float(per_lag.max(axis=0).sum())
        return float(per_lag.sum())


def psi_n(A: np.ndarray, X: np.ndarray, balls: BallFamily, aggregate: str = "sup") -> float:
    return PsiObjective(X, balls, False, aggregate)(A)


def psi_n_weighted(A: np.ndarray, X: np.ndarray, balls: BallFamily, aggregate: str = "sup") -> float:
    return PsiObjective(X, balls, True, aggregate)(A)


# --- optimizer ---------------------------------------------------------------


@dataclass
class CucConfig:
    restarts: int = 10
    tol_D: float = 1e-4
    max_evals: Optional[int] = None  # per restart; default 500 * d(d-1)/2
    seed: int = 0
    weighted: bool = False
    aggregate: str = "sup"
    step: float = 0.5


@dataclass
class CucFit:
    A_hat: np.ndarray
    angles: np.ndarray
    value: float
    converged: bool
    trace: list[dict] = field(default_factory=list)


def _start_points(p: int, config: CucConfig) -> list[np.ndarray]:
    starts = [np.zeros(p)]
    for m in range(config.restarts):
        rng = child_rng(config.seed, STREAM_RESTARTS, m)
        starts.append(wrap_angles(rng.uniform(-np.pi, np.pi, size=p)))
    return starts


def estimate_cuc(X: np.ndarray, balls: BallFamily, config: Optional[CucConfig] = None) -> CucFit:
    """Minimize Psi over the Givens chart from the zero start and random restarts.

    Each restart stops once every simplex vertex lies within ``tol_D`` (in
    D-distance) of the best vertex, or when its evaluation budget runs out.
    """
    config = config or CucConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    p = n_angles(d)
    if p == 0:
        return CucFit(np.eye(d), np.zeros(0), 0.0, True, [])
    objective = PsiObjective(X, balls, config.weighted, config.aggregate)
    max_evals = config.max_evals or 500 * p

    def f(phi: np.ndarray) -> float:
        return objective(givens_compose(phi, d))

    def stop(sim: np.ndarray, fs: np.ndarray) -> bool:
        best = givens_compose(sim[0], d)
        return all(d_distance(best, givens_compose(v, d)) < config.tol_D for v in sim[1:])

    candidates = []
    trace = []
    for m, start in enumerate(_start_points(p, config)):
        res = nelder_mead(f, start, step=config.step, max_evals=max_evals, stop=stop, recentre=wrap_angles)
        phi = wrap_angles(res.x)
        candidates.append((res.fun, phi, res.converged))
        trace.append(
            {"restart": m, "start": start.tolist(), "values": res.trace, "nfev": res.nfev, "converged": res.converged}
        )
    best_val = min(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] <= best_val + 1e-12]
    value, phi, converged = min(tied, key=lambda c: d_distance(np.eye(d), givens_compose(c[1], d)))
    return CucFit(givens_compose(phi, d), phi, float(value), bool(converged), trace)
