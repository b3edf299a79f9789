"""Derivative-free Nelder-Mead simplex minimizer.

A small, self-contained implementation so callers can plug in their own
stopping rule (e.g. a distance between the matrices the vertices encode) and
a chart-preserving re-centring step, neither of which the scipy driver
exposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    converged: bool
    trace: list[float] = field(default_factory=list)


def nelder_mead(
    fun: Callable[[np.ndarray], float],
    x0: np.ndarray,
    step: float | np.ndarray = 0.1,
    max_evals: int = 1000,
    xatol: float = 1e-6,
    fatol: float = 1e-8,
    stop: Optional[Callable[[np.ndarray, np.ndarray], bool]] = None,
    recentre: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SimplexResult:
    """Minimize ``fun`` starting from ``x0``.

    Parameters
    ----------
    step : float or array
        Edge length of the initial right-angled simplex along each axis.
    stop : callable, optional
        ``stop(simplex, fvals)`` with rows sorted best first; replaces the
        default ``xatol``/``fatol`` test when given.
    recentre : callable, optional
        Maps the best vertex to an equivalent point; the whole simplex is
        translated by the same offset so its shape is unchanged.

    Returns
    -------
    SimplexResult
        ``trace`` holds the best objective value after each iteration and is
        non-increasing.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    nfev = 0

    def f(x: np.ndarray) -> float:
        nonlocal nfev
        nfev += 1
        val = float(fun(x))
        return val if np.isfinite(val) else np.inf

    sim = np.tile(x0, (n + 1, 1))
    sim[1:] += np.diag(np.broadcast_to(np.asarray(step, dtype=float), (n,)))
    fs = np.array([f(v) for v in sim])

    def default_stop(s: np.ndarray, fv: np.ndarray) -> bool:
        return (np.max(np.abs(s[1:] - s[0])) <= xatol) and (np.max(np.abs(fv[1:] - fv[0])) <= fatol)

    stop = stop or default_stop
    trace: list[float] = []
    nit = 0
    converged = False
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if recentre is not None:
            sim = sim + (recentre(sim[0]) - sim[0])
        trace.append(float(fs[0]))
        if n == 0 or stop(sim, fs):
            converged = True
            break
        if nfev >= max_evals:
            break
        nit += 1
        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
        fs[1:] = [f(v) for v in sim[1:]]
    return SimplexResult(sim[0].copy(), float(fs[0]), nfev, nit, converged, trace)
