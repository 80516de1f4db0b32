"""Limited-memory BFGS with a bracketing weak-Wolfe line search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .cost import objective


# Relative function tolerance of the approximate Wolfe fallback.
FTOL = 1e-12


@dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    message: str

    @property
    def line_search_failed(self) -> bool:
        return self.message == "line search failed"


def line_search(fun, x, f, g, d, step, c1=1e-4, c2=0.9, max_steps=64):
    """Bracketing search for a step satisfying the weak Wolfe conditions.

    When the sufficient-decrease test is lost in roundoff (close to a
    minimizer), a step is also accepted under the approximate Wolfe
    conditions: ``c2 * slope <= g_new @ d <= (2 * c1 - 1) * slope`` and
    ``f_new <= f + FTOL * max(1, |f|)``.

    Returns ``(step, f_new, g_new, evaluations)``; ``step`` is 0 on failure.
    """
    slope = float(g @ d)
    if slope >= 0:
        return 0.0, f, g, 0
    lo, hi = 0.0, np.inf
    evals = 0
    for _ in range(max_steps):
        fn, gn = fun(x + step * d)
        evals += 1
        if not np.isfinite(fn):
            hi = step
        elif fn > f + c1 * step * slope:
            dn = float(gn @ d)
            if fn <= f + FTOL * max(1.0, abs(f)) and c2 * slope <= dn <= (2 * c1 - 1) * slope:
                return step, fn, gn, evals
            hi = step
        elif float(gn @ d) < c2 * slope:
            lo = step
        else:
            return step, fn, gn, evals
        step = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * step
        if hi - lo < 1e-16 * max(1.0, hi):
            break
    return 0.0, f, g, evals


def lbfgs(
    fun: Callable[[np.ndarray], tuple],
    x0,
    memory: int = 8,
    c1: float = 1e-4,
    c2: float = 0.9,
    gtol: float = 1e-4,
    max_iter: int = 200,
    past: int = 0,
    delta: float = 0.0,
    scale=None,
) -> LBFGSResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    Stops when ``||g||_inf / max(1, ||x||_inf) < gtol``, after ``max_iter``
    iterations, when the line search fails (the best point so far is
    returned), or, if ``past > 0``, when the relative decrease over the last
    ``past`` iterations falls below ``delta``.

    ``scale`` is an optional positive diagonal preconditioner: the solver
    works in ``y = x / scale``, which amounts to the initial inverse Hessian
    ``diag(scale**2)`` up to the usual scalar factor.
    """
    x0 = np.array(x0, dtype=float)
    if scale is not None:
        sc = np.asarray(scale, dtype=float)
        res = lbfgs(lambda y: _scaled(fun, y, sc), x0 / sc, memory, c1, c2, gtol, max_iter, past, delta)
        res.x = res.x * sc
        res.g = res.g / sc
        return res
    x = x0
    f, g = fun(x)
    evals = 1
    S, Y, rho = [], [], []
    history = [f]

    def done(it, ok, msg):
        return LBFGSResult(x, float(f), g, it, evals, ok, msg)

    if np.max(np.abs(g), initial=0.0) / max(1.0, np.max(np.abs(x), initial=0.0)) < gtol:
        return done(0, True, "converged")
    d = -g
    step = 1.0 / max(np.linalg.norm(d), 1e-300)
    for it in range(1, max_iter + 1):
        step, fn, gn, ne = line_search(fun, x, f, g, d, step, c1, c2)
        evals += ne
        if step == 0.0:
            return done(it - 1, False, "line search failed")
        s = step * d
        y = gn - g
        x = x + s
        f, g = fn, gn
        history.append(f)
        if np.max(np.abs(g)) / max(1.0, np.max(np.abs(x))) < gtol:
            return done(it, True, "converged")
        if past > 0 and len(history) > past:
            ref = history[-1 - past]
            if (ref - f) / max(1.0, abs(f)) < delta:
                return done(it, True, "stalled")
        sy = float(s @ y)
        # cautious update keeps the inverse Hessian estimate positive definite
        if sy > 1e-12 * float(y @ y):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        # two-loop recursion
        d = -g.copy()
        alpha = [0.0] * len(S)
        for j in range(len(S) - 1, -1, -1):
            alpha[j] = rho[j] * float(S[j] @ d)
            d -= alpha[j] * Y[j]
        if S:
            d *= float(S[-1] @ Y[-1]) / float(Y[-1] @ Y[-1])
        for j in range(len(S)):
            beta = rho[j] * float(Y[j] @ d)
            d += (alpha[j] - beta) * S[j]
        step = 1.0
    return done(max_iter, False, "max iterations")


def _scaled(fun, y, sc):
    f, g = fun(y * sc)
    return f, g * sc


# Same algorithm compiled with numba for the trajectory objective
# ``objective(x, params)``.  The objective is bound as a global rather than
# passed in: a function-typed argument defeats numba's on-disk cache and
# costs every process tens of seconds of compilation.  Status codes:
# 0 converged, 1 stalled, 2 max iterations, 3 line search failed.
STATUS_MESSAGES = ("converged", "stalled", "max iterations", "line search failed")


@numba.njit(cache=True)
def _inf_norm(v):
    m = 0.0
    for i in range(v.shape[0]):
        a = abs(v[i])
        if a > m:
            m = a
    return m


@numba.njit(cache=True)
def _line_search_nb(params, x, f, g, d, step, c1, c2, max_steps, scale):
    slope = g @ d
    if slope >= 0:
        return 0.0, f, g, 0
    lo = 0.0
    hi = np.inf
    evals = 0
    for _ in range(max_steps):
        fn, gn = _eval_scaled(params, x + step * d, scale)
        evals += 1
        if not np.isfinite(fn):
            hi = step
        elif fn > f + c1 * step * slope:
            dn = gn @ d
            if fn <= f + FTOL * max(1.0, abs(f)) and c2 * slope <= dn and dn <= (2 * c1 - 1) * slope:
                return step, fn, gn, evals
            hi = step
        elif gn @ d < c2 * slope:
            lo = step
        else:
            return step, fn, gn, evals
        if np.isfinite(hi):
            step = 0.5 * (lo + hi)
        else:
            step = 2.0 * step
        if hi - lo < 1e-16 * max(1.0, hi):
            break
    return 0.0, f, g, evals


@numba.njit(cache=True)
def _eval_scaled(params, y, scale):
    f, g = objective(y * scale, params)
    return f, g * scale


@numba.njit(cache=True)
def _converged(g, y, scale, gtol):
    # tested in the original variables so that scaling does not move the target
    gn = 0.0
    xn = 0.0
    for i in range(g.shape[0]):
        gn = max(gn, abs(g[i] / scale[i]))
        xn = max(xn, abs(y[i] * scale[i]))
    return gn / max(1.0, xn) < gtol


@numba.njit(cache=True)
def lbfgs_nb(params, x0, memory, c1, c2, gtol, max_iter, past, delta, scale):
    """Numba twin of :func:`lbfgs` on the trajectory objective; returns ``(x, f, g, iterations, evaluations, status)``.

    ``scale`` is the diagonal preconditioner (all ones for none).
    """
    n = x0.shape[0]
    x = x0 / scale
    f, g = _eval_scaled(params, x, scale)
    evals = 1
    S = np.zeros((memory, n))
    Y = np.zeros((memory, n))
    rho = np.zeros(memory)
    alpha = np.zeros(memory)
    count = 0
    head = 0
    history = np.empty(max_iter + 1)
    history[0] = f
    if _converged(g, x, scale, gtol):
        return x * scale, f, g / scale, 0, evals, 0
    d = -g
    step = 1.0 / max(np.sqrt(d @ d), 1e-300)
    for it in range(1, max_iter + 1):
        step, fn, gn, ne = _line_search_nb(params, x, f, g, d, step, c1, c2, 64, scale)
        evals += ne
        if step == 0.0:
            return x * scale, f, g / scale, it - 1, evals, 3
        s = step * d
        y = gn - g
        x = x + s
        f = fn
        g = gn
        history[it] = f
        if _converged(g, x, scale, gtol):
            return x * scale, f, g / scale, it, evals, 0
        if past > 0 and it >= past:
            ref = history[it - past]
            if (ref - f) / max(1.0, abs(f)) < delta:
                return x * scale, f, g / scale, it, evals, 1
        sy = s @ y
        if sy > 1e-12 * (y @ y):
            S[head] = s
            Y[head] = y
            rho[head] = 1.0 / sy
            head = (head + 1) % memory
            count = min(count + 1, memory)
        d = -g.copy()
        # two-loop recursion over the ring buffer, newest first
        for j in range(count):
            k = (head - 1 - j) % memory
            alpha[k] = rho[k] * (S[k] @ d)
            d -= alpha[k] * Y[k]
        if count > 0:
            k = (head - 1) % memory
            d *= (S[k] @ Y[k]) / (Y[k] @ Y[k])
        for j in range(count - 1, -1, -1):
            k = (head - 1 - j) % memory
            beta = rho[k] * (Y[k] @ d)
            d += (alpha[k] - beta) * S[k]
        step = 1.0
    return x * scale, f, g / scale, max_iter, evals, 2
