"""Limited-memory BFGS with a strong-Wolfe line search.

The line search is the bracketing/zoom scheme of Nocedal & Wright
(Algorithms 3.5 and 3.6) with safeguarded cubic interpolation.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class LbfgsConfig:
    history: int = 10
    max_iterations: int = 400
    gradient_tolerance: float = 1e-6
    # stop when an accepted step changes the loss by less than this (relative)
    loss_tolerance: float = 1e-15
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 30


class TraceRow(NamedTuple):
    iteration: int
    loss: float
    gradient_norm: float


@dataclass
class LbfgsResult:
    x: np.ndarray
    loss: float
    gradient: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False
    line_search_failed: bool = False
    evaluations: int = 0
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1


def _evaluate(fun, x):
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    return f, g


def _cubic_min(x1, f1, g1, x2, f2, g2, lo, hi):
    """Minimiser of the cubic through two points with slopes, clipped to [lo, hi]."""
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2)
    disc = d1 * d1 - g1 * g2
    if disc >= 0 and np.isfinite(disc):
        d2 = np.sqrt(disc)
        if x1 <= x2:
            t = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        else:
            t = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        if np.isfinite(t):
            return min(max(t, lo), hi)
    return 0.5 * (lo + hi)


def strong_wolfe(fun, x, d, f0, g0, alpha, cfg: LbfgsConfig):
    """Find a step satisfying the strong Wolfe conditions along ``d``.

    Returns ``(alpha, f, g, evaluations, ok)``. When ``ok`` is false the
    returned step is the best sufficient-decrease point seen (alpha may be 0).
    """
    gtd0 = float(g0 @ d)
    evals = 0
    a_prev, f_prev, gtd_prev, g_prev = 0.0, f0, gtd0, g0
    best = (0.0, f0, g0)
    a = alpha
    bracket = None

    for i in range(cfg.max_line_search):
        f, g = _evaluate(fun, x + a * d)
        evals += 1
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            # overshot into overflow: shrink towards the last good step
            a = a_prev + 0.5 * (a - a_prev)
            continue
        gtd = float(g @ d)
        if f <= f0 + cfg.c1 * a * gtd0 and f < best[1]:
            best = (a, f, g)
        if f > f0 + cfg.c1 * a * gtd0 or (i > 0 and f >= f_prev):
            bracket = [(a_prev, f_prev, gtd_prev, g_prev), (a, f, gtd, g)]
            break
        if abs(gtd) <= -cfg.c2 * gtd0:
            return a, f, g, evals, True
        if gtd >= 0:
            bracket = [(a, f, gtd, g), (a_prev, f_prev, gtd_prev, g_prev)]
            break
        lo, hi = a + 0.01 * (a - a_prev), 10.0 * a
        a_next = _cubic_min(a_prev, f_prev, gtd_prev, a, f, gtd, lo, hi)
        a_prev, f_prev, gtd_prev, g_prev = a, f, gtd, g
        a = a_next

    if bracket is None:
        return best[0], best[1], best[2], evals, False

    # zoom: bracket[0] is the low end (sufficient decrease, lowest f)
    lo_pt, hi_pt = bracket
    dnorm = float(np.max(np.abs(d)))
    while evals < cfg.max_line_search + 10:
        a_lo, f_lo, gtd_lo, _ = lo_pt
        a_hi, f_hi, gtd_hi, _ = hi_pt
        if abs(a_hi - a_lo) * dnorm < 1e-16 * max(1.0, float(np.max(np.abs(x)))):
            break
        left, right = min(a_lo, a_hi), max(a_lo, a_hi)
        a = _cubic_min(a_lo, f_lo, gtd_lo, a_hi, f_hi, gtd_hi, left, right)
        width = right - left
        if min(a - left, right - a) < 0.1 * width:
            a = 0.5 * (left + right)
        f, g = _evaluate(fun, x + a * d)
        evals += 1
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            hi_pt = (a, np.inf, 0.0, None)
            continue
        gtd = float(g @ d)
        if f > f0 + cfg.c1 * a * gtd0 or f >= f_lo:
            hi_pt = (a, f, gtd, g)
        else:
            if f < best[1]:
                best = (a, f, g)
            if abs(gtd) <= -cfg.c2 * gtd0:
                return a, f, g, evals, True
            if gtd * (a_hi - a_lo) >= 0:
                hi_pt = lo_pt
            lo_pt = (a, f, gtd, g)
    return best[0], best[1], best[2], evals, False


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append((rho, a))
    s, y = s_hist[-1], y_hist[-1]
    r = q * (float(s @ y) / float(y @ y))
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * float(y @ r)
        r += s * (a - b)
    return -r


def lbfgs_minimize(fun: Objective, x0, cfg: LbfgsConfig = LbfgsConfig()) -> LbfgsResult:
    """Minimise ``fun(x) -> (loss, gradient)`` from ``x0``.

    Stops when the gradient 2-norm drops below ``cfg.gradient_tolerance``,
    after ``cfg.max_iterations`` iterations, or when progress stalls at
    machine precision. Every accepted step lowers the loss, so the trace is
    non-increasing. A line-search failure returns the best iterate with
    ``line_search_failed`` set.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = _evaluate(fun, x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("objective is not finite at the starting point")
    gnorm = float(np.linalg.norm(g))
    result = LbfgsResult(x=x, loss=f, gradient=g, trace=[TraceRow(0, f, gnorm)], evaluations=1)
    if gnorm <= cfg.gradient_tolerance:
        result.converged = True
        result.message = "gradient tolerance reached"
        return result

    s_hist = deque(maxlen=cfg.history)
    y_hist = deque(maxlen=cfg.history)
    for it in range(1, cfg.max_iterations + 1):
        if s_hist:
            d = _two_loop(g, s_hist, y_hist)
            alpha = 1.0
        else:
            d = -g
            alpha = min(1.0, 1.0 / gnorm)
        if float(g @ d) >= 0:
            s_hist.clear()
            y_hist.clear()
            d = -g
            alpha = min(1.0, 1.0 / gnorm)

        a, f_new, g_new, evals, ok = strong_wolfe(fun, x, d, f, g, alpha, cfg)
        result.evaluations += evals
        if a == 0.0 or not f_new < f:
            result.line_search_failed = True
            result.message = "line search found no decrease"
            log.warning("lbfgs: line search failed at iteration %d (loss %.6g)", it, f)
            break
        if not ok:
            log.debug("lbfgs: accepting sufficient-decrease step without curvature at iteration %d", it)
        s = a * d
        y = g_new - g
        if float(y @ s) > 1e-12 * float(np.linalg.norm(y) * np.linalg.norm(s)):
            s_hist.append(s)
            y_hist.append(y)
        x = x + s
        f_prev, f, g = f, f_new, g_new
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at iteration {it}")
        gnorm = float(np.linalg.norm(g))
        result.trace.append(TraceRow(it, f, gnorm))
        if gnorm <= cfg.gradient_tolerance:
            result.converged = True
            result.message = "gradient tolerance reached"
            break
        if f_prev - f <= cfg.loss_tolerance * max(1.0, abs(f)):
            result.converged = True
            result.message = "loss change below tolerance"
            break
    else:
        result.message = "maximum iterations reached"

    result.x, result.loss, result.gradient = x, f, g
    return result
