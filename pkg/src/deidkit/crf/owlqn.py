"""Orthant-wise limited-memory quasi-Newton (OWL-QN) for smooth loss + c1*|x|_1.

With ``c1 == 0`` this reduces to L-BFGS with a backtracking Armijo line search.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class OptimResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    message: str
    history: list[float] = field(default_factory=list)


def pseudo_gradient(x: np.ndarray, g: np.ndarray, c1: float) -> np.ndarray:
    if c1 == 0:
        return g.copy()
    pg = np.where(x > 0, g + c1, np.where(x < 0, g - c1, 0.0))
    at_zero = x == 0
    right = g + c1
    left = g - c1
    pg = np.where(at_zero & (right < 0), right, pg)
    pg = np.where(at_zero & (left > 0), left, pg)
    return pg


def _two_loop(pg: np.ndarray, s_hist: deque, y_hist: deque) -> np.ndarray:
    q = pg.copy()
    alphas = []
    for s, y in reversed(list(zip(s_hist, y_hist))):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for a, rho, s, y in reversed(alphas):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize_owlqn(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    c1: float = 0.0,
    memory: int = 10,
    max_iterations: int = 200,
    tolerance: float = 1e-6,
    max_linesearch: int = 40,
) -> OptimResult:
    """Minimise ``f(x) + c1*|x|_1`` where ``fun`` returns the full objective and the smooth gradient.

    ``fun`` must include the ``c1`` term in the objective value it reports
    (the gradient is of the smooth part only).
    """
    x = np.array(x0, dtype=np.float64)
    F, g = fun(x)
    if not np.isfinite(F):
        raise FloatingPointError(f"objective is not finite at the starting point: {F}")
    s_hist: deque = deque(maxlen=memory)
    y_hist: deque = deque(maxlen=memory)
    history = [F]
    converged = False
    message = "max_iterations reached"
    it = 0
    for it in range(1, max_iterations + 1):
        pg = pseudo_gradient(x, g, c1)
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm <= 1e-10:
            converged, message = True, "pseudo-gradient vanished"
            it -= 1
            break
        d = -_two_loop(pg, s_hist, y_hist)
        if c1 > 0:
            d[d * pg >= 0] = 0.0
        if not d @ pg < 0:
            s_hist.clear()
            y_hist.clear()
            d = -pg
        orthant = np.where(x != 0, np.sign(x), -np.sign(pg))
        step = 1.0 / pg_norm if not s_hist else 1.0
        for _ in range(max_linesearch):
            x_new = x + step * d
            if c1 > 0:
                x_new[np.sign(x_new) != orthant] = 0.0
            F_new, g_new = fun(x_new)
            if np.isfinite(F_new) and F_new <= F + 1e-4 * float(pg @ (x_new - x)):
                break
            step *= 0.5
        else:
            message = "line search failed"
            it -= 1
            break
        if not np.isfinite(F_new):
            raise FloatingPointError(f"objective became non-finite at iteration {it}")
        s = x_new - x
        y = g_new - g
        if s @ y > 1e-10:
            s_hist.append(s)
            y_hist.append(y)
        rel = (F - F_new) / max(abs(F), abs(F_new), 1.0)
        x, F, g = x_new, F_new, g_new
        history.append(F)
        if rel < tolerance:
            converged, message = True, "relative objective change below tolerance"
            break
    return OptimResult(x, F, it, converged, message, history)
