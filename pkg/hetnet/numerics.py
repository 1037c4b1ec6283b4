"""
Vectorised one-dimensional searches used across the solvers
"""
import math
from typing import Callable, Tuple

import numpy as np

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2

ArrayFn = Callable[[np.ndarray], np.ndarray]


def golden_section(f: ArrayFn, a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """
    Golden-section search on many unimodal functions at once.

    f maps an array of abscissae (one per problem) to an array of values.
    Each interval [a_k, b_k] is shrunk until its own width is below tol and
    then frozen, so a problem's answer does not depend on its batch mates.
    The midpoint of each final bracket is returned.
    """
    a = np.atleast_1d(np.array(a, dtype=float))
    b = np.atleast_1d(np.array(b, dtype=float))
    a, b = np.minimum(a, b), np.maximum(a, b)
    h = b - a
    if not np.any(h > tol):
        return 0.5 * (a + b)

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    live = h > tol
    while np.any(live):
        # left: minimum lies in [a, d]; otherwise in [c, b]
        left = yc < yd
        move_left = live & left
        move_right = live & ~left
        b = np.where(move_left, d, b)
        a = np.where(move_right, c, a)
        h = np.where(live, INV_PHI * h, h)
        new_c = np.where(move_left, a + INV_PHI_SQUARE * h, np.where(move_right, d, c))
        new_d = np.where(move_left, c, np.where(move_right, a + INV_PHI * h, d))
        c, d = new_c, new_d
        # one fresh evaluation per problem: at c when moving left, at d otherwise
        fresh = f(np.where(left, c, d))
        yc, yd = (
            np.where(move_left, fresh, np.where(move_right, yd, yc)),
            np.where(move_left, yc, np.where(move_right, fresh, yd)),
        )
        live = h > tol
    return np.where(yc < yd, 0.5 * (a + d), 0.5 * (c + b))


def safeguarded_newton(
    f: ArrayFn,
    fprime: ArrayFn,
    lo: np.ndarray,
    hi: np.ndarray,
    tol: float = 1e-13,
    max_iter: int = 200,
) -> np.ndarray:
    """
    Roots of increasing functions with f(lo) < 0 < f(hi), element-wise.

    Newton steps are taken while they stay inside the current bracket;
    otherwise the bracket is bisected. Converges when every bracket (or
    Newton step) is below tol relative to the root.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        neg = fx < 0
        lo = np.where(neg, x, lo)
        hi = np.where(neg, hi, x)
        slope = fprime(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - fx / slope
        inside = np.isfinite(step) & (step > lo) & (step < hi)
        new_x = np.where(inside, step, 0.5 * (lo + hi))
        done = np.abs(new_x - x) <= tol * np.maximum(np.abs(new_x), 1.0)
        x = new_x
        if np.all(done | (fx == 0)):
            break
    return x


def bisect_decreasing(
    g: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    rel_tol: float,
    max_iter: int = 200,
) -> Tuple[float, float]:
    """
    Find x in [lo, hi] with g(x) <= target for a non-increasing scalar g.

    Returns (x_feasible, g(x_feasible)), where x_feasible is the upper end of
    the final bracket; g(lo) > target >= g(hi) must hold on entry.
    """
    g_hi = g(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid > target:
            lo = mid
        else:
            hi, g_hi = mid, g_mid
        if target - g_hi <= rel_tol * abs(target) or hi - lo <= 1e-15 * max(hi, 1.0):
            break
    return hi, g_hi
