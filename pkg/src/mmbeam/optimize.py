"""Energy-efficiency maximization by fractional programming."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "EvaluationError",
    "RatioProgram",
    "DinkelbachTrace",
    "dinkelbach_max",
    "AlternatingResult",
    "alternating_gee_max",
]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class EvaluationError(ArithmeticError):
    def __init__(self, p: float, value):
        super().__init__(f"objective is not finite at p={p!r}: {value!r}")
        self.p = p
        self.value = value


@dataclass
class RatioProgram:
    """Maximize ``numerator(p) / denominator(p)`` over ``[p_min, p_max]``."""

    numerator: Callable[[float], float]
    denominator: Callable[[float], float]
    p_min: float
    p_max: float

    def __post_init__(self):
        if not self.p_min <= self.p_max:
            raise ValueError("empty domain")

    def evaluate(self, p: float) -> tuple[float, float]:
        n, d = self.numerator(p), self.denominator(p)
        if not (math.isfinite(n) and math.isfinite(d)):
            raise EvaluationError(p, (n, d))
        if d <= 0:
            raise ValueError(f"denominator must be positive, got {d} at p={p}")
        return n, d

    def ratio(self, p: float) -> float:
        n, d = self.evaluate(p)
        return n / d


@dataclass
class DinkelbachTrace:
    lambda_sequence: list
    p_star_w: float
    gee_star: float
    iterations: int
    converged: bool
    # the parametric subproblem had several local maxima on the bracketing grid
    multimodal: bool = False


def _grid(p_min: float, p_max: float, n: int) -> np.ndarray:
    if p_min == p_max:
        return np.array([p_min])
    if p_min > 0:
        return np.geomspace(p_min, p_max, n)
    return np.linspace(p_min, p_max, n)


def _golden(f: Callable[[float], float], a: float, b: float, xtol: float) -> tuple[float, float]:
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > xtol * max(1.0, abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _maximize_parametric(prog: RatioProgram, lam: float, n_grid: int, xtol: float):
    def f(p):
        n, d = prog.evaluate(p)
        return n - lam * d

    grid = _grid(prog.p_min, prog.p_max, n_grid)
    vals = np.array([f(p) for p in grid])
    i = int(np.argmax(vals))
    interior = vals[1:-1]
    peaks = int(np.sum((interior >= vals[:-2]) & (interior >= vals[2:]) & ((interior > vals[:-2]) | (interior > vals[2:]))))
    peaks += int(len(vals) > 1 and vals[0] > vals[1]) + int(len(vals) > 1 and vals[-1] > vals[-2])
    if len(grid) == 1:
        return grid[0], vals[0], False
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    x, fx = _golden(f, lo, hi, xtol)
    if fx < vals[i]:
        x, fx = grid[i], vals[i]
    return float(x), float(fx), peaks > 1


def dinkelbach_max(prog: RatioProgram, tol: float = 1e-6, max_iter: int = 50, n_grid: int = 64, xtol: float = 1e-10) -> DinkelbachTrace:
    """Dinkelbach iteration for a ratio with positive denominator.

    Each parametric subproblem ``max_p N(p) - lam D(p)`` is solved on a
    bracketing grid refined by golden-section search. The previous iterate
    stays a candidate, so the ratio sequence cannot decrease.
    """
    p = prog.p_min
    n, d = prog.evaluate(p)
    lam = n / d
    lambdas = [lam]
    converged = False
    multimodal = False
    it = 0
    for it in range(1, max_iter + 1):
        p_new, f_new, mm = _maximize_parametric(prog, lam, n_grid, xtol)
        multimodal |= mm
        n_new, d_new = prog.evaluate(p_new)
        # N(p) - lam D(p) is zero at the previous iterate
        if n_new - lam * d_new < 0:
            p_new, n_new, d_new = p, n, d
        p, n, d = p_new, n_new, d_new
        residual = n - lam * d
        lam = max(lam, n / d)
        lambdas.append(lam)
        if residual < tol * d:
            converged = True
            break
    return DinkelbachTrace(lambdas, float(p), float(n / d), it, converged, multimodal)


@dataclass
class AlternatingResult:
    n_t: int
    n_r: int
    p_t_w: float
    gee: float
    rounds: int
    history: list = field(default_factory=list)


def alternating_gee_max(
    numerator: Callable[[int, int, float], float],
    denominator: Callable[[int, int, float], float],
    nt_grid: Sequence[int],
    nr_grid: Sequence[int],
    p_range: tuple[float, float],
    rel_tol: float = 1e-4,
    max_rounds: int = 10,
    start: tuple[int, int, float] | None = None,
) -> AlternatingResult:
    """Coordinate ascent of ``numerator / denominator`` over ``(n_t, n_r, p)``.

    ``n_t`` and ``n_r`` are swept over their integer grids with the other
    coordinates fixed; the power is then set by :func:`dinkelbach_max`.
    """
    nt_grid, nr_grid = list(nt_grid), list(nr_grid)
    if not nt_grid or not nr_grid:
        raise ValueError("antenna grids must be non-empty")

    def gee(nt, nr, p):
        return numerator(nt, nr, p) / denominator(nt, nr, p)

    nt, nr, p = start if start is not None else (nt_grid[0], nr_grid[0], p_range[1])
    best = gee(nt, nr, p)
    history = [best]
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        prev = best
        nt = max(nt_grid, key=lambda x: (gee(x, nr, p), -nt_grid.index(x)))
        nr = max(nr_grid, key=lambda x: (gee(nt, x, p), -nr_grid.index(x)))
        trace = dinkelbach_max(
            RatioProgram(lambda q: numerator(nt, nr, q), lambda q: denominator(nt, nr, q), *p_range)
        )
        if trace.gee_star >= gee(nt, nr, p):
            p = trace.p_star_w
        best = gee(nt, nr, p)
        history.append(best)
        if best - prev <= rel_tol * abs(prev):
            break
    return AlternatingResult(int(nt), int(nr), float(p), float(best), rounds, history)
