"""Box-restrained Powell direction-set minimisation with Brent line searches.

Every line search is confined to the segment of the line that stays inside the
box, so all iterates (and every point the objective ever sees) are feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

GOLDEN = 0.3819660112501051  # (3 - sqrt(5)) / 2
_TINY = 1e-300


class SearchError(RuntimeError):
    """The objective returned a non-finite value during a line search."""


@dataclass(frozen=True)
class PowellOptions:
    value_tol: float = 1e-9
    max_sweeps: int = 100
    line_tol: float = 1e-8
    # None means 20000 evaluations per 3-coordinate point.
    eval_budget: int | None = None

    def __post_init__(self):
        for name in ("value_tol", "max_sweeps", "line_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PowellOptions.{name} must be positive")
        if self.eval_budget is not None and self.eval_budget <= 0:
            raise ValueError("PowellOptions.eval_budget must be positive")

    def budget_for(self, n: int) -> int:
        if self.eval_budget is not None:
            return self.eval_budget
        return 20000 * max(1, math.ceil(n / 3))


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("BoxBounds needs lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def tiled(cls, lower3, upper3, n_points: int) -> "BoxBounds":
        return cls(np.tile(lower3, n_points), np.tile(upper3, n_points))

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass
class PowellResult:
    x: np.ndarray
    fun: float
    nfev: int
    nsweeps: int
    budget_stopped: bool = False
    sweep_values: list[float] = field(default_factory=list)


def line_bounds(x, direction, bounds: BoxBounds) -> tuple[float, float]:
    """Largest [t_min, t_max] containing 0 with x + t*direction inside ``bounds``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    moving = d != 0
    if not np.any(moving):
        raise ValueError("line_bounds() needs a nonzero direction")
    to_lo = (bounds.lower[moving] - x[moving]) / d[moving]
    to_hi = (bounds.upper[moving] - x[moving]) / d[moving]
    t_min = float(np.max(np.minimum(to_lo, to_hi)))
    t_max = float(np.min(np.maximum(to_lo, to_hi)))
    return min(t_min, 0.0), max(t_max, 0.0)


def brent_min(
    f: Callable[[float], float],
    t_min: float,
    t_max: float,
    tol: float = 1e-8,
    t0: float | None = None,
    f0: float | None = None,
    max_iter: int = 200,
) -> tuple[float, float]:
    """Brent's parabolic/golden-section minimiser on [t_min, t_max].

    The search starts from ``t0`` (default: 0 clipped into the interval), so
    the returned value never exceeds f(t0).
    """
    if not t_min < t_max:
        raise ValueError(f"empty interval [{t_min}, {t_max}]")

    def fval(t):
        y = f(t)
        if not math.isfinite(y):
            raise SearchError(f"objective returned {y} at t={t}")
        return y

    a, b = t_min, t_max
    x = min(max(0.0 if t0 is None else t0, a), b)
    fx = fval(x) if f0 is None else f0
    w = v = x
    fw = fv = fx
    d = e = 0.0
    for _ in range(max_iter):
        xm = 0.5 * (a + b)
        tol1 = tol * (1.0 + abs(x)) / 3.0
        tol2 = 2.0 * tol1
        if abs(x - xm) <= tol2 - 0.5 * (b - a):
            break
        parabolic = False
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            e_old, e = e, d
            if abs(p) < abs(0.5 * q * e_old) and q * (a - x) < p < q * (b - x):
                d = p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if x < xm else -tol1
                parabolic = True
        if not parabolic:
            e = (a - x) if x >= xm else (b - x)
            d = GOLDEN * e
        u = x + (d if abs(d) >= tol1 else math.copysign(tol1, d if d else 1.0))
        u = min(max(u, a), b)
        fu = fval(u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


class _BudgetExhausted(Exception):
    pass


def powell_minimize(
    f: Callable[[np.ndarray], float],
    x0,
    bounds: BoxBounds,
    opts: PowellOptions | None = None,
) -> PowellResult:
    """Minimise ``f`` over ``bounds`` starting from the feasible point ``x0``."""
    opts = opts or PowellOptions()
    x = np.array(x0, dtype=float).reshape(-1)
    n = len(x)
    if n != len(bounds.lower):
        raise ValueError(f"x0 has {n} coordinates, bounds have {len(bounds.lower)}")
    if not bounds.contains(x):
        raise ValueError("powell_minimize() needs a feasible starting point")
    budget = opts.budget_for(n)
    lo, hi = bounds.lower, bounds.upper

    nfev = 0
    best = [x.copy(), math.inf]

    def fcount(y: np.ndarray) -> float:
        nonlocal nfev
        if nfev >= budget:
            raise _BudgetExhausted
        nfev += 1
        val = f(y)
        if val < best[1]:
            best[0], best[1] = y.copy(), val
        return val

    def line_min(x, fx, d):
        d = d / np.linalg.norm(d)
        t_lo, t_hi = line_bounds(x, d, bounds)
        if t_hi - t_lo <= opts.line_tol:
            return x, fx
        t, ft = brent_min(
            lambda t: fcount(np.clip(x + t * d, lo, hi)), t_lo, t_hi, opts.line_tol, 0.0, fx
        )
        if ft < fx:
            return np.clip(x + t * d, lo, hi), ft
        return x, fx

    # Rows of ``dirs`` are unit directions; the last ``n_conj`` were built from
    # sweep displacements and are mutually conjugate on a quadratic. A sweep
    # visits the others first, so its start and end points both minimise over
    # the conjugate span and their difference is conjugate to it as well.
    dirs = np.eye(n)
    n_conj = 0
    sweep_values: list[float] = []
    sweeps = 0
    try:
        fx = fcount(x)
        sweep_values.append(fx)
        for sweeps in range(1, opts.max_sweeps + 1):
            x_start, f_start = x.copy(), fx
            for i in range(n):
                x, fx = line_min(x, fx, dirs[i])
            sweep_values.append(fx)
            if 2.0 * (f_start - fx) <= opts.value_tol * (abs(f_start) + abs(fx)) + _TINY:
                break
            step = x - x_start
            if not np.any(step):
                continue
            if n_conj == n:
                n_conj = 0
            # Drop the free direction carrying the largest share of the step,
            # which keeps the set as far from dependence as possible.
            coef = np.linalg.lstsq(dirs.T, step, rcond=None)[0]
            drop = int(np.argmax(np.abs(coef[: n - n_conj])))
            dirs = np.vstack([np.delete(dirs, drop, axis=0), step / np.linalg.norm(step)])
            n_conj += 1
            x, fx = line_min(x, fx, dirs[-1])
            if np.linalg.svd(dirs, compute_uv=False)[-1] < 1e-8:
                dirs, n_conj = np.eye(n), 0
            sweep_values[-1] = fx
    except _BudgetExhausted:
        return PowellResult(best[0], best[1], nfev, sweeps, True, sweep_values)
    return PowellResult(x, fx, nfev, sweeps, False, sweep_values)
