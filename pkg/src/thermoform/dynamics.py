"""Piecewise-smooth expanding maps of the interval/circle.

A map is an ordered tuple of monotone C^1 branches whose domains tile
[0, 1].  Points on a shared endpoint are evaluated with the branch lying
to their left, so orbits are deterministic.  Branches without a closed
form inverse are inverted with a bracketed Newton iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BranchBoundary, RootNotConverged

ArrayFn = Callable[[np.ndarray], np.ndarray]

ROOT_TOL = 1e-13
ROOT_MAX_ITER = 100


def _bracketed_newton(fun: ArrayFn, dfun: ArrayFn, target: np.ndarray, lo: float, hi: float,
                      increasing: bool, tol: float = ROOT_TOL, max_iter: int = ROOT_MAX_ITER) -> np.ndarray:
    """Solve fun(y) = target on [lo, hi] for every entry of ``target``.

    Newton steps that leave the current bracket are replaced by bisection.
    """
    target = np.asarray(target, dtype=float)
    sign = 1.0 if increasing else -1.0
    a = np.full(target.shape, lo, dtype=float)
    b = np.full(target.shape, hi, dtype=float)
    f_lo, f_hi = float(fun(np.array(lo))), float(fun(np.array(hi)))
    span = f_hi - f_lo
    # secant guess from the branch end values
    y = lo + (target - f_lo) / span * (hi - lo) if span != 0 else 0.5 * (a + b)
    y = np.clip(y, lo, hi)
    done = np.zeros(target.shape, dtype=bool)
    for _ in range(max_iter):
        r = fun(y) - target
        done |= np.abs(r) <= tol
        if done.all():
            return y
        # g(y) = sign * r is increasing in y
        below = sign * r < 0
        a = np.where(below & ~done, y, a)
        b = np.where(~below & ~done, y, b)
        d = dfun(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            y_new = y - r / d
        bad = ~np.isfinite(y_new) | (y_new <= a) | (y_new >= b)
        y_new = np.where(bad, 0.5 * (a + b), y_new)
        step = np.abs(y_new - y)
        y = np.where(done, y, y_new)
        done |= (step <= tol) | (b - a <= tol)
    r = np.abs(fun(y) - target)
    if not (done | (r <= 10 * tol)).all():
        raise RootNotConverged(f"inverse branch failed: max residual {float(np.max(r)):.3e}")
    return y


@dataclass(frozen=True)
class Branch:
    """One monotone piece ``forward: [lo, hi] -> image``."""

    lo: float
    hi: float
    forward: ArrayFn
    derivative: ArrayFn
    inverse: Optional[ArrayFn] = None

    @property
    def increasing(self) -> bool:
        return float(self.forward(np.array(self.hi))) > float(self.forward(np.array(self.lo)))

    @property
    def image(self) -> tuple[float, float]:
        u, v = float(self.forward(np.array(self.lo))), float(self.forward(np.array(self.hi)))
        return (min(u, v), max(u, v))

    def invert(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.inverse is not None:
            return np.clip(self.inverse(x), self.lo, self.hi)
        return _bracketed_newton(self.forward, self.derivative, x, self.lo, self.hi, self.increasing)


@dataclass(frozen=True)
class IntervalMap:
    branches: tuple[Branch, ...]
    metric: str = "circle"
    name: str = "map"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric not in ("circle", "interval"):
            raise ValueError(f"unknown metric {self.metric!r}")
        ends = [self.branches[0].lo] + [b.hi for b in self.branches]
        if ends[0] != 0.0 or ends[-1] != 1.0 or any(b.lo != e for b, e in zip(self.branches, ends)):
            raise ValueError("branch domains must tile [0, 1] in order")

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([self.branches[0].lo] + [b.hi for b in self.branches])

    @property
    def is_full_branch(self) -> bool:
        return all(abs(b.image[0]) < 1e-12 and abs(b.image[1] - 1.0) < 1e-12 for b in self.branches)

    @property
    def degree(self) -> int:
        return len(self.branches)

    def branch_index(self, x) -> np.ndarray:
        """Index of the branch used at ``x`` (shared endpoints go left)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints[1:], x, side="left")
        return np.clip(idx, 0, self.degree - 1)

    def __call__(self, x):
        return evaluate(self, x)

    def distance(self, x, y):
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        if self.metric == "circle":
            d = np.mod(d, 1.0)
            d = np.minimum(d, 1.0 - d)
        return d

    # lift of a full-branch increasing circle map: F(x + 1) = F(x) + degree
    def lift(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = np.floor(x)
        r = x - m
        idx = self.branch_index(r)
        out = np.empty_like(r)
        for i, br in enumerate(self.branches):
            sel = idx == i
            if np.any(sel):
                out[sel] = br.forward(r[sel]) + i
        return out + m * self.degree

    def lift_inverse(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        d = self.degree
        m = np.floor(X / d)
        r = X - m * d
        idx = np.clip(np.floor(r).astype(int), 0, d - 1)
        out = np.empty_like(r)
        for i, br in enumerate(self.branches):
            sel = idx == i
            if np.any(sel):
                out[sel] = br.invert(np.clip(r[sel] - i, 0.0, 1.0))
        return out + m

    def check_liftable(self):
        if not (self.is_full_branch and all(b.increasing for b in self.branches)):
            raise ValueError(f"{self.name}: dynamic-ball geometry needs full increasing branches")


def evaluate(fmap: IntervalMap, x):
    """f(x); circle maps wrap values falling outside [0, 1]."""
    arr = np.asarray(x, dtype=float)
    idx = fmap.branch_index(arr)
    out = np.empty_like(arr)
    for i, br in enumerate(fmap.branches):
        sel = idx == i
        if np.any(sel):
            out[sel] = br.forward(arr[sel])
    if fmap.metric == "circle":
        outside = (out < 0.0) | (out > 1.0)
        out = np.where(outside, np.mod(out, 1.0), out)
    else:
        out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(x) == 0 else out


def inverse_branches(fmap: IntervalMap, x: float) -> list[tuple[int, float]]:
    """All preimages of ``x`` as (branch index, point) pairs."""
    out = []
    for i, br in enumerate(fmap.branches):
        lo, hi = br.image
        if lo <= x <= hi:
            out.append((i, float(br.invert(np.array(x)))))
    return out


def _one_sided_derivatives(fmap: IntervalMap, x: np.ndarray):
    idx = fmap.branch_index(x)
    left = np.empty_like(x)
    for i, br in enumerate(fmap.branches):
        sel = idx == i
        if np.any(sel):
            left[sel] = br.derivative(x[sel])
    return idx, left


def log_inv_derivative(fmap: IntervalMap, x):
    """log ||Df(x)^{-1}|| = -log|f'(x)|.

    Raises BranchBoundary on a partition point whose one-sided derivatives
    disagree (for circle maps 0 and 1 are the same point).
    """
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    idx, d = _one_sided_derivatives(fmap, arr)
    bp = fmap.breakpoints
    on_bp = np.isin(arr, bp[1:-1])
    if fmap.metric == "circle":
        on_bp |= (arr == 0.0) | (arr == 1.0)
    if np.any(on_bp):
        for xv, i in zip(arr[on_bp], idx[on_bp]):
            if xv in (0.0, 1.0):
                dl = fmap.branches[-1].derivative(np.array(1.0))
                dr = fmap.branches[0].derivative(np.array(0.0))
            else:
                dl = fmap.branches[i].derivative(np.array(xv))
                dr = fmap.branches[i + 1].derivative(np.array(xv))
            if not math.isclose(abs(float(dl)), abs(float(dr)), rel_tol=1e-12):
                raise BranchBoundary(f"derivative is two-valued at x={xv}")
    out = -np.log(np.abs(d))
    return float(out[0]) if np.ndim(x) == 0 else out


def log_inv_derivative_unchecked(fmap: IntervalMap, x) -> np.ndarray:
    """Vectorized variant used along orbits; endpoints take the left branch."""
    _, d = _one_sided_derivatives(fmap, np.asarray(x, dtype=float))
    return -np.log(np.abs(d))


def orbit(fmap: IntervalMap, x, n: int) -> np.ndarray:
    """(x, f(x), ..., f^{n-1}(x)); ``x`` may be an array of start points."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x0 = np.asarray(x, dtype=float)
    out = np.empty((n,) + x0.shape)
    out[0] = x0
    for j in range(1, n):
        out[j] = evaluate(fmap, out[j - 1])
    return out


# ---------------------------------------------------------------- presets

def _affine_branch(lo: float, hi: float) -> Branch:
    s = 1.0 / (hi - lo)
    return Branch(lo, hi,
                  forward=lambda x, lo=lo, s=s: (x - lo) * s,
                  derivative=lambda x, s=s: np.full(np.shape(x), s),
                  inverse=lambda y, lo=lo, s=s: lo + y / s)


def linear_full(lengths) -> IntervalMap:
    """Full-branch piecewise-linear circle map with given branch lengths."""
    lengths = np.asarray(lengths, dtype=float)
    if np.any(lengths <= 0) or not math.isclose(lengths.sum(), 1.0, rel_tol=1e-12):
        raise ValueError("branch lengths must be positive and sum to 1")
    ends = np.concatenate([[0.0], np.cumsum(lengths)])
    ends[-1] = 1.0
    branches = tuple(_affine_branch(float(ends[i]), float(ends[i + 1])) for i in range(len(lengths)))
    return IntervalMap(branches, "circle", "linear", {"lengths": lengths.tolist()})


def doubling() -> IntervalMap:
    m = linear_full([0.5, 0.5])
    return IntervalMap(m.branches, "circle", "doubling", {})


def linear(degree: int = 3) -> IntervalMap:
    m = linear_full([1.0 / degree] * degree)
    return IntervalMap(m.branches, "circle", "linear", {"degree": degree})


def abv_linear(degree: int = 3, slow_slope: float = 1.25) -> IntervalMap:
    """Degree-d linear map with one slow branch of slope ``slow_slope``.

    The remaining branches share the leftover length equally.
    """
    if degree < 2 or slow_slope <= 1.0:
        raise ValueError("need degree >= 2 and slow_slope > 1")
    slow = 1.0 / slow_slope
    rest = (1.0 - slow) / (degree - 1)
    m = linear_full([slow] + [rest] * (degree - 1))
    return IntervalMap(m.branches, "circle", "abv_linear", {"degree": degree, "slow_slope": slow_slope})


def intermittent(alpha: float = 0.5) -> IntervalMap:
    """Circle map x(1 + 2^a x^a) / x - 2^a (1 - x)^(1 + a) with a neutral fixed point at 0."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    c = 2.0 ** alpha
    left = Branch(0.0, 0.5,
                  forward=lambda x: x * (1.0 + c * np.power(x, alpha)),
                  derivative=lambda x: 1.0 + (1.0 + alpha) * c * np.power(x, alpha))
    right = Branch(0.5, 1.0,
                   forward=lambda x: x - c * np.power(1.0 - x, 1.0 + alpha),
                   derivative=lambda x: 1.0 + (1.0 + alpha) * c * np.power(1.0 - x, alpha))
    return IntervalMap((left, right), "circle", "intermittent", {"alpha": alpha})


MAP_PRESETS: dict[str, Callable[..., IntervalMap]] = {
    "doubling": doubling,
    "linear": linear,
    "abv_linear": abv_linear,
    "intermittent": intermittent,
}


def make_map(name: str, **params) -> IntervalMap:
    try:
        factory = MAP_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown map preset {name!r}; known: {sorted(MAP_PRESETS)}") from None
    return factory(**params)


def abv_regions(fmap: IntervalMap, delta: float, sigma: float, resolution: int = 4096):
    """Grid classification for the conditions ||Df^-1|| <= 1 + delta and <= sigma.

    Returns (grid, h1_mask, h2_mask); points are cell midpoints so no grid
    point sits on a partition endpoint.
    """
    grid = (np.arange(resolution) + 0.5) / resolution
    a = log_inv_derivative_unchecked(fmap, grid)
    return grid, a <= math.log1p(delta), a <= math.log(sigma)


def abv_check(fmap: IntervalMap, delta: float, sigma: float, resolution: int = 4096) -> dict:
    """Check (H1)-(H3) with A = points failing the sigma bound.

    q counts the branches (domains of injectivity) that meet A.
    """
    grid, h1, h2 = abv_regions(fmap, delta, sigma, resolution)
    region_a = ~h2
    q = int(np.unique(fmap.branch_index(grid[region_a])).size)
    return {
        "h1": bool(np.all(h1[region_a])),
        "h2": True,  # holds off A by construction of A
        "h3": q < fmap.degree,
        "q": q,
        "ok": bool(np.all(h1[region_a])) and q < fmap.degree,
    }


# ---------------------------------------------------------------- horseshoe

def _horseshoe_fy(y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        inv = np.where(y > 0, 1.0 / np.where(y > 0, y, 1.0), np.inf)
    out = 1.0 / (1.0 - (1.0 - inv) * math.exp(-1.0))
    return np.where(y > 0, out, 0.0)


@dataclass(frozen=True)
class HorseshoePreset:
    """Partially hyperbolic horseshoe on the unit cube, sub-cubes R0 (z <= 1/6) and R1 (z >= 5/6)."""

    rho: float = 0.25
    beta: float = 7.0
    beta1: float = 3.5
    sigma: float = 0.25

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0 / 3.0 and self.beta > 6.0 and 3.0 < self.beta1 < 4.0
                and 0.0 < self.sigma < 1.0 / 3.0):
            raise ValueError(
                f"horseshoe parameters out of range: rho={self.rho}, beta={self.beta}, "
                f"beta1={self.beta1}, sigma={self.sigma}")

    @staticmethod
    def fiber_map(y):
        return _horseshoe_fy(y)

    def F0(self, x, y, z):
        return self.rho * x, _horseshoe_fy(y), self.beta * z

    def F1(self, x, y, z):
        return 0.75 - self.rho * x, self.sigma * (1.0 - y), self.beta1 * (z - 5.0 / 6.0)

    def __call__(self, p):
        """Image of p = (x, y, z); NaN outside R0 u R1 (those points leave the cube)."""
        x, y, z = (np.asarray(c, dtype=float) for c in p)
        in0 = z <= 1.0 / 6.0
        in1 = z >= 5.0 / 6.0
        a0, b0, c0 = self.F0(x, y, z)
        a1, b1, c1 = self.F1(x, y, z)
        nan = np.nan
        return (np.where(in0, a0, np.where(in1, a1, nan)),
                np.where(in0, b0, np.where(in1, b1, nan)),
                np.where(in0, c0, np.where(in1, c1, nan)))

    def orbit(self, p, n: int) -> np.ndarray:
        """Forward orbit as an (n, 3) array; rows after escape are NaN."""
        out = np.full((n, 3), np.nan)
        cur = tuple(float(c) for c in p)
        for j in range(n):
            out[j] = cur
            if any(math.isnan(c) for c in cur):
                break
            nxt = self(cur)
            cur = tuple(float(c) for c in nxt)
            inside = all(0.0 <= c <= 1.0 for c in cur)
            if not inside:
                cur = (math.nan, math.nan, math.nan)
        return out
