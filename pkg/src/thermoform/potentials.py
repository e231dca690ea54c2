"""Hölder potentials: Birkhoff sums, range and seminorm estimates, small-variation tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .dynamics import IntervalMap, evaluate
from .errors import InvalidCover

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class Potential:
    """A real observable on [0, 1] with its nominal Hölder exponent."""

    func: Callable[[np.ndarray], np.ndarray]
    alpha: float = 1.0
    label: str = "phi"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("Hölder exponent must lie in (0, 1]")

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = np.broadcast_to(np.asarray(self.func(arr), dtype=float), arr.shape)
        return float(out) if out.ndim == 0 else np.array(out)

    def __add__(self, other: "Potential") -> "Potential":
        return Potential(lambda x: self(x) + other(x), min(self.alpha, other.alpha),
                         f"({self.label})+({other.label})")

    def __sub__(self, other: "Potential") -> "Potential":
        return self + (-1.0) * other

    def __mul__(self, a: float) -> "Potential":
        return Potential(lambda x: a * self(x), self.alpha, f"{a!r}*({self.label})")

    __rmul__ = __mul__

    def __neg__(self) -> "Potential":
        return (-1.0) * self


@dataclass(frozen=True)
class ProductPotential:
    """Potential on the product [0, 1] x [0, 1] (base x fiber)."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    alpha: float = 1.0
    label: str = "phi"

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.broadcast_to(np.asarray(self.func(x, y), dtype=float), np.broadcast(x, y).shape)
        return float(out) if out.ndim == 0 else np.array(out)


# ---------------------------------------------------------------- registry

def constant(value: float = 0.0) -> Potential:
    return Potential(lambda x: np.full(np.shape(x), float(value)), 1.0, f"const({value})")


def cosine(amplitude: float = 1.0, frequency: int = 1, phase: float = 0.0) -> Potential:
    return Potential(lambda x: amplitude * np.cos(2.0 * np.pi * frequency * np.asarray(x) + phase),
                     1.0, f"{amplitude}*cos(2pi*{frequency}x+{phase})")


def linear(slope: float = 1.0, offset: float = 0.0) -> Potential:
    return Potential(lambda x: offset + slope * np.asarray(x), 1.0, f"{offset}+{slope}x")


def dyadic(values) -> Potential:
    """Piecewise constant on the 2^m dyadic cells of depth m = log2(len(values))."""
    vals = np.asarray(values, dtype=float)
    m = int(round(math.log2(len(vals))))
    if 2 ** m != len(vals):
        raise ValueError("need 2^m values")

    def f(x):
        idx = np.clip(np.floor(np.asarray(x) * 2 ** m).astype(int), 0, 2 ** m - 1)
        return vals[idx]

    return Potential(f, 1.0, f"dyadic{vals.tolist()}")


def halves(a: float, b: float) -> Potential:
    return dyadic([a, b])


POTENTIAL_PRESETS: dict[str, Callable[..., Potential]] = {
    "constant": constant,
    "cosine": cosine,
    "linear": linear,
    "dyadic": dyadic,
}


def make_potential(name: str, **params) -> Potential:
    try:
        factory = POTENTIAL_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; known: {sorted(POTENTIAL_PRESETS)}") from None
    return factory(**params)


# ---------------------------------------------------------------- operations

def birkhoff_sum(fmap: IntervalMap, phi: Potential, x, n: int):
    """S_n phi(x) = sum_{j<n} phi(f^j x), accumulated left to right."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cur = np.asarray(x, dtype=float)
    total = np.zeros(cur.shape)
    for j in range(n):
        total = total + phi(cur)
        if j < n - 1:
            cur = evaluate(fmap, cur)
            cur = np.asarray(cur, dtype=float)
    return float(total) if total.ndim == 0 else total


def sup_inf_estimate(phi: Potential, resolution: int = 1001) -> tuple[float, float]:
    """Grid (min, max) of phi over ``resolution`` equispaced points of [0, 1].

    This is an estimate; the true range lies within ``holder_bracket``.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    vals = phi(np.linspace(0.0, 1.0, resolution))
    return float(np.min(vals)), float(np.max(vals))


def _distance(x, y, metric: str):
    d = np.abs(x - y)
    if metric == "circle":
        d = np.minimum(d, 1.0 - d)
    return d


def holder_seminorm_estimate(phi: Potential, alpha: float | None = None, pairs: int = 10_000,
                             metric: str = "interval", grid: int = 512, local: float = 0.1) -> float:
    """Lower bound for |phi|_alpha from a fixed deterministic pair set.

    Pairs are all grid pairs closer than ``local`` plus ``pairs`` Halton
    pairs spread over the square.
    """
    alpha = phi.alpha if alpha is None else alpha
    if not 0.0 < alpha <= 1.0 or pairs < 1:
        raise ValueError("need alpha in (0, 1] and pairs >= 1")
    g = np.linspace(0.0, 1.0, grid + 1)
    vals = phi(g)
    best = 0.0
    width = max(1, int(math.ceil(local * grid)))
    for s in range(1, width + 1):
        d = _distance(g[s:], g[:-s], metric)
        ok = d > 0
        r = np.abs(vals[s:] - vals[:-s])[ok] / d[ok] ** alpha
        if r.size:
            best = max(best, float(r.max()))
    pts = qmc.Halton(d=2, scramble=False).random(pairs + 1)[1:]
    x, y = pts[:, 0], pts[:, 1]
    d = _distance(x, y, metric)
    ok = d > 0
    r = np.abs(phi(x) - phi(y))[ok] / d[ok] ** alpha
    if r.size:
        best = max(best, float(r.max()))
    return best


def holder_bracket(phi: Potential, resolution: int = 1001, seminorm: float | None = None) -> tuple[float, float]:
    """Grid range widened by the Hölder modulus |phi|_a h^a (h = grid spacing)."""
    lo, hi = sup_inf_estimate(phi, resolution)
    s = holder_seminorm_estimate(phi) if seminorm is None else seminorm
    pad = s * (1.0 / (resolution - 1)) ** phi.alpha
    return lo - pad, hi + pad


def small_variation_check(phi: Potential, deg: int, q: int, resolution: int = 1001) -> tuple[bool, float]:
    """Strict test sup phi - inf phi < log deg - log q; returns (passes, margin)."""
    if not 1 <= q < deg:
        raise InvalidCover(f"need 1 <= q < deg, got q={q}, deg={deg}")
    lo, hi = sup_inf_estimate(phi, resolution)
    margin = (math.log(deg) - math.log(q)) - (hi - lo)
    return margin > 0, margin


def horseshoe_small_variation(phi: Potential, resolution: int = 1001) -> tuple[bool, float]:
    """Horseshoe variant of the small-variation test with threshold log(golden ratio)/2."""
    lo, hi = sup_inf_estimate(phi, resolution)
    margin = 0.5 * math.log(GOLDEN_RATIO) - (hi - lo)
    return margin > 0, margin
