"""Skew products F(x, y) = (f(x), g(x, y)) with uniformly contracting fibers over an interval map.

The fiber space is [0, 1] with the Euclidean metric, optionally split into
pieces that g preserves, each with its own fixed fiber point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .dynamics import IntervalMap, doubling, evaluate
from .errors import ConfigError, FiberDependence, NonPrimitiveWarning
from .potentials import Potential, ProductPotential
from .transfer_operator import _branch_segments, power_iterate, solve

FiberMap = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SkewSystem:
    """Base map, fiber map g(x, y), contraction rate and fixed fiber point(s).

    ``pieces`` lists (lo, hi, fixed point) for a fiber split into invariant
    pieces; by default N = [0, 1] with the single fixed point ``y0``.
    """

    base: IntervalMap
    fiber: FiberMap
    lambda_c: float
    y0: float = 0.0
    pieces: tuple = ()
    require_fixed_fiber: bool = True
    name: str = "skew"
    probes: int = 64

    def __post_init__(self):
        if not 0.0 < self.lambda_c < 1.0:
            raise ConfigError("lambda_c must lie in (0, 1)")
        pieces = tuple(tuple(float(v) for v in p) for p in self.pieces) or ((0.0, 1.0, float(self.y0)),)
        object.__setattr__(self, "pieces", pieces)
        xs = (np.arange(self.probes) + 0.5) / self.probes
        for lo, hi, fixed in pieces:
            ys = lo + (hi - lo) * np.linspace(0.0, 1.0, 17)
            if hi < 1.0:
                ys = ys[:-1]
            X, Y1, Y2 = np.meshgrid(xs, ys, ys, indexing="ij")
            off = Y1 != Y2
            g1 = np.asarray(self.fiber(X[off], Y1[off]))
            g2 = np.asarray(self.fiber(X[off], Y2[off]))
            rate = float(np.max(np.abs(g1 - g2) / np.abs(Y1[off] - Y2[off])))
            if rate > self.lambda_c * (1.0 + 1e-9):
                raise ConfigError(f"fiber contraction {rate:.6g} exceeds declared lambda_c={self.lambda_c}")
            drift = float(np.max(np.abs(np.asarray(self.fiber(xs, np.full_like(xs, fixed))) - fixed)))
            if drift > 1e-12 and self.require_fixed_fiber:
                raise ConfigError(f"g(x, {fixed}) moves by {drift:.3g}; no common fixed fiber point")

    def fixed_point(self, y) -> np.ndarray:
        """Fixed fiber point of the piece containing each y."""
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, self.pieces[0][2])
        for lo, hi, fixed in self.pieces[1:]:
            out = np.where((y >= lo) & (y <= hi), fixed, out)
        return out


def evaluate_skew(sys: SkewSystem, p):
    x, y = np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)
    nx = np.asarray(evaluate(sys.base, x), dtype=float)
    ny = np.asarray(sys.fiber(x, y), dtype=float)
    if nx.ndim == 0:
        return float(nx), float(ny)
    return nx, ny


# ---------------------------------------------------------------- cohomology

@dataclass(frozen=True)
class CohomologyData:
    J: int
    tail_bound: float


def fiber_holder_constant(phi: ProductPotential, theta: float | None = None, grid: int = 64) -> float:
    """Grid estimate of sup |phi(x, y) - phi(x, y')| / |y - y'|^theta."""
    theta = phi.alpha if theta is None else theta
    xs = (np.arange(grid) + 0.5) / grid
    ys = np.linspace(0.0, 1.0, grid + 1)
    vals = phi(xs[:, None], ys[None, :])
    best = 0.0
    for s in range(1, grid + 1):
        r = np.abs(vals[:, s:] - vals[:, :-s]) / (s / grid) ** theta
        best = max(best, float(r.max()))
    return best


def tail_bound(C: float, lambda_c: float, theta: float, J: int) -> float:
    r = lambda_c ** theta
    return C * r ** J / (1.0 - r)


def default_depth(C: float, lambda_c: float, theta: float, target: float = 1e-8) -> int:
    """Smallest J with tail_bound(J) <= target."""
    if C <= 0.0:
        return 1
    r = lambda_c ** theta
    return max(1, int(math.ceil(math.log(target * (1.0 - r) / C) / (theta * math.log(lambda_c)))))


def u_truncated(sys: SkewSystem, phi: ProductPotential, p, J: int | None = None, C: float | None = None):
    """Partial sum u_J = sum_{j<J} phi(F^j(x, y)) - phi(F^j(x, y0)) and its tail bound."""
    C = fiber_holder_constant(phi) if C is None else C
    J = default_depth(C, sys.lambda_c, phi.alpha) if J is None else J
    if J < 1:
        raise ValueError("J must be >= 1")
    x = np.asarray(p[0], dtype=float)
    y = np.asarray(p[1], dtype=float)
    y_ref = sys.fixed_point(y)
    total = np.zeros(np.broadcast(x, y).shape)
    for j in range(J):
        total = total + (phi(x, y) - phi(x, y_ref))
        if j < J - 1:
            x, y = np.asarray(evaluate(sys.base, x), dtype=float), np.asarray(sys.fiber(x, y), dtype=float)
    value = float(total) if total.ndim == 0 else total
    return value, CohomologyData(J, tail_bound(C, sys.lambda_c, phi.alpha, J))


def bar_phi(phi: ProductPotential, sys: SkewSystem) -> ProductPotential:
    """(x, y) -> phi(x, y0), with y0 the fixed point of y's piece."""
    return ProductPotential(lambda x, y: phi(x, sys.fixed_point(np.broadcast_to(y, np.broadcast(x, y).shape))),
                            phi.alpha, f"bar({phi.label})")


def induced_base_potential(barphi: ProductPotential, z: float = 0.0, z_check: float = 1.0,
                           probes: int = 1000, atol: float = 1e-12) -> Potential:
    """x -> barphi(x, z), after checking that a second fiber point gives the same values."""
    xs = (np.arange(probes) + 0.5) / probes
    gap = float(np.max(np.abs(barphi(xs, z) - barphi(xs, z_check))))
    if gap > atol:
        raise FiberDependence(f"potential depends on the fiber: gap {gap:.3g} between y={z} and y={z_check}")
    return Potential(lambda x: barphi(x, z), barphi.alpha, f"{barphi.label}|y={z}")


def homology_residual(sys: SkewSystem, phi: ProductPotential, points: np.ndarray, J: int | None = None):
    """max |phi - u_J + u_J o F - bar_phi| over the points, with the tail bound."""
    x, y = points[:, 0], points[:, 1]
    C = fiber_holder_constant(phi)
    u0, data = u_truncated(sys, phi, (x, y), J, C)
    u1, _ = u_truncated(sys, phi, evaluate_skew(sys, (x, y)), data.J, C)
    res = phi(x, y) - u0 + u1 - bar_phi(phi, sys)(x, y)
    return float(np.max(np.abs(res))), data


# ---------------------------------------------------------------- lifting

def sample_pasts(fmap: IntervalMap, x: np.ndarray, depth: int, rng: np.random.Generator,
                 weight: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Backward itineraries: row i holds x_{-1}, ..., x_{-depth} ending at x[i].

    Preimages are drawn with probabilities proportional to ``weight``
    (uniform over branches by default).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, depth))
    cur = x.copy()
    for d in range(depth):
        cands = np.stack([np.asarray(br.invert(cur), dtype=float) for br in fmap.branches], axis=1)
        w = np.ones(cands.shape) if weight is None else np.maximum(weight(cands.ravel()).reshape(cands.shape), 0.0)
        cdf = np.cumsum(w, axis=1)
        pick = (rng.random(x.size)[:, None] * cdf[:, -1:] >= cdf).sum(axis=1)
        cur = cands[np.arange(x.size), np.minimum(pick, cands.shape[1] - 1)]
        out[:, d] = cur
    return out


def lift_along(sys: SkewSystem, x: np.ndarray, pasts: np.ndarray, start=None) -> np.ndarray:
    """Fiber coordinate over x after running g along the past from ``start`` (default the fixed point)."""
    y = np.full(pasts.shape[0], sys.pieces[0][2]) if start is None else np.broadcast_to(start, pasts.shape[:1]).copy()
    for d in range(pasts.shape[1] - 1, -1, -1):
        y = np.asarray(sys.fiber(pasts[:, d], y), dtype=float)
    return np.column_stack([np.asarray(x, dtype=float), y])


def lift_measure(sys: SkewSystem, base_samples, burn_in: int, seed: int = 0,
                 weight: Callable[[np.ndarray], np.ndarray] | None = None, return_pasts: bool = False):
    """Lift base samples to (x, y) samples near the fiber attractor.

    Each x gets a past itinerary of length ``burn_in``; the fiber point is
    the image of the fixed fiber point along that past, accurate to
    lambda_c**burn_in.  The x coordinates are returned unchanged.
    """
    if burn_in < 1:
        raise ValueError("burn_in must be >= 1")
    x = np.asarray(base_samples, dtype=float).ravel()
    pasts = sample_pasts(sys.base, x, burn_in, np.random.default_rng(seed), weight)
    pts = lift_along(sys, x, pasts)
    return (pts, pasts) if return_pasts else pts


# ---------------------------------------------------------------- 2-D Ulam

def _overlap(u: np.ndarray, v: np.ndarray, m: int):
    """Split intervals [u, v] over the m-cell grid: (parent, cell, fraction of the interval)."""
    length = v - u
    point = length <= 1e-15
    first = np.clip(np.floor(u * m).astype(int), 0, m - 1)
    last = np.where(point, first, np.clip(np.ceil(v * m).astype(int) - 1, 0, m - 1))
    counts = last - first + 1
    parent = np.repeat(np.arange(u.size), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    cell = first[parent] + offs
    lo = np.maximum(u[parent], cell / m)
    hi = np.minimum(v[parent], (cell + 1) / m)
    frac = np.where(point[parent], 1.0, np.clip(hi - lo, 0.0, None) / np.where(point, 1.0, length)[parent])
    keep = frac > 0
    return parent[keep], cell[keep], frac[keep]


def build_skew_ulam(sys: SkewSystem, phi: ProductPotential, k: int, k_f: int | None = None,
                    quadrature: int = 4) -> sp.csr_matrix:
    """Weighted matrix on k x k_f product cells.

    Base pieces are those of the 1-D operator.  A source fiber cell is
    pushed forward by g at the piece's preimage midpoint and split over
    target fiber cells by overlap, so fiber-independent potentials give
    exactly the base spectral radius.
    """
    k_f = int(math.ceil(math.sqrt(k))) if k_f is None else k_f
    if k < 2 or k_f < 1:
        raise ValueError("need k >= 2 and k_f >= 1")
    q = (np.arange(quadrature) + 0.5) / quadrature
    fy_lo = np.arange(k_f) / k_f
    fy_nodes = (np.arange(k_f)[:, None] + q[None, :]) / k_f
    rows, cols, vals = [], [], []
    for br in sys.base.branches:
        s, t = _branch_segments(br, k)
        if s.size == 0:
            continue
        mid = 0.5 * (s + t)
        i = np.clip(np.floor(mid * k).astype(int), 0, k - 1)
        xm = np.asarray(br.invert(mid), dtype=float)
        j = np.clip(np.floor(xm * k).astype(int), 0, k - 1)
        xn = np.asarray(br.invert((s[:, None] + (t - s)[:, None] * q[None, :]).ravel())).reshape(s.size, -1)
        # phi averaged over base nodes x fiber nodes: shape (pieces, k_f)
        pv = np.exp(phi(xn[:, None, :, None], fy_nodes[None, :, None, :])).mean(axis=(2, 3))
        w = k * (t - s)[:, None] * pv
        X = np.repeat(xm, k_f)
        u = np.asarray(sys.fiber(X, np.tile(fy_lo, s.size)), dtype=float)
        v = np.asarray(sys.fiber(X, np.tile(fy_lo + 1.0 / k_f, s.size)), dtype=float)
        u, v = np.minimum(u, v), np.maximum(u, v)
        par, cell, frac = _overlap(u, v, k_f)
        piece, b = np.divmod(par, k_f)
        rows.append(i[piece] * k_f + cell)
        cols.append(j[piece] * k_f + b)
        vals.append(w[piece, b] * frac)
    n = k * k_f
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    M.sum_duplicates()
    return M


def skew_pressure(sys: SkewSystem, phi: ProductPotential, k: int, k_f: int | None = None, tol: float = 1e-12) -> float:
    M = build_skew_ulam(sys, phi, k, k_f)
    with warnings.catch_warnings():
        # the fiber attractor makes the product matrix reducible by design
        warnings.simplefilter("ignore", NonPrimitiveWarning)
        return power_iterate(M, tol=tol).pressure


@dataclass
class SkewReport:
    P_base: float
    P_skew: float
    diff: float
    homology_residual_max: float
    tail_bound: float
    burn_in: int
    integral_gap: float
    J: int
    k: int
    k_f: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"P_base": self.P_base, "P_skew": self.P_skew, "diff": self.diff,
                "homology_residual_max": self.homology_residual_max, "tail_bound": self.tail_bound,
                "burn_in": self.burn_in, "integral_gap": self.integral_gap, "J": self.J,
                "k": self.k, "k_f": self.k_f, **self.extra}


def equilibrium_samples(fmap: IntervalMap, sol, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points drawn from the cell weights mu, uniform inside each cell."""
    k = sol.mu.size
    cells = rng.choice(k, size=n, p=sol.mu / sol.mu.sum())
    return (cells + rng.random(n)) / k


def skew_pressure_check(sys: SkewSystem, phi: ProductPotential, k: int, k_f: int | None = None,
                        burn_in: int = 40, samples: int = 1000, seed: int = 0, tol: float = 1e-12) -> SkewReport:
    k_f = int(math.ceil(math.sqrt(k))) if k_f is None else k_f
    bp = bar_phi(phi, sys)
    # one base problem per fiber piece; the skew pressure is the largest of them
    per_piece = []
    for lo, hi, fixed in sys.pieces:
        base_phi = induced_base_potential(bp, fixed, 0.5 * (lo + hi))
        per_piece.append((solve(sys.base, base_phi, k, tol=tol)[1], base_phi))
    top = max(range(len(per_piece)), key=lambda i: per_piece[i][0].pressure)
    sol, base_phi = per_piece[top]
    p_skew = skew_pressure(sys, phi, k, k_f, tol)
    rng = np.random.default_rng(seed)
    probes = rng.random((samples, 2))
    resid, data = homology_residual(sys, phi, probes)

    def weight(z):
        # conditional preimage law of the equilibrium state: e^phi h
        idx = np.clip(np.floor(z * k).astype(int), 0, k - 1)
        return np.exp(base_phi(z)) * sol.h[idx]

    xs = equilibrium_samples(sys.base, sol, samples, rng)
    pasts = sample_pasts(sys.base, xs, burn_in, np.random.default_rng(seed + 1), weight)
    lifted = lift_along(sys, xs, pasts, start=sys.pieces[top][2])
    gap = abs(float(np.mean(phi(lifted[:, 0], lifted[:, 1]) - bp(lifted[:, 0], lifted[:, 1]))))
    extra = {"P_base_pieces": [s_.pressure for s_, _ in per_piece]} if len(per_piece) > 1 else {}
    return SkewReport(sol.pressure, p_skew, abs(p_skew - sol.pressure), resid, data.tail_bound, burn_in,
                      gap, data.J, k, k_f, extra)


# ---------------------------------------------------------------- presets

def linear_fiber(lambda_c: float = 0.3, base: IntervalMap | None = None) -> SkewSystem:
    """g(x, y) = lambda_c * y over the doubling map (attractor: the zero section)."""
    return SkewSystem(base or doubling(), lambda x, y: lambda_c * np.asarray(y, dtype=float) + 0.0 * np.asarray(x),
                      lambda_c, 0.0, name="linear_fiber")


def two_piece_fiber(lambda_c: float = 0.3, wobble: float = 0.05, base: IntervalMap | None = None) -> SkewSystem:
    """Fiber [0, 1/2) u [1/2, 1] with fixed points 0 and 1; g wobbles with x away from them."""
    if wobble > lambda_c / 2.0:
        raise ConfigError("wobble must not exceed lambda_c / 2 to keep the contraction")

    def g(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        bump = wobble * np.sin(2.0 * np.pi * x) ** 2
        low = (lambda_c - bump) * y
        high = 1.0 - (lambda_c - bump) * (1.0 - y)
        return np.where(y < 0.5, low, high)

    return SkewSystem(base or doubling(), g, lambda_c, 0.0, ((0.0, 0.5, 0.0), (0.5, 1.0, 1.0)),
                      name="two_piece_fiber")


SKEW_PRESETS = {"linear_fiber": linear_fiber, "two_piece_fiber": two_piece_fiber}


def make_skew(name: str, **params) -> SkewSystem:
    if name not in SKEW_PRESETS:
        raise ConfigError(f"unknown skew preset {name!r}; known: {sorted(SKEW_PRESETS)}")
    return SKEW_PRESETS[name](**params)


def cos_plus_y(amplitude: float = 0.2, fiber_weight: float = 0.2) -> ProductPotential:
    """phi(x, y) = amplitude cos(2 pi x) + fiber_weight y."""
    return ProductPotential(lambda x, y: amplitude * np.cos(2.0 * np.pi * np.asarray(x)) + fiber_weight * np.asarray(y),
                            1.0, f"{amplitude}cos(2pi x)+{fiber_weight}y")


PRODUCT_POTENTIAL_PRESETS = {"cos_plus_y": cos_plus_y}
