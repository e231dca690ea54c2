"""Hyperbolic times along orbits, expansion-rate estimates and dynamic-ball geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .dynamics import IntervalMap, log_inv_derivative_unchecked, orbit
from .errors import BallEscapesBranch, NotExpanding
from .potentials import Potential, birkhoff_sum, holder_seminorm_estimate

CONVENTIONS = ("inclusive", "strict")


@dataclass(frozen=True)
class OrbitExpansionData:
    """a_j = log||Df(f^j x)^{-1}||, prefix sums S (S_0 = 0) and the rate c."""

    a: np.ndarray
    c: float
    S: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "a", a)
        S = np.empty(a.size + 1)
        S[0] = 0.0
        np.cumsum(a, out=S[1:])
        object.__setattr__(self, "S", S)


def expansion_data(fmap: IntervalMap, x: float, length: int, c: float) -> OrbitExpansionData:
    pts = orbit(fmap, x, length)
    return OrbitExpansionData(log_inv_derivative_unchecked(fmap, pts), c)


def detect_hyperbolic_times(data: OrbitExpansionData, convention: str = "inclusive") -> np.ndarray:
    """All n in [1, len(a)] that are hyperbolic times.

    With T_m = S_m + c m / 2, n is hyperbolic iff T_n <= T_m for every m in
    [0, n) (inclusive: k <= n) or [1, n) (strict: k < n, n = 1 vacuous).
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    if data.c <= 0:
        raise ValueError("c must be positive")
    S = data.S
    L = S.size - 1
    if L == 0:
        return np.zeros(0, dtype=int)
    T = S + 0.5 * data.c * np.arange(L + 1)
    if convention == "inclusive":
        prior = np.minimum.accumulate(T[:-1])  # prior[n-1] = min T_0..T_{n-1}
        hyp = T[1:] <= prior
    else:
        hyp = np.ones(L, dtype=bool)
        if L > 1:
            prior = np.minimum.accumulate(T[1:-1])  # min T_1..T_{n-1} for n >= 2
            hyp[1:] = T[2:] <= prior
    return np.flatnonzero(hyp) + 1


def nue_statistic(data: OrbitExpansionData, n: int) -> float:
    """Finite-time average S_n / n of log||Df^{-1}|| along the orbit."""
    if not 1 <= n <= data.a.size:
        raise ValueError("need 1 <= n <= len(a)")
    return float(data.S[n] / n)


def hyperbolic_density(data: OrbitExpansionData, n: int | None = None, convention: str = "inclusive") -> float:
    n = data.a.size if n is None else n
    times = detect_hyperbolic_times(data, convention)
    return float(np.count_nonzero(times <= n) / n)


def pliss_density_floor(data: OrbitExpansionData, n: int | None = None) -> float:
    """Pliss lower bound (c1 - c2) / (A - c2) with c1 = -S_n/n, c2 = c/2, A = max(-a)."""
    n = data.a.size if n is None else n
    c1 = -nue_statistic(data, n)
    c2 = 0.5 * data.c
    big_a = float(np.max(-data.a[:n]))
    if big_a <= c2:
        return 1.0
    return (c1 - c2) / (big_a - c2)


def orbit_statistics(fmap: IntervalMap, samples: int = 16, n: int = 1000, seed: int = 0) -> np.ndarray:
    """S_n/n for ``samples`` seeded start points (vectorized over orbits)."""
    rng = np.random.default_rng(seed)
    x = rng.random(samples)
    total = np.zeros(samples)
    for _ in range(n):
        total += log_inv_derivative_unchecked(fmap, x)
        x = np.asarray(fmap(x))
    return total / n


def estimate_c(fmap: IntervalMap, samples: int = 16, n: int = 1000, seed: int = 0) -> float:
    """Half the median empirical expansion rate; our policy for choosing c."""
    if samples < 1 or n < 1:
        raise ValueError("samples and n must be >= 1")
    med = float(np.median(orbit_statistics(fmap, samples, n, seed)))
    if med >= 0.0:
        raise NotExpanding(f"{fmap.name}: median statistic {med:.4g} >= 0")
    return -0.5 * med


def delta1_estimate(fmap: IntervalMap, c: float, resolution: int = 2 ** 16, cap: float = 0.25) -> float:
    """Largest eps (dyadic ladder) with osc of log||Df^-1|| <= c/4 over every 2*eps window."""
    grid = (np.arange(resolution) + 0.5) / resolution
    a = log_inv_derivative_unchecked(fmap, grid)
    mode = "wrap" if fmap.metric == "circle" else "nearest"

    def ok(eps: float) -> bool:
        w = max(2, int(math.ceil(2.0 * eps * resolution)) + 1)
        osc = maximum_filter1d(a, w, mode=mode) - minimum_filter1d(a, w, mode=mode)
        return float(osc.max()) <= c / 4.0

    eps = cap
    while eps * resolution >= 1.0:
        if ok(eps):
            return eps
        eps /= 2.0
    return 0.0


def dynamic_ball(fmap: IntervalMap, x: float, n: int, eps: float, tol: float = 1e-12) -> tuple[float, float]:
    """B_eps(x, n) as the pullback of B(f^n x, eps) along x's branch itinerary.

    Returns the base interval (lo, hi).  Raises BallEscapesBranch when some
    intermediate pullback leaves the domain of the branch used by the orbit.
    """
    fmap.check_liftable()
    pts = orbit(fmap, x, n + 1)
    centre = pts[n]
    lo, hi = centre - eps, centre + eps
    if fmap.metric == "interval":
        lo, hi = max(lo, 0.0), min(hi, 1.0)
    for i in range(n - 1, -1, -1):
        p = pts[i]
        b = int(fmap.branch_index(p))
        shift = float(fmap.lift(p)) - centre
        new = fmap.lift_inverse(np.array([lo + shift, hi + shift]))
        br = fmap.branches[b]
        if new[0] < br.lo - tol or new[1] > br.hi + tol:
            raise BallEscapesBranch(f"pullback at step {i} leaves branch {b} domain [{br.lo}, {br.hi}]")
        lo, hi = float(new[0]), float(new[1])
        centre = p
    return lo, hi


@dataclass
class ContractionReport:
    n: int
    pairs: list  # (j, worst observed ratio, bound e^{-cj/4})
    distortion: tuple[float, float]
    K_bound: float
    ball: tuple[float, float]
    contraction_ok: bool
    distortion_ok: bool


def distortion_bound(seminorm: float, alpha: float, eps: float, c: float, n: int | None = None) -> float:
    """K = exp(|phi|_a sum_j (2 eps e^{-cj/4})^a), summed to n or to infinity."""
    r = math.exp(-c * alpha / 4.0)
    base = seminorm * (2.0 * eps) ** alpha
    series = r / (1.0 - r) if n is None else r * (1.0 - r ** n) / (1.0 - r)
    try:
        return math.exp(base * series)
    except OverflowError:
        return math.inf


def verify_contraction(fmap: IntervalMap, phi: Potential, x: float, n: int, eps: float, probes: int = 64,
                       c: float | None = None, seed: int = 0, convention: str = "inclusive",
                       rtol: float = 1e-9) -> ContractionReport:
    """Check backward contraction and bounded distortion on B_eps(x, n).

    ``rtol`` absorbs floating-point noise in the observed ratios.
    """
    c = estimate_c(fmap) if c is None else c
    data = expansion_data(fmap, x, n, c)
    if n not in set(detect_hyperbolic_times(data, convention).tolist()):
        raise ValueError(f"n={n} is not a hyperbolic time for x={x}")
    lo, hi = dynamic_ball(fmap, x, n, eps)
    rng = np.random.default_rng(seed)
    y = lo + (hi - lo) * rng.random(probes)
    z = lo + (hi - lo) * rng.random(probes)
    y = np.concatenate([y, [lo]])
    z = np.concatenate([z, [hi]])
    keep = y != z
    y, z = y[keep], z[keep]
    oy = orbit(fmap, y, n + 1)
    oz = orbit(fmap, z, n + 1)
    dn = fmap.distance(oy[n], oz[n])
    pairs = []
    ok_c = True
    for j in range(1, n + 1):
        ratio = float(np.max(fmap.distance(oy[n - j], oz[n - j]) / dn))
        bound = math.exp(-c * j / 4.0)
        ok_c &= ratio <= bound * (1.0 + rtol)
        pairs.append((j, ratio, bound))
    diff = birkhoff_sum(fmap, phi, y, n) - birkhoff_sum(fmap, phi, z, n)
    dist = (float(np.exp(diff.min())), float(np.exp(diff.max())))
    semi = holder_seminorm_estimate(phi, metric=fmap.metric)
    K = distortion_bound(semi, phi.alpha, eps, c, n)
    ok_d = 1.0 / K <= dist[0] * (1.0 + rtol) and dist[1] <= K * (1.0 + rtol)
    return ContractionReport(n, pairs, dist, K, (lo, hi), bool(ok_c), bool(ok_d))
