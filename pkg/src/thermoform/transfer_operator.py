"""Ulam discretization of the transfer operator, power iteration and Gibbs checks.

The matrix B acts on piecewise-constant functions: rows are target cells,
columns are source cells, and

    B[i, j] = (1/|C_i|) * sum_b  integral over {x in C_i : g_b(x) in C_j} of e^{phi(g_b(x))} dx

where g_b runs over the inverse branches.  The integral is a midpoint rule
in image coordinates on each branch-restricted piece, so constant
potentials give exact row sums and Markov-aligned locally constant data
give the exact weighted transition matrix.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .dynamics import IntervalMap, evaluate
from .errors import BallEscapesBranch, NonPrimitiveWarning, NoHyperbolicTimes, NotConverged
from .hyperbolic_times import (
    detect_hyperbolic_times,
    distortion_bound,
    dynamic_ball,
    estimate_c,
    expansion_data,
)
from .potentials import Potential, birkhoff_sum, holder_seminorm_estimate

DEFAULT_QUADRATURE = 8
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000


@dataclass
class UlamDiscretization:
    k: int
    matrix: sp.csr_matrix
    degree: int
    node_range: tuple[float, float]  # min/max of phi over the quadrature nodes

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.k + 1)

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.k) + 0.5) / self.k


def _branch_segments(br, k: int):
    """Image-coordinate pieces of one branch, each inside one target and one source cell."""
    lo, hi = br.image
    grid = np.arange(k + 1) / k
    targets = grid[(grid > lo) & (grid < hi)]
    src = grid[(grid > br.lo) & (grid < br.hi)]
    src_img = np.asarray(br.forward(src), dtype=float) if src.size else src
    cuts = np.unique(np.concatenate([[lo, hi], targets, src_img]))
    cuts = cuts[np.concatenate([[True], np.diff(cuts) > 1e-14])]
    cuts[-1] = hi
    return cuts[:-1], cuts[1:]


def build_ulam(fmap: IntervalMap, phi: Potential, k: int, quadrature: int = DEFAULT_QUADRATURE) -> UlamDiscretization:
    if k < 2 or quadrature < 1:
        raise ValueError("need k >= 2 and quadrature >= 1")
    rows, cols, vals = [], [], []
    node_lo, node_hi = math.inf, -math.inf
    q = (np.arange(quadrature) + 0.5) / quadrature
    for br in fmap.branches:
        s, t = _branch_segments(br, k)
        if s.size == 0:
            continue
        mid = 0.5 * (s + t)
        i = np.clip(np.floor(mid * k).astype(int), 0, k - 1)
        j = np.clip(np.floor(br.invert(mid) * k).astype(int), 0, k - 1)
        nodes = s[:, None] + (t - s)[:, None] * q[None, :]
        pv = phi(br.invert(nodes.ravel())).reshape(nodes.shape)
        node_lo, node_hi = min(node_lo, float(pv.min())), max(node_hi, float(pv.max()))
        w = k * (t - s) * np.exp(pv).mean(axis=1)
        rows.append(i)
        cols.append(j)
        vals.append(w)
    B = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(k, k)).tocsr()
    B.sum_duplicates()
    return UlamDiscretization(k, B, fmap.degree, (node_lo, node_hi))


@dataclass
class SpectralSolution:
    lam: float
    pressure: float
    h: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    residual: float
    iterations: int
    primitive: bool = True
    converged: bool = True

    def to_json(self) -> str:
        return json.dumps({
            "lambda": self.lam,
            "pressure": self.pressure,
            "residual": self.residual,
            "iterations": self.iterations,
            "h": self.h.tolist(),
            "nu": self.nu.tolist(),
            "mu": self.mu.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpectralSolution":
        d = json.loads(text)
        return cls(d["lambda"], d["pressure"], np.array(d["h"]), np.array(d["nu"]), np.array(d["mu"]),
                   d["residual"], d["iterations"])


def _is_irreducible(B: sp.spmatrix) -> bool:
    n, _ = connected_components(B, directed=True, connection="strong")
    return n == 1


def _dominant(B: sp.spmatrix, tol: float, max_iter: int):
    """Power iteration from the uniform vector; returns (lam, x, residual, iters, oscillating)."""
    k = B.shape[0]
    x = np.full(k, 1.0 / k)
    prev = None
    lam = 0.0
    res = math.inf
    for it in range(1, max_iter + 1):
        y = B @ x
        s = y.sum()
        if s <= 0.0:
            return 0.0, x, 0.0, it, False
        lam = s  # x sums to 1
        xm = x.max()
        res = float(np.max(np.abs(y - lam * x)) / (lam * xm))
        if res <= tol:
            return lam, x, res, it, False
        prev, x = x, y / s
    oscillating = prev is not None and np.max(np.abs(B @ (B @ prev) / lam ** 2 - prev)) < 1e3 * tol * prev.max()
    return lam, x, res, max_iter, oscillating


def power_iterate(disc, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SpectralSolution:
    """Dominant eigenvalue with positive right (h) and left (nu) eigenvectors.

    Normalization: sum(nu) = 1, sum(nu * h) = 1, mu = h * nu.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(disc, UlamDiscretization):
        B = disc.matrix
    elif sp.issparse(disc):
        B = sp.csr_matrix(disc, dtype=float)
    else:
        B = sp.csr_matrix(np.asarray(disc, dtype=float))
    primitive = _is_irreducible(B)
    lam_r, h, res_r, it_r, osc_r = _dominant(B, tol, max_iter)
    lam_l, nu, res_l, it_l, osc_l = _dominant(B.T.tocsr(), tol, max_iter)
    if osc_r or osc_l:
        primitive = False
    if not primitive:
        warnings.warn("discretized operator is not primitive; dominant eigenvalue may not be simple",
                      NonPrimitiveWarning, stacklevel=2)
    converged = res_r <= tol and res_l <= tol
    if not converged and not (osc_r or osc_l):
        raise NotConverged(max(res_r, res_l), max(it_r, it_l))
    lam = lam_r
    nu = nu / nu.sum()
    h = h / float(nu @ h)
    mu = h * nu
    mu = mu / mu.sum()
    resid = float(np.max(np.abs(B @ h - lam * h)) / lam)
    return SpectralSolution(lam, math.log(lam) if lam > 0 else -math.inf, h, nu, mu, resid,
                            max(it_r, it_l), primitive, converged)


def solve(fmap: IntervalMap, phi: Potential, k: int, quadrature: int = DEFAULT_QUADRATURE,
          tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> tuple[UlamDiscretization, SpectralSolution]:
    disc = build_ulam(fmap, phi, k, quadrature)
    return disc, power_iterate(disc, tol, max_iter)


def pressure(fmap: IntervalMap, phi: Potential, k: int, quadrature: int = DEFAULT_QUADRATURE,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """log of the dominant eigenvalue of the k-cell Ulam matrix."""
    return solve(fmap, phi, k, quadrature, tol, max_iter)[1].pressure


def pressure_refinement(fmap: IntervalMap, phi: Potential, k: int, **kw) -> dict:
    """Pressures at k, 2k, 4k with successive differences."""
    ks = [k, 2 * k, 4 * k]
    ps = [pressure(fmap, phi, kk, **kw) for kk in ks]
    d1, d2 = abs(ps[1] - ps[0]), abs(ps[2] - ps[1])
    return {"k": ks, "pressure": ps, "diffs": [d1, d2], "monotone": d2 <= d1 or d2 < 1e-12}


def apply_pointwise(fmap: IntervalMap, phi: Potential, psi, x: float) -> float:
    """(L psi)(x) = sum over preimages y of e^{phi(y)} psi(y)."""
    from .dynamics import inverse_branches
    ys = np.array([y for _, y in inverse_branches(fmap, x)])
    return float(np.sum(np.exp(phi(ys)) * np.asarray(psi(ys), dtype=float)))


def equilibrium_measure(sol: SpectralSolution) -> np.ndarray:
    mu = sol.h * sol.nu
    return mu / mu.sum()


def invariance_defect(sol: SpectralSolution, disc: UlamDiscretization) -> float:
    """|P^T mu - mu|_1 for the forward chain P[j -> i] = nu_i B[i, j] / (lam nu_j)."""
    mu = equilibrium_measure(sol)
    B = disc.matrix
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(sol.nu > 0, mu / sol.nu, 0.0)
    pushed = sol.nu * (B @ w) / sol.lam
    return float(np.sum(np.abs(pushed - mu)))


def spectral_bounds(disc: UlamDiscretization, bracket: tuple[float, float]) -> tuple[float, float]:
    lo, hi = bracket
    return disc.degree * math.exp(lo), disc.degree * math.exp(hi)


def duality_gap(sol: SpectralSolution, disc: UlamDiscretization) -> float:
    """|sum_i (B h)_i nu_i - lam sum_i h_i nu_i|."""
    return abs(float(sol.nu @ (disc.matrix @ sol.h)) - sol.lam * float(sol.nu @ sol.h))


# ---------------------------------------------------------------- Gibbs property

def _nu_cdf(nu: np.ndarray, x) -> np.ndarray:
    """Cumulative nu-mass of [0, x] with nu uniform inside cells; extended periodically."""
    k = nu.size
    cum = np.concatenate([[0.0], np.cumsum(nu)])
    x = np.asarray(x, dtype=float)
    m = np.floor(x)
    r = (x - m) * k
    i = np.clip(np.floor(r).astype(int), 0, k - 1)
    return m * cum[-1] + cum[i] + (r - i) * nu[i]


def nu_interval(nu: np.ndarray, lo: float, hi: float) -> float:
    return float(_nu_cdf(nu, hi) - _nu_cdf(nu, lo))


@dataclass
class GibbsReport:
    samples: list = field(default_factory=list)  # (x, n, y, ratio)
    C_lower: float = math.nan
    C_upper: float = math.nan
    C_theory: float = math.nan
    eps: float = math.nan
    c: float = math.nan

    @property
    def within_theory(self) -> bool:
        return 1.0 / self.C_theory <= self.C_lower and self.C_upper <= self.C_theory


def gibbs_check(fmap: IntervalMap, phi: Potential, sol: SpectralSolution, eps: float, trials: int = 100, *,
                points=None, c: float | None = None, seed: int = 0, orbit_cap: int = 40,
                min_cells: int = 32, max_attempts: int | None = None,
                convention: str = "inclusive") -> GibbsReport:
    """Compare nu(B_eps(x, n)) with exp(S_n phi(x) - n log lam) at hyperbolic times.

    The reported ratio is normalized by nu(B(f^n x, eps)), the image ball
    mass, so that the Gibbs bounds reduce to [1/K, K] with K the distortion
    constant.  ``points`` may list explicit (x, n) pairs; otherwise x is
    sampled and n is the largest hyperbolic time <= ``orbit_cap`` whose ball
    still spans ``min_cells`` cells and stays inside single branches.
    """
    c = estimate_c(fmap) if c is None else c
    k = sol.nu.size
    lam = sol.lam
    semi = holder_seminorm_estimate(phi, metric=fmap.metric)
    report = GibbsReport(eps=eps, c=c, C_theory=distortion_bound(semi, phi.alpha, eps, c))

    def ratio(x: float, n: int) -> float | None:
        try:
            lo, hi = dynamic_ball(fmap, x, n, eps)
        except BallEscapesBranch:
            return None
        if (hi - lo) * k < min_cells:
            return None
        fx = float(np.asarray(_iterate(fmap, x, n)))
        img = nu_interval(sol.nu, fx - eps, fx + eps)
        s = birkhoff_sum(fmap, phi, x, n)
        return nu_interval(sol.nu, lo, hi) / (math.exp(s - n * math.log(lam)) * img)

    if points is not None:
        for x, n in points:
            r = ratio(float(x), int(n))
            if r is not None:
                report.samples.append((float(x), int(n), float(x), r))
    else:
        rng = np.random.default_rng(seed)
        attempts = 0
        limit = max_attempts if max_attempts is not None else 50 * trials
        while len(report.samples) < trials and attempts < limit:
            attempts += 1
            x = float(rng.random())
            data = expansion_data(fmap, x, orbit_cap, c)
            times = detect_hyperbolic_times(data, convention)
            for n in times[::-1]:
                r = ratio(x, int(n))
                if r is not None:
                    report.samples.append((x, int(n), x, r))
                    break
    if not report.samples:
        raise NoHyperbolicTimes(f"no admissible hyperbolic dynamic balls up to n={orbit_cap}")
    rs = np.array([s[3] for s in report.samples])
    report.C_lower, report.C_upper = float(rs.min()), float(rs.max())
    return report


def _iterate(fmap: IntervalMap, x: float, n: int) -> float:
    for _ in range(n):
        x = evaluate(fmap, x)
    return x
