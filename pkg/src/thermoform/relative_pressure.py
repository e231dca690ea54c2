"""Relative pressure: exact on subshifts of finite type, heuristic cover estimates on interval maps.

The symbolic side is the oracle.  For an SFT the pressure of the
sub-shift on an allowed alphabet is an eigenvalue problem, and the
complement (points that visit a forbidden symbol at least once) carries
the largest pressure among the irreducible components reachable from a
forbidden state.
"""

from __future__ import annotations

import inspect
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .dynamics import IntervalMap, evaluate, log_inv_derivative_unchecked
from .errors import CoverIncomplete, EmptySubsystem, HeuristicWarning, ReducibleWarning
from .potentials import Potential, holder_seminorm_estimate
from .transfer_operator import pressure as ulam_pressure


@dataclass(frozen=True)
class SFTModel:
    """Transition matrix A on q symbols and a potential depending on the first m symbols.

    ``table`` has q**m entries indexed by the word read as a base-q number.
    """

    A: np.ndarray
    table: np.ndarray
    depth: int = 1

    def __post_init__(self):
        A = np.asarray(self.A, dtype=int)
        t = np.asarray(self.table, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.isin(A, (0, 1)).all():
            raise ValueError("A must be a square 0/1 matrix")
        if t.size != A.shape[0] ** self.depth or not np.isfinite(t).all():
            raise ValueError("potential table must hold q**depth finite values")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "table", t)

    @property
    def q(self) -> int:
        return self.A.shape[0]

    @classmethod
    def full_shift(cls, q: int, first_symbol_values=None) -> "SFTModel":
        vals = np.zeros(q) if first_symbol_values is None else np.asarray(first_symbol_values, dtype=float)
        return cls(np.ones((q, q), dtype=int), vals, 1)

    def restrict(self, allowed) -> "SFTModel":
        keep = sorted(set(int(s) for s in allowed))
        words = itertools.product(keep, repeat=self.depth)
        idx = [sum(w[i] * self.q ** (self.depth - 1 - i) for i in range(self.depth)) for w in words]
        return SFTModel(self.A[np.ix_(keep, keep)], self.table[idx], self.depth)


def _states(model: SFTModel) -> list[tuple[int, ...]]:
    if model.depth == 1:
        return [(s,) for s in range(model.q)]
    out = []
    for w in itertools.product(range(model.q), repeat=model.depth):
        if all(model.A[w[i], w[i + 1]] for i in range(model.depth - 1)):
            out.append(w)
    return out


def weighted_matrix(model: SFTModel) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """M[u, v] = A[u -> v] e^{phi(u)} on allowed words of length ``depth``."""
    states = _states(model)
    index = {w: i for i, w in enumerate(states)}
    M = np.zeros((len(states), len(states)))
    q, m = model.q, model.depth
    for w, i in index.items():
        val = math.exp(model.table[sum(w[j] * q ** (m - 1 - j) for j in range(m))])
        for s in range(q):
            if model.A[w[-1], s]:
                nxt = w[1:] + (s,)
                M[i, index[nxt]] = val
    return M, states


def _component_radii(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(labels, spectral radius per strongly connected component)."""
    n, labels = connected_components(M > 0, directed=True, connection="strong")
    radii = np.zeros(n)
    for c in range(n):
        sel = np.flatnonzero(labels == c)
        block = M[np.ix_(sel, sel)]
        if block.any():
            radii[c] = float(np.max(np.abs(np.linalg.eigvals(block))))
    return labels, radii


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def sft_pressure(model: SFTModel) -> float:
    """log spectral radius of the weighted word matrix (max over components if reducible)."""
    M, _ = weighted_matrix(model)
    if M.size == 0:
        return -math.inf
    labels, radii = _component_radii(M)
    if radii.size > 1:
        warnings.warn("weighted matrix is reducible; pressure is the max over components",
                      ReducibleWarning, stacklevel=2)
    return _log(float(radii.max()))


def relative_pressure_subsystem(model: SFTModel, allowed, strict: bool = False) -> float:
    """Pressure of the sub-shift using only ``allowed`` symbols.

    Returns -inf when no bi-infinite word survives, or raises
    EmptySubsystem if ``strict``.
    """
    allowed = list(allowed)
    if not allowed:
        raise ValueError("allowed must be nonempty")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReducibleWarning)
        p = sft_pressure(model.restrict(allowed))
    if p == -math.inf and strict:
        raise EmptySubsystem(f"no bi-infinite words over {allowed}")
    return p


def relative_pressure_complement(model: SFTModel, allowed) -> float:
    """Pressure of the points that visit a symbol outside ``allowed`` at least once."""
    allowed = set(int(s) for s in allowed)
    M, states = weighted_matrix(model)
    bad = [i for i, w in enumerate(states) if any(s not in allowed for s in w)]
    if not bad:
        return -math.inf
    labels, radii = _component_radii(M)
    reach = set()
    for i in bad:
        reach.update(breadth_first_order(M > 0, i, directed=True, return_predecessors=False).tolist())
    comps = np.unique(labels[sorted(reach)])
    return _log(float(radii[comps].max()))


# ---------------------------------------------------------------- interval-map covers

Region = Callable[[np.ndarray, int], np.ndarray]


def static_region(pred: Callable[[np.ndarray], np.ndarray]) -> Region:
    return lambda x, n: pred(x)


def _as_region(region) -> Region:
    try:
        nparams = len(inspect.signature(region).parameters)
    except (TypeError, ValueError):
        nparams = 2
    return region if nparams >= 2 else static_region(region)


def orbit_region(fmap: IntervalMap, pred: Callable[[np.ndarray], np.ndarray]) -> Region:
    """Points whose first n iterates all satisfy ``pred`` (a depth-n cylinder of an invariant set)."""

    def region(x: np.ndarray, n: int) -> np.ndarray:
        cur = np.asarray(x, dtype=float)
        ok = np.ones(cur.shape, dtype=bool)
        for _ in range(max(n, 1)):
            ok &= pred(cur)
            cur = np.asarray(evaluate(fmap, cur))
        return ok

    return region


def bad_region(fmap: IntervalMap, c: float) -> Region:
    """Points whose depth-n statistic S_n log||Df^-1|| / n exceeds -c."""

    def pred(x: np.ndarray, n: int) -> np.ndarray:
        cur = np.asarray(x, dtype=float)
        total = np.zeros(cur.shape)
        for _ in range(max(n, 1)):
            total += log_inv_derivative_unchecked(fmap, cur)
            cur = np.asarray(evaluate(fmap, cur))
        return total / max(n, 1) > -c

    return pred


@dataclass
class CoverLevel:
    depth: int
    elements: int
    kept: int
    log_sum: float


@dataclass
class CoverResult:
    estimate: float
    levels: list = field(default_factory=list)
    heuristic: bool = True


def _refine(fmap: IntervalMap, lo: np.ndarray, hi: np.ndarray, words: np.ndarray, m0: int):
    """Children of the elements with tops [lo, hi]: split by branch, map forward, cut by the delta-grid."""
    c_lo, c_hi, c_w = [], [], []
    for b, br in enumerate(fmap.branches):
        a = np.maximum(lo, br.lo)
        z = np.minimum(hi, br.hi)
        sel = z - a > 1e-15
        if not sel.any():
            continue
        u = np.asarray(br.forward(a[sel]))
        v = np.asarray(br.forward(z[sel]))
        first = np.clip(np.floor(u * m0).astype(int), 0, m0 - 1)
        last = np.clip(np.ceil(v * m0).astype(int) - 1, 0, m0 - 1)
        counts = last - first + 1
        parent = np.repeat(np.arange(u.size), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cell = first[parent] + offs
        clo = np.maximum(u[parent], cell / m0)
        chi = np.minimum(v[parent], (cell + 1) / m0)
        ok = chi - clo > 1e-15
        c_lo.append(clo[ok])
        c_hi.append(chi[ok])
        w = np.concatenate([words[:, sel][:, parent[ok]], np.full((1, int(ok.sum())), b, dtype=np.int16)])
        c_w.append(w)
    return np.concatenate(c_lo), np.concatenate(c_hi), np.concatenate(c_w, axis=1)


def _pull_back(fmap: IntervalMap, lo: np.ndarray, hi: np.ndarray, words: np.ndarray):
    """Base intervals of the elements and the lengths of their forward images at each time."""
    n = words.shape[0]
    lengths = np.empty((n, lo.size))
    a, z = lo.copy(), hi.copy()
    for i in range(n - 1, -1, -1):
        wa, wz = np.empty_like(a), np.empty_like(z)
        for b, br in enumerate(fmap.branches):
            sel = words[i] == b
            if sel.any():
                wa[sel] = br.invert(a[sel])
                wz[sel] = br.invert(z[sel])
        a, z = np.minimum(wa, wz), np.maximum(wa, wz)
        lengths[i] = z - a
    return a, z, lengths


def cover_pressure_estimate(fmap: IntervalMap, phi: Potential, region, delta: float, N: int,
                            gamma_grid=None, N_max: int | None = None, probes: int = 16,
                            max_elements: int = 2 ** 18, seminorm: float | None = None,
                            detail: bool = False):
    """HEURISTIC upper estimate of the relative pressure of ``region`` at scale ``delta``.

    Covers at depth n are the elements of the join of the delta-grid and its
    pullbacks up to time n that meet the region.  Each element contributes
    exp(R), R = max of S_n phi over ``probes`` points plus the Hölder bound
    |phi|_a sum_j |f^j E|^a.  The critical exponent gamma is where the cover
    sums at depths N and N_max balance; with a grid, the smallest grid value
    at or above it is returned.
    """
    if delta <= 0 or N < 1:
        raise ValueError("need delta > 0 and N >= 1")
    fmap.check_liftable()
    region = _as_region(region)
    N_max = N + 6 if N_max is None else N_max
    if N_max <= N:
        raise ValueError("N_max must exceed N")
    m0 = int(math.ceil(1.0 / (2.0 * delta)))
    semi = holder_seminorm_estimate(phi, metric=fmap.metric) if seminorm is None else seminorm
    lo = np.arange(m0) / m0
    hi = (np.arange(m0) + 1) / m0
    words = np.zeros((0, m0), dtype=np.int16)
    t = (np.arange(probes) + 0.5) / probes
    levels: list[CoverLevel] = []
    for depth in range(1, N_max + 1):
        lo, hi, words = _refine(fmap, lo, hi, words, m0)
        if lo.size > max_elements:
            warnings.warn(f"cover truncated at depth {depth - 1}: {lo.size} elements", HeuristicWarning,
                          stacklevel=2)
            break
        if depth < N:
            continue
        a, z, lengths = _pull_back(fmap, lo, hi, words)
        pts = np.concatenate([a[:, None], a[:, None] + (z - a)[:, None] * t[None, :], z[:, None]], axis=1)
        inside = region(pts.ravel(), depth).reshape(pts.shape).any(axis=1)
        order = np.argsort(a)
        gaps = a[order][1:] - np.maximum.accumulate(z[order])[:-1]
        if a.min() > 1e-9 or z.max() < 1.0 - 1e-9 or gaps.size and gaps.max() > 1e-9:
            raise CoverIncomplete(f"depth-{depth} elements leave a gap in [0, 1]")
        kept = np.flatnonzero(inside)
        if kept.size == 0:
            levels.append(CoverLevel(depth, lo.size, 0, -math.inf))
            continue
        x = pts[kept]
        s = np.zeros(x.shape)
        cur = x.ravel()
        for _ in range(depth):
            s += phi(cur).reshape(x.shape)
            cur = np.asarray(evaluate(fmap, cur))
        corr = semi * np.sum(lengths[:, kept] ** phi.alpha, axis=0) if semi > 0 else 0.0
        R = s.max(axis=1) + corr
        top = R.max()
        levels.append(CoverLevel(depth, lo.size, int(kept.size), float(top + math.log(np.exp(R - top).sum()))))
    usable = [lv for lv in levels if lv.depth >= N]
    if len(usable) < 2:
        raise CoverIncomplete("not enough cover depths to estimate a growth rate")
    first, last = usable[0], usable[-1]
    if last.log_sum == -math.inf:
        est = -math.inf
    elif first.log_sum == -math.inf:
        est = math.inf
    else:
        est = (last.log_sum - first.log_sum) / (last.depth - first.depth)
    if gamma_grid is not None and math.isfinite(est):
        grid = np.sort(np.asarray(gamma_grid, dtype=float))
        above = grid[grid >= est - 1e-12]
        est = float(above[0]) if above.size else math.inf
    result = CoverResult(est, levels)
    return result if detail else est


@dataclass
class HyperbolicityCertificate:
    P_total: float
    P_bad: float
    margin: float
    zeta: float
    params: dict

    @property
    def passes(self) -> bool:
        return self.margin > 0

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else "-inf"
            return v
        return {"P_total": clean(self.P_total), "P_bad": clean(self.P_bad), "margin": clean(self.margin),
                "zeta": clean(self.zeta), "passes": self.passes,
                "params": {k: clean(v) for k, v in self.params.items()}}


def certify_hyperbolic(fmap: IntervalMap, phi: Potential, c: float, k: int = 1024, delta: float = 2.0 ** -5,
                       N: int = 6, N_max: int = 12, horizon: int = 50, grid: int = 2 ** 12,
                       probes: int = 16) -> HyperbolicityCertificate:
    """P_total from the Ulam operator, P_bad from covers of the finite-time non-expanding region.

    The cover at depth n uses the depth-n statistic; ``horizon`` and ``grid``
    only feed the reported bad-region fraction.
    """
    p_total = ulam_pressure(fmap, phi, k)
    p_bad = cover_pressure_estimate(fmap, phi, bad_region(fmap, c), delta, N, N_max=N_max, probes=probes)
    xs = (np.arange(grid) + 0.5) / grid
    frac = float(np.mean(bad_region(fmap, c)(xs, horizon)))
    margin = p_total - p_bad
    params = {"map": fmap.name, "c": c, "k": k, "delta": delta, "N": N, "N_max": N_max,
              "horizon": horizon, "grid": grid, "bad_fraction": frac, "heuristic": True}
    return HyperbolicityCertificate(p_total, p_bad, margin, margin / 2.0, params)
