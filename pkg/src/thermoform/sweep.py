"""Parameter sweeps over map/potential families with weak-* diagnostics and CSV/JSON/SVG output."""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import MAP_PRESETS, make_map
from .errors import ConfigError, ShapeMismatch, ThermoformError
from .hyperbolic_times import estimate_c
from .potentials import POTENTIAL_PRESETS, make_potential, sup_inf_estimate
from .relative_pressure import certify_hyperbolic
from .transfer_operator import solve

METRIC_MODES = ("fourier", "wasserstein")
CERTIFY_MODES = ("none", "endpoints", "all")
FOURIER_MODES = 20
SUMMARY_MODES = 5

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_AFFINE_T = re.compile(rf"^\s*(?:({_NUMBER})\s*\*\s*)?t\s*(?:([-+])\s*({_NUMBER}))?\s*$")


# ---------------------------------------------------------------- parameters as functions of t

@dataclass(frozen=True)
class ParamExpr:
    """A preset parameter: a constant, a list of constants, or slope * t + offset."""

    text: str

    def __post_init__(self):
        self.evaluate(0.0)

    def evaluate(self, t: float):
        s = self.text.strip()
        if "," in s:
            try:
                return [float(v) for v in s.split(",")]
            except ValueError:
                raise ConfigError(f"bad list parameter {self.text!r}") from None
        try:
            value = float(s)
        except ValueError:
            m = _AFFINE_T.match(s)
            if m is None:
                raise ConfigError(f"parameter {self.text!r} is neither a number nor 'a*t + b'") from None
            slope = float(m.group(1)) if m.group(1) else 1.0
            off = float(m.group(3)) if m.group(3) else 0.0
            return slope * t + (off if m.group(2) != "-" else -off)
        if value.is_integer() and re.fullmatch(r"[-+]?\d+", s):
            return int(value)
        return value


def _params(raw: dict, t: float) -> dict:
    return {k: ParamExpr(v).evaluate(t) for k, v in sorted(raw.items())}


@dataclass(frozen=True)
class SweepConfig:
    map_name: str
    potential_name: str
    t_grid: tuple
    map_params: dict = field(default_factory=dict)
    potential_params: dict = field(default_factory=dict)
    k: int = 1024
    tol: float = 1e-12
    metric_modes: tuple = METRIC_MODES
    certify: str = "endpoints"
    workers: int = 1
    stem: str = "sweep"
    name: str = "sweep"

    def __post_init__(self):
        grid = tuple(float(t) for t in self.t_grid)
        object.__setattr__(self, "t_grid", grid)
        object.__setattr__(self, "metric_modes", tuple(self.metric_modes))
        if not grid:
            raise ConfigError("t_grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("t_grid must be strictly increasing")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not set(self.metric_modes) <= set(METRIC_MODES) or not self.metric_modes:
            raise ConfigError(f"metric_modes must be a nonempty subset of {METRIC_MODES}")
        if self.certify not in CERTIFY_MODES:
            raise ConfigError(f"certify must be one of {CERTIFY_MODES}")
        if self.map_name not in MAP_PRESETS:
            raise ConfigError(f"unknown map {self.map_name!r}")
        if self.potential_name not in POTENTIAL_PRESETS:
            raise ConfigError(f"unknown potential {self.potential_name!r}")
        for raw in (self.map_params, self.potential_params):
            for v in raw.values():
                ParamExpr(v)

    @property
    def map_varies(self) -> bool:
        return any("t" in v for v in self.map_params.values())

    def build(self, t: float):
        return (make_map(self.map_name, **_params(self.map_params, t)),
                make_potential(self.potential_name, **_params(self.potential_params, t)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_grid"] = list(self.t_grid)
        d["metric_modes"] = list(self.metric_modes)
        return d

    @classmethod
    def from_ini(cls, text: str) -> "SweepConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from None
        for sec in ("map", "potential", "sweep"):
            if not cp.has_section(sec):
                raise ConfigError(f"config lacks a [{sec}] section")
        mp = dict(cp["map"])
        pp = dict(cp["potential"])
        sw = dict(cp["sweep"])
        try:
            map_name = mp.pop("name")
            pot_name = pp.pop("name")
        except KeyError:
            raise ConfigError("[map] and [potential] need a 'name' key") from None
        if "t_grid" in sw:
            grid = [float(v) for v in sw.pop("t_grid").split(",") if v.strip()]
        elif {"t_start", "t_stop", "t_step"} <= sw.keys():
            start, stop, step = (float(sw.pop(key)) for key in ("t_start", "t_stop", "t_step"))
            if step <= 0:
                raise ConfigError("t_step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            grid = [round(start + i * step, 12) for i in range(n)]
        else:
            raise ConfigError("[sweep] needs t_grid or t_start/t_stop/t_step")
        kw = {}
        conv = {"k": int, "tol": float, "workers": int, "certify": str, "stem": str, "name": str}
        for key, fn in conv.items():
            if key in sw:
                try:
                    kw[key] = fn(sw.pop(key))
                except ValueError:
                    raise ConfigError(f"bad value for {key}") from None
        if "metrics" in sw:
            kw["metric_modes"] = tuple(m.strip() for m in sw.pop("metrics").split(",") if m.strip())
        if sw:
            raise ConfigError(f"unknown [sweep] keys: {sorted(sw)}")
        return cls(map_name, pot_name, tuple(grid), mp, pp, **kw)

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        return cls.from_ini(text)


def _frange(start: float, stop: float, step: float) -> tuple:
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 12) for i in range(n))


def cosine_family(step: float = 0.05, stop: float = 0.5, k: int = 1024, **kw) -> SweepConfig:
    """phi_t = t cos(2 pi x) on the doubling map."""
    return SweepConfig("doubling", "cosine", _frange(0.0, stop, step), {}, {"amplitude": "t"}, k,
                       name="cosine_family", **kw)


def intermittent_family(step: float = 0.1, k: int = 4096, **kw) -> SweepConfig:
    """f_t = intermittent map with alpha = t, phi = 0."""
    return SweepConfig("intermittent", "constant", _frange(0.1, 0.9, step), {"alpha": "t"}, {"value": "0"}, k,
                       name="intermittent_family", **kw)


SWEEP_PRESETS = {"cosine_family": cosine_family, "intermittent_family": intermittent_family}


# ---------------------------------------------------------------- measure diagnostics

def fourier_coefficients(mu: np.ndarray, modes: int = FOURIER_MODES) -> np.ndarray:
    """mu_hat(k) = sum_i w_i e^{2 pi i k c_i} for k = 1..modes, c_i the cell centers."""
    mu = np.asarray(mu, dtype=float)
    c = (np.arange(mu.size) + 0.5) / mu.size
    ks = np.arange(1, modes + 1)
    return np.exp(2j * np.pi * ks[:, None] * c[None, :]) @ mu


def _cell_w1(mu1: np.ndarray, mu2: np.ndarray) -> float:
    """Exact integral of |F1 - F2| for piecewise-uniform densities on equal cells."""
    h = 1.0 / mu1.size
    d = np.concatenate([[0.0], np.cumsum(mu1 - mu2)])
    a, b = d[:-1], d[1:]
    same = a * b >= 0
    denom = np.abs(a) + np.abs(b)
    cross = np.divide(a * a + b * b, 2.0 * denom, out=np.zeros_like(a), where=denom > 0)
    return float(h * np.sum(np.where(same, 0.5 * (np.abs(a) + np.abs(b)), cross)))


def weak_star_distance(mu1, mu2, mode: str = "wasserstein", modes: int = FOURIER_MODES) -> float:
    """Weak-* proxy between two cell-weight measures on equal cells of [0, 1].

    fourier: max over 1 <= k <= modes of |mu1_hat(k) - mu2_hat(k)|.
    wasserstein: W1 distance of the piecewise-uniform measures, i.e. the
    L1 distance of their CDFs.
    """
    a = np.asarray(mu1, dtype=float)
    b = np.asarray(mu2, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeMismatch(f"cell counts differ: {a.shape} vs {b.shape}")
    if mode == "fourier":
        return float(np.max(np.abs(fourier_coefficients(a, modes) - fourier_coefficients(b, modes))))
    if mode == "wasserstein":
        return _cell_w1(a, b)
    raise ValueError(f"mode must be one of {METRIC_MODES}")


@dataclass(frozen=True)
class EntropyEstimate:
    h: float
    admissible: bool


def entropy_from_identity(sol, phi, degree: int = 2, tol: float = 1e-6) -> EntropyEstimate:
    """h = P - sum_i mu_i phi(c_i); admissible when 0 <= h <= log(degree) up to ``tol``."""
    mu = np.asarray(sol.mu, dtype=float)
    c = (np.arange(mu.size) + 0.5) / mu.size
    h = float(sol.pressure - np.dot(mu / mu.sum(), phi(c)))
    return EntropyEstimate(h, bool(-tol <= h <= math.log(degree) + tol))


# ---------------------------------------------------------------- the sweep

@dataclass
class SweepResult:
    config: dict
    records: list
    pairs: list
    measures: list = field(default_factory=list, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {"config": self.config, "records": self.records, "pairs": self.pairs}

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        d = _unclean(json.loads(text))
        return cls(d["config"], d["records"], d["pairs"])


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


_SPECIAL = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _unclean(obj):
    if isinstance(obj, str) and obj in _SPECIAL:
        return _SPECIAL[obj]
    if isinstance(obj, dict):
        return {k: _unclean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unclean(v) for v in obj]
    return obj


def _one_point(config: SweepConfig, index: int):
    """Record and cell weights for t_grid[index]; failures land in the record."""
    t = config.t_grid[index]
    rec = {"t": t, "pressure": math.nan, "lambda": math.nan, "residual": math.nan, "entropy": math.nan,
           "admissible": False, "mean": math.nan, "variance": math.nan,
           "fourier_abs": [math.nan] * SUMMARY_MODES, "c": math.nan, "margin": math.nan, "error": ""}
    try:
        fmap, phi = config.build(t)
        _, sol = solve(fmap, phi, config.k, tol=config.tol)
        mu = sol.mu / sol.mu.sum()
        cen = (np.arange(mu.size) + 0.5) / mu.size
        mean = float(mu @ cen)
        second = float(mu @ (cen ** 2 + 1.0 / (12.0 * mu.size ** 2)))
        ent = entropy_from_identity(sol, phi, fmap.degree)
        rec.update(pressure=float(sol.pressure), **{"lambda": float(sol.lam)}, residual=float(sol.residual), entropy=ent.h,
                   admissible=ent.admissible, mean=mean, variance=second - mean * mean,
                   fourier_abs=[float(v) for v in np.abs(fourier_coefficients(mu, SUMMARY_MODES))])
        last = len(config.t_grid) - 1
        if config.certify == "all" or (config.certify == "endpoints" and index in (0, last)):
            c = estimate_c(fmap)
            rec["c"] = float(c)
            rec["margin"] = float(certify_hyperbolic(fmap, phi, c, k=min(config.k, 1024)).margin)
        elif config.map_varies:
            rec["c"] = float(estimate_c(fmap))
        return rec, mu
    except (ThermoformError, ValueError, FloatingPointError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec, None


def _potential_gap(config: SweepConfig, t1: float, t2: float) -> float:
    """Grid sup-norm of phi_t1 - phi_t2 (nan when the map also changes)."""
    if config.map_varies:
        return math.nan
    p1 = make_potential(config.potential_name, **_params(config.potential_params, t1))
    p2 = make_potential(config.potential_name, **_params(config.potential_params, t2))
    lo, hi = sup_inf_estimate(p1 - p2, 4097)
    return max(abs(lo), abs(hi))


def run_sweep(config: SweepConfig) -> SweepResult:
    """Solve at every t, then compute adjacent-pair diagnostics; deterministic for a given config."""
    idx = range(len(config.t_grid))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            out = list(pool.map(_one_point, [config] * len(idx), idx))
    else:
        out = [_one_point(config, i) for i in idx]
    records = [r for r, _ in out]
    measures = [m for _, m in out]
    pairs = []
    for i in range(len(records) - 1):
        a, b = records[i], records[i + 1]
        row = {"t": a["t"], "t2": b["t"], "dt": b["t"] - a["t"], "dP": abs(b["pressure"] - a["pressure"]),
               "phi_gap": _potential_gap(config, a["t"], b["t"])}
        for mode in METRIC_MODES:
            ok = mode in config.metric_modes and measures[i] is not None and measures[i + 1] is not None
            row[mode] = weak_star_distance(measures[i], measures[i + 1], mode) if ok else math.nan
        pairs.append(row)
    return SweepResult(config.to_dict(), records, pairs, measures)


# ---------------------------------------------------------------- emission

CSV_COLUMNS = ["kind", "t", "t2", "pressure", "lambda", "residual", "entropy", "admissible", "mean", "variance",
               *[f"fourier_abs_{j}" for j in range(1, SUMMARY_MODES + 1)], "c", "margin",
               "dt", "dP", "phi_gap", "fourier", "wasserstein", "error"]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(CSV_COLUMNS)
    for rec in result.records:
        row = {"kind": "record", **rec}
        for j, v in enumerate(rec["fourier_abs"], 1):
            row[f"fourier_abs_{j}"] = v
        w.writerow([_fmt(row.get(col, "")) for col in CSV_COLUMNS])
    for pair in result.pairs:
        row = {"kind": "pair", **pair}
        w.writerow([_fmt(row.get(col, "")) for col in CSV_COLUMNS])
    return buf.getvalue()


def _polyline_svg(title: str, xlabel: str, ylabel: str, xs, ys, width: int = 480, height: int = 320) -> str:
    pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    pad = 48
    lines = [f'<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<text x="{width // 2}" y="{height - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
             f'<text x="12" y="{height // 2}" font-size="12" transform="rotate(-90 12 {height // 2})">{ylabel}</text>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>']
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
        sx = (width - 2 * pad) / (x1 - x0) if x1 > x0 else 0.0
        sy = (height - 2 * pad) / (y1 - y0) if y1 > y0 else 0.0
        coords = [(pad + (x - x0) * sx, height - pad - (y - y0) * sy) for x, y in pts]
        path = " ".join(f"{u:.2f},{v:.2f}" for u, v in coords)
        lines.append(f'<polyline points="{path}" fill="none" stroke="steelblue" stroke-width="2"/>')
        lines.extend(f'<circle cx="{u:.2f}" cy="{v:.2f}" r="3" fill="steelblue"/>' for u, v in coords)
        lines.append(f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x0:.4g}</text>')
        lines.append(f'<text x="{width - pad}" y="{height - pad + 16}" font-size="10" text-anchor="end">{x1:.4g}</text>')
        lines.append(f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.4g}</text>')
        lines.append(f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{y1:.4g}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc


def emit(result: SweepResult, out_dir, stem: str | None = None) -> dict:
    """Write <stem>.csv, <stem>.json, <stem>_pressure.svg and <stem>_weakstar.svg; return the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: {exc.strerror}") from exc
    stem = stem or result.config.get("stem", "sweep")
    paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json",
             "svg_pressure": out / f"{stem}_pressure.svg", "svg_weakstar": out / f"{stem}_weakstar.svg"}
    _write(paths["csv"], to_csv(result))
    _write(paths["json"], result.to_json())
    _write(paths["svg_pressure"], _polyline_svg("pressure", "t", "P", [r["t"] for r in result.records],
                                                [r["pressure"] for r in result.records]))
    mode = "wasserstein" if "wasserstein" in result.config.get("metric_modes", METRIC_MODES) else "fourier"
    _write(paths["svg_weakstar"], _polyline_svg(f"weak-* distance ({mode})", "t", "distance",
                                                [p["t"] for p in result.pairs], [p[mode] for p in result.pairs]))
    return paths
