"""Command-line entry point: pressure, equilibrium, hyptimes, certify, skew and sweep."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import dynamics, potentials
from .errors import ConfigError, ThermoformError
from .hyperbolic_times import (
    CONVENTIONS,
    detect_hyperbolic_times,
    estimate_c,
    expansion_data,
    hyperbolic_density,
    nue_statistic,
    pliss_density_floor,
)
from .potentials import holder_bracket
from .relative_pressure import certify_hyperbolic
from .skew_product import PRODUCT_POTENTIAL_PRESETS, SKEW_PRESETS, make_skew, skew_pressure_check
from .sweep import SWEEP_PRESETS, ParamExpr, SweepConfig, _clean, emit, entropy_from_identity, run_sweep
from .transfer_operator import solve, spectral_bounds


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(out_dir, name: str, text: str) -> Path | None:
    if out_dir is None:
        return None
    path = Path(out_dir) / name
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc
    return path


def _system(args):
    """Map and potential from --config sections, overridden by --map/--potential flags."""
    map_name, pot_name = "doubling", "constant"
    map_raw, pot_raw = {}, {}
    if args.config:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(args.config, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc.strerror}") from None
        if cp.has_section("map"):
            map_raw = dict(cp["map"])
            map_name = map_raw.pop("name", map_name)
        if cp.has_section("potential"):
            pot_raw = dict(cp["potential"])
            pot_name = pot_raw.pop("name", pot_name)
    if args.map:
        map_name, map_raw = args.map, {}
    if args.potential:
        pot_name, pot_raw = args.potential, {}
    map_raw.update(dict(args.map_param or []))
    pot_raw.update(dict(args.pot_param or []))
    mp = {k: ParamExpr(v).evaluate(0.0) for k, v in sorted(map_raw.items())}
    pp = {k: ParamExpr(v).evaluate(0.0) for k, v in sorted(pot_raw.items())}
    try:
        fmap = dynamics.make_map(map_name, **mp)
        phi = potentials.make_potential(pot_name, **pp)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    header = {"map": map_name, "map_params": mp, "potential": pot_name, "potential_params": pp}
    return fmap, phi, header


def _dump_matrix(args, disc, name: str) -> None:
    if args.dump_matrix and args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        sp.save_npz(Path(args.out_dir) / f"{name}_matrix.npz", disc.matrix)


def cmd_pressure(args) -> dict:
    fmap, phi, header = _system(args)
    disc, sol = solve(fmap, phi, args.k, tol=args.tol)
    _dump_matrix(args, disc, "pressure")
    lo, hi = spectral_bounds(disc, holder_bracket(phi))
    out = {**header, "k": args.k, "tol": args.tol, "pressure": sol.pressure, "lambda": sol.lam,
           "residual": sol.residual, "iterations": sol.iterations, "primitive": sol.primitive,
           "lambda_bounds": [lo, hi]}
    _write(args.out_dir, "pressure.json", _dumps(out))
    return out


def cmd_equilibrium(args) -> dict:
    fmap, phi, header = _system(args)
    disc, sol = solve(fmap, phi, args.k, tol=args.tol)
    _dump_matrix(args, disc, "equilibrium")
    ent = entropy_from_identity(sol, phi, fmap.degree)
    edges = disc.edges
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["cell", "lo", "hi", "h", "nu", "mu"])
    for i in range(disc.k):
        w.writerow([i, repr(float(edges[i])), repr(float(edges[i + 1])), repr(float(sol.h[i])),
                    repr(float(sol.nu[i])), repr(float(sol.mu[i]))])
    _write(args.out_dir, "equilibrium.csv", buf.getvalue())
    cen = disc.centers
    out = {**header, "k": args.k, "pressure": sol.pressure, "lambda": sol.lam, "residual": sol.residual,
           "entropy": ent.h, "entropy_admissible": ent.admissible, "mean": float(sol.mu @ cen),
           "integral_phi": float(sol.mu @ phi(cen))}
    _write(args.out_dir, "equilibrium.json", _dumps(out))
    return out


def cmd_hyptimes(args) -> dict:
    fmap, _, header = _system(args)
    x = float(np.random.default_rng(args.seed).random()) if args.x is None else args.x
    c = estimate_c(fmap, seed=args.seed) if args.c is None else args.c
    data = expansion_data(fmap, x, args.n, c)
    times = detect_hyperbolic_times(data, args.ht_convention)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["n"])
    w.writerows([[int(t)] for t in times])
    _write(args.out_dir, "hyptimes.csv", buf.getvalue())
    out = {"map": header["map"], "map_params": header["map_params"], "x": x, "n": args.n, "c": c,
           "convention": args.ht_convention, "count": int(times.size),
           "first": [int(t) for t in times[:20]], "density": hyperbolic_density(data, convention=args.ht_convention),
           "pliss_floor": pliss_density_floor(data), "statistic": nue_statistic(data, args.n)}
    _write(args.out_dir, "hyptimes.json", _dumps(out))
    return out


def cmd_certify(args) -> dict:
    fmap, phi, header = _system(args)
    c = estimate_c(fmap, seed=args.seed) if args.c is None else args.c
    cert = certify_hyperbolic(fmap, phi, c, k=args.k, delta=args.delta, N=args.N, N_max=args.N_max)
    out = cert.to_dict()
    out["params"].update(header)
    _write(args.out_dir, "certify.json", _dumps(out))
    return out


def cmd_skew(args) -> dict:
    sys_ = make_skew(args.preset, lambda_c=args.lambda_c)
    phi = PRODUCT_POTENTIAL_PRESETS["cos_plus_y"](args.amplitude, args.fiber_weight)
    rep = skew_pressure_check(sys_, phi, args.k, args.k_f, burn_in=args.burn_in, seed=args.seed, tol=args.tol)
    out = {"preset": args.preset, "lambda_c": args.lambda_c, "amplitude": args.amplitude,
           "fiber_weight": args.fiber_weight, **rep.to_dict()}
    _write(args.out_dir, "skew.json", _dumps(out))
    return out


def cmd_sweep(args) -> dict:
    if args.config:
        cfg = SweepConfig.from_file(args.config)
    else:
        cfg = SWEEP_PRESETS[args.preset]()
    d = cfg.to_dict()
    if args.k_given:
        d["k"] = args.k
    if args.tol_given:
        d["tol"] = args.tol
    if args.certify_all:
        d["certify"] = "all"
    if args.workers is not None:
        d["workers"] = args.workers
    cfg = SweepConfig(**d)
    res = run_sweep(cfg)
    paths = emit(res, args.out_dir or ".", cfg.stem)
    failed = [r["t"] for r in res.records if r["error"]]
    return {"name": cfg.name, "points": len(res.records), "failed": failed,
            "outputs": {k: str(v) for k, v in sorted(paths.items())}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermoform", description=__doc__, allow_abbrev=False)
    p.add_argument("--k", type=int, default=None, help="Ulam cells (default 1024)")
    p.add_argument("--tol", type=float, default=None, help="power-iteration tolerance (default 1e-12)")
    p.add_argument("--seed", type=int, default=0, help="seed for probe sampling")
    p.add_argument("--out-dir", default=None, help="directory for CSV/JSON/SVG outputs")
    p.add_argument("--config", default=None, help="INI file with [map], [potential], [sweep] sections")
    p.add_argument("--dump-matrix", action="store_true", help="save the Ulam matrix as .npz in --out-dir")
    p.add_argument("--ht-convention", choices=CONVENTIONS, default="inclusive")
    p.add_argument("--certify-all", action="store_true", help="certify every sweep point, not only endpoints")

    system = argparse.ArgumentParser(add_help=False)
    system.add_argument("--map", choices=sorted(dynamics.MAP_PRESETS), default=None)
    system.add_argument("--map-param", type=_kv, action="append", metavar="KEY=VALUE")
    system.add_argument("--potential", choices=sorted(potentials.POTENTIAL_PRESETS), default=None)
    system.add_argument("--pot-param", type=_kv, action="append", metavar="KEY=VALUE")

    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("pressure", parents=[system], help="pressure via the Ulam operator").set_defaults(func=cmd_pressure)
    sub.add_parser("equilibrium", parents=[system], help="eigendata and equilibrium weights"
                   ).set_defaults(func=cmd_equilibrium)
    ht = sub.add_parser("hyptimes", parents=[system], help="hyperbolic times along one orbit")
    ht.add_argument("--x", type=float, default=None)
    ht.add_argument("--n", type=int, default=1000)
    ht.add_argument("--c", type=float, default=None)
    ht.set_defaults(func=cmd_hyptimes)
    ce = sub.add_parser("certify", parents=[system], help="c-hyperbolicity certificate")
    ce.add_argument("--c", type=float, default=None)
    ce.add_argument("--delta", type=float, default=2.0 ** -5)
    ce.add_argument("--N", type=int, default=6)
    ce.add_argument("--N-max", dest="N_max", type=int, default=12)
    ce.set_defaults(func=cmd_certify)
    sk = sub.add_parser("skew", help="pressure reduction for a contracting skew product")
    sk.add_argument("--preset", choices=sorted(SKEW_PRESETS), default="linear_fiber")
    sk.add_argument("--lambda-c", type=float, default=0.3)
    sk.add_argument("--amplitude", type=float, default=0.2)
    sk.add_argument("--fiber-weight", type=float, default=0.2)
    sk.add_argument("--k-f", type=int, default=None)
    sk.add_argument("--burn-in", type=int, default=40)
    sk.set_defaults(func=cmd_skew)
    sw = sub.add_parser("sweep", help="parameter sweep with CSV/JSON/SVG output")
    sw.add_argument("--preset", choices=sorted(SWEEP_PRESETS), default="cosine_family")
    sw.add_argument("--workers", type=int, default=None)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.k_given = args.k is not None
    args.tol_given = args.tol is not None
    args.k = 1024 if args.k is None else args.k
    args.tol = 1e-12 if args.tol is None else args.tol
    try:
        out = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ThermoformError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(_dumps(out))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
