import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoform import dynamics, potentials
from thermoform.errors import ConfigError, ShapeMismatch
from thermoform.sweep import (
    ParamExpr,
    SweepConfig,
    SweepResult,
    cosine_family,
    emit,
    entropy_from_identity,
    fourier_coefficients,
    run_sweep,
    to_csv,
    weak_star_distance,
)
from thermoform.transfer_operator import solve

from conftest import LOG2

# -(1/4) log(1/4) - (3/4) log(3/4)
BERNOULLI_QUARTER_ENTROPY = 0.562335144618808350


def small_cosine(step=0.1, k=256, **kw):
    return cosine_family(step=step, k=k, certify="none", **kw)


def test_param_expr():
    assert ParamExpr("3").evaluate(0.7) == 3 and isinstance(ParamExpr("3").evaluate(0), int)
    assert ParamExpr("0.25").evaluate(0.7) == 0.25
    assert ParamExpr("t").evaluate(0.3) == 0.3
    assert ParamExpr("2*t + 0.5").evaluate(0.25) == pytest.approx(1.0)
    assert ParamExpr("0.5*t-0.1").evaluate(1.0) == pytest.approx(0.4)
    assert ParamExpr("0, 1.5").evaluate(0.0) == [0.0, 1.5]
    with pytest.raises(ConfigError):
        ParamExpr("t**2")


@pytest.mark.parametrize("grid", [(), (0.0, 0.0), (0.2, 0.1)])
def test_config_rejects_bad_grid(grid):
    with pytest.raises(ConfigError):
        SweepConfig("doubling", "cosine", grid)


def test_config_rejects_bad_fields():
    with pytest.raises(ConfigError):
        SweepConfig("doubling", "cosine", (0.0,), k=1)
    with pytest.raises(ConfigError):
        SweepConfig("nope", "cosine", (0.0,))
    with pytest.raises(ConfigError):
        SweepConfig("doubling", "cosine", (0.0,), metric_modes=("l2",))
    with pytest.raises(ConfigError):
        SweepConfig("doubling", "cosine", (0.0,), certify="sometimes")


def test_from_ini_range_and_list():
    text = """
[map]
name = intermittent
alpha = t

[potential]
name = constant

[sweep]
t_start = 0.1
t_stop = 0.5
t_step = 0.1
k = 128
metrics = fourier
"""
    cfg = SweepConfig.from_ini(text)
    assert cfg.t_grid == (0.1, 0.2, 0.3, 0.4, 0.5)
    assert cfg.k == 128 and cfg.metric_modes == ("fourier",) and cfg.map_varies
    cfg2 = SweepConfig.from_ini(text.replace("t_start = 0.1\nt_stop = 0.5\nt_step = 0.1", "t_grid = 0.1, 0.3"))
    assert cfg2.t_grid == (0.1, 0.3)


@pytest.mark.parametrize("bad", ["[map]\nname=doubling\n[potential]\nname=cosine\n",
                                 "[map]\nname=doubling\n[potential]\nname=cosine\n[sweep]\nt_grid=0\nspeed=3\n",
                                 "[map]\n[potential]\nname=cosine\n[sweep]\nt_grid=0\n",
                                 "[map]\nname=doubling\n[potential]\nname=cosine\n[sweep]\nk=4\n",
                                 "not an ini file"])
def test_from_ini_errors(bad):
    with pytest.raises(ConfigError):
        SweepConfig.from_ini(bad)


def test_from_file_missing(tmp_path):
    with pytest.raises(ConfigError):
        SweepConfig.from_file(tmp_path / "absent.ini")


def test_weak_star_examples():
    k = 64
    uniform = np.full(k, 1.0 / k)
    assert weak_star_distance(uniform, uniform, "wasserstein") == 0.0
    assert weak_star_distance(uniform, uniform, "fourier") == 0.0
    assert weak_star_distance([0.25, 0.75], [0.5, 0.5], "wasserstein") == pytest.approx(0.125, abs=1e-15)
    # a point mass at 0 is represented by the first cell, so W1 -> 1/2 as k grows
    point = np.zeros(k)
    point[0] = 1.0
    assert weak_star_distance(uniform, point, "wasserstein") == pytest.approx(0.5 * (1 - 1 / k), abs=1e-15)
    with pytest.raises(ShapeMismatch):
        weak_star_distance(uniform, uniform[:-1])
    with pytest.raises(ValueError):
        weak_star_distance(uniform, uniform, "l2")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(2, 64))
def test_w1_matches_quadrature(seed, k):
    r = np.random.default_rng(seed)
    a, b = r.random(k), r.random(k)
    a, b = a / a.sum(), b / b.sum()
    xs = (np.arange(20000 * k // k) + 0.5) / 20000
    cdf = lambda w: np.interp(xs, np.linspace(0, 1, k + 1), np.concatenate([[0.0], np.cumsum(w)]))
    assert weak_star_distance(a, b) == pytest.approx(np.mean(np.abs(cdf(a) - cdf(b))), abs=1e-6)
    assert weak_star_distance(a, b) == pytest.approx(weak_star_distance(b, a), abs=1e-15)


def test_fourier_of_uniform_vanishes():
    assert np.max(np.abs(fourier_coefficients(np.full(40, 1 / 40)))) < 1e-12


def test_entropy_examples(doubling):
    _, sol = solve(doubling, potentials.constant(0.0), 64)
    e = entropy_from_identity(sol, potentials.constant(0.0))
    assert e.h == pytest.approx(LOG2, abs=1e-12) and e.admissible
    _, sol = solve(doubling, potentials.constant(1.3), 64)
    assert entropy_from_identity(sol, potentials.constant(1.3)).h == pytest.approx(LOG2, abs=1e-12)
    phi = potentials.halves(0.0, math.log(3))
    _, sol = solve(doubling, phi, 64)
    assert entropy_from_identity(sol, phi).h == pytest.approx(BERNOULLI_QUARTER_ENTROPY, abs=1e-10)


def test_cosine_sweep_properties():
    res = run_sweep(small_cosine())
    assert [r["t"] for r in res.records] == list(small_cosine().t_grid)
    assert res.records[0]["pressure"] == pytest.approx(LOG2, abs=1e-12)
    for p in res.pairs:
        assert p["dP"] <= p["phi_gap"] + 2e-12
    assert all(r["admissible"] for r in res.records)


def test_constant_family_identical_records():
    cfg = SweepConfig("doubling", "cosine", (0.0, 1.0, 2.0), {}, {"amplitude": "0.3"}, k=128, certify="none")
    res = run_sweep(cfg)
    strip = [{k: v for k, v in r.items() if k != "t"} for r in res.records]
    assert strip[0] == strip[1] == strip[2]
    assert all(p["dP"] == 0.0 and p["wasserstein"] == 0.0 for p in res.pairs)


def test_failures_are_recorded_in_row():
    cfg = SweepConfig("intermittent", "constant", (0.5, 1.5), {"alpha": "t"}, {}, k=128, certify="none")
    res = run_sweep(cfg)
    assert res.records[0]["error"] == "" and res.records[1]["error"]
    assert math.isnan(res.pairs[0]["wasserstein"])


def test_csv_counts_and_roundtrip(tmp_path):
    cfg = cosine_family(step=0.1, k=128, certify="endpoints")
    res = run_sweep(cfg)
    paths = emit(res, tmp_path, "s")
    rows = list(csv.reader(io.StringIO(paths["csv"].read_text())))
    kinds = [r[0] for r in rows[1:]]
    assert kinds.count("record") == 6 and kinds.count("pair") == 5
    assert SweepResult.from_json(paths["json"].read_text()) == res
    assert json.loads(paths["json"].read_text())["records"][0]["margin"] == "inf"
    for key in ("svg_pressure", "svg_weakstar"):
        assert paths[key].read_text().startswith("<?xml")
    assert to_csv(res).encode() == paths["csv"].read_bytes()


def test_sweep_deterministic_and_parallel(tmp_path):
    a = run_sweep(small_cosine())
    b = run_sweep(small_cosine(workers=2))
    assert to_csv(a) == to_csv(b)
    b.config["workers"] = 1
    assert a.to_json() == b.to_json()


def test_emit_surfaces_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit(run_sweep(small_cosine(step=0.25)), blocker / "sub")
