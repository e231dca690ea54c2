import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoform import dynamics, potentials
from thermoform.errors import EmptySubsystem, ReducibleWarning
from thermoform.hyperbolic_times import estimate_c
from thermoform.potentials import small_variation_check
from thermoform.relative_pressure import (
    SFTModel,
    bad_region,
    certify_hyperbolic,
    cover_pressure_estimate,
    orbit_region,
    relative_pressure_complement,
    relative_pressure_subsystem,
    sft_pressure,
)

from conftest import LOG2, LOG4

# log((1 + sqrt 5) / 2) at 30 digits
LOG_GOLDEN = 0.481211825059603447


def quiet(fn, *args):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReducibleWarning)
        return fn(*args)


def test_sft_pressure_examples():
    assert sft_pressure(SFTModel.full_shift(2)) == pytest.approx(LOG2, abs=1e-14)
    assert sft_pressure(SFTModel.full_shift(2, [0.0, math.log(3)])) == pytest.approx(LOG4, abs=1e-14)
    golden = SFTModel(np.array([[1, 1], [1, 0]]), np.zeros(2))
    assert sft_pressure(golden) == pytest.approx(LOG_GOLDEN, abs=1e-14)


def test_sft_depth_two_table():
    # phi depends on the pair (w0, w1); the word matrix is the 4x4 edge matrix
    table = np.array([0.0, 0.5, -0.3, 1.0])
    model = SFTModel(np.ones((2, 2), dtype=int), table, depth=2)
    M = np.exp(table).reshape(2, 2)
    assert sft_pressure(model) == pytest.approx(math.log(max(abs(np.linalg.eigvals(M)))), abs=1e-12)


def test_reducible_warning():
    A = np.array([[1, 1], [0, 1]])
    with pytest.warns(ReducibleWarning):
        assert sft_pressure(SFTModel(A, np.array([0.2, 0.5]))) == pytest.approx(0.5)


def test_model_validation():
    with pytest.raises(ValueError):
        SFTModel(np.array([[2, 0], [0, 1]]), np.zeros(2))
    with pytest.raises(ValueError):
        SFTModel(np.ones((2, 2)), np.array([0.0, np.inf]))
    with pytest.raises(ValueError):
        SFTModel(np.ones((2, 2)), np.zeros(3))


def test_subsystem_examples():
    full2 = SFTModel.full_shift(2)
    assert relative_pressure_subsystem(full2, [0]) == pytest.approx(0.0, abs=1e-14)
    assert relative_pressure_subsystem(full2, [0, 1]) == pytest.approx(LOG2, abs=1e-14)
    m3 = SFTModel.full_shift(3, [0.0, 0.0, math.log(2)])
    sub = relative_pressure_subsystem(m3, [0, 1])
    comp = relative_pressure_complement(m3, [0, 1])
    assert sub == pytest.approx(LOG2, abs=1e-14)
    assert sft_pressure(m3) == pytest.approx(LOG4, abs=1e-14)
    assert max(sub, comp) == pytest.approx(sft_pressure(m3), abs=1e-12)
    with pytest.raises(ValueError):
        relative_pressure_subsystem(full2, [])


def test_empty_subsystem():
    A = np.array([[0, 1], [1, 0]])
    model = SFTModel(A, np.zeros(2))
    assert relative_pressure_subsystem(model, [0]) == -math.inf
    with pytest.raises(EmptySubsystem):
        relative_pressure_subsystem(model, [0], strict=True)


def random_reducible(seed: int) -> tuple[SFTModel, list]:
    """Block upper-triangular 0/1 matrix (two or three diagonal blocks) with a random table."""
    r = np.random.default_rng(seed)
    sizes = r.integers(1, 4, size=r.integers(2, 4))
    q = int(sizes.sum())
    A = np.zeros((q, q), dtype=int)
    start = 0
    for s in sizes:
        block = (r.random((s, s)) < 0.7).astype(int)
        np.fill_diagonal(block, np.maximum(np.diag(block), r.random(s) < 0.5))
        A[start:start + s, start:start + s] = block
        A[start:start + s, start + s:] = (r.random((s, q - start - s)) < 0.4).astype(int)
        start += s
    depth = int(r.integers(1, 3))
    table = r.normal(size=q ** depth)
    allowed = sorted(set(r.choice(q, size=r.integers(1, q + 1), replace=False).tolist()))
    return SFTModel(A, table, depth), allowed


@pytest.mark.parametrize("seed", range(50))
def test_sup_identity(seed):
    model, allowed = random_reducible(seed)
    full = quiet(sft_pressure, model)
    if full == -math.inf:
        pytest.skip("no cycles in this model")
    sub = relative_pressure_subsystem(model, allowed)
    comp = relative_pressure_complement(model, allowed)
    assert max(sub, comp) == pytest.approx(full, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000), shift=st.floats(-1.0, 1.0))
def test_lipschitz_in_potential(seed, shift):
    model, allowed = random_reducible(seed)
    noise = np.random.default_rng(seed + 1).uniform(-abs(shift), abs(shift), model.table.size)
    other = SFTModel(model.A, model.table + noise, model.depth)
    p, q = relative_pressure_subsystem(model, allowed), relative_pressure_subsystem(other, allowed)
    if math.isinf(p):
        assert math.isinf(q)
    else:
        assert abs(p - q) <= np.max(np.abs(noise)) + 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_monotone_in_subsystem(seed):
    model, allowed = random_reducible(seed)
    smaller = allowed[: max(1, len(allowed) // 2)]
    assert relative_pressure_subsystem(model, smaller) <= relative_pressure_subsystem(model, allowed) + 1e-12


def test_cover_examples(doubling):
    zero = potentials.constant(0.0)
    full = cover_pressure_estimate(doubling, zero, lambda x: np.ones(np.shape(x), bool), 2 ** -5, 6)
    assert abs(full - LOG2) <= 0.05
    fixed = cover_pressure_estimate(doubling, zero, orbit_region(doubling, lambda x: x < 2 ** -8), 2 ** -5, 6)
    assert fixed <= 0.05
    sym0 = cover_pressure_estimate(doubling, zero, orbit_region(doubling, lambda x: x < 0.5), 2 ** -5, 6)
    oracle = relative_pressure_subsystem(SFTModel.full_shift(2), [0])
    assert abs(sym0 - oracle) <= 0.05


def test_cover_gamma_grid(doubling):
    zero = potentials.constant(0.0)
    grid = np.linspace(0.0, 1.0, 21)
    est = cover_pressure_estimate(doubling, zero, lambda x: np.ones(np.shape(x), bool), 2 ** -5, 6, gamma_grid=grid)
    assert est == pytest.approx(0.7)


def test_cover_rejects_bad_arguments(doubling):
    with pytest.raises(ValueError):
        cover_pressure_estimate(doubling, potentials.constant(0.0), lambda x: x < 1, 0.0, 6)
    with pytest.raises(ValueError):
        cover_pressure_estimate(doubling, potentials.constant(0.0), lambda x: x < 1, 0.1, 0)


def test_cover_matches_ulam_pressure(doubling):
    from thermoform.transfer_operator import pressure

    phi = potentials.cosine(0.2)
    est = cover_pressure_estimate(doubling, phi, lambda x: np.ones(np.shape(x), bool), 2 ** -5, 6)
    assert abs(est - pressure(doubling, phi, 1024)) < 0.01


def test_certify_doubling(doubling):
    cert = certify_hyperbolic(doubling, potentials.constant(0.0), LOG2 / 2)
    assert cert.P_bad == -math.inf and cert.margin == math.inf and cert.passes
    assert cert.to_dict()["margin"] == "inf"


def test_certify_intermittent(intermittent):
    c = estimate_c(intermittent)
    cert = certify_hyperbolic(intermittent, potentials.constant(0.0), c)
    assert cert.passes and math.isfinite(cert.margin)
    assert cert.zeta == pytest.approx(cert.margin / 2)
    assert cert.params["heuristic"]


def test_bad_region_marks_neutral_point(intermittent):
    reg = bad_region(intermittent, 0.3)
    flags = reg(np.array([1e-6, 0.6]), 20)
    assert flags.tolist() == [True, False]


def test_small_variation_implies_certified():
    fmap = dynamics.abv_linear(3, 1.25)
    c = estimate_c(fmap)
    for amp in (0.05, 0.2):
        phi = potentials.cosine(amp)
        ok, _ = small_variation_check(phi, fmap.degree, 1)
        assert ok
        assert certify_hyperbolic(fmap, phi, c, N=4, N_max=8).passes
