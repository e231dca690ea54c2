import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoform import dynamics, potentials
from thermoform.errors import ConfigError, FiberDependence
from thermoform.potentials import ProductPotential
from thermoform.skew_product import (
    SkewSystem,
    bar_phi,
    cos_plus_y,
    default_depth,
    evaluate_skew,
    homology_residual,
    induced_base_potential,
    lift_along,
    lift_measure,
    linear_fiber,
    make_skew,
    sample_pasts,
    skew_pressure,
    skew_pressure_check,
    tail_bound,
    two_piece_fiber,
    u_truncated,
)
from thermoform.transfer_operator import pressure

from conftest import LOG2

# sum_{j<10} 0.3^j = (1 - 0.3^10) / 0.7
GEOMETRIC_10 = 1.428562993


def fiber_only(w=1.0):
    return ProductPotential(lambda x, y: w * np.asarray(y) + 0.0 * np.asarray(x), 1.0, "y")


def base_only(amp=0.2):
    return ProductPotential(lambda x, y: amp * np.cos(2 * np.pi * np.asarray(x)) + 0.0 * np.asarray(y), 1.0, "cos")


def test_evaluate_skew_examples():
    sys_ = linear_fiber(0.3)
    assert evaluate_skew(sys_, (0.25, 1.0)) == pytest.approx((0.5, 0.3))
    x, y = evaluate_skew(sys_, (np.array([0.1, 0.7]), np.zeros(2)))
    assert np.allclose(x, [0.2, 0.4]) and np.all(y == 0.0)


def test_rejects_weak_contraction():
    g = lambda x, y: 0.3 * y + 0.1 * np.sin(2 * np.pi * x) * y * (1 - y)
    with pytest.raises(ConfigError):
        SkewSystem(dynamics.doubling(), g, 0.3)
    SkewSystem(dynamics.doubling(), g, 0.45)


def test_rejects_moving_fixed_point():
    with pytest.raises(ConfigError):
        SkewSystem(dynamics.doubling(), lambda x, y: 0.3 * y + 0.1 * x, 0.3)
    with pytest.raises(ConfigError):
        SkewSystem(dynamics.doubling(), lambda x, y: 0.3 * y, 1.0)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        make_skew("nope")
    with pytest.raises(ConfigError):
        two_piece_fiber(0.3, wobble=0.2)


def test_u_truncated_examples():
    sys_ = linear_fiber(0.3)
    val, data = u_truncated(sys_, fiber_only(), (0.123, 1.0), J=10)
    assert val == pytest.approx(GEOMETRIC_10, abs=1e-15)
    assert data.tail_bound == pytest.approx(0.3 ** 10 / 0.7, rel=1e-6)
    assert u_truncated(sys_, base_only(), (0.3, 0.8), J=7)[0] == 0.0
    assert u_truncated(sys_, fiber_only(), (0.3, 0.0), J=7)[0] == 0.0
    with pytest.raises(ValueError):
        u_truncated(sys_, fiber_only(), (0.3, 0.5), J=0)


def test_tail_bound_and_depth():
    J = default_depth(0.2, 0.3, 1.0)
    assert tail_bound(0.2, 0.3, 1.0, J) <= 1e-8 < tail_bound(0.2, 0.3, 1.0, J - 1)
    b = [tail_bound(1.0, 0.5, 0.5, j) for j in range(1, 10)]
    assert np.allclose(np.array(b[1:]) / np.array(b[:-1]), 0.5 ** 0.5)


def test_bar_phi_and_induced_potential():
    sys_ = linear_fiber(0.3)
    bp = bar_phi(cos_plus_y(1.0, 1.0), sys_)
    xs = np.linspace(0, 1, 50)
    for y in (0.0, 0.4, 1.0):
        assert np.array_equal(bp(xs, y), np.cos(2 * np.pi * xs))
    base = induced_base_potential(bp, 0.0, 1.0)
    assert np.array_equal(base(xs), np.cos(2 * np.pi * xs))
    const = induced_base_potential(bar_phi(ProductPotential(lambda x, y: 0 * x + 0 * y + 0.7), sys_))
    assert np.all(const(xs) == 0.7)
    with pytest.raises(FiberDependence):
        induced_base_potential(cos_plus_y(1.0, 1.0), 0.0, 1.0)


def test_homology_residual_within_tail():
    sys_ = linear_fiber(0.3)
    pts = np.random.default_rng(3).random((1000, 2))
    resid, data = homology_residual(sys_, cos_plus_y(0.2, 0.2), pts)
    assert resid <= 2 * data.tail_bound
    r5, _ = homology_residual(sys_, cos_plus_y(0.2, 0.2), pts, J=5)
    r10, _ = homology_residual(sys_, cos_plus_y(0.2, 0.2), pts, J=10)
    assert r10 < r5 * 0.3 ** 4


def test_lift_zero_section():
    pts = lift_measure(linear_fiber(0.3), np.random.default_rng(0).random(200), 20)
    assert np.all(pts[:, 1] == 0.0)


def test_lift_affine_matches_series():
    # y0 = 0 is not fixed for this g, so construct without the fixed-fiber requirement
    sys_ = SkewSystem(dynamics.doubling(), lambda x, y: 0.3 * y + 0.35 * x, 0.3, require_fixed_fiber=False)
    xs = np.random.default_rng(1).random(300)
    pts, pasts = lift_measure(sys_, xs, 40, seed=4, return_pasts=True)
    oracle = sum(0.3 ** j * 0.35 * pasts[:, j] for j in range(40))
    assert np.max(np.abs(pts[:, 1] - oracle)) <= 0.3 ** 40 / 0.7 + 1e-15
    assert np.array_equal(pts[:, 0], xs)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), burn=st.integers(5, 40))
def test_independent_reconstructions_agree(seed, burn):
    sys_ = two_piece_fiber(0.3)
    xs = np.random.default_rng(seed).random(64)
    pasts = sample_pasts(sys_.base, xs, burn, np.random.default_rng(seed + 1))
    a = lift_along(sys_, xs, pasts, start=0.0)
    b = lift_along(sys_, xs, pasts, start=0.4)
    assert np.all(np.abs(a[:, 1] - b[:, 1]) <= 2 * 0.3 ** burn)


def test_pasts_are_preimages():
    fmap = dynamics.intermittent(0.5)
    xs = np.random.default_rng(2).random(50)
    pasts = sample_pasts(fmap, xs, 6, np.random.default_rng(0))
    chain = np.column_stack([xs, pasts])
    for d in range(6):
        assert np.allclose(dynamics.evaluate(fmap, chain[:, d + 1]), chain[:, d], atol=1e-10)


def test_skew_pressure_zero_potential():
    zero = ProductPotential(lambda x, y: 0.0 * np.asarray(x) * np.asarray(y))
    assert abs(skew_pressure(linear_fiber(0.3), zero, 256, 16) - LOG2) <= 1e-6


def test_skew_pressure_fiber_independent():
    p = skew_pressure(linear_fiber(0.3), base_only(), 1024, 64)
    assert abs(p - pressure(dynamics.doubling(), potentials.cosine(0.2), 1024)) <= 1e-3


def test_skew_pressure_check_report():
    rep = skew_pressure_check(linear_fiber(0.3), cos_plus_y(0.2, 0.2), 1024, 64)
    assert rep.diff <= 2e-3
    assert rep.homology_residual_max <= 2 * rep.tail_bound
    assert rep.integral_gap < 0.05
    d = rep.to_dict()
    assert d["k_f"] == 64 and d["J"] == rep.J


def test_refinement_monotone():
    phi = cos_plus_y(0.2, 0.2)
    sys_ = linear_fiber(0.3)
    base = pressure(dynamics.doubling(), potentials.cosine(0.2), 2048)
    diffs = [abs(skew_pressure(sys_, phi, k, kf) - base) for k, kf in ((512, 32), (1024, 64), (2048, 128))]
    assert diffs[0] > diffs[1] > diffs[2]


def test_two_piece_takes_max():
    rep = skew_pressure_check(two_piece_fiber(0.3), cos_plus_y(0.2, 0.2), 512, 32)
    pieces = rep.extra["P_base_pieces"]
    assert len(pieces) == 2 and rep.P_base == max(pieces)
    assert rep.diff <= 5e-3
