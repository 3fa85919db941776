import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calabi_flow.experiments import interpolation_corpus
from calabi_flow.lattice import TorusLattice, UnsupportedOrderError
from calabi_flow.norms import (
    HolderParams,
    fit_exponential_decay,
    holder_norm,
    holder_seminorm,
    interpolation_ratio,
    weighted_trajectory_norm,
)


def test_constant_field():
    lat = TorusLattice(1, 32)
    f = np.full(lat.shape, -2.5)
    assert holder_seminorm(lat, f) == 0.0
    assert holder_norm(lat, f, 0) == pytest.approx(2.5)
    assert holder_norm(lat, f, 3) == pytest.approx(2.5, abs=1e-12)


def test_seminorm_of_linear_profile_on_short_scales():
    # a sawtooth-free smooth mode: quotient is bounded by Lipschitz * dist^(1 - alpha)
    lat = TorusLattice(1, 64)
    f = lat.mode((1, 0))
    sep = HolderParams().resolved(lat)[1] * lat.spacing
    assert holder_seminorm(lat, f) <= 2 * math.pi * sep**0.5 + 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), c=st.floats(-100, 100))
def test_homogeneity_and_triangle(seed, c):
    lat = TorusLattice(1, 16)
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2,) + lat.shape)
    nf, ng = holder_norm(lat, f, 2), holder_norm(lat, g, 2)
    assert holder_norm(lat, c * f, 2) == pytest.approx(abs(c) * nf, rel=1e-12, abs=1e-300)
    assert holder_norm(lat, f + g, 2) <= (nf + ng) * (1 + 1e-12)


def test_fast_path_equals_exhaustive():
    lat = TorusLattice(1, 32)
    f = np.random.default_rng(2).standard_normal(lat.shape)
    p = HolderParams(pair_stride=1)
    assert holder_seminorm(lat, f, p) == pytest.approx(holder_seminorm(lat, f, p, exhaustive=True), rel=1e-15)
    p = HolderParams(pair_stride=2, max_separation=6)
    assert holder_seminorm(lat, f, p) == pytest.approx(holder_seminorm(lat, f, p, exhaustive=True), rel=1e-15)


def test_fast_path_equals_exhaustive_n2():
    lat = TorusLattice(2, 8)
    f = np.random.default_rng(3).standard_normal(lat.shape)
    assert holder_seminorm(lat, f) == pytest.approx(holder_seminorm(lat, f, exhaustive=True), rel=1e-15)


def test_subsampling_never_exceeds_full_sampling():
    lat = TorusLattice(1, 64)
    f = np.random.default_rng(4).standard_normal(lat.shape)
    full = holder_seminorm(lat, f, HolderParams(pair_stride=1))
    assert holder_seminorm(lat, f, HolderParams(pair_stride=4)) <= full
    assert holder_seminorm(lat, f, HolderParams(pair_stride=1, max_separation=4)) <= full


def test_interpolation_ratio_bounded_on_corpus():
    lat = TorusLattice(1, 32)
    ratios = [interpolation_ratio(lat, f) for f in interpolation_corpus()]
    assert len(ratios) > 0
    assert max(ratios) <= 10.0


def test_interpolation_ratio_zero_field():
    with pytest.raises(ValueError):
        interpolation_ratio(TorusLattice(1, 16), np.zeros((16, 16)))


def test_single_mode_norm_stable_under_refinement():
    coarse, fine = TorusLattice(1, 32), TorusLattice(1, 64)
    a = holder_norm(coarse, coarse.mode((1, 1), 1e-2), 4)
    b = holder_norm(fine, fine.mode((1, 1), 1e-2), 4)
    assert abs(a - b) / b < 0.05


def test_order_out_of_range():
    lat = TorusLattice(1, 16)
    with pytest.raises(UnsupportedOrderError):
        holder_norm(lat, np.zeros(lat.shape), 5)


@pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.0}, {"pair_stride": 0}, {"max_separation": 0}])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        HolderParams(**kw)


def test_fit_exponential_decay_exact():
    t = np.linspace(0, 3, 8)
    rate, r2 = fit_exponential_decay(np.column_stack([t, 5 * np.exp(-1.7 * t)]))
    assert rate == pytest.approx(1.7, rel=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize(
    "series",
    [
        [(0, 1), (1, 0.5), (2, 0.25), (3, 0.125)],
        [(0, 1), (1, 0.5), (2, 0.0), (3, 0.1), (4, 0.05)],
        [(0, 1, 2)] * 6,
    ],
)
def test_fit_exponential_decay_rejects(series):
    with pytest.raises(ValueError):
        fit_exponential_decay(series)


def test_weighted_norm_zero_and_validation():
    lat = TorusLattice(1, 16)
    z = np.zeros(lat.shape)
    res = weighted_trajectory_norm(lat, [0.0, 0.1], [z, z], [z, z])
    assert res.c_meas == 0.0
    assert np.all(res.running_sup == 0.0)
    with pytest.raises(ValueError):
        weighted_trajectory_norm(lat, [], [], [])
    with pytest.raises(ValueError):
        weighted_trajectory_norm(lat, [0.0], [z, z], [z])


def test_weighted_norm_running_sup_monotone():
    lat = TorusLattice(1, 16)
    phis = [lat.mode((1, 0), a) for a in (1e-3, 5e-4, 2e-4, 1e-4)]
    res = weighted_trajectory_norm(lat, [0.0, 1e-3, 2e-3, 3e-3], phis, phis)
    assert np.all(np.diff(res.running_sup) >= 0)
    assert res.weighted[0] == 0.0
    assert res.c_meas == pytest.approx(res.running_sup[-1] / res.holder_2a[0])
