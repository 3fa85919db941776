import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calabi_flow.lattice import TorusLattice
from calabi_flow.norms import fit_exponential_decay
from calabi_flow.semigroup import (
    SERIES_THRESHOLD,
    apply_generator,
    build_symbol,
    duhamel_phi1,
    phi1_coefficients,
    semigroup_apply,
    smoothing_constant,
)


def test_symbol_values():
    sym = build_symbol(TorusLattice(1, 64))
    assert sym.at((1, 0)) == pytest.approx(math.pi**4, rel=1e-14)
    assert sym.at((0, 1)) == pytest.approx(math.pi**4, rel=1e-14)
    assert sym.at((2, 0)) == pytest.approx(16 * math.pi**4, rel=1e-14)
    assert sym.at((1, 1)) == pytest.approx(4 * math.pi**4, rel=1e-14)
    assert sym.at((-1, 0)) == sym.at((1, 0))
    assert build_symbol(TorusLattice(1, 32, 2 * math.pi)).at((1, 0)) == pytest.approx(1 / 16, rel=1e-14)


def test_symbol_with_anisotropic_g0():
    # g0 = diag(2, 1): sigma picks up the inverse metric coefficient 1/2 in the first direction
    lat = TorusLattice(2, 8)
    sym = build_symbol(lat, np.diag([2.0, 1.0]))
    assert sym.at((1, 0, 0, 0)) == pytest.approx((math.pi**2 / 2) ** 2, rel=1e-14)
    assert sym.at((0, 0, 1, 0)) == pytest.approx(math.pi**4, rel=1e-14)


@pytest.mark.parametrize("n,N", [(1, 16), (2, 8)])
def test_symbol_nonnegative_zero_only_at_zero_and_nyquist(n, N):
    lat = TorusLattice(n, N)
    sym = build_symbol(lat)
    assert np.all(sym.lam >= 0)
    zeros = np.argwhere(sym.lam == 0)
    for idx in zeros:
        # only the zero mode and modes built from 0 and the Nyquist index
        assert all(i in (0, N // 2) for i in idx)
    assert sym.lam[(0,) * lat.real_dim] == 0


def test_semigroup_law_and_identity():
    lat = TorusLattice(1, 32)
    sym = build_symbol(lat)
    x = lat.mode((1, 0)) + 0.5 * lat.mode((1, 2), 1.0, 0.3)
    assert np.array_equal(semigroup_apply(sym, x, 0.0), x)
    lhs = semigroup_apply(sym, semigroup_apply(sym, x, 1e-3), 2e-3)
    assert np.max(np.abs(lhs - semigroup_apply(sym, x, 3e-3))) < 1e-14


def test_semigroup_on_eigenmode():
    lat = TorusLattice(1, 32)
    sym = build_symbol(lat)
    x = lat.mode((2, 1), 1.0, 0.2)
    t = 1e-3
    assert np.max(np.abs(semigroup_apply(sym, x, t) - math.exp(-t * sym.at((2, 1))) * x)) < 1e-14
    assert np.max(np.abs(apply_generator(sym, x) - sym.at((2, 1)) * x)) < 1e-9 * sym.at((2, 1))


@pytest.mark.parametrize("t", [-1e-3, math.nan, math.inf])
def test_bad_times_raise(t):
    sym = build_symbol(TorusLattice(1, 16))
    with pytest.raises(ValueError):
        semigroup_apply(sym, np.zeros((16, 16)), t)


def test_duhamel_needs_positive_step():
    sym = build_symbol(TorusLattice(1, 16))
    with pytest.raises(ValueError):
        duhamel_phi1(sym, np.zeros((16, 16)), 0.0)


def test_phi1_continuous_across_series_switch():
    tau = 1.0
    below = np.nextafter(SERIES_THRESHOLD, 0.0)
    above = np.nextafter(SERIES_THRESHOLD, 1.0)
    a, b = phi1_coefficients(np.array([below, above]), tau)
    assert abs(a - b) < 1e-15
    # limit at lambda = 0 is tau
    assert phi1_coefficients(np.array([0.0]), 3e-4)[0] == 3e-4


@settings(max_examples=40, deadline=None)
# the oracle itself underflows for subnormal lambda, so those are left out
@given(lam=st.one_of(st.just(0.0), st.floats(1e-300, 1e12)), tau=st.floats(1e-12, 1.0))
def test_phi1_matches_expm1(lam, tau):
    got = phi1_coefficients(np.array([lam]), tau)[0]
    exact = tau if lam == 0 else -math.expm1(-tau * lam) / lam
    assert got == pytest.approx(exact, rel=1e-12)
    assert 0 < got <= tau


def test_duhamel_of_eigenmode():
    lat = TorusLattice(1, 32)
    sym = build_symbol(lat)
    f = lat.mode((1, 0))
    lam, tau = sym.at((1, 0)), 2e-3
    expected = (1 - math.exp(-tau * lam)) / lam * f
    assert np.max(np.abs(duhamel_phi1(sym, f, tau) - expected)) < 1e-15


def test_decay_fit_recovers_symbol():
    lat = TorusLattice(1, 64)
    sym = build_symbol(lat)
    lam = sym.at((1, 0))
    x = lat.mode((1, 0), 1e-4)
    series = []
    for t in np.linspace(0, 4 / lam, 12):
        series.append((t, float(np.max(np.abs(semigroup_apply(sym, x, t))))))
    rate, r2 = fit_exponential_decay(series)
    assert rate == pytest.approx(lam, rel=1e-8)
    assert r2 > 1 - 1e-12


def test_smoothing_constant_single_mode():
    # sup_s s^(1/2) lam exp(-s lam) = sqrt(lam / 2) exp(-1/2) at s = 1 / (2 lam)
    lat = TorusLattice(1, 32)
    sym = build_symbol(lat)
    x = lat.mode((1, 0))
    bound = math.sqrt(sym.at((1, 0)) / 2) * math.exp(-0.5)
    c = smoothing_constant(sym, x)
    assert 0.95 * bound <= c <= bound * (1 + 1e-12)
    fine = smoothing_constant(sym, x, ladder=[1 / (2 * sym.at((1, 0)))])
    assert fine == pytest.approx(bound, rel=1e-10)
