import math

import numpy as np
import pytest

from calabi_flow.curvature import (
    average_scalar,
    calabi_energy,
    curvature_report,
    ricci,
    riemann_norm,
    scalar_curvature,
)
from calabi_flow.lattice import TorusLattice
from calabi_flow.metric import ReferenceGeometry, assemble_metric


def cosine_metric(a: float, N: int = 64):
    lat = TorusLattice(1, N)
    return lat, assemble_metric(ReferenceGeometry(lat), lat.mode((1, 0), a))


def test_flat_metric_has_zero_curvature():
    lat = TorusLattice(2, 8)
    g = ReferenceGeometry(lat, np.array([[2.0, 0.3 + 0.1j], [0.3 - 0.1j, 1.0]])).metric()
    assert np.max(np.abs(scalar_curvature(g))) < 1e-13
    assert np.max(riemann_norm(g)) < 1e-13


def test_scalar_curvature_analytic_n1():
    # g = 1 - a pi^2 cos(2 pi x); R = -(g'' g - g'^2) / (4 g^3)
    a = 0.05
    lat, g = cosine_metric(a)
    x = lat.coordinates()[0]
    gx = 1 - a * math.pi**2 * np.cos(2 * math.pi * x)
    d1 = 2 * a * math.pi**3 * np.sin(2 * math.pi * x)
    d2 = 4 * a * math.pi**4 * np.cos(2 * math.pi * x)
    expected = -(d2 * gx - d1**2) / (4 * gx**3)
    R = scalar_curvature(g)
    assert np.max(np.abs(R - expected)) < 1e-8 * np.max(np.abs(expected))


def test_ricci_equals_scalar_times_metric_n1():
    _, g = cosine_metric(0.03)
    ric = ricci(g).values[..., 0, 0]
    assert np.max(np.abs(ric - scalar_curvature(g) * g.values[..., 0, 0])) < 1e-10


def test_product_metric_n2():
    a1, a2 = 0.04, 0.01
    lat = TorusLattice(2, 16)
    lat1 = TorusLattice(1, 16)
    phi = lat.mode((1, 0, 0, 0), a1) + lat.mode((0, 0, 0, 2), a2, 0.3)
    g = assemble_metric(ReferenceGeometry(lat), phi)
    R1 = scalar_curvature(assemble_metric(ReferenceGeometry(lat1), lat1.mode((1, 0), a1)))
    R2 = scalar_curvature(assemble_metric(ReferenceGeometry(lat1), lat1.mode((0, 2), a2, 0.3)))
    expected = R1[:, :, None, None] + R2[None, None, :, :]
    R = scalar_curvature(g)
    assert np.max(np.abs(R - expected)) < 1e-9
    # each factor's |Rm| comes from the same discretisation, so this is exact
    n1 = riemann_norm(assemble_metric(ReferenceGeometry(lat), lat.mode((1, 0, 0, 0), a1)))
    n2 = riemann_norm(assemble_metric(ReferenceGeometry(lat), lat.mode((0, 0, 0, 2), a2, 0.3)))
    rm2 = n1**2 + n2**2
    assert np.max(np.abs(riemann_norm(g) ** 2 - rm2)) < 1e-12 * np.max(rm2)


def test_riemann_norm_equals_abs_scalar_n1():
    _, g = cosine_metric(0.05)
    R = scalar_curvature(g)
    mask = np.abs(R) > 1e-3 * np.max(np.abs(R))
    assert np.max(np.abs(riemann_norm(g)[mask] / np.abs(R[mask]) - 1)) < 1e-10


@pytest.mark.parametrize("n,N", [(1, 64), (2, 16)])
def test_gauss_bonnet_average_vanishes(n, N):
    lat = TorusLattice(n, N)
    rng = np.random.default_rng(5)
    phi = sum(lat.mode(tuple(rng.integers(-1, 2, 2 * n)), 0.01, rng.uniform(0, 6)) for _ in range(4))
    phi *= 0.004 / 0.01 if n == 2 else 1.0
    g = assemble_metric(ReferenceGeometry(lat), phi)
    assert abs(average_scalar(g)) < 1e-11


def test_scaling_of_flat_metric():
    # g -> c g (phi -> c phi, g0 -> c g0) sends R -> R / c
    lat = TorusLattice(1, 32)
    phi = lat.mode((1, 1), 0.02)
    R = scalar_curvature(assemble_metric(ReferenceGeometry(lat), phi))
    Rc = scalar_curvature(assemble_metric(ReferenceGeometry(lat, np.array([[3.0]])), 3.0 * phi))
    assert np.max(np.abs(Rc - R / 3.0)) < 1e-11 * np.max(np.abs(R))


@pytest.mark.parametrize("eps", [1e-3, 1e-4])
def test_calabi_energy_small_amplitude(eps):
    # to leading order R = -pi^4 eps cos(2 pi x), so Ca = pi^8 eps^2 / 2
    _, g = cosine_metric(eps)
    ca = calabi_energy(g, 0.0)
    assert ca == pytest.approx(math.pi**8 * eps**2 / 2, rel=30 * eps)


def test_report_bundle():
    _, g = cosine_metric(0.02)
    rep = curvature_report(g)
    assert rep.rbar == pytest.approx(average_scalar(g), abs=1e-15)
    assert rep.calabi_energy == pytest.approx(calabi_energy(g, rep.rbar))
    assert rep.max_riemann == pytest.approx(np.max(np.abs(scalar_curvature(g))), rel=1e-10)
