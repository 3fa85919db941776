"""Self-checks of the numerical infrastructure and the algebraic identities.

Each check returns a :class:`Check` with the measured value and its
tolerance.  ``run_suite`` runs all of them; the ``verify`` subcommand and the
test suite both call it.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .curvature import average_scalar, scalar_curvature
from .experiments import forcing_corpus
from .flow import DIAGNOSTIC_COLUMNS, DiagnosticsRow, forcing, forcing_expanded, product_identity_residual
from .formats import SnapshotHeader, read_csv, read_snapshot, write_csv, write_snapshot
from .lattice import TorusLattice, forward_transform, inverse_transform
from .metric import ReferenceGeometry, assemble_metric
from .semigroup import apply_generator, build_symbol, duhamel_phi1, semigroup_apply

__all__ = ["Check", "run_suite", "CHECKS"]


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}, {self.seconds:.2f} s)"


def _rel(a, b) -> float:
    scale = float(np.max(np.abs(b)))
    return float(np.max(np.abs(a - b))) / (scale if scale > 0 else 1.0)


def _random_field(lat: TorusLattice, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(lat.shape)


def check_fft_roundtrip(rng) -> float:
    worst = 0.0
    for lat in (TorusLattice(1, 64), TorusLattice(2, 16)):
        f = _random_field(lat, rng)
        worst = max(worst, _rel(inverse_transform(lat, forward_transform(lat, f)), f))
    return worst


def check_parseval(rng) -> float:
    worst = 0.0
    for lat in (TorusLattice(1, 64, 2.0), TorusLattice(2, 16)):
        f = _random_field(lat, rng)
        c = forward_transform(lat, f)
        lhs = float(np.sum(f * f)) * lat.cell_volume
        rhs = float(np.sum(np.abs(c) ** 2)) * lat.L ** lat.real_dim
        worst = max(worst, abs(lhs - rhs) / lhs)
    return worst


def check_semigroup_law(rng) -> float:
    lat = TorusLattice(1, 64)
    symbol = build_symbol(lat)
    # smooth data so the composed operators are not dominated by roundoff
    x = lat.mode((1, 0), 1.0) + 0.3 * lat.mode((2, 1), 1.0, 0.4) + 0.1 * lat.mode((0, 3), 1.0, 1.1)
    t, s = 2e-3, 5e-3
    return _rel(semigroup_apply(symbol, semigroup_apply(symbol, x, t), s), semigroup_apply(symbol, x, t + s))


def check_duhamel_simpson(rng, nodes: int = 4001) -> float:
    """``phi1`` weights against composite Simpson quadrature of the Duhamel integral."""
    lat = TorusLattice(1, 16)
    symbol = build_symbol(lat)
    f = _random_field(lat, rng)
    tau = 1e-5
    s = np.linspace(0.0, tau, nodes)
    lam, inv = np.unique(symbol.lam, return_inverse=True)
    weights = simpson(np.exp(-(tau - s)[:, None] * lam[None, :]), x=s, axis=0)
    quad = inverse_transform(lat, forward_transform(lat, f) * weights[inv].reshape(lat.shape))
    return _rel(duhamel_phi1(symbol, f, tau), quad)


def check_dual_forcing(seed: int) -> float:
    worst = 0.0
    for lat, phi in forcing_corpus(seed):
        ref = ReferenceGeometry(lat)
        rbar = average_scalar(ref.metric())
        direct = forcing(ref, phi, build_symbol(lat), rbar)
        expanded = forcing_expanded(ref, phi, rbar)
        worst = max(worst, float(np.linalg.norm(direct - expanded) / np.linalg.norm(direct)))
    return worst


def _identity(seed: int, n: int) -> float:
    worst = 0.0
    for lat, phi in forcing_corpus(seed):
        if lat.n == n:
            worst = max(worst, product_identity_residual(ReferenceGeometry(lat), phi))
    return worst


def check_splitting(seed: int) -> float:
    worst = 0.0
    for lat, phi in forcing_corpus(seed)[::5]:
        ref = ReferenceGeometry(lat)
        symbol = build_symbol(lat)
        rbar = average_scalar(ref.metric())
        lhs = -apply_generator(symbol, phi) + forcing(ref, phi, symbol, rbar)
        rhs = scalar_curvature(assemble_metric(ref, phi)) - rbar
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def check_snapshot_roundtrip(rng) -> float:
    bad = 0
    with tempfile.TemporaryDirectory() as tmp:
        for n, N in ((1, 16), (2, 8)):
            f = rng.standard_normal((N,) * (2 * n))
            f.flat[0] = -0.0
            f.flat[1] = 5e-324
            path = Path(tmp) / f"snap{n}.cgrd"
            write_snapshot(path, f, SnapshotHeader(n, N, 1.0 / 3.0, t=0.1, field_name="phi"))
            g, h = read_snapshot(path)
            bad += int(f.tobytes() != g.tobytes() or h.L != 1.0 / 3.0 or h.t != 0.1)
    return float(bad)


def check_csv_roundtrip(rng) -> float:
    vals = rng.standard_normal((4, len(DIAGNOSTIC_COLUMNS))) * 10.0 ** rng.integers(-300, 300, (4, len(DIAGNOSTIC_COLUMNS)))
    rows = []
    for v in vals:
        d = dict(zip(DIAGNOSTIC_COLUMNS, map(float, v)))
        d["picard_iters"] = int(abs(v[12]) % 50)
        rows.append(DiagnosticsRow(**d))
    bad = 0
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "d.csv"
        write_csv(path, rows)
        header, back = read_csv(path)
        bad += int(tuple(header) != DIAGNOSTIC_COLUMNS)
        for r, b in zip(rows, back):
            for x, y in zip(r.values(), b):
                bad += int(np.float64(x).tobytes() != np.float64(y).tobytes())
    return float(bad)


# name -> (function, tolerance, uses seed instead of rng)
CHECKS: dict[str, tuple[Callable, float, bool]] = {
    "fft_roundtrip": (check_fft_roundtrip, 1e-14, False),
    "parseval": (check_parseval, 1e-13, False),
    "semigroup_law": (check_semigroup_law, 1e-13, False),
    "duhamel_vs_simpson": (check_duhamel_simpson, 1e-10, False),
    "splitting_identity": (check_splitting, 1e-12, True),
    "dual_forcing": (check_dual_forcing, 1e-6, True),
    "product_identity_n1": (lambda seed: _identity(seed, 1), 1e-9, True),
    "product_identity_n2": (lambda seed: _identity(seed, 2), 1e-8, True),
    "snapshot_roundtrip": (check_snapshot_roundtrip, 0.0, False),
    "csv_roundtrip": (check_csv_roundtrip, 0.0, False),
}


def run_suite(seed: int = 20240601, report: Callable[[str], None] | None = None) -> list[Check]:
    out = []
    for name, (fn, tol, by_seed) in CHECKS.items():
        start = time.perf_counter()
        value = fn(seed) if by_seed else fn(np.random.default_rng(seed))
        chk = Check(name, float(value) if math.isfinite(value) else math.inf, tol, time.perf_counter() - start)
        out.append(chk)
        if report is not None:
            report(chk.line())
    return out
