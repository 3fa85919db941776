"""Packaged experiments and seeded test corpora.

Every experiment takes a :class:`~calabi_flow.config.RunConfig` and returns an
:class:`ExperimentResult` whose ``measured`` values carry the evidence for
the verdict.  Thresholds not fixed by the mathematics (fit windows, bands,
refinement tolerance) are calibrated constants of this package and are read
from the ``[experiment]`` config section when present.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product
from typing import Any

import numpy as np

from .config import ModeSpec, RunConfig
from .flow import (
    DIAGNOSTIC_COLUMNS,
    CalabiFlow,
    ContractionFailure,
    DiagnosticsRow,
    FlowStatus,
    PositivityBreakdown,
    StepControls,
    forcing_lipschitz,
    picard_step,
)
from .lattice import TorusLattice, forward_transform
from .metric import ReferenceGeometry, assemble_metric, positivity_check
from .norms import fit_exponential_decay, weighted_trajectory_norm
from .semigroup import build_symbol

__all__ = [
    "ExperimentResult",
    "experiment_linear_spectrum",
    "experiment_stability",
    "experiment_smoothing",
    "experiment_contraction_ladder",
    "experiment_extension_monitor",
    "guard_checks",
    "random_potential",
    "forcing_corpus",
    "interpolation_corpus",
    "smoothing_modes",
    "EXPERIMENTS",
]


@dataclass
class ExperimentResult:
    name: str
    passed: bool
    measured: dict[str, Any] = field(default_factory=dict)
    tolerances: dict[str, Any] = field(default_factory=dict)
    wall_clock: float = 0.0
    status: str = ""
    failures: list[str] = field(default_factory=list)
    rows: list[DiagnosticsRow] = field(default_factory=list)
    table: tuple[tuple[str, ...], list[tuple]] | None = None

    def check(self, ok: bool, message: str) -> bool:
        """Record a failed condition with its measurement."""
        if not ok:
            self.failures.append(message)
            self.passed = False
        return ok

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        head = f"{verdict} {self.name} ({self.wall_clock:.2f} s)"
        if self.status:
            head += f" status={self.status}"
        if self.failures:
            head += ": " + "; ".join(self.failures)
        return head


def _timed(fn):
    def wrapper(cfg: RunConfig, *args, **kw) -> ExperimentResult:
        start = time.perf_counter()
        res = fn(cfg, *args, **kw)
        res.wall_clock = time.perf_counter() - start
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _energy_increase(rows: list[DiagnosticsRow]) -> float:
    """Largest relative step-to-step growth of the Calabi energy (negative when decreasing)."""
    ca = np.array([r.calabi_energy for r in rows])
    if ca.size < 2:
        return 0.0
    return float(np.max(np.diff(ca) / (1.0 + ca[:-1])))


def _volume_drift(rows: list[DiagnosticsRow]) -> float:
    vol = np.array([r.volume for r in rows])
    return float(np.max(np.abs(vol - vol[0])) / vol[0])


# --------------------------------------------------------------------------
# corpora


def random_potential(
    lattice: TorusLattice,
    rng: np.random.Generator,
    kmax: int,
    amplitude: float,
) -> np.ndarray:
    """Band-limited random potential with ``sup |phi| = amplitude``.

    All frequency vectors with components in ``[-kmax, kmax]`` carry a random
    Gaussian weight decaying like ``|k|^-2`` and a uniform phase.
    """
    x = lattice.coordinates()
    out = np.zeros(lattice.shape)
    for freq in product(range(-kmax, kmax + 1), repeat=lattice.real_dim):
        if not any(freq):
            continue
        w = rng.normal() / (1.0 + sum(k * k for k in freq))
        arg = sum(2 * np.pi * k * xi / lattice.L for k, xi in zip(freq, x) if k)
        out += w * np.cos(arg + rng.uniform(0, 2 * np.pi))
    return out * (amplitude / np.max(np.abs(out)))


@lru_cache(maxsize=4)
def forcing_corpus(seed: int = 20240601, count: int = 20) -> tuple[tuple[TorusLattice, np.ndarray], ...]:
    """Half n=1 (N=64, |k_i| <= 2), half n=2 (N=16, |k_i| <= 1), sup amplitudes in [0.002, 0.01].

    Cached; the returned arrays are read-only.
    """
    rng = np.random.default_rng(seed)
    lats = [TorusLattice(1, 64), TorusLattice(2, 16)]
    out = []
    for i in range(count):
        lat = lats[i * 2 // count]
        kmax = 2 if lat.n == 1 else 1
        phi = random_potential(lat, rng, kmax, rng.uniform(0.002, 0.01))
        ok, _ = positivity_check(assemble_metric(ReferenceGeometry(lat), phi))
        if not ok:  # pragma: no cover - amplitudes are far from the cone boundary
            phi *= 0.5
        phi.flags.writeable = False
        out.append((lat, phi))
    return tuple(out)


def interpolation_corpus(seed: int = 20240601, N: int = 32) -> list[np.ndarray]:
    """20 random band-limited fields and 5 single modes on an n=1 lattice."""
    rng = np.random.default_rng(seed + 1)
    lat = TorusLattice(1, N)
    fields = [random_potential(lat, rng, int(rng.integers(1, 5)), 1.0) for _ in range(20)]
    for freq in ((1, 0), (0, 1), (1, 1), (2, 0), (3, 1)):
        fields.append(lat.mode(freq))
    return fields


def smoothing_modes(seed: int, kmax: int, amplitude: float) -> tuple[ModeSpec, ...]:
    """One mode per ``k = 1..kmax`` with amplitude ``amplitude * k^-2.5``, random direction and phase."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(1, kmax + 1):
        other = int(rng.integers(-k, k + 1))
        freq = (k, other) if rng.random() < 0.5 else (other, k)
        out.append(ModeSpec(freq, amplitude * k**-2.5, float(rng.uniform(0, 2 * np.pi))))
    return tuple(out)


# --------------------------------------------------------------------------
# experiments


def _mode_amplitude(lattice: TorusLattice, phi: np.ndarray, freq) -> float:
    c = forward_transform(lattice, phi)
    N = lattice.N
    idx = tuple(int(k) % N for k in freq)
    neg = tuple(int(-k) % N for k in freq)
    return float(abs(c[idx]) + abs(c[neg]))


@_timed
def experiment_linear_spectrum(cfg: RunConfig) -> ExperimentResult:
    """Decay rates of small single modes against the bilaplacian symbol."""
    res = ExperimentResult("linear_spectrum", True)
    tol = cfg.experiment.get("tolerance", 0.02)
    res.tolerances = {"relative_rate_error": tol, "tau_lambda": 0.2}
    if cfg.psi_modes:
        res.check(False, "linear spectrum needs a flat reference (no psi modes)")
        return res
    lat = cfg.lattice()
    ref = cfg.reference()
    symbol = build_symbol(lat, ref.g0)
    amp = cfg.experiment.get("amplitude", 1e-4)
    modes = cfg.phi0_modes or tuple(ModeSpec(f, amp) for f in ((1, 0), (0, 1), (2, 0)))
    table = []
    for m in modes:
        lam = symbol.at(m.freq)
        if lam <= 0:
            res.check(False, f"mode {m.freq} has lambda = 0")
            continue
        tau = 0.2 / lam
        controls = StepControls(tau0=tau, tau_max=tau, t_end=5.0 / lam, adaptive=False, holder_every=0)
        engine = CalabiFlow(ref, controls)
        samples = []

        def collect(state, freq=m.freq):
            if state.last_report is not None and state.last_report.accepted:
                samples.append((state.t, _mode_amplitude(lat, state.phi, freq)))

        phi0 = lat.mode(m.freq, m.amplitude, m.phase)
        samples.append((0.0, _mode_amplitude(lat, phi0, m.freq)))
        traj, _ = engine.run(phi0, snapshot_every=0, callback=collect)
        status = traj[-1].status
        if not res.check(status in (FlowStatus.RUNNING, FlowStatus.CONVERGED), f"mode {m.freq}: {status.value}"):
            continue
        rate, r2 = fit_exponential_decay(samples)
        err = abs(rate - lam) / lam
        table.append((m.freq, lam, rate, err, r2))
        res.measured[f"rate{m.freq}"] = rate
        res.measured[f"target{m.freq}"] = lam
        res.measured[f"relerr{m.freq}"] = err
        res.check(err <= tol, f"mode {m.freq}: rate {rate:.6g} vs {lam:.6g} (rel err {err:.2e})")
    res.table = (("mode", "target_rate", "fitted_rate", "relative_error", "r_squared"), table)
    return res


@_timed
def experiment_stability(cfg: RunConfig) -> ExperimentResult:
    """Run to convergence near the flat metric and fit the decay of ``max |R|``."""
    res = ExperimentResult("stability", True)
    slack = cfg.energy_slack
    res.tolerances = {
        "energy_slack": slack,
        "volume_rel": 1e-8,
        "rbar_abs": 1e-8,
        "r_squared": 0.99,
        "final_oscillation": 1e-6,
    }
    engine = CalabiFlow(cfg.reference(), cfg.controls())
    traj, rows = engine.run(cfg.initial_potential(), cfg.snapshot_every)
    final = traj[-1]
    res.status = final.status.value
    res.rows = rows
    if not res.check(final.status is FlowStatus.CONVERGED, f"terminated {final.status.value} at t={final.t:.6g}"):
        return res
    osc = float(np.max(np.abs(final.phi - final.phi.mean())))
    res.measured.update(
        final_time=final.t,
        steps=final.step_index,
        final_oscillation=osc,
        energy_increase=_energy_increase(rows),
        volume_drift=_volume_drift(rows),
        rbar_max=max(abs(r.rbar) for r in rows),
        rbar_drift=max(abs(r.rbar - rows[0].rbar) for r in rows),
    )
    res.check(res.measured["energy_increase"] <= slack, f"energy increase {res.measured['energy_increase']:.3e}")
    res.check(res.measured["volume_drift"] <= 1e-8, f"volume drift {res.measured['volume_drift']:.3e}")
    res.check(res.measured["rbar_drift"] <= 1e-8, f"rbar drift {res.measured['rbar_drift']:.3e}")
    res.check(osc <= 1e-6, f"final oscillation {osc:.3e}")
    if final.step_index == 0:
        res.measured.update(decay_rate=0.0, r_squared=1.0, fit_points=0)
        return res
    # mid-trajectory window: away from the start transient and the noise floor
    r0 = rows[0].max_abs_R
    hi = cfg.experiment.get("fit_hi", 0.1) * r0
    lo = cfg.experiment.get("fit_lo", 100.0) * cfg.convergence_tol
    series = [(r.t, r.max_abs_R) for r in rows if lo <= r.max_abs_R <= hi]
    res.measured["fit_points"] = len(series)
    if not res.check(len(series) >= 5, f"only {len(series)} points in the fit window"):
        return res
    rate, r2 = fit_exponential_decay(series)
    res.measured.update(decay_rate=rate, r_squared=r2)
    res.check(r2 >= 0.99, f"exponential fit r^2 {r2:.5f}")
    res.check(rate > 0, f"decay rate {rate:.3e} not positive")
    return res


def _c_meas(cfg: RunConfig, lattice: TorusLattice, phi0: np.ndarray) -> tuple[float, FlowStatus]:
    engine = CalabiFlow(ReferenceGeometry(lattice, cfg.g0_matrix()), replace(cfg.controls(), holder_every=0))
    traj, _ = engine.run(phi0, snapshot_every=1)
    times = [s.t for s in traj]
    phis = [s.phi for s in traj]
    dots = [engine.velocity(p) for p in phis]
    norms = weighted_trajectory_norm(lattice, times, phis, dots, cfg.holder())
    return norms.c_meas, traj[-1].status


@_timed
def experiment_smoothing(cfg: RunConfig) -> ExperimentResult:
    """``sup t^(1/2)(|phi_t|_0a + |phi|_4a) / |phi_0|_2a`` on two resolutions."""
    res = ExperimentResult("smoothing", True)
    tol = cfg.experiment.get("tolerance", 0.2)
    res.tolerances = {"refinement_rel": tol, "linearity_rel": 0.05}
    modes = cfg.phi0_modes or smoothing_modes(
        cfg.seed, cfg.experiment.get("kmax", 8), cfg.experiment.get("amplitude", 1e-4)
    )
    coarse = cfg.lattice()
    fine = TorusLattice(coarse.n, cfg.experiment.get("refine_N", 2 * coarse.N), coarse.L)
    scaled = replace(cfg, phi0_modes=modes)
    values = {}
    for label, lat, scale in (("coarse", coarse, 1.0), ("fine", fine, 1.0), ("doubled", coarse, 2.0)):
        phi0 = scale * scaled.initial_potential(lat)
        c, status = _c_meas(cfg, lat, phi0)
        values[label] = c
        res.check(status in (FlowStatus.CONVERGED, FlowStatus.RUNNING), f"{label} run ended {status.value}")
    rel = abs(values["fine"] - values["coarse"]) / max(values["coarse"], 1e-300)
    lin = abs(values["doubled"] - values["coarse"]) / max(values["coarse"], 1e-300)
    res.measured.update(
        c_meas_coarse=values["coarse"],
        c_meas_fine=values["fine"],
        c_meas_doubled=values["doubled"],
        N_coarse=coarse.N,
        N_fine=fine.N,
        refinement_rel=rel,
        linearity_rel=lin,
    )
    res.check(all(math.isfinite(v) for v in values.values()), "non-finite c_meas")
    if values["coarse"] > 0:
        res.check(rel <= tol, f"refinement change {rel:.3f}")
    res.table = (
        ("label", "N", "c_meas"),
        [("coarse", coarse.N, values["coarse"]), ("fine", fine.N, values["fine"]), ("doubled", coarse.N, values["doubled"])],
    )
    return res


@_timed
def experiment_contraction_ladder(cfg: RunConfig) -> ExperimentResult:
    """Picard ratios on ``tau0 / 2^j`` and the forcing Lipschitz surrogate."""
    res = ExperimentResult("contraction_ladder", True)
    slack = 1e-3
    res.tolerances = {"monotone_slack": slack, "target_ratio": 0.5}
    lat = cfg.lattice()
    ref = cfg.reference()
    symbol = build_symbol(lat, ref.g0)
    rbar = CalabiFlow(ref).rbar
    phi0 = cfg.initial_potential()
    ok, _ = positivity_check(assemble_metric(ref, phi0))
    if not res.check(ok, "initial metric not positive definite"):
        res.status = FlowStatus.POSITIVITY_BREAKDOWN.value
        return res
    rungs = cfg.experiment.get("rungs", 9)
    eps0 = float(np.max(np.abs(phi0)))
    table = []
    for j in range(rungs):
        tau = cfg.tau0 / 2**j
        failed = False
        try:
            v, report = picard_step(phi0, tau, symbol, ref, rbar, cfg.picard_tol, cfg.picard_max_iters)
            ratios = report.picard_ratios
        except ContractionFailure as exc:
            ratios, failed, v = exc.ratios, True, None
        except PositivityBreakdown:
            ratios, failed, v = (math.inf,), True, None
        worst = max(ratios) if ratios else 0.0
        lip = float("nan")
        if v is not None and np.any(v != phi0):
            lip = forcing_lipschitz(ref, v, phi0, cfg.holder(), weight_time=tau)
        table.append((j, tau, worst, len(ratios) + 1, int(failed), lip, eps0 + tau**0.25))
    worst = np.array([r[2] for r in table])
    res.measured.update(
        max_ratios=[float(w) for w in worst],
        best_ratio=float(worst.min()),
        monotone_violation=float(np.max(np.diff(worst))) if worst.size > 1 else 0.0,
        failures=int(sum(r[4] for r in table)),
    )
    res.check(res.measured["failures"] < rungs, "contraction failed on every rung")
    res.check(res.measured["monotone_violation"] <= slack, f"ratio grew by {res.measured['monotone_violation']:.3e}")
    res.check(res.measured["best_ratio"] <= 0.5, f"best ratio {res.measured['best_ratio']:.3f} > 1/2")
    lips = np.array([(r[6], r[5]) for r in table if math.isfinite(r[5]) and r[5] > 0])
    if len(lips) >= 2:
        slope = float(np.polyfit(np.log(lips[:, 0]), np.log(lips[:, 1]), 1)[0])
        res.measured["lipschitz_slope"] = slope
    res.table = (
        ("rung", "tau", "max_ratio", "iterations", "contraction_failure", "lipschitz", "eps0_plus_tau_quarter"),
        table,
    )
    return res


@_timed
def experiment_extension_monitor(cfg: RunConfig) -> ExperimentResult:
    """Surface run logging metric bounds and the running curvature maximum."""
    res = ExperimentResult("extension_monitor", True)
    lo = cfg.experiment.get("band_lo", 0.5)
    hi = cfg.experiment.get("band_hi", 2.0)
    slack = cfg.energy_slack
    res.tolerances = {"band": (lo, hi), "energy_slack": slack, "ceiling_rows": 10}
    if not res.check(cfg.n == 2, f"monitor needs n=2, got n={cfg.n}"):
        return res
    engine = CalabiFlow(cfg.reference(), cfg.controls())
    traj, rows = engine.run(cfg.initial_potential(), cfg.snapshot_every)
    final = traj[-1]
    res.status = final.status.value
    res.rows = rows
    if not rows:
        res.check(False, f"no diagnostics (status {final.status.value})")
        return res
    last = rows[-1]
    res.measured["last_triple"] = (last.c1_bound, last.c2_bound, max(r.max_riemann for r in rows))
    if not res.check(
        final.status in (FlowStatus.CONVERGED, FlowStatus.RUNNING),
        f"terminated {final.status.value} with (c1, C2, Q) = {res.measured['last_triple']}",
    ):
        return res
    c1 = min(r.c1_bound for r in rows)
    c2 = max(r.c2_bound for r in rows)
    ceiling = max(r.max_riemann for r in rows[:10])
    later = max((r.max_riemann for r in rows[10:]), default=0.0)
    res.measured.update(
        final_time=final.t,
        steps=final.step_index,
        c1_min=c1,
        c2_max=c2,
        q_ceiling=ceiling,
        q_after=later,
        q_max=max(ceiling, later),
        energy_increase=_energy_increase(rows),
        energy_first=rows[0].calabi_energy,
        energy_last=last.calabi_energy,
        volume_drift=_volume_drift(rows),
    )
    res.check(lo <= c1 and c2 <= hi, f"metric bounds [{c1:.4f}, {c2:.4f}] left [{lo}, {hi}]")
    res.check(c1 <= c2, "c1 > C2")
    res.check(res.measured["energy_increase"] <= slack, f"energy increase {res.measured['energy_increase']:.3e}")
    res.check(later <= ceiling, f"|Rm| {later:.4g} above initial ceiling {ceiling:.4g}")
    res.check(all(math.isfinite(v) for v in (c1, c2, ceiling, later)), "non-finite monitor value")
    return res


@_timed
def guard_checks(cfg: RunConfig) -> ExperimentResult:
    """Cone-boundary behaviour: non-Kähler data and a near-degenerate start.

    The non-Kähler start must stop immediately with PositivityBreakdown.  The
    near-degenerate start (``c1`` about 0.05) may recover or halt, but every
    emitted number must be finite.
    """
    res = ExperimentResult("guard", True)
    lat = TorusLattice(1, cfg.experiment.get("refine_N", 32))
    ref = ReferenceGeometry(lat)
    # ddbar(a cos 2 pi x) = -a pi^2 cos, so the minimum eigenvalue is 1 - a pi^2
    bad = lat.mode((1, 0), 1.5 / math.pi**2)
    engine = CalabiFlow(ref, StepControls(tau0=1e-4, t_end=1.0, max_steps=50))
    traj, rows = engine.run(bad)
    status = traj[-1].status
    res.measured["non_pd_status"] = status.value
    res.measured["non_pd_rows"] = len(rows)
    res.check(status is FlowStatus.POSITIVITY_BREAKDOWN, f"non-PD start gave {status.value}")
    res.check(all(np.all(np.isfinite(s.phi)) for s in traj), "NaN in non-PD trajectory")

    near = lat.mode((1, 0), 0.95 / math.pi**2)
    engine = CalabiFlow(ref, StepControls(tau0=1e-4, t_end=0.05, max_steps=400, holder_every=0))
    traj, rows = engine.run(near)
    final = traj[-1]
    skip = ("holder_2a", "holder_4a", "weighted_norm")
    finite_rows = all(math.isfinite(getattr(r, c)) for r in rows for c in DIAGNOSTIC_COLUMNS if c not in skip)
    res.measured.update(
        near_initial_min_eig=positivity_check(assemble_metric(ref, near))[1],
        near_status=final.status.value,
        near_steps=final.step_index,
        near_final_time=final.t,
    )
    res.check(finite_rows and bool(np.all(np.isfinite(final.phi))), "non-finite value after near-degenerate start")
    res.status = f"{status.value}/{final.status.value}"
    return res


EXPERIMENTS = {
    "spectrum": experiment_linear_spectrum,
    "stability": experiment_stability,
    "smoothing": experiment_smoothing,
    "contraction": experiment_contraction_ladder,
    "monitor": experiment_extension_monitor,
}
