"""Calabi flow stepper: forcing terms, the Picard map and adaptive time control.

The flow ``dphi/dt = R_phi - rbar`` is split as

    dphi/dt + A phi = f(phi),     f(phi) = A phi + R_phi - rbar,

with ``A`` the flat bilaplacian of :mod:`calabi_flow.semigroup`.  One time
step of length ``tau`` solves the fixed-point problem

    v = exp(-tau A) x + phi1(tau A) f(v)

by Picard iteration, ``phi1`` being the exponential-Euler weight
``(1 - exp(-tau lambda)) / lambda``.

The expanded forcing writes ``Delta_g^2 v + R_v - rbar`` for the reference
metric ``g = g0 + ddbar psi`` purely through pointwise products of exact
spectral derivatives of ``psi`` and ``v``::

    f(v) = (g^{k l} g^{i q} g_v^{p j} + g_v^{i j} g^{k q} g_v^{p l}) v_{p q} v_{i j k l}
         + g_v^{i j} g_v^{k q} g_v^{p l} (d_i g_{p q} + v_{i p q}) (dbar_j g_{k l} + v_{j k l})
         - g_v^{i j} g_v^{k l} d_i dbar_j g_{k l}
         + g^{i j} (d_i g^{k l} dbar_j v_{k l} + dbar_j g^{k l} d_i v_{k l} + d_i dbar_j g^{k l} v_{k l})
         - rbar

(second index of each pair is barred).  The first line is the product form of
``(g g - g_v g_v) d^4 v``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .curvature import calabi_energy, riemann_norm, scalar_curvature, average_scalar
from .lattice import (
    TorusLattice,
    forward_transform,
    inverse_transform,
    spectral_derivative,
    two_thirds_filter,
)
from .metric import (
    PD_FLOOR,
    InvalidMetricError,
    MetricField,
    ReferenceGeometry,
    assemble_metric,
    inverse_and_det,
    metric_bounds,
    positivity_check,
    total_volume,
    upper,
)
from .norms import HolderParams, holder_norm
from .semigroup import BilaplacianSymbol, build_symbol, phi1_coefficients

__all__ = [
    "FlowStatus",
    "FlowState",
    "StepReport",
    "StepControls",
    "DiagnosticsRow",
    "PositivityBreakdown",
    "ContractionFailure",
    "forcing",
    "forcing_expanded",
    "reference_bilaplacian",
    "product_identity_residual",
    "forcing_difference",
    "forcing_lipschitz",
    "picard_step",
    "CalabiFlow",
    "run_flow",
    "DIAGNOSTIC_COLUMNS",
]


class FlowStatus(str, enum.Enum):
    RUNNING = "Running"
    CONVERGED = "Converged"
    POSITIVITY_BREAKDOWN = "PositivityBreakdown"
    CONTRACTION_FAILURE = "ContractionFailure"
    MAX_STEPS = "MaxStepsReached"


class PositivityBreakdown(InvalidMetricError):
    """An iterate left the Kähler cone (metric not positive definite)."""


class ContractionFailure(RuntimeError):
    """Picard differences failed to shrink for three consecutive iterations."""

    def __init__(self, message: str, ratios: tuple[float, ...] = ()):
        super().__init__(message)
        self.ratios = ratios


DIAGNOSTIC_COLUMNS = (
    "t",
    "tau",
    "calabi_energy",
    "max_abs_R",
    "rbar",
    "volume",
    "c1_bound",
    "c2_bound",
    "max_riemann",
    "holder_2a",
    "holder_4a",
    "weighted_norm",
    "picard_iters",
    "picard_last_ratio",
    "phi_mean",
)


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    tau: float
    calabi_energy: float
    max_abs_R: float
    rbar: float
    volume: float
    c1_bound: float
    c2_bound: float
    max_riemann: float
    holder_2a: float
    holder_4a: float
    weighted_norm: float
    picard_iters: int
    picard_last_ratio: float
    phi_mean: float

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in DIAGNOSTIC_COLUMNS)


@dataclass(frozen=True)
class StepReport:
    picard_iters: int
    picard_ratios: tuple[float, ...]
    converged: bool
    accepted: bool = False
    reject_reason: str | None = None


@dataclass(frozen=True)
class FlowState:
    t: float
    tau: float
    phi: np.ndarray
    status: FlowStatus = FlowStatus.RUNNING
    step_index: int = 0
    last_diag: DiagnosticsRow | None = None
    accepts_in_row: int = 0
    energy: float = float("nan")
    last_report: StepReport | None = None


# --------------------------------------------------------------------------
# forcing terms


def _metric_from_hat(ref: ReferenceGeometry, phi_hat: np.ndarray) -> MetricField:
    return assemble_metric(ref, None, phi_hat=phi_hat)


def forcing(
    ref: ReferenceGeometry,
    phi: np.ndarray,
    symbol: BilaplacianSymbol,
    rbar: float,
    phi_hat: np.ndarray | None = None,
    pd_floor: float = PD_FLOOR,
    dealias: bool = False,
) -> np.ndarray:
    """``A phi + R(g_phi) - rbar``.

    Raises :class:`PositivityBreakdown` when ``g_phi`` is not positive definite.
    """
    lat = ref.lattice
    if phi_hat is None:
        phi_hat = forward_transform(lat, phi)
    g = _metric_from_hat(ref, phi_hat)
    ok, min_eig = positivity_check(g, pd_floor)
    if not ok:
        raise PositivityBreakdown(f"metric not positive definite (min eigenvalue {min_eig:.3e})")
    R = scalar_curvature(g)
    if dealias:
        R = inverse_transform(lat, two_thirds_filter(lat, forward_transform(lat, R)))
    return inverse_transform(lat, phi_hat * symbol.lam) + R - rbar


class _Jets:
    """Exact spectral derivatives of a potential up to order four.

    ``d2[..., k, l] = d_k dbar_l u``, ``d3h[..., i, k, l] = d_i d_k dbar_l u``,
    ``d3a[..., j, k, l] = dbar_j d_k dbar_l u``, ``d4[..., i, j, k, l] = d_i dbar_j d_k dbar_l u``.
    """

    def __init__(self, lattice: TorusLattice, coeffs: np.ndarray):
        n = lattice.n
        shp = lattice.shape
        self.d2 = np.empty(shp + (n, n), dtype=complex)
        self.d3h = np.empty(shp + (n, n, n), dtype=complex)
        self.d3a = np.empty(shp + (n, n, n), dtype=complex)
        self.d4 = np.empty(shp + (n, n, n, n), dtype=complex)
        for k in range(n):
            for l in range(n):
                self.d2[..., k, l] = spectral_derivative(lattice, coeffs, (k,), (l,))
                for i in range(n):
                    self.d3h[..., i, k, l] = spectral_derivative(lattice, coeffs, (i, k), (l,))
                    self.d3a[..., i, k, l] = spectral_derivative(lattice, coeffs, (k,), (i, l))
                    for j in range(n):
                        self.d4[..., i, j, k, l] = spectral_derivative(lattice, coeffs, (i, k), (j, l))


class _ReferenceTerms:
    """Reference metric ``g = g0 + ddbar psi`` with derivatives of ``g`` and ``g^{-1}``."""

    def __init__(self, ref: ReferenceGeometry):
        lat = ref.lattice
        jets = _Jets(lat, ref.psi_hat)
        self.g = jets.d2 + ref.g0
        g_inv, _ = inverse_and_det(MetricField(lat, self.g))
        gu = upper(g_inv)
        self.gu = gu
        self.dg = jets.d3h  # d_a g_{k l}
        self.dbg = jets.d3a  # dbar_b g_{k l}
        self.ddg = jets.d4  # d_a dbar_b g_{k l}
        # d_a g^{k l} = -g^{k q} d_a g_{p q} g^{p l}
        self.dgu = -np.einsum("...kq,...apq,...pl->...akl", gu, self.dg, gu, optimize=True)
        self.dbgu = -np.einsum("...kq,...bpq,...pl->...bkl", gu, self.dbg, gu, optimize=True)
        # d_a dbar_b g^{k l}
        self.ddgu = -(
            np.einsum("...bkq,...apq,...pl->...abkl", self.dbgu, self.dg, gu, optimize=True)
            + np.einsum("...kq,...abpq,...pl->...abkl", gu, self.ddg, gu, optimize=True)
            + np.einsum("...kq,...apq,...bpl->...abkl", gu, self.dg, self.dbgu, optimize=True)
        )


_REF_CACHE: dict[int, tuple[ReferenceGeometry, _ReferenceTerms]] = {}


def _reference_terms(ref: ReferenceGeometry) -> _ReferenceTerms:
    hit = _REF_CACHE.get(id(ref))
    if hit is not None and hit[0] is ref:
        return hit[1]
    terms = _ReferenceTerms(ref)
    _REF_CACHE.clear()
    _REF_CACHE[id(ref)] = (ref, terms)
    return terms


def _potential_terms(ref: ReferenceGeometry, phi: np.ndarray):
    lat = ref.lattice
    rt = _reference_terms(ref)
    v = _Jets(lat, forward_transform(lat, phi))
    gv = MetricField(lat, rt.g + v.d2)
    ok, min_eig = positivity_check(gv)
    if not ok:
        raise PositivityBreakdown(f"metric not positive definite (min eigenvalue {min_eig:.3e})")
    gvu = upper(inverse_and_det(gv, check=False)[0])
    return rt, v, gvu


def _quartic_product_form(gu, gvu, v) -> np.ndarray:
    """``(g^{kl} g^{iq} g_v^{pj} + g_v^{ij} g^{kq} g_v^{pl}) v_{pq} v_{ijkl}``."""
    first = np.einsum("...kl,...iq,...pj,...pq,...ijkl->...", gu, gu, gvu, v.d2, v.d4, optimize=True)
    second = np.einsum("...ij,...kq,...pl,...pq,...ijkl->...", gvu, gu, gvu, v.d2, v.d4, optimize=True)
    return first + second


def _cubic_term(rt: _ReferenceTerms, gvu, v) -> np.ndarray:
    """``g_v^{ij} g_v^{kq} g_v^{pl} (d_i g_{pq} + v_{ipq}) (dbar_j g_{kl} + v_{jkl})``."""
    return np.einsum(
        "...ij,...kq,...pl,...ipq,...jkl->...",
        gvu,
        gvu,
        gvu,
        rt.dg + v.d3h,
        rt.dbg + v.d3a,
        optimize=True,
    )


def _reference_lower_order(rt: _ReferenceTerms, dv3h, dv3a, dv2) -> np.ndarray:
    """``g^{ij} (d_i g^{kl} dbar_j v_{kl} + dbar_j g^{kl} d_i v_{kl} + d_i dbar_j g^{kl} v_{kl})``."""
    return (
        np.einsum("...ij,...ikl,...jkl->...", rt.gu, rt.dgu, dv3a, optimize=True)
        + np.einsum("...ij,...jkl,...ikl->...", rt.gu, rt.dbgu, dv3h, optimize=True)
        + np.einsum("...ij,...ijkl,...kl->...", rt.gu, rt.ddgu, dv2, optimize=True)
    )


def forcing_expanded(ref: ReferenceGeometry, phi: np.ndarray, rbar: float) -> np.ndarray:
    """``Delta_g^2 phi + R_phi - rbar`` through the expanded product formula."""
    rt, v, gvu = _potential_terms(ref, phi)
    total = (
        _quartic_product_form(rt.gu, gvu, v)
        + _cubic_term(rt, gvu, v)
        - np.einsum("...ij,...kl,...ijkl->...", gvu, gvu, rt.ddg, optimize=True)
        + _reference_lower_order(rt, v.d3h, v.d3a, v.d2)
    )
    return total.real - rbar


def reference_bilaplacian(ref: ReferenceGeometry, phi: np.ndarray) -> np.ndarray:
    """``Delta_g (Delta_g phi)`` as two nested variable-coefficient complex Laplacians."""
    lat = ref.lattice
    gu = _reference_terms(ref).gu

    def lap(u):
        c = forward_transform(lat, u)
        out = np.zeros(lat.shape, dtype=complex)
        for i in range(lat.n):
            for j in range(lat.n):
                out = out + gu[..., i, j] * spectral_derivative(lat, c, (i,), (j,))
        return out.real

    return lap(lap(phi))


def product_identity_residual(ref: ReferenceGeometry, phi: np.ndarray) -> float:
    """Relative sup-norm gap between ``(g g - g_v g_v) d^4 v`` and its product form."""
    rt, v, gvu = _potential_terms(ref, phi)
    lhs = np.einsum("...ij,...kl,...ijkl->...", rt.gu, rt.gu, v.d4, optimize=True) - np.einsum(
        "...ij,...kl,...ijkl->...", gvu, gvu, v.d4, optimize=True
    )
    rhs = _quartic_product_form(rt.gu, gvu, v)
    scale = float(np.max(np.abs(lhs)))
    if scale == 0.0:
        return float(np.max(np.abs(rhs)))
    return float(np.max(np.abs(lhs - rhs)) / scale)


def forcing_difference(ref: ReferenceGeometry, phi1: np.ndarray, phi2: np.ndarray, rbar: float = 0.0) -> np.ndarray:
    """``f(phi1) - f(phi2)`` assembled term by term from the expanded difference formula.

    Uses the reference operator ``Delta_g^2``; with a flat reference this is
    also the difference of :func:`forcing` values.  ``rbar`` cancels and is
    accepted for signature symmetry only.
    """
    lat = ref.lattice
    rt, v1, gu1 = _potential_terms(ref, phi1)
    _, v2, gu2 = _potential_terms(ref, phi2)
    dv = _Jets(lat, forward_transform(lat, phi1 - phi2))
    gg = "...ij,...kl,...ijkl->..."
    top = np.einsum(gg, gu2, gu2, v2.d4, optimize=True) - np.einsum(gg, gu1, gu1, v1.d4, optimize=True)
    linear = np.einsum(gg, rt.gu, rt.gu, dv.d4, optimize=True)
    cubic = _cubic_term(rt, gu1, v1) - _cubic_term(rt, gu2, v2)
    lower = _reference_lower_order(rt, dv.d3h, dv.d3a, dv.d2)
    curv = np.einsum(gg, gu2, gu2, rt.ddg, optimize=True) - np.einsum(gg, gu1, gu1, rt.ddg, optimize=True)
    return (top + linear + cubic + lower + curv).real


def forcing_lipschitz(
    ref: ReferenceGeometry,
    phi1: np.ndarray,
    phi2: np.ndarray,
    params: HolderParams = HolderParams(),
    weight_time: float | None = None,
) -> float:
    """Lipschitz quotient of the forcing in Hölder surrogates.

    Without ``weight_time`` it is ``|f1 - f2|_{0,a} / (|d|_{2,a} + |d|_{4,a})``
    with ``d = phi1 - phi2``.  With ``weight_time = t`` the weights of the
    time-singular spaces are applied:
    ``t^{1/2}|f1 - f2|_{0,a} / (|d|_{2,a} + t^{1/2}|d|_{4,a})``.
    """
    lat = ref.lattice
    df = forcing_difference(ref, phi1, phi2)
    d = phi1 - phi2
    top = holder_norm(lat, df, 0, params)
    h2 = holder_norm(lat, d, 2, params)
    h4 = holder_norm(lat, d, 4, params)
    if weight_time is None:
        denom = h2 + h4
    else:
        s = math.sqrt(weight_time)
        top *= s
        denom = h2 + s * h4
    if denom == 0:
        return 0.0
    return top / denom


# --------------------------------------------------------------------------
# Picard step


def picard_step(
    phi: np.ndarray,
    tau: float,
    symbol: BilaplacianSymbol,
    ref: ReferenceGeometry,
    rbar: float,
    tol: float = 1e-11,
    max_iters: int = 40,
    pd_floor: float = PD_FLOOR,
    dealias: bool = False,
) -> tuple[np.ndarray, StepReport]:
    """Solve ``v = exp(-tau A) x + phi1(tau A) f(v)`` by fixed-point iteration from ``x = phi``.

    Stops when successive iterates differ by less than ``tol (1 + |x|_inf)``.
    Raises :class:`PositivityBreakdown` if an iterate is not Kähler and
    :class:`ContractionFailure` after three consecutive ratios ``>= 1``.
    """
    if not tau > 0:
        raise ValueError(f"step size must be positive, got {tau}")
    lat = ref.lattice
    x_hat = forward_transform(lat, phi)
    lin_hat = x_hat * np.exp(-tau * symbol.lam)
    weight = phi1_coefficients(symbol.lam, tau)
    threshold = tol * (1.0 + float(np.max(np.abs(phi))))

    v_hat = lin_hat
    v = inverse_transform(lat, v_hat)
    diffs: list[float] = []
    ratios: list[float] = []
    bad_run = 0
    for m in range(1, max_iters + 1):
        f = forcing(ref, v, symbol, rbar, phi_hat=v_hat, pd_floor=pd_floor, dealias=dealias)
        if not np.all(np.isfinite(f)):
            raise PositivityBreakdown("non-finite forcing encountered")
        new_hat = lin_hat + weight * forward_transform(lat, f)
        new = inverse_transform(lat, new_hat)
        diff = float(np.max(np.abs(new - v)))
        if diffs and diffs[-1] > 0:
            r = diff / diffs[-1]
            ratios.append(r)
            bad_run = bad_run + 1 if r >= 1.0 else 0
            if bad_run >= 3:
                raise ContractionFailure(f"Picard ratios >= 1 for 3 iterations (last {r:.3g})", tuple(ratios))
        diffs.append(diff)
        v, v_hat = new, new_hat
        if diff < threshold:
            return v, StepReport(m, tuple(ratios), True)
    return v, StepReport(max_iters, tuple(ratios), False)


# --------------------------------------------------------------------------
# driver


@dataclass
class StepControls:
    """Time-step control and tolerances.

    ``tau_max=None`` resolves to ``1 / lambda_min+``.  ``holder_every=k`` computes
    Hölder columns on every k-th accepted row (``0`` never; others hold NaN).

    ``splitting_scale`` multiplies the splitting operator, ``A_c = c^2 A``.
    The default ``1`` is the plain flat bilaplacian.  ``None`` picks ``c`` per
    step from the eigenvalue range ``[a, b]`` of the current metric relative
    to ``g0``.  The principal symbol of ``Delta_g^2`` is that of ``A`` times a
    factor in ``[b^-2, a^-2]``, so ``c^2 = (a^-2 + b^-2) / 2`` balances the
    frozen-coefficient Picard constant at stiff modes, ``max |1 - g^-2 / c^2|``,
    at ``(b^2 - a^2) / (a^2 + b^2) < 1``.
    """

    tau0: float = 1e-3
    tau_min: float = 1e-12
    tau_max: float | None = None
    t_end: float = 1.0
    picard_tol: float = 1e-11
    picard_max_iters: int = 40
    convergence_tol: float = 1e-8
    energy_slack: float = 1e-10
    max_steps: int = 100_000
    grow_after: int = 5
    adaptive: bool = True
    pd_floor: float = PD_FLOOR
    dealias: bool = False
    holder_every: int = 1
    splitting_scale: float | None = 1.0
    holder: HolderParams = field(default_factory=HolderParams)


class CalabiFlow:
    """Calabi flow on a flat torus class, with a fixed reference geometry."""

    def __init__(self, ref: ReferenceGeometry, controls: StepControls | None = None):
        self.ref = ref
        self.lattice = ref.lattice
        self.controls = controls or StepControls()
        self.symbol = build_symbol(self.lattice, ref.g0)
        self.rbar = average_scalar(ref.metric())
        c = self.controls
        self.tau_max = c.tau_max if c.tau_max is not None else 1.0 / self.symbol.lambda_min_positive
        self._g_initial: MetricField | None = None
        self._accepted = 0

    # -- helpers ----------------------------------------------------------
    def metric(self, phi: np.ndarray) -> MetricField:
        return assemble_metric(self.ref, phi)

    def forcing(self, phi: np.ndarray) -> np.ndarray:
        return forcing(self.ref, phi, self.symbol, self.rbar, pd_floor=self.controls.pd_floor)

    def step_symbol(self, phi: np.ndarray) -> BilaplacianSymbol:
        """Splitting operator used for a step starting at ``phi``."""
        scale = self.controls.splitting_scale
        if scale is None:
            a, b = metric_bounds(self.metric(phi), MetricField.constant(self.lattice, self.ref.g0))
            c2 = 0.5 * (1.0 / (a * a) + 1.0 / (b * b))
        else:
            c2 = scale * scale
        if c2 == 1.0:
            return self.symbol
        return BilaplacianSymbol(self.lattice, self.symbol.sigma * math.sqrt(c2), self.symbol.lam * c2)

    def velocity(self, phi: np.ndarray) -> np.ndarray:
        """``R_phi - rbar``."""
        return scalar_curvature(self.metric(phi)) - self.rbar

    def _diagnostics(self, t, tau, phi, report: StepReport | None, with_holder: bool) -> DiagnosticsRow:
        g = self.metric(phi)
        R = scalar_curvature(g)
        energy = calabi_energy(g, self.rbar, R)
        c1, c2 = metric_bounds(g, self._g_initial)
        h2 = h4 = weighted = float("nan")
        if with_holder:
            hp = self.controls.holder
            h2 = holder_norm(self.lattice, phi, 2, hp)
            h4 = holder_norm(self.lattice, phi, 4, hp)
            hd = holder_norm(self.lattice, R - self.rbar, 0, hp)
            weighted = math.sqrt(t) * (hd + h4)
        ratios = report.picard_ratios if report else ()
        return DiagnosticsRow(
            t=float(t),
            tau=float(tau),
            calabi_energy=energy,
            max_abs_R=float(np.max(np.abs(R))),
            rbar=average_scalar(g, R),
            volume=total_volume(g),
            c1_bound=c1,
            c2_bound=c2,
            max_riemann=float(np.max(riemann_norm(g))),
            holder_2a=h2,
            holder_4a=h4,
            weighted_norm=weighted,
            picard_iters=int(report.picard_iters) if report else 0,
            picard_last_ratio=float(ratios[-1]) if ratios else 0.0,
            phi_mean=float(np.mean(phi)),
        )

    def _holder_due(self) -> bool:
        every = self.controls.holder_every
        return every > 0 and self._accepted % every == 0

    # -- public API --------------------------------------------------------
    def initial_state(self, phi0: np.ndarray, tau0: float | None = None) -> FlowState:
        phi0 = np.array(phi0, dtype=float, copy=True)
        if phi0.shape != self.lattice.shape:
            raise ValueError(f"phi0 has shape {phi0.shape}, lattice needs {self.lattice.shape}")
        tau = float(min(tau0 or self.controls.tau0, self.tau_max))
        if not np.all(np.isfinite(phi0)):
            return FlowState(0.0, tau, phi0, FlowStatus.POSITIVITY_BREAKDOWN)
        g = self.metric(phi0)
        ok, _ = positivity_check(g, self.controls.pd_floor)
        if not ok:
            return FlowState(0.0, tau, phi0, FlowStatus.POSITIVITY_BREAKDOWN)
        self._g_initial = g
        self._accepted = 0
        diag = self._diagnostics(0.0, 0.0, phi0, None, self._holder_due())
        status = FlowStatus.CONVERGED if self._converged(phi0) else FlowStatus.RUNNING
        return FlowState(0.0, tau, phi0, status, 0, diag, 0, diag.calabi_energy)

    def _converged(self, phi: np.ndarray) -> bool:
        return float(np.max(np.abs(self.velocity(phi)))) < self.controls.convergence_tol

    def advance(self, state: FlowState) -> FlowState:
        """Attempt one step; returns the new state (accepted or with a reduced step)."""
        if state.status is not FlowStatus.RUNNING:
            return state
        c = self.controls
        tau_step = state.tau
        lands = False
        if math.isfinite(c.t_end):
            remaining = c.t_end - state.t
            # absorb roundoff so a step never leaves a sliver before t_end
            if tau_step >= remaining * (1.0 - 1e-9):
                tau_step, lands = remaining, True
        reason = None
        report = None
        try:
            phi_new, report = picard_step(
                state.phi,
                tau_step,
                self.step_symbol(state.phi),
                self.ref,
                self.rbar,
                c.picard_tol,
                c.picard_max_iters,
                c.pd_floor,
                c.dealias,
            )
            if not report.converged:
                reason = "picard-not-converged"
        except PositivityBreakdown as exc:
            reason = f"positivity: {exc}"
        except ContractionFailure as exc:
            reason = f"contraction: {exc}"

        if reason is None:
            g = self.metric(phi_new)
            ok, _ = positivity_check(g, c.pd_floor)
            if not ok:
                reason = "positivity: accepted iterate not Kähler"
            else:
                energy = calabi_energy(g, self.rbar)
                if energy > state.energy + c.energy_slack * (1.0 + state.energy):
                    reason = f"energy increase {energy - state.energy:.3e}"

        if reason is not None:
            rejected = replace(report, reject_reason=reason) if report else StepReport(0, (), False, False, reason)
            new_tau = state.tau / 2.0
            if not c.adaptive or new_tau < c.tau_min:
                if reason.startswith("positivity"):
                    status = FlowStatus.POSITIVITY_BREAKDOWN
                elif reason.startswith("contraction"):
                    status = FlowStatus.CONTRACTION_FAILURE
                else:
                    status = FlowStatus.MAX_STEPS
                return replace(state, status=status, last_report=rejected, accepts_in_row=0)
            return replace(state, tau=new_tau, accepts_in_row=0, last_report=rejected)

        self._accepted += 1
        t_new = c.t_end if lands else state.t + tau_step
        diag = self._diagnostics(t_new, tau_step, phi_new, report, self._holder_due())
        accepts = state.accepts_in_row + 1
        tau = state.tau
        if c.adaptive and accepts >= c.grow_after:
            tau = min(2.0 * tau, self.tau_max)
            accepts = 0
        status = FlowStatus.CONVERGED if self._converged(phi_new) else FlowStatus.RUNNING
        return FlowState(
            t=t_new,
            tau=tau,
            phi=phi_new,
            status=status,
            step_index=state.step_index + 1,
            last_diag=diag,
            accepts_in_row=accepts,
            energy=diag.calabi_energy,
            last_report=replace(report, accepted=True),
        )

    def run(
        self,
        phi0: np.ndarray,
        snapshot_every: int = 1,
        callback: Callable[[FlowState], None] | None = None,
    ) -> tuple[list[FlowState], list[DiagnosticsRow]]:
        """Advance until ``t_end``, convergence, breakdown or the step budget.

        Returns snapshots (the initial state, every ``snapshot_every``-th
        accepted state and the final state) and one diagnostics row per
        accepted step, preceded by the initial row.
        """
        c = self.controls
        state = self.initial_state(phi0)
        trajectory = [state]
        rows = [state.last_diag] if state.last_diag is not None else []
        attempts = 0
        while state.status is FlowStatus.RUNNING and state.t < c.t_end:
            if attempts >= c.max_steps:
                state = replace(state, status=FlowStatus.MAX_STEPS)
                break
            attempts += 1
            prev_index = state.step_index
            state = self.advance(state)
            if callback is not None:
                callback(state)
            if state.step_index != prev_index:
                rows.append(state.last_diag)
                if snapshot_every > 0 and state.step_index % snapshot_every == 0:
                    trajectory.append(state)
        if trajectory[-1] is not state:
            trajectory.append(state)
        return trajectory, rows


def run_flow(config, callback: Callable[[FlowState], None] | None = None):
    """Run the flow described by a :class:`~calabi_flow.config.RunConfig`.

    Returns ``(trajectory, diagnostics)`` as :meth:`CalabiFlow.run` does.
    """
    engine = CalabiFlow(config.reference(), config.controls())
    return engine.run(config.initial_potential(), config.snapshot_every, callback)
