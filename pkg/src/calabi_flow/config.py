"""Run configuration and its line-oriented file format.

Grammar::

    # comment                     (also after a value)
    [section]                     lattice | reference | initial | stepper | output | experiment
    key = value

Repeatable keys (``mode`` in ``[initial]``, ``psi_mode`` in ``[reference]``)
take a frequency vector of ``2n`` integers, a colon, an amplitude and an
optional phase::

    mode = 1 0 : 0.05
    mode = 0 2 : 0.02 -1.5707963267948966

and contribute ``amplitude * cos(2 pi k.x / L + phase)``.  Real values accept
a trailing ``pi`` factor (``L = 2pi``, ``L = 0.5*pi``).  Every key, its default
and its valid range is listed in ``KEYS``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .flow import StepControls
from .lattice import TorusLattice
from .metric import ReferenceGeometry
from .norms import HolderParams

__all__ = ["ConfigError", "ModeSpec", "RunConfig", "parse_config", "parse_config_text", "KEYS"]


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the offending line number when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


@dataclass(frozen=True)
class ModeSpec:
    freq: tuple[int, ...]
    amplitude: float
    phase: float = 0.0


@dataclass
class RunConfig:
    n: int = 1
    N: int = 64
    L: float = 1.0
    g0: tuple[complex, ...] | None = None
    psi_modes: tuple[ModeSpec, ...] = ()
    phi0_modes: tuple[ModeSpec, ...] = ()
    phi0_snapshot: str | None = None
    phi0_scale: float = 1.0
    alpha: float = 0.5
    tau0: float = 1e-3
    tau_min: float = 1e-12
    tau_max: float | None = None
    t_end: float = 1.0
    picard_tol: float = 1e-11
    picard_max_iters: int = 40
    convergence_tol: float = 1e-8
    energy_slack: float = 1e-10
    max_steps: int = 100_000
    adaptive: bool = True
    holder_every: int = 1
    dealias: bool = False
    splitting_scale: float | None = 1.0
    output_dir: str = "out"
    snapshot_every: int = 0
    seed: int = 20240601
    experiment: dict[str, Any] = field(default_factory=dict)

    # -- derived objects ---------------------------------------------------
    def lattice(self) -> TorusLattice:
        return TorusLattice(self.n, self.N, self.L)

    def g0_matrix(self) -> np.ndarray:
        if self.g0 is None:
            return np.eye(self.n, dtype=complex)
        return np.asarray(self.g0, dtype=complex).reshape(self.n, self.n)

    def reference(self) -> ReferenceGeometry:
        lat = self.lattice()
        return ReferenceGeometry(lat, self.g0_matrix(), _sum_modes(lat, self.psi_modes))

    def holder(self) -> HolderParams:
        return HolderParams(alpha=self.alpha)

    def controls(self) -> StepControls:
        return StepControls(
            tau0=self.tau0,
            tau_min=self.tau_min,
            tau_max=self.tau_max,
            t_end=self.t_end,
            picard_tol=self.picard_tol,
            picard_max_iters=self.picard_max_iters,
            convergence_tol=self.convergence_tol,
            energy_slack=self.energy_slack,
            max_steps=self.max_steps,
            adaptive=self.adaptive,
            holder_every=self.holder_every,
            dealias=self.dealias,
            splitting_scale=self.splitting_scale,
            holder=self.holder(),
        )

    def initial_potential(self, lattice: TorusLattice | None = None) -> np.ndarray:
        """``phi0`` on ``lattice`` (defaults to the configured one)."""
        lat = lattice or self.lattice()
        if self.phi0_snapshot is not None:
            from .formats import read_snapshot

            try:
                data, header = read_snapshot(self.phi0_snapshot)
            except OSError as exc:
                raise ConfigError(f"cannot read snapshot {self.phi0_snapshot}: {exc.strerror or exc}") from None
            if (header.n, header.N) != (lat.n, lat.N) or not math.isclose(header.L, lat.L):
                raise ConfigError(
                    f"snapshot {self.phi0_snapshot} is for n={header.n} N={header.N} L={header.L}, "
                    f"config wants n={lat.n} N={lat.N} L={lat.L}"
                )
            return self.phi0_scale * data
        return self.phi0_scale * _sum_modes(lat, self.phi0_modes)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def validate(self) -> "RunConfig":
        """Cross-field checks; raises :class:`ConfigError`."""
        try:
            self.lattice()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for label, modes in (("psi_mode", self.psi_modes), ("mode", self.phi0_modes)):
            for m in modes:
                _check_mode(m, self.n, self.N, label)
        if self.g0 is not None:
            if len(self.g0) != self.n * self.n:
                raise ConfigError(f"g0 needs {self.n * self.n} entries for n={self.n}, got {len(self.g0)}")
            try:
                self.reference()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.phi0_snapshot is not None and self.phi0_modes:
            raise ConfigError("[initial] takes either mode lines or a snapshot, not both")
        if self.tau_max is not None and self.tau_max < self.tau_min:
            raise ConfigError("tau_max must be >= tau_min")
        if self.tau0 < self.tau_min:
            raise ConfigError("tau0 must be >= tau_min")
        return self


def _sum_modes(lat: TorusLattice, modes) -> np.ndarray:
    out = np.zeros(lat.shape)
    for m in modes:
        out += lat.mode(m.freq, m.amplitude, m.phase)
    return out


def _check_mode(m: ModeSpec, n: int, N: int, label: str, line: int | None = None) -> None:
    if len(m.freq) != 2 * n:
        raise ConfigError(f"{label} needs {2 * n} frequency components for n={n}, got {len(m.freq)}", line)
    for k in m.freq:
        if not -N // 2 < k <= N // 2:
            raise ConfigError(f"{label} frequency {k} outside (-N/2, N/2] = ({-N // 2}, {N // 2}]", line)


# --------------------------------------------------------------------------
# value parsers

_PI = re.compile(r"^\s*(?P<coef>[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)?\s*\*?\s*pi\s*$")


def _real(text: str) -> float:
    m = _PI.match(text)
    if m:
        coef = m.group("coef")
        return (float(coef) if coef else 1.0) * math.pi
    val = float(text)
    if not math.isfinite(val):
        raise ValueError("value must be finite")
    return val


def _int(text: str) -> int:
    return int(text, 10)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional_real(text: str) -> float | None:
    return None if text.lower() in ("auto", "none") else _real(text)


def _complex_list(text: str) -> tuple[complex, ...]:
    return tuple(complex(tok.replace("i", "j")) for tok in text.split())


def _mode(text: str) -> ModeSpec:
    if ":" not in text:
        raise ValueError("mode needs 'k1 k2 ... : amplitude [phase]'")
    left, right = text.split(":", 1)
    freq = tuple(int(tok) for tok in left.split())
    vals = right.split()
    if not 1 <= len(vals) <= 2:
        raise ValueError("mode needs an amplitude and an optional phase after ':'")
    amp = _real(vals[0])
    phase = _real(vals[1]) if len(vals) == 2 else 0.0
    return ModeSpec(freq, amp, phase)


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# section -> key -> (field name, parser, range check, description)
KEYS: dict[str, dict[str, tuple[str, Callable, Callable | None, str]]] = {
    "lattice": {
        "n": ("n", _int, lambda v: v in (1, 2), "complex dimension, 1 or 2"),
        "N": ("N", _int, lambda v: v >= 8 and v & (v - 1) == 0, "points per real axis, power of two >= 8"),
        "L": ("L", _real, _positive, "period of every real axis, > 0"),
    },
    "reference": {
        "g0": ("g0", _complex_list, None, "flat metric entries, row-major n*n, Hermitian PD (default identity)"),
        "psi_mode": ("psi_modes", _mode, None, "background potential mode (repeatable)"),
    },
    "initial": {
        "mode": ("phi0_modes", _mode, None, "initial potential mode (repeatable)"),
        "snapshot": ("phi0_snapshot", str, None, "initial potential snapshot file"),
        "scale": ("phi0_scale", _real, None, "factor applied to the initial potential (default 1)"),
    },
    "stepper": {
        "alpha": ("alpha", _real, lambda v: 0 < v < 1, "Hölder exponent in (0, 1)"),
        "tau0": ("tau0", _real, _positive, "initial step"),
        "tau_min": ("tau_min", _real, _positive, "smallest step before a terminal status"),
        "tau_max": ("tau_max", _optional_real, lambda v: v is None or v > 0, "largest step, 'auto' = 1/lambda_min"),
        "t_end": ("t_end", _real, _nonneg, "final time"),
        "picard_tol": ("picard_tol", _real, _positive, "Picard stopping tolerance (relative to 1 + |x|)"),
        "picard_max_iters": ("picard_max_iters", _int, lambda v: v >= 1, "Picard iteration cap"),
        "convergence_tol": ("convergence_tol", _real, _positive, "stop when sup |R - Rbar| is below this"),
        "energy_slack": ("energy_slack", _real, _nonneg, "relative slack on Calabi energy monotonicity"),
        "max_steps": ("max_steps", _int, lambda v: v >= 1, "attempted step budget"),
        "adaptive": ("adaptive", _bool, None, "adapt tau (default true)"),
        "holder_every": ("holder_every", _int, _nonneg, "Hölder columns every k-th row, 0 = never"),
        "dealias": ("dealias", _bool, None, "apply the 2/3 filter to R inside the forcing"),
        "splitting_scale": (
            "splitting_scale",
            _optional_real,
            lambda v: v is None or v > 0,
            "factor c in A_c = c^2 A (default 1), 'auto' = balanced per step",
        ),
    },
    "output": {
        "dir": ("output_dir", str, None, "output directory"),
        "snapshot_every": ("snapshot_every", _int, _nonneg, "write a snapshot every k accepted steps, 0 = ends only"),
        "seed": ("seed", _int, _nonneg, "seed for generated corpora"),
    },
    "experiment": {
        "amplitude": ("amplitude", _real, _positive, "mode amplitude for generated data"),
        "kmax": ("kmax", _int, lambda v: v >= 1, "highest generated frequency"),
        "refine_N": ("refine_N", _int, lambda v: v >= 8 and v & (v - 1) == 0, "refined grid size"),
        "rungs": ("rungs", _int, lambda v: v >= 2, "number of tau ladder rungs"),
        "band_lo": ("band_lo", _real, _positive, "lower metric bound band"),
        "band_hi": ("band_hi", _real, _positive, "upper metric bound band"),
        "tolerance": ("tolerance", _real, _positive, "pass tolerance (relative)"),
        "fit_lo": ("fit_lo", _real, _positive, "lower cut of the decay fit window"),
        "fit_hi": ("fit_hi", _real, _positive, "upper cut of the decay fit window"),
    },
}

_REPEATABLE = {"psi_modes", "phi0_modes"}
_REQUIRED = ("n", "N")
_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")


def parse_config_text(text: str, path: str | None = None) -> RunConfig:
    section = None
    values: dict[str, Any] = {}
    modes: dict[str, list[tuple[ModeSpec, int]]] = {k: [] for k in _REPEATABLE}
    experiment: dict[str, Any] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            if section not in KEYS:
                raise ConfigError(f"unknown section [{section}]", lineno, path)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, path)
        if section is None:
            raise ConfigError("key outside of any section", lineno, path)
        key, val = (s.strip() for s in line.split("=", 1))
        spec = KEYS[section].get(key)
        if spec is None:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, path)
        name, parse, check, desc = spec
        if not val:
            raise ConfigError(f"{key} has no value", lineno, path)
        try:
            parsed = parse(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, path) from None
        if check is not None and not check(parsed):
            raise ConfigError(f"{key} = {val} out of range ({desc})", lineno, path)
        if name in _REPEATABLE:
            modes[name].append((parsed, lineno))
            continue
        target = experiment if section == "experiment" else values
        if name in target:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        target[name] = parsed

    for required in _REQUIRED:
        if required not in values:
            raise ConfigError(f"missing required key {required!r} in [lattice]", path=path)
    cfg = RunConfig(**values)
    cfg.experiment = experiment
    for name, entries in modes.items():
        label = "psi_mode" if name == "psi_modes" else "mode"
        for spec, lineno in entries:
            try:
                _check_mode(spec, cfg.n, cfg.N, label, lineno)
            except ConfigError as exc:
                raise ConfigError(str(exc).split(": ", 1)[1], lineno, path) from None
        setattr(cfg, name, tuple(s for s, _ in entries))
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), path=path) from None
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror or exc}", path=str(p)) from None
    return parse_config_text(text, str(p))


def config_keys() -> list[str]:
    """Flat list of ``section.key`` names, for documentation and tests."""
    return [f"{s}.{k}" for s, keys in KEYS.items() for k in keys]

