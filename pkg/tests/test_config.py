import math

import numpy as np
import pytest

from calabi_flow.config import KEYS, ConfigError, ModeSpec, RunConfig, parse_config, parse_config_text
from calabi_flow.formats import SnapshotHeader, write_snapshot

MINIMAL = "[lattice]\nn = 1\nN = 32\n"


def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert (cfg.n, cfg.N, cfg.L) == (1, 32, 1.0)
    assert cfg.phi0_modes == ()
    assert np.array_equal(cfg.initial_potential(), np.zeros((32, 32)))
    c = cfg.controls()
    assert c.splitting_scale == 1.0 and c.adaptive


def test_full_config(tmp_path):
    text = """
    # comment line
    [lattice]
    n = 2
    N = 16
    L = 2pi            # trailing comment

    [reference]
    g0 = 2 0.5i -0.5i 1
    psi_mode = 1 0 0 0 : 0.001

    [initial]
    mode = 1 0 0 0 : 0.01
    mode = 0 1 1 0 : 0.005 0.5pi
    scale = 0.5

    [stepper]
    tau0 = 1e-4
    tau_max = auto
    splitting_scale = auto
    adaptive = no
    holder_every = 0

    [output]
    dir = somewhere
    seed = 7

    [experiment]
    rungs = 4
    """
    cfg = parse_config_text(text)
    assert cfg.L == pytest.approx(2 * math.pi)
    assert cfg.phi0_modes[1] == ModeSpec((0, 1, 1, 0), 0.005, 0.5 * math.pi)
    assert cfg.phi0_scale == 0.5 and cfg.tau_max is None
    assert np.allclose(cfg.g0_matrix(), [[2, 0.5j], [-0.5j, 1]])
    assert not cfg.reference().is_flat
    c = cfg.controls()
    assert c.splitting_scale is None and not c.adaptive and c.holder_every == 0
    assert cfg.output_dir == "somewhere" and cfg.seed == 7
    assert cfg.experiment == {"rungs": 4}
    lat = cfg.lattice()
    expected = 0.5 * (lat.mode((1, 0, 0, 0), 0.01) + lat.mode((0, 1, 1, 0), 0.005, 0.5 * math.pi))
    assert np.max(np.abs(cfg.initial_potential() - expected)) < 1e-16


@pytest.mark.parametrize("text,value", [("pi", math.pi), ("2pi", 2 * math.pi), ("-0.5pi", -0.5 * math.pi), ("2*pi", 2 * math.pi), ("1e-3", 1e-3)])
def test_pi_suffix_in_modes(text, value):
    cfg = parse_config_text(MINIMAL + f"[initial]\nmode = 1 0 : 1e-3 {text}\n")
    assert cfg.phi0_modes[0].phase == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text,value", [("0.5 pi", 0.5 * math.pi), ("3 * pi", 3 * math.pi), (".25pi", 0.25 * math.pi)])
def test_pi_suffix_in_scalars(text, value):
    cfg = parse_config_text(f"[lattice]\nn = 1\nN = 16\nL = {text}\n")
    assert cfg.L == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize(
    "body,line,fragment",
    [
        ("[lattice]\nn = 1\nN = 100\n", 3, "N = 100"),
        ("[lattice]\nn = 3\nN = 16\n", 2, "n = 3"),
        (MINIMAL + "[initial]\nmode = 17 0 : 0.1\n", 5, "frequency 17"),
        (MINIMAL + "[initial]\nmode = 1 0 0 0 : 0.1\n", 5, "got 4"),
        (MINIMAL + "[stepper]\nbogus = 1\n", 5, "unknown key"),
        (MINIMAL + "[nowhere]\n", 4, "unknown section"),
        (MINIMAL + "[stepper]\ntau0 = fast\n", 5, "bad value"),
        (MINIMAL + "[stepper]\ntau0 = -1\n", 5, "out of range"),
        (MINIMAL + "[stepper]\ntau0 =\n", 5, "no value"),
        (MINIMAL + "[stepper]\ntau0 = 1\ntau0 = 2\n", 6, "duplicate"),
        (MINIMAL + "just words\n", 4, "key = value"),
        ("n = 1\n", 1, "outside of any section"),
        (MINIMAL + "[stepper]\nadaptive = maybe\n", 5, "boolean"),
        (MINIMAL + "[initial]\nmode = 1 0 0.1\n", 5, "mode needs"),
    ],
)
def test_errors_carry_line_numbers(body, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config_text(body, "x.cfg")
    assert info.value.line == line
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"x.cfg:{line}:")


@pytest.mark.parametrize(
    "body,fragment",
    [
        ("[lattice]\nn = 1\n", "'N'"),
        (MINIMAL + "[reference]\ng0 = 1 0 0 1\n", "g0 needs"),
        ("[lattice]\nn = 2\nN = 8\n[reference]\ng0 = 1 2 2 1\n", "positive definite"),
        (MINIMAL + "[stepper]\ntau0 = 1e-13\n", "tau0"),
        (MINIMAL + "[stepper]\ntau_max = 1e-13\n", "tau_max"),
    ],
)
def test_cross_field_errors(body, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("'", ".")):
        parse_config_text(body)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        parse_config(tmp_path / "absent.cfg")


def test_snapshot_initial_data(tmp_path):
    lat_data = np.random.default_rng(0).standard_normal((16, 16)) * 1e-4
    path = tmp_path / "phi.cgrd"
    write_snapshot(path, lat_data, SnapshotHeader(1, 16, 1.0, 0.0, "phi"))
    cfg = parse_config_text(f"[lattice]\nn = 1\nN = 16\n[initial]\nsnapshot = {path}\nscale = 2\n")
    assert np.array_equal(cfg.initial_potential(), 2 * lat_data)
    with pytest.raises(ConfigError):
        parse_config_text(f"[lattice]\nn = 1\nN = 32\n[initial]\nsnapshot = {path}\n").initial_potential()
    with pytest.raises(ConfigError):
        parse_config_text(f"[lattice]\nn = 1\nN = 16\n[initial]\nsnapshot = {tmp_path / 'none'}\n").initial_potential()
    with pytest.raises(ConfigError, match="either"):
        parse_config_text(f"[lattice]\nn = 1\nN = 16\n[initial]\nsnapshot = {path}\nmode = 1 0 : 1\n")


def test_shipped_configs_parse(config_dir):
    names = sorted(p.name for p in config_dir.glob("*.cfg"))
    assert {"n1.cfg", "n2.cfg", "spectrum.cfg", "stability.cfg", "smoothing.cfg", "contraction.cfg", "monitor.cfg"} <= set(names)
    for name in names:
        parse_config(config_dir / name)


def test_every_key_has_a_description():
    for section, keys in KEYS.items():
        for key, (_, parse, _, desc) in keys.items():
            assert callable(parse) and desc, f"{section}.{key}"


def test_with_overrides_is_a_copy():
    cfg = RunConfig(n=1, N=16)
    other = cfg.with_overrides(N=32)
    assert cfg.N == 16 and other.N == 32
