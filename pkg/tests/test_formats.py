import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calabi_flow.flow import DIAGNOSTIC_COLUMNS, DiagnosticsRow
from calabi_flow.formats import (
    MAGIC,
    SnapshotFormatError,
    SnapshotHeader,
    format_value,
    read_csv,
    read_diagnostics,
    read_snapshot,
    rows_finite,
    write_csv,
    write_snapshot,
)


def make_row(**kw) -> DiagnosticsRow:
    vals = {c: 0.0 for c in DIAGNOSTIC_COLUMNS}
    vals["picard_iters"] = 0
    vals.update(kw)
    return DiagnosticsRow(**vals)


def test_format_value():
    assert format_value(1 / 3) == "0.33333333333333331"
    assert format_value(3) == "3"
    assert format_value(np.int64(12)) == "12"
    assert format_value(True) == "1"
    assert format_value(float("nan")) == "nan"
    assert format_value(-0.0) == "-0"


def test_single_row_csv(tmp_path):
    path = tmp_path / "d.csv"
    write_csv(path, [make_row(t=0.5, picard_iters=3)])
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == ",".join(DIAGNOSTIC_COLUMNS)
    assert lines[1].split(",")[DIAGNOSTIC_COLUMNS.index("picard_iters")] == "3"


def test_csv_rejects_empty_and_ragged(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "a.csv", [])
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", [(1.0, 2.0)], ("a",))


finite = st.floats(allow_nan=False, allow_infinity=True, width=64)


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(finite, min_size=len(DIAGNOSTIC_COLUMNS) - 1, max_size=len(DIAGNOSTIC_COLUMNS) - 1), iters=st.integers(0, 10**6))
def test_diagnostics_roundtrip_bit_exact(tmp_path_factory, vals, iters):
    names = [c for c in DIAGNOSTIC_COLUMNS if c != "picard_iters"]
    row = make_row(picard_iters=iters, **dict(zip(names, vals)))
    path = tmp_path_factory.mktemp("csv") / "d.csv"
    write_csv(path, [row, row])
    back = read_diagnostics(path)
    assert len(back) == 2
    for a, b in zip(row.values(), back[0].values()):
        assert np.float64(a).tobytes() == np.float64(b).tobytes()


def test_read_diagnostics_rejects_other_tables(tmp_path):
    path = tmp_path / "x.csv"
    write_csv(path, [(1, 2.5)], ("a", "b"))
    header, rows = read_csv(path)
    assert header == ["a", "b"] and rows == [[1, 2.5]]
    with pytest.raises(ValueError):
        read_diagnostics(path)


def test_rows_finite():
    assert rows_finite([make_row(holder_2a=math.nan)])
    assert not rows_finite([make_row(calabi_energy=math.nan)])
    assert not rows_finite([make_row(), make_row(t=math.inf)])


@pytest.mark.parametrize("n,N", [(1, 8), (1, 16), (2, 8)])
def test_snapshot_roundtrip_bit_exact(tmp_path, n, N):
    data = np.random.default_rng(n * N).standard_normal((N,) * (2 * n))
    data.flat[0] = -0.0
    data.flat[1] = 5e-324
    data.flat[2] = np.inf
    header = SnapshotHeader(n, N, 0.1 + 0.2, 1 / 3, "phi_dot")
    path = tmp_path / "s.cgrd"
    write_snapshot(path, data, header)
    back, h = read_snapshot(path)
    assert back.tobytes() == data.tobytes()
    assert h == header
    assert path.read_bytes().startswith(f"magic: {MAGIC}\n".encode())


def test_snapshot_header_checks(tmp_path):
    with pytest.raises(SnapshotFormatError):
        write_snapshot(tmp_path / "a", np.zeros((8, 8)), SnapshotHeader(1, 16, 1.0))
    with pytest.raises(SnapshotFormatError):
        write_snapshot(tmp_path / "a", np.zeros((8, 8)), SnapshotHeader(1, 8, 1.0, field_name="a\nb"))


def _good(tmp_path):
    path = tmp_path / "g.cgrd"
    write_snapshot(path, np.ones((8, 8)), SnapshotHeader(1, 8, 1.0))
    return path, path.read_bytes()


def test_snapshot_corruptions(tmp_path):
    path, raw = _good(tmp_path)
    bad = tmp_path / "b.cgrd"
    cases = {
        "bad magic": raw.replace(MAGIC.encode(), b"CFGRD9"),
        "truncated": raw[:-8],
        "does not match": raw + b"\0" * 8,
        "no header terminator": b"magic: CFGRD1\n" * 400,
        "missing": raw.replace(b"field_name: phi\n", b""),
        "byte order": raw.replace(b"byte_order: little", b"byte_order: big"),
        "bad header value": raw.replace(b"N: 8", b"N: eight"),
    }
    for fragment, content in cases.items():
        bad.write_bytes(content)
        with pytest.raises(SnapshotFormatError, match=fragment):
            read_snapshot(bad)
