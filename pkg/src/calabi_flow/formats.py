"""Diagnostics CSV and binary grid snapshots.

Snapshot layout::

    magic: CFGRD1
    n: 1
    N: 64
    L: 1.0
    t: 0.25
    field_name: phi
    byte_order: little
    <blank line>
    N^(2n) little-endian float64 values, C order over (x1, y1, ..., xn, yn)

Header floats use ``repr`` so they round-trip exactly.  CSV floats use 17
significant digits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .flow import DIAGNOSTIC_COLUMNS, DiagnosticsRow

__all__ = [
    "SnapshotFormatError",
    "SnapshotHeader",
    "MAGIC",
    "write_snapshot",
    "read_snapshot",
    "format_value",
    "write_csv",
    "read_csv",
    "read_diagnostics",
    "rows_finite",
]

MAGIC = "CFGRD1"
_HEADER_KEYS = ("magic", "n", "N", "L", "t", "field_name", "byte_order")
_MAX_HEADER = 4096


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotHeader:
    n: int
    N: int
    L: float
    t: float = 0.0
    field_name: str = "phi"
    byte_order: str = "little"

    @property
    def count(self) -> int:
        return self.N ** (2 * self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.n)


def write_snapshot(path, data: np.ndarray, header: SnapshotHeader) -> None:
    data = np.asarray(data)
    if data.shape != header.shape:
        raise SnapshotFormatError(f"field shape {data.shape} does not match header shape {header.shape}")
    if not header.field_name or any(c in header.field_name for c in "\n\r:"):
        raise SnapshotFormatError(f"invalid field name {header.field_name!r}")
    lines = [
        f"magic: {MAGIC}",
        f"n: {header.n}",
        f"N: {header.N}",
        f"L: {header.L!r}",
        f"t: {float(header.t)!r}",
        f"field_name: {header.field_name}",
        "byte_order: little",
        "",
        "",
    ]
    payload = np.ascontiguousarray(data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write("\n".join(lines).encode("ascii"))
        fh.write(payload)


def read_snapshot(path) -> tuple[np.ndarray, SnapshotHeader]:
    raw = Path(path).read_bytes()
    end = raw.find(b"\n\n", 0, _MAX_HEADER)
    if end < 0:
        raise SnapshotFormatError(f"{path}: no header terminator")
    try:
        text = raw[:end].decode("ascii")
    except UnicodeDecodeError:
        raise SnapshotFormatError(f"{path}: header is not ASCII") from None
    fields = {}
    for line in text.split("\n"):
        key, sep, val = line.partition(": ")
        if not sep:
            raise SnapshotFormatError(f"{path}: malformed header line {line!r}")
        fields[key] = val
    if fields.get("magic") != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {fields.get('magic')!r}, expected {MAGIC}")
    missing = [k for k in _HEADER_KEYS if k not in fields]
    if missing:
        raise SnapshotFormatError(f"{path}: header missing {', '.join(missing)}")
    if fields["byte_order"] != "little":
        raise SnapshotFormatError(f"{path}: unsupported byte order {fields['byte_order']!r}")
    try:
        header = SnapshotHeader(
            n=int(fields["n"]),
            N=int(fields["N"]),
            L=float(fields["L"]),
            t=float(fields["t"]),
            field_name=fields["field_name"],
        )
    except ValueError as exc:
        raise SnapshotFormatError(f"{path}: bad header value ({exc})") from None
    if header.n not in (1, 2) or header.N < 1:
        raise SnapshotFormatError(f"{path}: invalid sizes n={header.n} N={header.N}")
    payload = raw[end + 2 :]
    expected = header.count * 8
    if len(payload) < expected:
        raise SnapshotFormatError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise SnapshotFormatError(f"{path}: payload size {len(payload)} bytes does not match header ({expected})")
    data = np.frombuffer(payload, dtype="<f8").astype(float).reshape(header.shape)
    return data, header


def format_value(v) -> str:
    """17 significant digits for floats, plain decimal for integers."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, rows: Sequence, columns: Sequence[str] = DIAGNOSTIC_COLUMNS) -> None:
    """One header line, one line per row; rows are DiagnosticsRow or plain sequences."""
    if len(rows) == 0:
        raise ValueError("write_csv needs at least one row")
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            vals = row.values() if isinstance(row, DiagnosticsRow) else tuple(row)
            if len(vals) != len(columns):
                raise ValueError(f"row has {len(vals)} values for {len(columns)} columns")
            w.writerow([format_value(v) for v in vals])


def _parse_cell(text: str):
    if text == "-0":  # a float negative zero; int() would drop the sign
        return -0.0
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path) -> tuple[list[str], list[list]]:
    """Header and rows; cells come back as ``int``, ``float`` or, failing both, ``str``."""
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[_parse_cell(c) for c in r] for r in reader if r]
    return header, rows


def read_diagnostics(path) -> list[DiagnosticsRow]:
    header, rows = read_csv(path)
    if tuple(header) != DIAGNOSTIC_COLUMNS:
        raise ValueError(f"{path}: not a diagnostics file (columns {header})")
    out = []
    for r in rows:
        vals = dict(zip(header, r))
        vals["picard_iters"] = int(vals["picard_iters"])
        out.append(DiagnosticsRow(**{k: (v if k == "picard_iters" else float(v)) for k, v in vals.items()}))
    return out


def rows_finite(rows: Iterable[DiagnosticsRow], skip=("holder_2a", "holder_4a", "weighted_norm")) -> bool:
    """True when every value outside ``skip`` is finite."""
    for r in rows:
        for c in DIAGNOSTIC_COLUMNS:
            if c not in skip and not math.isfinite(getattr(r, c)):
                return False
    return True
