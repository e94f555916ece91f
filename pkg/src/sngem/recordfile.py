"""Dual-channel signal files and lossless number formatting.

File layout (UTF-8)::

    # format_version = 1
    # kind = multitone
    # t0_s = 0
    # dt_s = 0.012515644555694618
    # n = 40
    # filter = diff
    # snr_db = none
    # seed = none
    # truth = {"components": [...]}
    # columns = t,re_x,im_x,re_psi,im_psi
    0,1.2990381056766580,0.75,...

Every number is written with 17 significant digits so doubles round-trip
bit-exactly.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import RecordFormatError, ValidationError
from .signal_model import DualChannelRecord, SamplingGrid

FORMAT_VERSION = 1
COLUMNS = "t,re_x,im_x,re_psi,im_psi"
REQUIRED_KEYS = ("format_version", "kind", "t0_s", "dt_s", "n", "filter", "snr_db", "seed")


def format_float(value: float) -> str:
    value = float(value)
    if value == 0:
        return "0"
    return format(value, ".17g")


def dumps_json(obj, indent: int | None = 2) -> str:
    """JSON text with every float printed at 17 significant digits.

    Non-finite floats become ``null``.
    """
    def enc(o, level):
        pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
        end = "" if indent is None else "\n" + " " * (indent * level)
        sep = ", " if indent is None else ","
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format_float(o) if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [pad + json.dumps(str(k)) + ": " + enc(v, level + 1) for k, v in o.items()]
            return "{" + sep.join(items) + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            if len(o) == 0:
                return "[]"
            items = [pad + enc(v, level + 1) for v in o]
            return "[" + sep.join(items) + end + "]"
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return enc(obj, 0)


def record_to_text(record: DualChannelRecord) -> str:
    g = record.grid
    snr = record.noise_tag if record.noise_tag == "none" else format_float(record.noise_tag)
    header = [
        ("format_version", str(FORMAT_VERSION)),
        ("kind", record.kind),
        ("t0_s", format_float(g.t0)),
        ("dt_s", format_float(g.dt)),
        ("n", str(g.count)),
        ("filter", record.filter_tag),
        ("snr_db", snr),
        ("seed", "none" if record.seed is None else str(record.seed)),
    ]
    if record.truth is not None:
        header.append(("truth", dumps_json(record.truth, indent=None)))
    header.append(("columns", COLUMNS))
    lines = [f"# {k} = {v}" for k, v in header]
    for t, x, p in zip(g.times, record.x, record.psi):
        lines.append(",".join(format_float(v) for v in (t, x.real, x.imag, p.real, p.imag)))
    return "\n".join(lines) + "\n"


def write_record(record: DualChannelRecord, path) -> None:
    Path(path).write_text(record_to_text(record), encoding="utf-8")


def parse_record(text: str) -> DualChannelRecord:
    header: dict[str, str] = {}
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if not sep:
                raise RecordFormatError(f"line {lineno}: header must look like '# key = value'")
            header[key.strip()] = value.strip()
            continue
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError as exc:
            raise RecordFormatError(f"line {lineno}: {exc}") from exc
        if len(vals) != 5:
            raise RecordFormatError(f"line {lineno}: expected 5 columns, got {len(vals)}")
        rows.append(vals)

    missing = [k for k in REQUIRED_KEYS if k not in header]
    if missing:
        raise RecordFormatError(f"missing header keys: {', '.join(missing)}")
    if header.get("columns", COLUMNS).replace(" ", "") != COLUMNS:
        raise RecordFormatError(f"unexpected columns {header['columns']!r}; want {COLUMNS}")
    if header["format_version"] != str(FORMAT_VERSION):
        raise RecordFormatError(f"unsupported format_version {header['format_version']!r}")

    try:
        grid = SamplingGrid(float(header["t0_s"]), float(header["dt_s"]), int(header["n"]))
        snr = header["snr_db"]
        noise_tag = "none" if snr == "none" else float(snr)
        seed = None if header["seed"] in ("none", "") else int(header["seed"])
        truth = json.loads(header["truth"]) if "truth" in header else None
    except (ValueError, ValidationError) as exc:
        raise RecordFormatError(f"bad header value: {exc}") from exc

    if len(rows) != grid.count:
        raise RecordFormatError(f"header says n = {grid.count} but file has {len(rows)} rows")
    data = np.array(rows)
    t = grid.times
    span = max(abs(t[0]), abs(t[-1]), grid.dt)
    if np.max(np.abs(data[:, 0] - t)) > 1e-12 * span:
        raise RecordFormatError("time column disagrees with t0_s/dt_s header")
    try:
        return DualChannelRecord(
            grid,
            data[:, 1] + 1j * data[:, 2],
            data[:, 3] + 1j * data[:, 4],
            header["filter"],
            noise_tag,
            seed,
            header["kind"],
            truth,
        )
    except ValidationError as exc:
        raise RecordFormatError(str(exc)) from exc


def read_record(path) -> DualChannelRecord:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise RecordFormatError(f"cannot read {path}: {exc}") from exc
    return parse_record(text)
