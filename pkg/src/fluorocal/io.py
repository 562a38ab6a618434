"""Plain-text, byte-deterministic file formats.

Every file starts with ``#`` metadata lines of the form ``# key: <json>``
followed by one comma-separated header row and the data rows.  Floats are
written with 17 significant digits so they round-trip exactly; nothing
time- or host-dependent is ever written.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import FormatError
from .grid import SuperpixelGrid
from .model import BetaMap
from .synth import EfficiencyField, ShotTruth

FORMAT_VERSION = 1

KIND_DATASET = "dataset"
KIND_TRUTH = "truth"
KIND_FIELD = "field"
KIND_BETA = "beta-map"
KIND_REPORT = "report"


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.17g}"
    if value is None:
        return ""
    text = str(value)
    if any(ch in text for ch in ',\n"'):
        raise FormatError(f"cannot write {text!r}: contains a separator")
    return text


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(data) -> str:
    """Short SHA-256 digest of the canonical JSON form of ``data``."""
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()[:16]


def write_table(path, kind: str, header, rows, meta: dict | None = None) -> Path:
    path = Path(path)
    lines = [f"# format: {canonical_json({'kind': kind, 'version': FORMAT_VERSION})}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {canonical_json(value)}")
    lines.append(",".join(header))
    for row in rows:
        if len(row) != len(header):
            raise FormatError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(format_value(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_table(path, kind: str | None = None) -> tuple[dict, list[str], list[list[str]]]:
    """Return ``(meta, header, rows)``; ``rows`` are lists of strings."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    meta: dict = {}
    body = []
    for number, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if not sep:
                raise FormatError(f"{path}:{number}: metadata line without ':'")
            try:
                meta[key.strip()] = json.loads(value)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{number}: bad metadata value ({exc.msg})") from None
        elif line:
            body.append(line.split(","))
    fmt = meta.get("format")
    if not isinstance(fmt, dict) or "kind" not in fmt:
        raise FormatError(f"{path}: missing format line")
    if fmt.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {fmt.get('version')!r}")
    if kind is not None and fmt["kind"] != kind:
        raise FormatError(f"{path}: expected a {kind} file, found {fmt['kind']}")
    if not body:
        raise FormatError(f"{path}: missing header row")
    header, rows = body[0], body[1:]
    if fmt["kind"] == KIND_BETA:
        return meta, header, rows
    for number, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}: data row {number} has {len(row)} fields, header has {len(header)}")
    return meta, header, rows


def _floats(rows, columns: slice | int = slice(None)) -> np.ndarray:
    if isinstance(columns, int):
        columns = slice(columns, columns + 1)
    try:
        return np.array([[float(v) for v in row[columns]] for row in rows], dtype=float)
    except ValueError as exc:
        raise FormatError(f"non-numeric field ({exc})") from None


def _grid(meta: dict, path) -> SuperpixelGrid:
    if "grid" not in meta:
        raise FormatError(f"{path}: missing grid manifest")
    try:
        return SuperpixelGrid.from_manifest(meta["grid"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: bad grid manifest ({exc})") from None


# datasets

def write_dataset(path, dataset: Dataset, extra_meta: dict | None = None) -> Path:
    grid = dataset.grid
    header = ["shot_id", "cavity_jz", "freq_factor"] + [f"c{j}" for j in range(grid.n)]
    rows = (
        [int(sid), cav, freq, *counts]
        for sid, cav, freq, counts in zip(dataset.shot_ids, dataset.cavity_jz, dataset.freq_factor, dataset.counts)
    )
    meta = {
        "grid": grid.to_manifest(),
        "contrast": float(dataset.contrast),
        "counts_scale": float(dataset.counts_scale),
    }
    meta.update(dataset.meta)
    meta.update(extra_meta or {})
    return write_table(path, KIND_DATASET, header, rows, meta)


def read_dataset(path) -> Dataset:
    meta, header, rows = read_table(path, KIND_DATASET)
    grid = _grid(meta, path)
    if len(header) != 3 + grid.n or header[:3] != ["shot_id", "cavity_jz", "freq_factor"]:
        raise FormatError(f"{path}: header does not match a {grid.n}-superpixel dataset")
    values = _floats(rows).reshape(len(rows), len(header))
    extra = {k: v for k, v in meta.items() if k not in ("format", "grid", "contrast", "counts_scale")}
    try:
        return Dataset(
            grid=grid,
            shot_ids=values[:, 0].astype(np.int64),
            cavity_jz=values[:, 1],
            freq_factor=values[:, 2],
            counts=values[:, 3:],
            contrast=float(meta.get("contrast", 0.92)),
            counts_scale=float(meta.get("counts_scale", 1.0)),
            meta=extra,
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# truth sidecar and efficiency field

def write_truth(path, truths: list[ShotTruth], meta: dict | None = None) -> Path:
    header = ["shot_id", "true_jz", "true_n", "down_row", "down_col", "up_row", "up_col"]
    rows = (
        [t.shot_id, t.true_jz, t.true_n, *t.cloud_centers[0], *t.cloud_centers[1]]
        for t in truths
    )
    return write_table(path, KIND_TRUTH, header, rows, meta)


def read_truth(path) -> list[ShotTruth]:
    _, header, rows = read_table(path, KIND_TRUTH)
    if header[:3] != ["shot_id", "true_jz", "true_n"]:
        raise FormatError(f"{path}: unexpected truth header")
    values = _floats(rows)
    out = []
    for v in values:
        centers = ((v[3], v[4]), (v[5], v[6])) if len(v) >= 7 else ((math.nan,) * 2,) * 2
        out.append(ShotTruth(int(v[0]), float(v[1]), float(v[2]), centers))
    return out


def write_field(path, field: EfficiencyField, meta: dict | None = None) -> Path:
    header = ["index", "row", "col", "efficiency"]
    grid = field.grid
    rows = ([j, *grid.row_col(j), field.values[j]] for j in range(grid.n))
    info = {
        "grid": grid.to_manifest(),
        "generation": {
            "seed": field.seed,
            "amplitude": float(field.amplitude),
            "correlation_length": field.correlation_length,
        },
    }
    info.update(meta or {})
    return write_table(path, KIND_FIELD, header, rows, info)


def read_field(path) -> EfficiencyField:
    meta, header, rows = read_table(path, KIND_FIELD)
    grid = _grid(meta, path)
    if header != ["index", "row", "col", "efficiency"] or len(rows) != grid.n:
        raise FormatError(f"{path}: field table does not match the grid")
    values = _floats(rows, 3)
    gen = meta.get("generation", {})
    return EfficiencyField(
        values=values.ravel(),
        grid=grid,
        seed=gen.get("seed"),
        amplitude=gen.get("amplitude", 0.0),
        correlation_length=gen.get("correlation_length"),
    )


# weight maps

def write_beta(path, beta: BetaMap, meta: dict | None = None) -> Path:
    """Weight map in atoms per count: a bias line, then one value per
    superpixel in manifest order."""
    path = Path(path)
    info = {"format": {"kind": KIND_BETA, "version": FORMAT_VERSION}, "grid": beta.grid.to_manifest(),
            "counts_scale": float(beta.counts_scale)}
    info.update(meta or {})
    lines = [f"# {key}: {canonical_json(value)}" for key, value in info.items()]
    lines.append(f"bias,{format_value(beta.bias)}")
    lines.extend(format_value(v) for v in beta.values)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_beta(path) -> BetaMap:
    meta, first, rows = read_table(path, KIND_BETA)
    grid = _grid(meta, path)
    if len(first) != 2 or first[0] != "bias":
        raise FormatError(f"{path}: first data line must be 'bias,<value>'")
    if len(rows) != grid.n or any(len(r) != 1 for r in rows):
        raise FormatError(f"{path}: expected {grid.n} weights, one per line")
    try:
        bias = float(first[1])
    except ValueError:
        raise FormatError(f"{path}: bias is not a number") from None
    return BetaMap(
        bias=bias,
        values=_floats(rows).ravel(),
        grid=grid,
        counts_scale=float(meta.get("counts_scale", 1.0)),
    )


# reports

def write_report(path, header, rows, meta: dict | None = None) -> Path:
    return write_table(path, KIND_REPORT, header, rows, meta)


def read_report(path) -> tuple[dict, list[str], list[list[str]]]:
    return read_table(path, KIND_REPORT)
