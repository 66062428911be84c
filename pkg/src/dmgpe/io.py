"""On-disk formats: flat dotted config files, time-series CSV, GPE2 field dumps,
run manifests and grayscale density heatmaps."""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, Iterable, Mapping

import numpy as np

from .core import Field2D, PhysicalParams, make_grid, to_physical_time
from .errors import ConfigurationError
from .evolution import TimeSeries

__all__ = [
    "parse_config_text",
    "read_config",
    "format_config",
    "env_overrides",
    "CSV_HEADER",
    "write_timeseries_csv",
    "read_timeseries_csv",
    "write_field",
    "read_field",
    "write_heatmap",
    "sha256_file",
    "write_manifest",
]

ENV_PREFIX = "DMGPE_"


# ---------------------------------------------------------------- config text

def _parse_value(raw: str):
    s = raw.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    return s


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_value(x) for x in v)
    s = str(v)
    if "\n" in s or ('"' in s and "'" in s):
        raise ValueError(f"cannot serialize {s!r}")
    # quote anything that would read back as a different value
    if _parse_value(s) != s or "#" in s or s != s.strip():
        q = "'" if '"' in s else '"'
        return q + s + q
    return s


def _split_value(rest: str):
    """Value text of a line after '=', honouring quotes and trailing comments."""
    rest = rest.strip()
    if rest[:1] in ("'", '"'):
        end = rest.find(rest[0], 1)
        if end < 0:
            return None
        tail = rest[end + 1:].strip()
        if tail and not tail.startswith("#"):
            return None
        return rest[:end + 1]
    return rest.split("#", 1)[0].strip()


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse ``section.key = value`` lines. ``#`` starts a comment."""
    out = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line.split("#", 1)[0]:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, rest = line.split("=", 1)
        key = key.strip()
        val = _split_value(rest)
        if val is None:
            errors.append(f"line {lineno}: unterminated or malformed quoted value")
            continue
        if "." not in key or not all(key.split(".")):
            errors.append(f"line {lineno}: key {key!r} must be dotted (section.name)")
            continue
        if key in out:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        out[key] = _parse_value(val)
    if errors:
        raise ConfigurationError("; ".join(errors))
    return out


def read_config(path) -> Dict[str, object]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return parse_config_text(text)


def format_config(cfg: Mapping[str, object]) -> str:
    return "".join(f"{k} = {_format_value(cfg[k])}\n" for k in sorted(cfg))


def env_overrides(environ: Mapping[str, str] = os.environ) -> Dict[str, object]:
    """``DMGPE_SECTION__KEY=value`` -> {"section.key": value}."""
    out = {}
    for name, val in environ.items():
        if name.startswith(ENV_PREFIX) and "__" in name:
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = _parse_value(val)
    return out


# ---------------------------------------------------------------- time series

CSV_HEADER = "t_dimless,t_ms,survival,norm,energy,width_x,width_y"


def write_timeseries_csv(path, ts: TimeSeries, params: PhysicalParams = PhysicalParams(),
                         convention: str = "caption"):
    t_ms = to_physical_time(np.asarray(ts.times), params, convention)
    cols = (ts.times, t_ms, ts.survival, ts.norm, ts.energy, ts.width_x, ts.width_y)
    with open(path, "w", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{float(v):.17g}" for v in row) + "\n")


def read_timeseries_csv(path) -> TimeSeries:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return TimeSeries(data[:, 0], data[:, 2], data[:, 3], data[:, 4], data[:, 5], data[:, 6])


# ---------------------------------------------------------------- field dumps

_MAGIC = b"GPE2"
_HEADER = struct.Struct("<4sIQQddddd")


def write_field(path, f: Field2D):
    """GPE2 v1: header then nx*ny complex samples as little-endian (re, im) f64 pairs."""
    g = f.grid
    head = _HEADER.pack(_MAGIC, 1, g.nx, g.ny, g.dx, g.dy, g.x0, g.y0, float(f.t))
    body = np.ascontiguousarray(f.values, dtype="<c16").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(body)


def read_field(path) -> Field2D:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("truncated GPE2 header")
        magic, version, nx, ny, dx, dy, x0, y0, t = _HEADER.unpack(head)
        if magic != _MAGIC or version != 1:
            raise ValueError(f"not a GPE2 v1 file: {magic!r} v{version}")
        body = fh.read()
    if len(body) != nx * ny * 16:
        raise ValueError("GPE2 payload size does not match header")
    grid = make_grid(nx, ny, dx, dy)
    if not (np.isclose(grid.x0, x0) and np.isclose(grid.y0, y0)):
        raise ValueError("GPE2 origin is not the centered-grid origin")
    vals = np.frombuffer(body, dtype="<c16").reshape(nx, ny).astype(np.complex128)
    return Field2D(grid, vals, t=t)


def write_heatmap(path, density: np.ndarray) -> float:
    """8-bit grayscale PNG of density/max; returns the raw maximum.

    Rows are y (top = +y), columns x.
    """
    from PIL import Image

    d = np.asarray(density, dtype=float)
    top = float(d.max())
    scaled = d / top if top > 0 else d
    img = np.round(np.clip(scaled, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(img.T[::-1]).save(path)
    return top


# ---------------------------------------------------------------- manifest

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, manifest: dict, files: Iterable = ()):
    """Write manifest.json atomically, listing ``files`` with their checksums."""
    out_dir = Path(out_dir)
    inventory = []
    for p in sorted({Path(p) for p in files}):
        rel = p.relative_to(out_dir) if p.is_absolute() else p
        full = out_dir / rel
        inventory.append({"path": str(rel), "bytes": full.stat().st_size, "sha256": sha256_file(full)})
    doc = dict(manifest)
    doc["files"] = inventory
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest.", suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, out_dir / "manifest.json")
    return out_dir / "manifest.json"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)
