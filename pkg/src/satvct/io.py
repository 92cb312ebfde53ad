"""Raw float arrays with a text header, plus 16-bit PNG previews.

``name.hdr`` holds ``key: value`` lines (``width``, ``height``, ``dtype``,
``endianness``, ``half_width`` and optional extras); ``name.raw`` holds the
array in row-major order, ``height`` rows of ``width`` values.  For images
a row is a fixed x index; for sinograms a row is one projection angle.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .core import GridSpec, Image, Sinogram, as_array

DTYPES = {"f32": "<f4", "f64": "<f8"}


class RawFormatError(ValueError):
    pass


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".hdr", ".raw"):
        p = p.with_suffix("")
    return p.with_suffix(".hdr"), p.with_suffix(".raw")


def write_header(path, fields: dict) -> None:
    Path(path).write_text("".join(f"{k}: {v}\n" for k, v in fields.items()))


def read_header(path) -> dict:
    fields = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise RawFormatError(f"{path}:{n}: expected 'key: value', got {line!r}")
        fields[key.strip()] = value.strip()
    return fields


def save_array(path, values, dtype: str = "f32", **extra) -> tuple[Path, Path]:
    """Write ``values`` (2D) as header + raw payload; returns both paths."""
    if dtype not in DTYPES:
        raise RawFormatError(f"unknown dtype {dtype!r}; expected one of {sorted(DTYPES)}")
    a = np.ascontiguousarray(as_array(values), dtype=DTYPES[dtype])
    if a.ndim != 2:
        raise RawFormatError(f"expected a 2D array, got shape {a.shape}")
    hdr, raw = _paths(path)
    hdr.parent.mkdir(parents=True, exist_ok=True)
    fields = {"width": a.shape[1], "height": a.shape[0], "dtype": dtype, "endianness": "little"}
    fields.update(extra)
    write_header(hdr, fields)
    # write-then-rename keeps a half-written payload from ever carrying the final name
    tmp = raw.with_name(raw.name + f".tmp{os.getpid()}")
    tmp.write_bytes(a.tobytes(order="C"))
    tmp.replace(raw)
    return hdr, raw


def load_array(path) -> tuple[np.ndarray, dict]:
    hdr, raw = _paths(path)
    fields = read_header(hdr)
    for key in ("width", "height", "dtype"):
        if key not in fields:
            raise RawFormatError(f"{hdr}: missing header key {key!r}")
    dtype = fields["dtype"]
    if dtype not in DTYPES:
        raise RawFormatError(f"{hdr}: unknown dtype {dtype!r}")
    if fields.get("endianness", "little") != "little":
        raise RawFormatError(f"{hdr}: only little-endian payloads are supported")
    w, h = int(fields["width"]), int(fields["height"])
    payload = raw.read_bytes()
    expected = w * h * np.dtype(DTYPES[dtype]).itemsize
    if len(payload) != expected:
        raise RawFormatError(f"{raw}: expected {expected} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=DTYPES[dtype]).reshape(h, w).astype(float), fields


def save_image(path, image, dtype: str = "f32", half_width: float | None = None):
    if isinstance(image, Image):
        half_width = image.grid.half_width
    return save_array(path, image, dtype, half_width=1.0 if half_width is None else half_width)


def load_image(path) -> Image:
    values, fields = load_array(path)
    if values.shape[0] != values.shape[1]:
        raise RawFormatError(f"image must be square, got {values.shape}")
    return Image(GridSpec(values.shape[0], float(fields.get("half_width", 1.0))), values)


def save_sinogram(path, sino, dtype: str = "f32"):
    return save_array(path, sino, dtype)


def load_sinogram(path, geometry) -> Sinogram:
    values, _ = load_array(path)
    return Sinogram(geometry, values)


def export_png16(path, values, vmin: float | None = None, vmax: float | None = None) -> Path:
    """16-bit grayscale preview, linearly scaled; min/max go to a ``.png.hdr`` sidecar.

    The array is transposed and flipped so that +y points up in viewers.
    """
    a = np.asarray(as_array(values), dtype=float)
    lo = float(a.min()) if vmin is None else float(vmin)
    hi = float(a.max()) if vmax is None else float(vmax)
    scale = 65535.0 / (hi - lo) if hi > lo else 0.0
    q = np.clip(np.round((a - lo) * scale), 0, 65535).astype(np.uint16)
    q = np.ascontiguousarray(q.T[::-1])
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(q).save(p)
    write_header(p.with_name(p.name + ".hdr"), {"width": q.shape[1], "height": q.shape[0],
                                                "min": repr(lo), "max": repr(hi)})
    return p
