"""PPM, PFM and CSV file helpers."""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np


def _wrap(path, exc: OSError):
    return OSError(f"{path}: {exc.strerror or exc}")


def write_ppm(image, path) -> None:
    """8-bit binary PPM (P6) from an H x W x 3 image in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM needs an H x W x 3 image")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape[:2]
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(data.tobytes())
    except OSError as exc:
        raise _wrap(path, exc) from exc


def read_ppm(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise _wrap(path, exc) from exc
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P6" or parts[3] != b"255":
        raise ValueError(f"{path}: not an 8-bit P6 image")
    w, h = int(parts[1]), int(parts[2])
    body = raw[len(raw) - w * h * 3:]
    return np.frombuffer(body, np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def write_pfm(depth, path) -> None:
    """Single-channel little-endian PFM ("Pf", scale -1), rows bottom-to-top."""
    d = np.asarray(depth, dtype="<f4")
    if d.ndim != 2:
        raise ValueError("PFM writer expects a 2-D image")
    h, w = d.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
            fh.write(np.ascontiguousarray(d[::-1]).tobytes())
    except OSError as exc:
        raise _wrap(path, exc) from exc


def read_pfm(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise _wrap(path, exc) from exc
    parts = raw.split(b"\n", 3)
    if parts[0].strip() != b"Pf":
        raise ValueError(f"{path}: not a single-channel PFM")
    w, h = (int(v) for v in parts[1].split())
    scale = float(parts[2])
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(parts[3][: w * h * 4], dtype=dtype).reshape(h, w)
    return data[::-1].astype(np.float32)


def write_csv(records, path, fields=None) -> None:
    """Write dataclass records (or dicts) with a header row."""
    rows = [dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r) for r in records]
    if fields is None:
        fields = list(rows[0]) if rows else []
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(fields))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    except OSError as exc:
        raise _wrap(path, exc) from exc


def read_csv(path) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise _wrap(path, exc) from exc
