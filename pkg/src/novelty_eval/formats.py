"""On-disk formats: binary PPM images, latent CSVs, JSONL records.

Floats are written with ``repr`` so every value round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    return repr(float(x))


# --- PPM ---------------------------------------------------------------------

def to_bytes(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, pixels: np.ndarray) -> None:
    """Write an H x W x 3 array of intensities in [0, 1] as P6 8-bit."""
    h, w, c = pixels.shape
    if c != 3:
        raise ValueError(f"expected 3 channels, got {c}")
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + to_bytes(pixels).tobytes())


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    out, pos = [], 0
    while len(out) < count:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    return out, pos + 1


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _tokens(data, 4)
    if magic != b"P6" or int(maxval) != 255:
        raise ValueError(f"{path}: only 8-bit P6 is supported")
    w, h = int(w), int(h)
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return raw.reshape(h, w, 3).astype(np.float64) / 255.0


# --- CSV ---------------------------------------------------------------------

def write_latents(path, ids: Sequence[str], z: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["id"] + [f"z{j}" for j in range(z.shape[1])])
        for i, row in zip(ids, z):
            wr.writerow([i] + [fmt(v) for v in row])


def read_latents(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "id":
        raise ValueError(f"{path}: missing 'id,z0..' header")
    ids = [r[0] for r in rows[1:]]
    z = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return ids, z.reshape(len(ids), len(rows[0]) - 1)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_rows(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- JSON / JSONL --------------------------------------------------------------

def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
