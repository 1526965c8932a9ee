"""Deterministic synthetic datasets: slope-line images, the four 2x2
images, and anomalous variants, plus PGM and CSV round-tripping.

A line image is a half-plane through the image center: pixel centers with a
non-negative dot product against the unit normal (cos t, sin t) are white.
Pixel (row r, col c) has center (c - (size-1)/2, (size-1)/2 - r), y up.
"""

import math
import os
from dataclasses import dataclass
from typing import Optional

from .tensor import Matrix

ANOMALY_KINDS = ("blob_defect", "noise", "double_line")


@dataclass
class Dataset:
    name: str
    images: Matrix  # n_samples x (height*width), every entry 0.0 or 1.0 for generated sets
    height: int
    width: int
    angles: Optional[list] = None  # per-sample line angle in radians
    flags: Optional[list] = None  # per-sample anomaly flag (1 = anomalous)

    def __post_init__(self):
        if self.images.cols != self.height * self.width:
            raise ValueError(
                f"{self.images.cols} pixels per sample does not match "
                f"{self.height}x{self.width}"
            )

    @property
    def n_samples(self):
        return self.images.rows


def _line_pixels(size, theta):
    """Flatten one half-plane image, row-major from the top-left."""
    nx = math.cos(theta)
    ny = math.sin(theta)
    half = (size - 1) / 2.0
    pixels = []
    for r in range(size):
        y = half - r
        yny = y * ny
        for c in range(size):
            x = c - half
            pixels.append(1.0 if x * nx + yny >= 0.0 else 0.0)
    return pixels


def gen_line_dataset(n, size, rng):
    """n half-plane images of size x size with angles uniform in [0, 2*pi)."""
    if n < 1 or size < 2:
        raise ValueError("need n >= 1 and size >= 2")
    angles = [rng.uniform(0.0, 2.0 * math.pi) for _ in range(n)]
    flat = []
    for theta in angles:
        flat.extend(_line_pixels(size, theta))
    images = Matrix(n, size * size, flat)
    return Dataset("lines", images, size, size, angles=angles, flags=[0] * n)


def gen_quad_dataset():
    """The four 2x2 images 0011, 1010, 1100, 0101 (upper-left pixel first)."""
    images = Matrix.from_rows(
        [
            [0.0, 0.0, 1.0, 1.0],
            [1.0, 0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
        ]
    )
    return Dataset("quad", images, 2, 2, flags=[0, 0, 0, 0])


def gen_anomaly_dataset(n, size, rng, kind):
    """Images that are not clean lines; all samples carry the anomaly flag.

    blob_defect: a clean line image with a random 3x3 to 5x5 square flipped.
    noise: i.i.d. fair-coin pixels.
    double_line: XOR of two independent line images.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if kind not in ANOMALY_KINDS:
        raise ValueError(f"unknown anomaly kind {kind!r}; expected one of {ANOMALY_KINDS}")
    rows = []
    if kind == "blob_defect":
        if size < 3:
            raise ValueError("blob_defect needs size >= 3")
        for _ in range(n):
            pixels = _line_pixels(size, rng.uniform(0.0, 2.0 * math.pi))
            side = rng.randint(3, min(5, size))
            r0 = rng.randint(0, size - side)
            c0 = rng.randint(0, size - side)
            for r in range(r0, r0 + side):
                for c in range(c0, c0 + side):
                    pixels[r * size + c] = 1.0 - pixels[r * size + c]
            rows.append(pixels)
    elif kind == "noise":
        for _ in range(n):
            rows.append([1.0 if rng.random() < 0.5 else 0.0 for _ in range(size * size)])
    else:
        for _ in range(n):
            first = _line_pixels(size, rng.uniform(0.0, 2.0 * math.pi))
            second = _line_pixels(size, rng.uniform(0.0, 2.0 * math.pi))
            rows.append([float(int(a) ^ int(b)) for a, b in zip(first, second)])
    images = Matrix.from_rows(rows)
    return Dataset(kind, images, size, size, flags=[1] * n)


# -- PGM ---------------------------------------------------------------------


def write_pgm(path, pixels, height, width):
    """Binary P5, maxval 255; pixel values in [0, 1] are scaled by 255."""
    if len(pixels) != height * width:
        raise ValueError(f"{len(pixels)} pixels for a {height}x{width} image")
    body = bytes(min(255, max(0, round(v * 255.0))) for v in pixels)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(body)


def read_pgm(path):
    """Returns (height, width, pixels) with pixels scaled back to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(blob):
            raise ValueError(f"{path}: truncated PGM header")
        ch = blob[i : i + 1]
        if ch == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(blob) and not blob[j : j + 1].isspace():
                j += 1
            tokens.append(blob[i:j])
            i = j
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (got {tokens[0]!r})")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    i += 1  # single whitespace byte after maxval
    body = blob[i : i + width * height]
    if len(body) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes, got {len(body)}")
    return height, width, [b / maxval for b in body]


# -- dataset directories -------------------------------------------------------


def save_dataset(ds, out_dir):
    """Write images.csv, labels.csv, dataset.txt and one PGM per sample."""
    os.makedirs(out_dir, exist_ok=True)
    ds.images.to_csv(os.path.join(out_dir, "images.csv"))
    with open(os.path.join(out_dir, "dataset.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"name={ds.name}\n")
        fh.write(f"n={ds.n_samples}\n")
        fh.write(f"height={ds.height}\n")
        fh.write(f"width={ds.width}\n")
    with open(os.path.join(out_dir, "labels.csv"), "w", encoding="utf-8") as fh:
        fh.write("sample,angle,anomaly\n")
        for i in range(ds.n_samples):
            angle = f"{ds.angles[i]:.17g}" if ds.angles else ""
            flag = str(ds.flags[i]) if ds.flags else "0"
            fh.write(f"{i},{angle},{flag}\n")
    for i in range(ds.n_samples):
        row = ds.images.data[i * ds.images.cols : (i + 1) * ds.images.cols]
        write_pgm(os.path.join(out_dir, f"img_{i:05d}.pgm"), row, ds.height, ds.width)


def load_dataset(path):
    """Load a dataset directory written by save_dataset."""
    meta_path = os.path.join(path, "dataset.txt")
    if not os.path.isfile(meta_path):
        raise FileNotFoundError(f"{path}: not a dataset directory (missing dataset.txt)")
    meta = {}
    with open(meta_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, value = line.split("=", 1)
                meta[key] = value
    images = Matrix.from_csv(os.path.join(path, "images.csv"))
    angles = None
    flags = None
    labels_path = os.path.join(path, "labels.csv")
    if os.path.isfile(labels_path):
        angles, flags = [], []
        with open(labels_path, "r", encoding="utf-8") as fh:
            next(fh)  # header
            for line in fh:
                parts = line.strip().split(",")
                angles.append(float(parts[1]) if parts[1] else math.nan)
                flags.append(int(parts[2]))
        if all(math.isnan(a) for a in angles):
            angles = None
    return Dataset(
        meta.get("name", "dataset"),
        images,
        int(meta["height"]),
        int(meta["width"]),
        angles=angles,
        flags=flags,
    )
