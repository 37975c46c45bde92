"""Image measures, grid costs, IDX files, CSV helpers and benchmark metrics."""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ArgumentError, CostMatrix, Measure, _as_array

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MNIST_FLOOR = 1e-6
FG_HIGH = 50.0


class FormatError(ValueError):
    """Malformed IDX input; ``offset`` is the byte position of the problem."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class GridImage:
    side: int
    intensities: np.ndarray
    normalized: bool = True
    label: int | None = None
    # True on foreground pixels of synthetic images.
    foreground: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.asarray(self.intensities, dtype=float)
        if a.shape != (self.side, self.side):
            raise ArgumentError(f"intensities must be {self.side}x{self.side}, got {a.shape}")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ArgumentError("intensities must be finite and nonnegative")
        if self.normalized and abs(a.sum() - 1.0) > 1e-12:
            raise ArgumentError("normalized image must sum to 1")
        object.__setattr__(self, "intensities", a)

    def measure(self) -> Measure:
        if self.normalized:
            return Measure(self.intensities.ravel())
        return Measure.normalized(self.intensities.ravel())


def gen_synthetic_image(seed: int, side: int = 20, fg_fraction: float = 0.1) -> GridImage:
    """Uniform[0,1] background with a Uniform[0,50] square, normalized to sum 1.

    The square has side ``round(sqrt(fg_fraction) * side)`` and a uniformly
    placed corner.
    """
    if side < 2:
        raise ArgumentError("side must be at least 2")
    if not 0 < fg_fraction <= 1:
        raise ArgumentError("fg_fraction must lie in (0, 1]")
    s = int(round(math.sqrt(fg_fraction) * side))
    if s > side:
        raise ArgumentError("foreground square larger than the image")
    rng = np.random.default_rng(seed)
    img = rng.uniform(0.0, 1.0, size=(side, side))
    i, j = rng.integers(0, side - s + 1, size=2)
    img[i:i + s, j:j + s] = rng.uniform(0.0, FG_HIGH, size=(s, s))
    mask = np.zeros((side, side), dtype=bool)
    mask[i:i + s, j:j + s] = True
    return GridImage(side, img / img.sum(), True, foreground=mask)


def l1_ground_cost(side: int) -> CostMatrix:
    """Manhattan distance between pixel centres, row-major order."""
    if side < 1:
        raise ArgumentError("side must be positive")
    rr, cc = np.divmod(np.arange(side * side), side)
    C = np.abs(rr[:, None] - rr[None, :]) + np.abs(cc[:, None] - cc[None, :])
    return CostMatrix(C.astype(float))


def competitive_ratio(d1: float, d2: float) -> float:
    """``log(d1 / d2)``; positive when the second method is closer to feasible."""
    if not (d1 > 0 and d2 > 0):
        raise ValueError("competitive ratio needs positive errors")
    return math.log(d1) - math.log(d2)


# --- IDX --------------------------------------------------------------------


def _header(buf: bytes, magic: int, ndim: int, what: str) -> tuple[int, ...]:
    if len(buf) < 4:
        raise FormatError(f"{what}: truncated magic number", len(buf))
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise FormatError(f"{what}: bad magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    end = 4 + 4 * ndim
    if len(buf) < end:
        raise FormatError(f"{what}: truncated header", len(buf))
    return struct.unpack(f">{ndim}I", buf[4:end])


def read_idx_images(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    count, rows, cols = _header(buf, IMAGE_MAGIC, 3, "images")
    need = 16 + count * rows * cols
    if len(buf) < need:
        raise FormatError(f"images: expected {need} bytes for {count} images", len(buf))
    if len(buf) > need:
        raise FormatError("images: trailing bytes after the last image", need)
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (count,) = _header(buf, LABEL_MAGIC, 1, "labels")
    need = 8 + count
    if len(buf) != need:
        raise FormatError(f"labels: expected {need} bytes for {count} labels", min(len(buf), need))
    return np.frombuffer(buf, dtype=np.uint8, offset=8).copy()


def load_mnist_idx(images_path, labels_path=None) -> list[GridImage]:
    """Read MNIST-style IDX images; zeros become ``1e-6`` before normalizing."""
    raw = read_idx_images(images_path)
    count, rows, cols = raw.shape
    if rows != cols:
        raise FormatError(f"images: non-square {rows}x{cols}", 8)
    labels = None
    if labels_path is not None:
        labels = read_idx_labels(labels_path)
        if labels.size != count:
            raise FormatError(f"labels: {labels.size} labels for {count} images", 4)
    out = []
    for k in range(count):
        a = raw[k].astype(float)
        a[a == 0] = MNIST_FLOOR
        out.append(GridImage(rows, a / a.sum(), True, label=None if labels is None else int(labels[k])))
    return out


def write_idx(path, images: np.ndarray, labels: np.ndarray | None = None, labels_path=None) -> None:
    """Write uint8 images (count, side, side) and optionally labels."""
    images = np.asarray(images)
    if images.ndim != 3 or images.dtype != np.uint8:
        raise ArgumentError("images must be a uint8 array of shape (count, rows, cols)")
    Path(path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, *images.shape) + images.tobytes())
    if labels is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        if labels_path is None:
            raise ArgumentError("labels_path is required with labels")
        Path(labels_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, labels.size) + labels.tobytes())


# --- CSV --------------------------------------------------------------------


def write_matrix_csv(path, a) -> None:
    """One matrix row per line, 17 significant digits."""
    a = np.atleast_2d(_as_array(a))
    np.savetxt(os.fspath(path), a, delimiter=",", fmt="%.17g")


def read_matrix_csv(path) -> np.ndarray:
    a = np.loadtxt(os.fspath(path), delimiter=",", dtype=float, ndmin=2)
    return a


def read_cost_csv(path) -> CostMatrix:
    return CostMatrix(read_matrix_csv(path))


def read_measure_csv(path) -> Measure:
    """A measure stored as one row or one column of weights."""
    a = read_matrix_csv(path).ravel()
    return Measure(a)


def write_measure_csv(path, m) -> None:
    write_matrix_csv(path, _as_array(m)[None, :])
