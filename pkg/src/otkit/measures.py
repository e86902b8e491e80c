"""Discrete measures on R^d, their construction and pairwise costs."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np


class MeasureError(ValueError):
    """Invalid measure data (bad weights, shapes, files)."""


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud ``sum_i w_i delta_{x_i}``.

    ``points`` has shape ``(n, dim)`` and ``weights`` shape ``(n,)``; both are
    stored as read-only float64 arrays.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise MeasureError(f"points must be an (n, d) array, got shape {pts.shape}")
        if pts.shape[0] == 0:
            raise MeasureError("empty measure")
        if pts.shape[0] != w.shape[0]:
            raise MeasureError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(pts)):
            raise MeasureError("non-finite coordinate")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise MeasureError("weights must be finite and strictly positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.n

    def with_weights(self, weights) -> DiscreteMeasure:
        return DiscreteMeasure(self.points, weights)

    def same_atoms(self, other: DiscreteMeasure) -> bool:
        return self.points.shape == other.points.shape and np.array_equal(self.points, other.points)


@dataclass(frozen=True)
class CostSpec:
    """Ground cost ``d(x, y)**r`` with ``d`` Euclidean (default) or l1."""

    r: float = 2.0
    norm: str = "euclidean"

    def __post_init__(self):
        if not self.r >= 1:
            raise ValueError(f"cost exponent r must be >= 1, got {self.r}")
        if self.norm not in ("euclidean", "l1"):
            raise ValueError(f"unknown norm {self.norm!r}")


def total_mass(m: DiscreteMeasure) -> float:
    return float(np.sum(m.weights))


def normalize(m: DiscreteMeasure) -> DiscreteMeasure:
    """Same atoms, weights divided by the total mass."""
    return DiscreteMeasure(m.points, m.weights / total_mass(m))


def distance_matrix(x: np.ndarray, y: np.ndarray, norm: str = "euclidean") -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    if norm == "l1":
        return np.abs(diff).sum(axis=-1)
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def pairwise_cost(a: DiscreteMeasure, b: DiscreteMeasure, cost: CostSpec = CostSpec()) -> np.ndarray:
    """Matrix of ``d(x_i, y_j)**r``."""
    if a.dim != b.dim:
        raise MeasureError(f"dimension mismatch: {a.dim} vs {b.dim}")
    d = distance_matrix(a.points, b.points, cost.norm)
    if cost.r == 1:
        return d
    if cost.r == 2:
        return d * d
    return d ** cost.r


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox4x64 stream; doubles are built from 53 random bits,
    so streams are bit-identical across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def sample_uniform(n: int, d: int, weight_mode: str = "uniform-random", seed: int = 0) -> DiscreteMeasure:
    """i.i.d. uniform points on ``[0, 1]^d``.

    ``weight_mode='uniform-random'`` draws weights uniformly on (0, 1];
    ``'probability'`` uses the constant weight ``1/n``.
    """
    if n < 1:
        raise MeasureError("n must be >= 1")
    if not 1 <= d <= 3:
        raise MeasureError("d must be 1, 2 or 3")
    rng = make_rng(seed)
    pts = rng.random((n, d))
    if weight_mode in ("uniform-random", "unbalanced"):
        w = 1.0 - rng.random(n)
    elif weight_mode == "probability":
        w = np.full(n, 1.0 / n)
    else:
        raise MeasureError(f"unknown weight mode {weight_mode!r}")
    return DiscreteMeasure(pts, w)


def from_grayscale_grid(pixels, drop_zeros: bool = True) -> DiscreteMeasure:
    """One atom per pixel at ``((col - 1/2)/C, (row - 1/2)/R)`` with the pixel
    intensity as weight (rows and columns counted from 1). No normalization."""
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise MeasureError("image must be a non-empty 2-D array")
    if np.any(~np.isfinite(img)) or img.min() < 0 or img.max() > 1:
        raise MeasureError("intensities must lie in [0, 1]")
    R, C = img.shape
    rows, cols = np.meshgrid(np.arange(1, R + 1), np.arange(1, C + 1), indexing="ij")
    pts = np.stack([(cols - 0.5) / C, (rows - 0.5) / R], axis=-1).reshape(-1, 2)
    w = img.reshape(-1)
    if drop_zeros:
        keep = w > 0
        pts, w = pts[keep], w[keep]
    if w.size == 0:
        raise MeasureError("empty measure")
    return DiscreteMeasure(pts, w)


class RescaledPair(NamedTuple):
    a: DiscreteMeasure
    b: DiscreteMeasure
    scale: float
    offset: np.ndarray
    degenerate: bool


def rescale_pair_to_torus(a: DiscreteMeasure, b: DiscreteMeasure, margin: float = 0.0625) -> RescaledPair:
    """Shared isotropic affine map ``x -> (x - offset) / scale``.

    Afterwards every coordinate lies in ``[-1/4 + margin/2, 1/4 - margin/2]``
    and every pairwise Euclidean distance is at most ``1/2 - margin``. Point
    sets that already satisfy both conditions are left untouched (scale 1,
    offset 0). Coincident points give scale 1 and are flagged degenerate.
    """
    if a.dim != b.dim:
        raise MeasureError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if not 0 <= margin < 1:
        raise ValueError("margin must lie in [0, 1)")
    half = 0.25 - margin / 2
    allpts = np.concatenate([a.points, b.points])
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    degenerate = False
    if diag == 0.0:
        scale, offset, degenerate = 1.0, (lo + hi) / 2, True
    elif np.all(np.abs(allpts) <= half) and diag <= 2 * half:
        scale, offset = 1.0, np.zeros(a.dim)
    else:
        scale, offset = diag / (2 * half), (lo + hi) / 2
    a2 = DiscreteMeasure((a.points - offset) / scale, a.weights)
    b2 = DiscreteMeasure((b.points - offset) / scale, b.weights)
    return RescaledPair(a2, b2, scale, offset, degenerate)


# ---------------------------------------------------------------- file formats


def read_csv_measure(path) -> DiscreteMeasure:
    """CSV with header ``x1[,x2[,x3]],w``; one atom per row."""
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MeasureError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or d > 3 or header != [f"x{i + 1}" for i in range(d)] + ["w"]:
        raise MeasureError(f"{path}: bad header {header}")
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise MeasureError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != d + 1:
        raise MeasureError(f"{path}: expected {d + 1} columns per row")
    return DiscreteMeasure(data[:, :d], data[:, d])


def format_float(x: float) -> str:
    return repr(float(x)) if np.isfinite(x) else str(x)


def write_csv_measure(m: DiscreteMeasure, path) -> None:
    lines = [",".join([f"x{i + 1}" for i in range(m.dim)] + ["w"])]
    for p, w in zip(m.points, m.weights):
        lines.append(",".join(f"{v:.17g}" for v in (*p, w)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _pgm_tokens(data: bytes, count: int, pos: int):
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MeasureError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Binary (P5) or ASCII (P2) PGM as intensities ``value / maxval``."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise MeasureError(f"{path}: not a P2/P5 PGM file")
    (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if w < 1 or h < 1 or not 0 < maxval <= 65535:
        raise MeasureError(f"{path}: bad PGM dimensions or maxval")
    if magic == b"P5":
        pos += 1  # single whitespace before raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(data) - pos < w * h * dtype.itemsize:
            raise MeasureError(f"{path}: truncated raster")
        vals = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).astype(np.float64)
    else:
        toks, _ = _pgm_tokens(data, w * h, pos)
        vals = np.array([int(t) for t in toks], dtype=np.float64)
    if vals.max(initial=0) > maxval:
        raise MeasureError(f"{path}: value exceeds maxval")
    return (vals / maxval).reshape(h, w)


def write_pgm(pixels, path, maxval: int = 255) -> None:
    img = np.clip(np.asarray(pixels, dtype=np.float64), 0, 1)
    h, w = img.shape
    vals = np.rint(img * maxval).astype(">u2" if maxval > 255 else "u1")
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + vals.tobytes())


def load_measure(path, drop_zeros: bool = True) -> DiscreteMeasure:
    """Dispatch on file extension: ``.pgm`` images, anything else CSV."""
    path = Path(path)
    if not path.is_file():
        raise MeasureError(f"{path}: no such file")
    if path.suffix.lower() == ".pgm":
        return from_grayscale_grid(read_pgm(path), drop_zeros=drop_zeros)
    return read_csv_measure(path)
