"""Procedural two-domain video corpus, dataset file I/O, and batching.

Each sequence shows one glyph moving under one of four motion classes on a
16x16 RGB canvas.  Glyph shapes and palettes are disjoint across the two
domains while the class-conditional trajectories share a single code path,
so domain and motion are independent by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

CANVAS = 16
FRAME_DIM = CANVAS * CANVAS * 3
FEATURE_DIM = 64
N_CLASSES = 4
MAGIC = b"TSVD1"

# shape ids per domain: 0 square/plus/diamond, 1 circle/cross/triangle
SHAPES = (("square", "plus", "diamond"), ("circle", "cross", "triangle"))
# non-overlapping hue pools: warm for domain 0, cool for domain 1
PALETTES = (
    ((1.00, 0.25, 0.15), (1.00, 0.80, 0.10), (0.95, 0.30, 0.75)),
    ((0.15, 0.40, 1.00), (0.10, 0.95, 0.40), (0.10, 0.85, 0.90)),
)


@dataclass(frozen=True)
class GlyphSpec:
    domain: int                 # 0 or 1
    shape: int                  # index into SHAPES[domain]
    palette: int                # index into PALETTES[domain]


@dataclass(frozen=True)
class MotionSpec:
    """Class id 0..3: horizontal, vertical, clockwise orbit, pulse."""

    class_id: int
    phase: float                # uniform in [0, 2 pi)


@dataclass
class SequenceBatch:
    """Mini-batch of sequences; target labels carry a taint flag."""

    frames: np.ndarray          # M x T x D in [0, 1] (image mode)
    domain: np.ndarray          # M domain ids
    label: Optional[np.ndarray] = None
    label_tainted: bool = False
    index: Optional[np.ndarray] = None   # rows in the originating dataset

    def visible_labels(self) -> np.ndarray:
        """Labels for the training path; raises on tainted (target) labels."""
        if self.label_tainted:
            raise PermissionError("target labels are held out from training")
        if self.label is None:
            raise ValueError("batch carries no labels")
        return self.label


@dataclass
class Dataset:
    frames: np.ndarray          # M_total x T x D float32
    domain: np.ndarray          # u8
    label: np.ndarray           # u8
    mode: int = 0               # 0 image, 1 feature
    n_classes: int = N_CLASSES

    @property
    def T(self) -> int:
        return self.frames.shape[1]

    @property
    def D(self) -> int:
        return self.frames.shape[2]


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

_YY, _XX = np.mgrid[0:CANVAS, 0:CANVAS].astype(np.float64)


def _glyph_mask(shape: str, cx: float, cy: float, s: float) -> np.ndarray:
    dx, dy = _XX - cx, _YY - cy
    if shape == "square":
        return (np.abs(dx) <= s) & (np.abs(dy) <= s)
    if shape == "plus":
        w = max(s / 3.0, 0.6)
        return ((np.abs(dx) <= s) & (np.abs(dy) <= w)) | \
               ((np.abs(dy) <= s) & (np.abs(dx) <= w))
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= 1.2 * s
    if shape == "circle":
        return dx * dx + dy * dy <= s * s
    if shape == "cross":
        w = max(s / 2.5, 0.8)
        box = (np.abs(dx) <= s) & (np.abs(dy) <= s)
        return box & ((np.abs(dx - dy) <= w) | (np.abs(dx + dy) <= w))
    if shape == "triangle":
        return (dy >= -s) & (dy <= s) & (np.abs(dx) <= (dy + s) * 0.6)
    raise ValueError(f"unknown shape {shape!r}")


def _trajectory(motion: MotionSpec, t: int, T: int):
    """Center and half-size at frame t; depends only on class/phase/t."""
    theta = 2.0 * np.pi * t / T + motion.phase
    mid, amp, size = CANVAS / 2.0, 4.0, 2.5
    if motion.class_id == 0:      # horizontal oscillation
        return mid + amp * np.sin(theta), mid, size
    if motion.class_id == 1:      # vertical oscillation
        return mid, mid + amp * np.sin(theta), size
    if motion.class_id == 2:      # clockwise orbit
        return mid + amp * np.cos(theta), mid - amp * np.sin(theta), size
    if motion.class_id == 3:      # grow-shrink pulse
        return mid, mid, 3.15 + 1.35 * np.sin(theta)
    raise ValueError(f"unknown motion class {motion.class_id}")


def render_frame(glyph: GlyphSpec, motion: MotionSpec, t: int, T: int) -> np.ndarray:
    """One flattened RGB frame; deterministic in all arguments."""
    cx, cy, s = _trajectory(motion, t, T)
    mask = _glyph_mask(SHAPES[glyph.domain][glyph.shape], cx, cy, s)
    frame = np.full((CANVAS, CANVAS, 3), 0.05, dtype=np.float32)
    frame[mask] = np.asarray(PALETTES[glyph.domain][glyph.palette], dtype=np.float32)
    return frame.reshape(-1)


def render_sequence(glyph: GlyphSpec, motion: MotionSpec, T: int) -> np.ndarray:
    return np.stack([render_frame(glyph, motion, t, T) for t in range(T)])


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

def generate_dataset(seed: int, per_class: int = 100, T: int = 8,
                     mode: str = "image") -> tuple[Dataset, Dataset]:
    """Balanced two-domain corpus, split 80/20 per (domain, class) cell."""
    if per_class < 5 or T < 2:
        raise ValueError(f"invalid corpus size per_class={per_class}, T={T}")
    frames, domains, labels = [], [], []
    for domain in range(2):
        for cls in range(N_CLASSES):
            for idx in range(per_class):
                rng = np.random.default_rng([seed, domain, cls, idx])
                glyph = GlyphSpec(domain, int(rng.integers(3)), int(rng.integers(3)))
                motion = MotionSpec(cls, float(rng.uniform(0.0, 2.0 * np.pi)))
                frames.append(render_sequence(glyph, motion, T))
                domains.append(domain)
                labels.append(cls)
    frames = np.stack(frames).astype(np.float32)
    domains = np.asarray(domains, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)

    n_test = per_class // 5
    cell = np.arange(len(labels)) % per_class
    test_mask = cell >= per_class - n_test
    mode_id = {"image": 0, "feature": 1}[mode]
    if mode == "feature":
        frames = _project_features(frames, domains, test_mask, seed)
    train = Dataset(frames[~test_mask], domains[~test_mask], labels[~test_mask], mode_id)
    test = Dataset(frames[test_mask], domains[test_mask], labels[test_mask], mode_id)
    return train, test


def _project_features(frames, domains, test_mask, seed):
    """Domain-specific random projection to FEATURE_DIM, standardized on train."""
    M, T, D = frames.shape
    out = np.empty((M, T, FEATURE_DIM), dtype=np.float32)
    for domain in range(2):
        proj_rng = np.random.default_rng([seed, 7919, domain])
        P = (proj_rng.standard_normal((D, FEATURE_DIM)) / np.sqrt(D)).astype(np.float32)
        sel = domains == domain
        out[sel] = frames[sel] @ P
    train = out[~test_mask].reshape(-1, FEATURE_DIM)
    mean = train.mean(axis=0)
    std = train.std(axis=0) + 1e-6
    return ((out - mean) / std).astype(np.float32)


# ---------------------------------------------------------------------------
# binary file format
# ---------------------------------------------------------------------------

def save_dataset(path, ds: Dataset) -> None:
    """Header magic + u32 (version, mode, M_total, T, D, C), then sequences."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<6I", 1, ds.mode, len(ds.label), ds.T, ds.D,
                            ds.n_classes))
        for i in range(len(ds.label)):
            f.write(struct.pack("<BB", int(ds.domain[i]), int(ds.label[i])))
            f.write(ds.frames[i].astype("<f4").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:5] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:5]!r}")
    version, mode, M, T, D, C = struct.unpack_from("<6I", blob, 5)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    rec = 2 + 4 * T * D
    expected = 5 + 24 + M * rec
    if len(blob) != expected:
        raise ValueError(f"{path}: size {len(blob)} != expected {expected}")
    frames = np.empty((M, T, D), dtype=np.float32)
    domain = np.empty(M, dtype=np.uint8)
    label = np.empty(M, dtype=np.uint8)
    off = 29
    for i in range(M):
        domain[i], label[i] = struct.unpack_from("<BB", blob, off)
        frames[i] = np.frombuffer(blob, dtype="<f4", count=T * D,
                                  offset=off + 2).reshape(T, D)
        off += rec
    return Dataset(frames, domain, label, mode, C)


# ---------------------------------------------------------------------------
# shuffling and iteration
# ---------------------------------------------------------------------------

def shuffle_frames(seq: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random non-identity permutation of the T frames."""
    T = seq.shape[0]
    if T < 2:
        raise ValueError("shuffle_frames needs at least 2 frames")
    while True:
        perm = rng.permutation(T)
        if not np.array_equal(perm, np.arange(T)):
            return seq[perm]


def shuffle_batch(frames: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent non-identity frame permutation per sequence."""
    return np.stack([shuffle_frames(seq, rng) for seq in frames])


def batch_iter(ds: Dataset, M: int, seed: int, epoch: int,
               ) -> Iterator[tuple[SequenceBatch, SequenceBatch]]:
    """Paired half-batches: M/2 source (domain 0) + M/2 target (domain 1).

    Order reshuffles per epoch from (seed, epoch); no within-epoch
    duplicates; target labels are retained but tainted.
    """
    if M % 2 != 0:
        raise ValueError("batch size must be even")
    half = M // 2
    src_idx = np.where(ds.domain == 0)[0]
    tgt_idx = np.where(ds.domain == 1)[0]
    if half > len(src_idx) or half > len(tgt_idx):
        raise ValueError(f"batch {M} too large for domains "
                         f"({len(src_idx)}, {len(tgt_idx)})")
    rng = np.random.default_rng([seed, epoch])
    src_idx = src_idx[rng.permutation(len(src_idx))]
    tgt_idx = tgt_idx[rng.permutation(len(tgt_idx))]
    steps = min(len(src_idx), len(tgt_idx)) // half
    for k in range(steps):
        s = src_idx[k * half:(k + 1) * half]
        t = tgt_idx[k * half:(k + 1) * half]
        yield (SequenceBatch(ds.frames[s], ds.domain[s],
                             ds.label[s].astype(np.int64), index=s),
               SequenceBatch(ds.frames[t], ds.domain[t],
                             ds.label[t].astype(np.int64),
                             label_tainted=True, index=t))


# ---------------------------------------------------------------------------
# PPM output
# ---------------------------------------------------------------------------

def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6, maxval 255; image is H x W x 3 floats in [0, 1]."""
    h, w, _ = image.shape
    pixels = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
