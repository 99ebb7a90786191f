"""Tests for corpus generation, file formats, and batching."""

import os

import numpy as np
import pytest

from svada import data as dat


def test_generate_is_deterministic():
    a_train, a_test = dat.generate_dataset(seed=3, per_class=5, T=4)
    b_train, b_test = dat.generate_dataset(seed=3, per_class=5, T=4)
    assert np.array_equal(a_train.frames, b_train.frames)
    assert np.array_equal(a_test.frames, b_test.frames)


def test_generate_split_sizes_and_balance():
    train, test = dat.generate_dataset(seed=0, per_class=10, T=4)
    # [DERIVED] 2 domains x 4 classes x 10, split 80/20 per cell
    assert len(train.label) == 64 and len(test.label) == 16
    for ds in (train, test):
        for d in (0, 1):
            assert (ds.domain == d).sum() == len(ds.label) // 2
        assert ds.frames.min() >= 0.0 and ds.frames.max() <= 1.0


def test_generate_rejects_tiny_corpus():
    with pytest.raises(ValueError):
        dat.generate_dataset(seed=0, per_class=2)
    with pytest.raises(ValueError):
        dat.generate_dataset(seed=0, per_class=10, T=1)


def test_domain_palettes_are_disjoint():
    """No non-background color may appear in both domains."""
    train, _ = dat.generate_dataset(seed=1, per_class=5, T=4)
    colors = []
    for d in (0, 1):
        px = train.frames[train.domain == d].reshape(-1, 3)
        fg = px[px.max(axis=1) > 0.2]           # drop the dark background
        colors.append({tuple(np.round(c, 3)) for c in fg})
    assert not (colors[0] & colors[1])


def test_trajectories_shared_across_domains():
    """The class-conditional motion code path ignores the domain."""
    m = dat.MotionSpec(class_id=2, phase=0.3)
    g0 = dat.GlyphSpec(domain=0, shape=0, palette=0)
    g1 = dat.GlyphSpec(domain=1, shape=0, palette=0)
    # same trajectory function: compare occupied-pixel centroids per frame
    for t in range(4):
        f0 = dat.render_frame(g0, m, t, 4).reshape(16, 16, 3).max(axis=2)
        f1 = dat.render_frame(g1, m, t, 4).reshape(16, 16, 3).max(axis=2)
        c0 = np.argwhere(f0 > 0.2).mean(axis=0)
        c1 = np.argwhere(f1 > 0.2).mean(axis=0)
        assert np.allclose(c0, c1, atol=1.5)


def test_feature_mode_shape_and_standardization():
    train, test = dat.generate_dataset(seed=0, per_class=5, T=4, mode="feature")
    assert train.D == dat.FEATURE_DIM
    flat = train.frames.reshape(-1, dat.FEATURE_DIM)
    assert abs(flat.mean()) < 0.05 and abs(flat.std() - 1.0) < 0.05


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def test_dataset_roundtrip_bit_exact(tmp_path):
    train, _ = dat.generate_dataset(seed=2, per_class=5, T=4)
    p = tmp_path / "ds.bin"
    dat.save_dataset(p, train)
    back = dat.load_dataset(p)
    assert np.array_equal(back.frames, train.frames)
    assert np.array_equal(back.domain, train.domain)
    assert np.array_equal(back.label, train.label)
    assert back.mode == train.mode and back.n_classes == train.n_classes


def test_load_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOPE!" + b"\x00" * 40)
    with pytest.raises(ValueError, match="magic"):
        dat.load_dataset(p)


def test_load_rejects_truncation(tmp_path):
    train, _ = dat.generate_dataset(seed=2, per_class=5, T=4)
    p = tmp_path / "ds.bin"
    dat.save_dataset(p, train)
    blob = p.read_bytes()
    p.write_bytes(blob[:-7])
    with pytest.raises(ValueError, match="size"):
        dat.load_dataset(p)


def test_write_ppm_header_and_payload(tmp_path):
    img = np.zeros((2, 3, 3), np.float32)
    img[0, 0] = [1.0, 0.5, 0.0]
    p = tmp_path / "img.ppm"
    dat.write_ppm(p, img)
    blob = p.read_bytes()
    assert blob.startswith(b"P6\n3 2\n255\n")
    pixels = np.frombuffer(blob.split(b"255\n", 1)[1], np.uint8)
    assert pixels[0] == 255 and pixels[1] == 128 and pixels[2] == 0   # [DERIVED]
    assert len(pixels) == 18


# ---------------------------------------------------------------------------
# shuffling / batching
# ---------------------------------------------------------------------------

def test_shuffle_frames_never_identity():
    rng = np.random.default_rng(5)
    seq = np.arange(12, dtype=np.float32).reshape(3, 4)
    for _ in range(50):
        out = dat.shuffle_frames(seq, rng)
        assert not np.array_equal(out, seq)
        assert np.array_equal(np.sort(out, axis=0), np.sort(seq, axis=0))


def test_shuffle_frames_requires_two():
    with pytest.raises(ValueError):
        dat.shuffle_frames(np.zeros((1, 4), np.float32), np.random.default_rng(0))


def test_batch_iter_pairs_domains_and_taints_targets():
    train, _ = dat.generate_dataset(seed=0, per_class=5, T=4)
    batches = list(dat.batch_iter(train, M=8, seed=0, epoch=0))
    assert len(batches) == 4          # [DERIVED] 16 per domain // 4 per half
    for src, tgt in batches:
        assert (src.domain == 0).all() and (tgt.domain == 1).all()
        assert len(src.frames) == 4 and len(tgt.frames) == 4
        assert np.array_equal(src.visible_labels(), src.label)
        with pytest.raises(PermissionError):
            tgt.visible_labels()


def test_batch_iter_no_duplicates_within_epoch():
    train, _ = dat.generate_dataset(seed=0, per_class=5, T=4)
    seen = []
    for src, tgt in dat.batch_iter(train, M=8, seed=1, epoch=2):
        seen += list(src.index) + list(tgt.index)
    assert len(seen) == len(set(seen))


def test_batch_iter_reshuffles_per_epoch():
    train, _ = dat.generate_dataset(seed=0, per_class=5, T=4)
    order = lambda e: [tuple(s.index) for s, _ in dat.batch_iter(train, 8, 0, e)]
    assert order(0) == order(0)
    assert order(0) != order(1)


def test_batch_iter_validates_size():
    train, _ = dat.generate_dataset(seed=0, per_class=5, T=4)
    with pytest.raises(ValueError):
        next(dat.batch_iter(train, M=7, seed=0, epoch=0))
    with pytest.raises(ValueError):
        next(dat.batch_iter(train, M=64, seed=0, epoch=0))
