"""Tests for the synthetic datasets and the IDX parser.

IDX fixtures are written byte by byte with struct.pack, so endianness,
truncation offsets, and the [-1, 1] pixel scaling are all pinned against
hand-built files rather than round trips through the parser itself.
"""

import struct

import numpy as np
import pytest

from flowmark.datasets import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    load_mnist_idx,
    make_synthetic,
)
from flowmark.errors import FormatError
from flowmark.rng import SeededRng


class TestSynthetic:
    def test_split_ratio(self):
        ds = make_synthetic(SeededRng(0), "gauss-mix-8", 16, 1000)
        assert ds.points.shape == (900, 16)
        assert ds.held_out.shape == (100, 16)
        assert ds.dim == 16
        assert ds.name == "gauss-mix-8"

    def test_deterministic(self):
        a = make_synthetic(SeededRng(1), "ring", 8, 500)
        b = make_synthetic(SeededRng(1), "ring", 8, 500)
        assert np.array_equal(a.points, b.points)

    def test_mixture_centers_on_radius_four(self):
        """Component means in the first two coordinates lie on the circle
        of radius 4; the remaining coordinates are pure noise."""
        ds = make_synthetic(SeededRng(2), "gauss-mix-8", 6, 40000)
        pts = np.vstack([ds.points, ds.held_out])
        r = np.hypot(pts[:, 0], pts[:, 1])
        # every point within a few unit-noise lengths of its center
        assert abs(np.median(r) - 4.0) < 0.2
        assert abs(pts[:, 2:].mean()) < 0.02
        assert abs(pts[:, 2:].var() - 1.0) < 0.05

    def test_mixture_has_eight_modes(self):
        ds = make_synthetic(SeededRng(3), "gauss-mix-8", 2, 8000)
        ang = np.arctan2(ds.points[:, 1], ds.points[:, 0])
        # shift by half a bin so each center sits mid-bin, then the eight
        # 45-degree sectors must share the mass roughly equally
        shifted = np.mod(ang + np.pi / 8.0, 2.0 * np.pi)
        hist, _ = np.histogram(shifted, bins=8, range=(0.0, 2.0 * np.pi))
        assert hist.min() > 0.6 * hist.max()
        assert hist.sum() == ds.points.shape[0]

    def test_ring_radius_distribution(self):
        ds = make_synthetic(SeededRng(4), "ring", 4, 30000)
        r = np.hypot(ds.points[:, 0], ds.points[:, 1])
        assert abs(r.mean() - 4.0) < 0.02
        assert abs(r.std() - 0.5) < 0.02
        assert np.all(ds.points[:, 2:] == 0.0)

    def test_ring_angle_uniform(self):
        ds = make_synthetic(SeededRng(5), "ring", 2, 20000)
        ang = np.arctan2(ds.points[:, 1], ds.points[:, 0])
        hist, _ = np.histogram(ang, bins=8, range=(-np.pi, np.pi))
        assert hist.min() > 0.8 * hist.max()

    def test_validation(self):
        with pytest.raises(ValueError):
            make_synthetic(SeededRng(0), "gauss-mix-8", 1, 1000)
        with pytest.raises(ValueError):
            make_synthetic(SeededRng(0), "ring", 4, 99)
        with pytest.raises(ValueError):
            make_synthetic(SeededRng(0), "spiral", 4, 1000)


def write_idx_pair(tmp_path, images, labels):
    """Hand-built big-endian IDX files; images is (n, rows, cols) uint8."""
    n, rows, cols = images.shape
    img_path = tmp_path / "imgs.idx3-ubyte"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    lab_path = tmp_path / "labs.idx1-ubyte"
    with open(lab_path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABELS_MAGIC, len(labels)))
        fh.write(bytes(labels))
    return img_path, lab_path


class TestIdxParser:
    def test_parse_and_scale(self, tmp_path):
        images = np.zeros((20, 28, 28), dtype=np.uint8)
        images[0, 0, 0] = 255
        images[1, 0, 1] = 51  # 51/127.5 - 1 = -0.6
        img, lab = write_idx_pair(tmp_path, images, [0] * 20)
        ds = load_mnist_idx(img, lab)
        pts = np.vstack([ds.points, ds.held_out])
        assert pts.shape == (20, 784)
        assert pts[0, 0] == 1.0
        assert abs(pts[1, 1] - (-0.6)) < 1e-12
        assert pts[0, 1] == -1.0
        assert np.all(pts >= -1.0) and np.all(pts <= 1.0)

    def test_split(self, tmp_path):
        images = np.zeros((40, 4, 4), dtype=np.uint8)
        img, lab = write_idx_pair(tmp_path, images, [0] * 40)
        ds = load_mnist_idx(img, lab)
        assert ds.points.shape[0] == 36
        assert ds.held_out.shape[0] == 4
        assert ds.name == "mnist"

    def test_bad_image_magic(self, tmp_path):
        images = np.zeros((5, 2, 2), dtype=np.uint8)
        img, lab = write_idx_pair(tmp_path, images, [0] * 5)
        blob = bytearray(img.read_bytes())
        blob[3] = 0x01
        img.write_bytes(bytes(blob))
        with pytest.raises(FormatError) as exc:
            load_mnist_idx(img, lab)
        assert "magic" in str(exc.value)

    def test_bad_label_magic(self, tmp_path):
        images = np.zeros((5, 2, 2), dtype=np.uint8)
        img, lab = write_idx_pair(tmp_path, images, [0] * 5)
        blob = bytearray(lab.read_bytes())
        blob[3] = 0x03
        lab.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_mnist_idx(img, lab)

    def test_truncated_pixels(self, tmp_path):
        images = np.zeros((5, 2, 2), dtype=np.uint8)
        img, lab = write_idx_pair(tmp_path, images, [0] * 5)
        img.write_bytes(img.read_bytes()[:-3])
        with pytest.raises(FormatError) as exc:
            load_mnist_idx(img, lab)
        assert "truncated" in str(exc.value)

    def test_truncated_header(self, tmp_path):
        images = np.zeros((5, 2, 2), dtype=np.uint8)
        img, lab = write_idx_pair(tmp_path, images, [0] * 5)
        img.write_bytes(img.read_bytes()[:10])
        with pytest.raises(FormatError):
            load_mnist_idx(img, lab)

    def test_label_count_mismatch(self, tmp_path):
        images = np.zeros((5, 2, 2), dtype=np.uint8)
        img, lab = write_idx_pair(tmp_path, images, [0] * 7)
        with pytest.raises(FormatError) as exc:
            load_mnist_idx(img, lab)
        assert "count" in str(exc.value)
