"""Training data: desk-scale synthetic sets and the IDX image format.

Both synthetic sets live in the first two coordinates of R^D (mixture
centers on a radius-4 circle; ring of radius ~4) so the flow has real
structure to learn while D stays free.  Everything is split 90/10 into
train and held-out parts, in stream order.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    name: str
    points: np.ndarray      # (n_train, D)
    held_out: np.ndarray    # (n_held, D)

    @property
    def dim(self):
        return self.points.shape[1]


def _split(name, pts):
    n_held = pts.shape[0] // 10
    return Dataset(name=name, points=pts[: pts.shape[0] - n_held],
                   held_out=pts[pts.shape[0] - n_held:])


def make_synthetic(rng, name, D, n):
    """gauss-mix-8 or ring, embedded in R^D, 90/10 split."""
    if D < 2:
        raise ValueError("need D >= 2")
    if n < 100:
        raise ValueError("need n >= 100")
    if name == "gauss-mix-8":
        angles = 2.0 * np.pi * np.arange(8) / 8.0
        centers = np.zeros((8, D))
        centers[:, 0] = 4.0 * np.cos(angles)
        centers[:, 1] = 4.0 * np.sin(angles)
        comp = rng.integers(8, n)
        pts = centers[comp] + rng.normal((n, D))
    elif name == "ring":
        phi = 2.0 * np.pi * rng.uniform(n)
        # radius N(4, 0.25): variance 0.25, std 0.5
        radius = 4.0 + 0.5 * rng.normal(n)
        pts = np.zeros((n, D))
        pts[:, 0] = radius * np.cos(phi)
        pts[:, 1] = radius * np.sin(phi)
    else:
        raise ValueError("unknown synthetic dataset %r" % (name,))
    return _split(name, pts)


def _read_exact(fh, count, path, what):
    raw = fh.read(count)
    if len(raw) != count:
        raise FormatError("%s: truncated %s at offset %d"
                          % (path, what, fh.tell()))
    return raw


def load_mnist_idx(images_path, labels_path):
    """Parse the big-endian IDX pair; pixels scaled to [-1, 1], D=784.

    Labels are read and count-checked against the images but not kept:
    the flow model is unconditional.
    """
    with open(images_path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(
            ">iiii", _read_exact(fh, 16, images_path, "header"))
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError("%s: bad magic 0x%08x at offset 0 (want "
                              "0x%08x)" % (images_path, magic,
                                           IDX_IMAGES_MAGIC))
        raw = _read_exact(fh, n * rows * cols, images_path, "pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)

    with open(labels_path, "rb") as fh:
        magic, n_lab = struct.unpack(
            ">ii", _read_exact(fh, 8, labels_path, "header"))
        if magic != IDX_LABELS_MAGIC:
            raise FormatError("%s: bad magic 0x%08x at offset 0 (want "
                              "0x%08x)" % (labels_path, magic,
                                           IDX_LABELS_MAGIC))
        _read_exact(fh, n_lab, labels_path, "label data")
    if n_lab != n:
        raise FormatError("label count %d != image count %d" % (n_lab, n))

    pts = pixels.astype(float) / 127.5 - 1.0
    return _split("mnist", pts)
