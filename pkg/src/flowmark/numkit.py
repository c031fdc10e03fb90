"""Seeded linear algebra and two-sample statistics.

Matrices are plain float64 numpy arrays throughout the package. The QR
factor here is the unique orthonormal factor with nonnegative R diagonal,
so a key regenerated from its seed is reproducible.
"""

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import stdtr

from .errors import DimensionError


def qr_orthonormal(rng, rows, cols):
    """Seeded random matrix with orthonormal columns, shape (rows, cols).

    Draws a rows x cols standard Gaussian matrix from ``rng`` and returns
    the Q of its reduced QR factorization, with column signs flipped so the
    diagonal of R is nonnegative (making the factor unique).
    """
    if cols < 1:
        raise ValueError(f"need at least one column, got {cols}")
    if cols > rows:
        raise DimensionError(f"cannot draw {cols} orthonormal columns in {rows} dimensions")
    a = rng.normal((rows, cols))
    q, r = np.linalg.qr(a)
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    return q * signs


def welch_t(a, b):
    """Welch's unequal-variance t-test.

    Returns (t, p) with a two-sided p-value from the Student t distribution
    at the Welch-Satterthwaite degrees of freedom. Requires at least two
    observations per sample and nonzero variance in at least one.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("welch_t needs at least two observations per sample")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise ValueError("undefined statistic: both samples have zero variance")
    sa, sb = va / na, vb / nb
    t = (a.mean() - b.mean()) / np.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))
    p = 2.0 * stdtr(df, -abs(t))
    # extreme statistics can underflow the tail to exactly zero
    p = max(float(p), 5e-324)
    return float(t), p


def _canonical_pair(a, b):
    # Fixed orientation of the pair so the cross-distance sum is evaluated
    # identically under argument swap (exact symmetry).
    ka = (a.shape[0], a.tobytes())
    kb = (b.shape[0], b.tobytes())
    return (a, b) if ka <= kb else (b, a)


def energy_distance(a, b):
    """Energy distance between two point clouds in R^D (V-statistic form).

    E = 2 E|X - Y| - E|X - X'| - E|Y - Y'| over all index pairs including
    self-pairs, which is exactly zero when the two clouds coincide,
    symmetric, and nonnegative.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("energy_distance needs nonempty point sets")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    x, y = _canonical_pair(a, b)
    cross = cdist(x, y).mean()
    within_x = cdist(x, x).mean()
    within_y = cdist(y, y).mean()
    e = 2.0 * cross - within_x - within_y
    return max(float(e), 0.0)
