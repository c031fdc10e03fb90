"""Capacity analysis of the demodulated watermark channel.

After demodulation the channel is s_hat = (eps/2) c_m + xi with
xi ~ N(0, Sigma/N), so the message capacity is the Gaussian vector
formula C = (1/2) log2 det(I + (N eps^2 / 4) Sigma^{-1}).  Sigma is
estimated empirically from demodulated per-query terms; the
log-determinant and the sampling square root both come from a cyclic
Jacobi eigendecomposition (k is small, so a dozen sweeps suffice).
"""

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .codec import TWO_PI
from .detector import decode, demodulated_signature, sample_queries
from .errors import CapacityError, DimensionError


@dataclass(frozen=True)
class ChannelModel:
    epsilon: float
    Sigma: np.ndarray    # (k, k) background covariance
    N: int
    k: int

    def __post_init__(self):
        S = np.asarray(self.Sigma)
        if S.shape != (self.k, self.k):
            raise DimensionError("Sigma must be (%d, %d), got %r"
                                 % (self.k, self.k, S.shape))
        if np.max(np.abs(S - S.T)) > 1e-10:
            raise ValueError("Sigma asymmetry exceeds 1e-10")

    def sigma_digest(self):
        return hashlib.sha256(
            np.ascontiguousarray(self.Sigma, dtype="<f8").tobytes()
        ).hexdigest()[:12]


def estimate_sigma(field, key, queries):
    """Empirical covariance of z_i = sin(2 pi t_i) P^T v(x_i, t_i).

    Centered, 1/N normalization, explicitly symmetrized.  With N <= k
    the estimate is rank deficient; a warning is issued but the matrix
    is still returned.
    """
    v = np.asarray(field(queries.x, queries.t), dtype=float)
    z = np.sin(TWO_PI * queries.t)[:, None] * (v @ key.projection)
    N, k = z.shape
    if N <= k:
        warnings.warn("Sigma estimate from N=%d <= k=%d queries is "
                      "rank deficient" % (N, k), RuntimeWarning)
    zc = z - z.mean(axis=0)
    S = (zc.T @ zc) / N
    return 0.5 * (S + S.T)


def jacobi_eigh(A, tol=1e-14, max_sweeps=60):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns).  Intended
    for the small k x k matrices of this module; np.linalg.eigh serves
    as the independent oracle in the tests, not as the implementation.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError("matrix must be square, got %r" % (A.shape,))
    if np.max(np.abs(A - A.T)) > 1e-10:
        raise ValueError("matrix asymmetry exceeds 1e-10")
    a = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = max(np.max(np.abs(a)), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # classic two-angle formulas, numerically safe branch
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta
                                                           + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                vp = c * V[:, p] - s * V[:, q]
                vq = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = vp, vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def capacity(model):
    """C = (1/2) log2 det(I + (N eps^2 / 4) Sigma^{-1}) in bits.

    Refuses near-singular Sigma instead of ridging it; the error names
    the offending null direction.
    """
    w, V = jacobi_eigh(model.Sigma)
    if w[0] <= 1e-12:
        null = V[:, 0]
        raise CapacityError(
            "Sigma is singular along [%s ...] (eigenvalue %.3e); "
            "capacity undefined" % (", ".join("%.3f" % c
                                              for c in null[:4]), w[0]))
    snr = model.N * model.epsilon ** 2 / 4.0
    return float(np.sum(np.log2(1.0 + snr / w)) / 2.0)


def _sigma_sqrt(Sigma):
    w, V = jacobi_eigh(Sigma)
    w = np.maximum(w, 0.0)    # clamp the -1e-12-ish rounding dust
    return V * np.sqrt(w)


def simulate_channel(model, key, trials, rng, field=None, true_m=None):
    """Monte-Carlo decode error of the Gaussian channel approximation.

    Default mode draws xi ~ N(0, Sigma/N) analytically and decodes
    s_hat = (eps/2) c_m + xi for uniformly random messages.  When a
    velocity oracle is supplied, signatures come from fresh query
    batches against the live field instead (true_m tells the scorer
    which message that field carries).  Gaussianity diagnostics report
    per-coordinate skewness and excess kurtosis of the noise samples.
    """
    if trials < 100:
        raise ValueError("need >= 100 trials for stable rates")
    M = key.n_messages
    errors = 0
    samples = np.empty((trials, key.code_dim))
    if field is None:
        root = _sigma_sqrt(np.asarray(model.Sigma) / model.N)
        for i in range(trials):
            m = int(rng.integers(M))
            xi = root @ rng.normal(key.code_dim)
            s_hat = 0.5 * model.epsilon * key.codeword(m) + xi
            m_hat, _ = decode(s_hat, key)
            errors += m_hat != m
            samples[i] = xi
    else:
        if true_m is None:
            raise ValueError("field mode needs true_m")
        for i in range(trials):
            q = sample_queries(rng, model.N, key.data_dim)
            sig = demodulated_signature(field, key, q)
            errors += sig.decoded != int(true_m)
            samples[i] = sig.s_hat
    centered = samples - samples.mean(axis=0)
    sd = centered.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    skew = (centered ** 3).mean(axis=0) / sd ** 3
    kurt = (centered ** 4).mean(axis=0) / sd ** 4 - 3.0
    return {"decode_error_rate": errors / trials,
            "gaussianity": {"skewness": skew,
                            "excess_kurtosis": kurt,
                            "max_abs_skewness": float(np.max(np.abs(skew))),
                            "max_abs_kurtosis": float(np.max(np.abs(kurt)))}}


def estimate_epsilon(field, key, m, N, rng, trials=8):
    """Effective strength: 2 <s_hat, c_m> averaged over fresh batches.

    Inverts E[s_hat] = (eps/2) c_m rather than trusting eps0 + lam/2;
    trained models tend to land above the population prediction.
    """
    c = key.codeword(m)
    acc = 0.0
    for _ in range(trials):
        q = sample_queries(rng, N, key.data_dim)
        sig = demodulated_signature(field, key, q)
        acc += 2.0 * float(sig.s_hat @ c)
    return acc / trials
