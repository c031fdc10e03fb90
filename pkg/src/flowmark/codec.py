"""Key derivation, codebooks, and watermark signal synthesis.

A key is (P, C): a semi-orthogonal projection P in R^{D x k} and a set of
2^L exactly orthogonal unit codewords in R^k.  Both are regenerated from
the integer seed alone, so key files never store matrix data.  The carrier
is sin(2*pi*t); the message-m signal is sin(2*pi*t) * P c_m.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DimensionError, FormatError, SchemeError
from .numkit import qr_orthonormal
from .rng import SeededRng, derive_seed

TWO_PI = 2.0 * np.pi

# midpoint rule on [0,1]; sin(2*pi*t) moments converge to ~1e-16 here
QUAD_POINTS = 1024


@dataclass(frozen=True, eq=False)
class WatermarkKey:
    """Secret key: projection P (D x k) plus a k x k orthonormal code basis.

    The codebook is the first 2^L columns of code_basis.  seed is None for
    rotated keys, which cannot be regenerated and so cannot be serialized.
    """

    seed: object
    data_dim: int
    code_dim: int
    message_bits: int
    projection: np.ndarray = field(repr=False)
    code_basis: np.ndarray = field(repr=False)

    @property
    def n_messages(self):
        return 1 << self.message_bits

    @property
    def codebook(self):
        """Codewords as rows, shape (2^L, k)."""
        return self.code_basis[:, : self.n_messages].T

    def codeword(self, m):
        self.check_message(m)
        return self.code_basis[:, m]

    def check_message(self, m):
        if not 0 <= int(m) < self.n_messages:
            raise ValueError(
                "message %r outside [0, %d)" % (m, self.n_messages))

    def carrier_vector(self, m):
        """P c_m, the unit direction of message m in velocity space."""
        return self.projection @ self.codeword(m)


def derive_key(seed, D, k, L):
    """Regenerate the full key from (seed, D, k, L).  Pure and deterministic.

    The projection and the code basis are drawn from one seed-derived
    stream, in that order.  Codewords are exactly orthogonal (columns of a
    QR orthonormal factor), which is available whenever 2^L <= k.
    """
    if k > D:
        raise DimensionError("code_dim k=%d exceeds data_dim D=%d" % (k, D))
    if (1 << L) > k:
        raise CapacityError(
            "2^L = %d codewords do not fit in k=%d dimensions" % (1 << L, k))
    rng = SeededRng(derive_seed(seed, "key"))
    P = qr_orthonormal(rng, D, k)
    basis = qr_orthonormal(rng, k, k)
    return WatermarkKey(seed=int(seed), data_dim=D, code_dim=k,
                        message_bits=L, projection=P, code_basis=basis)


def watermark_signal(key, m, x, t):
    """s_{K,m}(x, t) = sin(2*pi*t) * P c_m.  Ignores x by construction.

    t may be a scalar or an array; array t of shape (B,) yields (B, D).
    """
    a = key.carrier_vector(m)
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return np.sin(TWO_PI * float(t)) * a
    return np.sin(TWO_PI * t)[..., None] * a


def verify_admissibility(key):
    """Quadrature check of the three codebook conditions.

    Returns {zero_mean_residual, gram_deviation, energy_deviation} where
    gram/energy deviations are measured against the ideal (1/2) I.  The
    signals share the scalar carrier sin(2*pi*t), so the time integrals
    reduce to carrier moments times Gram(P C); we quadrature the moments
    on a midpoint grid and keep the algebra exact.
    """
    tg = (np.arange(QUAD_POINTS) + 0.5) / QUAD_POINTS
    s = np.sin(TWO_PI * tg)
    mean_s = float(np.mean(s))
    mean_s2 = float(np.mean(s * s))

    A = key.projection @ key.code_basis[:, : key.n_messages]  # (D, 2^L)
    gram = A.T @ A
    col_norms = np.sqrt(np.diag(gram))

    zero_mean = float(np.max(np.abs(mean_s) * col_norms))
    gram_dev = float(np.max(np.abs(mean_s2 * gram
                                   - 0.5 * np.eye(key.n_messages))))
    energy_dev = float(np.max(np.abs(mean_s2 * np.diag(gram) - 0.5)))
    return {"zero_mean_residual": zero_mean,
            "gram_deviation": gram_dev,
            "energy_deviation": energy_dev}


@dataclass(frozen=True)
class MultiplexScheme:
    """Channel split: kind in {single, fdm, tdm}, r carriers, b bits each.

    FDM-r stacks sine carriers at frequencies 1..r with a 1/sqrt(r)
    amplitude split; TDM-r divides [0,1] into r equal segments, each
    driven by sin(2*pi*r*t) so every segment integrates to zero on its
    own.  Carrier j signals with sub-codebook j: columns
    [j*2^b, (j+1)*2^b) of the key's code basis, so the blocks are
    disjoint and r * 2^b <= k must hold.
    """

    kind: str
    carriers: int
    bits_per_carrier: int

    def __post_init__(self):
        if self.kind not in ("single", "fdm", "tdm"):
            raise SchemeError("unknown scheme kind %r" % (self.kind,))
        if self.kind == "single":
            if self.carriers != 1:
                raise SchemeError("single scheme requires carriers=1")
        elif self.carriers not in (2, 4):
            raise SchemeError(
                "%s supports 2 or 4 carriers, got %d" % (self.kind,
                                                         self.carriers))
        if self.bits_per_carrier < 0:
            raise SchemeError("bits_per_carrier must be >= 0")

    @property
    def n_sub(self):
        return 1 << self.bits_per_carrier

    @property
    def total_bits(self):
        return self.carriers * self.bits_per_carrier

    def sub_codebook(self, key, j):
        """Codewords of carrier j as rows, shape (2^b, k)."""
        if not 0 <= j < self.carriers:
            raise SchemeError("carrier index %d out of range" % j)
        lo = j * self.n_sub
        hi = lo + self.n_sub
        if hi > key.code_dim:
            raise CapacityError(
                "scheme needs %d codewords but k=%d" % (self.carriers
                                                        * self.n_sub,
                                                        key.code_dim))
        return key.code_basis[:, lo:hi].T


def single_scheme(key):
    """Degenerate scheme whose one sub-codebook is the key's codebook."""
    return MultiplexScheme("single", 1, key.message_bits)


def tdm_segment(scheme, t):
    """Active segment index floor(r*t), clipped so t=1 stays in the last."""
    seg = np.floor(scheme.carriers * np.asarray(t, dtype=float)).astype(int)
    return np.clip(seg, 0, scheme.carriers - 1)


def multiplex_signal(key, scheme, submessages, t):
    """Composite signal at time t for one submessage per carrier.

    Scalar t returns (D,); array t of shape (B,) returns (B, D).  The
    time-averaged total energy is 1/2 for every scheme, matching the
    single-carrier budget.
    """
    if len(submessages) != scheme.carriers:
        raise SchemeError("expected %d submessages, got %d"
                          % (scheme.carriers, len(submessages)))
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)

    # per-carrier unit directions P c^{(j)} in R^D
    dirs = []
    for j, m in enumerate(submessages):
        sub = scheme.sub_codebook(key, j)
        if not 0 <= int(m) < scheme.n_sub:
            raise ValueError("submessage %r outside [0, %d)"
                             % (m, scheme.n_sub))
        dirs.append(key.projection @ sub[int(m)])
    dirs = np.stack(dirs, axis=0)  # (r, D)

    if scheme.kind in ("single", "fdm"):
        amp = 1.0 / np.sqrt(scheme.carriers)
        freqs = np.arange(1, scheme.carriers + 1)
        carr = amp * np.sin(TWO_PI * np.outer(t_arr, freqs))  # (B, r)
        out = carr @ dirs
    else:  # tdm
        seg = tdm_segment(scheme, t_arr)
        carr = np.sin(TWO_PI * scheme.carriers * t_arr)
        out = carr[:, None] * dirs[seg]
    return out[0] if scalar else out


def grassmann_dim(D, k):
    """Dimension k(D-k) of the attacker's subspace search space."""
    if not 1 <= k <= D:
        raise DimensionError("need 1 <= k <= D, got k=%d D=%d" % (k, D))
    return k * (D - k)


def rotate_key(key, Q):
    """Equivalent key (PQ, Q^T C): emits identical signals for every m.

    Q must be k x k orthogonal within 1e-10.  The result has seed None
    because it is no longer a pure function of any stored seed.
    """
    Q = np.asarray(Q, dtype=float)
    k = key.code_dim
    if Q.shape != (k, k):
        raise DimensionError("rotation must be %d x %d, got %r"
                             % (k, k, Q.shape))
    if np.max(np.abs(Q.T @ Q - np.eye(k))) > 1e-10:
        raise ValueError("rotation is not orthogonal within 1e-10")
    return WatermarkKey(seed=None, data_dim=key.data_dim, code_dim=k,
                        message_bits=key.message_bits,
                        projection=key.projection @ Q,
                        code_basis=Q.T @ key.code_basis)


# ----------------------------------------------------------------------
# key file format: FLOWMARK-KEY v1
# ----------------------------------------------------------------------

KEY_MAGIC = "FLOWMARK-KEY v1"
_KEY_FIELDS = ("seed", "D", "k", "L", "scheme")


def _key_check(seed, D, k, L, scheme):
    blob = "|".join(str(v) for v in (seed, D, k, L, scheme))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_key(key, path, scheme="single"):
    """Write the seed-only key file.  Rotated keys refuse serialization."""
    if key.seed is None:
        raise ValueError("rotated key has no seed; store the original")
    lines = [KEY_MAGIC,
             "seed = %d" % key.seed,
             "D = %d" % key.data_dim,
             "k = %d" % key.code_dim,
             "L = %d" % key.message_bits,
             "scheme = %s" % scheme,
             "check = %s" % _key_check(key.seed, key.data_dim, key.code_dim,
                                       key.message_bits, scheme)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_key(path):
    """Read and verify a key file; returns (key, scheme_label)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != KEY_MAGIC:
        raise FormatError("%s: missing %r header" % (path, KEY_MAGIC))
    fields = {}
    for ln in lines[1:]:
        if "=" not in ln:
            raise FormatError("%s: malformed line %r" % (path, ln))
        name, _, val = ln.partition("=")
        fields[name.strip()] = val.strip()
    missing = [f for f in _KEY_FIELDS + ("check",) if f not in fields]
    if missing:
        raise FormatError("%s: missing fields %s" % (path, missing))
    seed, D, k, L = (int(fields[f]) for f in ("seed", "D", "k", "L"))
    scheme = fields["scheme"]
    if fields["check"] != _key_check(seed, D, k, L, scheme):
        raise FormatError("%s: checksum mismatch, file edited?" % path)
    return derive_key(seed, D, k, L), scheme
