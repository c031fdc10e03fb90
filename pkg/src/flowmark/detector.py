"""Black-box detection by synchronous demodulation.

Queries (x_i, t_i) ~ N(0, 4I) x Uniform(0,1) probe the velocity field;
multiplying by the carrier sin(2 pi t_i) and averaging isolates the
watermark component: s_hat = (1/N) sum sin(2 pi t_i) P^T v(x_i, t_i).
Decoding picks the codeword with the largest inner product, lowest
index on exact ties.
"""

from dataclasses import dataclass

import numpy as np

from .codec import TWO_PI, tdm_segment


@dataclass(frozen=True)
class QueryBatch:
    x: np.ndarray   # (N, D)
    t: np.ndarray   # (N,)

    @property
    def n(self):
        return self.x.shape[0]


@dataclass(frozen=True)
class Signature:
    s_hat: np.ndarray    # (k,)
    scores: np.ndarray   # (2^L,) inner products with each codeword
    decoded: int
    confidence: float


def sample_queries(rng, N, D):
    """Fresh query batch: x with per-coordinate variance 4, t uniform."""
    if N < 1:
        raise ValueError("N must be >= 1")
    x = 2.0 * rng.normal((N, D))
    t = rng.uniform(N)
    return QueryBatch(x=x, t=t)


def decode(s_hat, key):
    """Maximum-correlation decoding: (m_hat, confidence)."""
    scores = key.codebook @ np.asarray(s_hat, dtype=float)
    m_hat = int(np.argmax(scores))   # argmax takes the lowest tied index
    return m_hat, float(scores[m_hat])


def _field_values(field, queries):
    v = np.asarray(field(queries.x, queries.t), dtype=float)
    if v.shape != queries.x.shape:
        raise ValueError("field returned shape %r for queries %r"
                         % (v.shape, queries.x.shape))
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite field output in demodulation")
    return v


def demodulated_signature(field, key, queries):
    """Demodulate a velocity oracle into a Signature."""
    v = _field_values(field, queries)
    z = np.sin(TWO_PI * queries.t)[:, None] * (v @ key.projection)
    s_hat = z.mean(axis=0)
    scores = key.codebook @ s_hat
    m_hat = int(np.argmax(scores))
    return Signature(s_hat=s_hat, scores=scores, decoded=m_hat,
                     confidence=float(scores[m_hat]))


def detection_trial(field, key, claimed, N, rng):
    """One trial with fresh queries; hit means decode equals claimed."""
    key.check_message(claimed)
    queries = sample_queries(rng, N, key.data_dim)
    sig = demodulated_signature(field, key, queries)
    return {"hit": sig.decoded == int(claimed),
            "score": float(sig.scores[int(claimed)]),
            "decoded": sig.decoded,
            "confidence": sig.confidence}


def multiplex_signature(field, key, scheme, queries):
    """Per-carrier signatures and decodes for a multiplexed field.

    FDM carrier j demodulates against sin(2 pi (j+1) t); TDM carrier j
    uses only the queries landing in segment j, against the shared
    sin(2 pi r t) carrier.  Each carrier decodes within its own
    sub-codebook; returns a list of Signatures in carrier order.
    """
    v = _field_values(field, queries)
    proj = v @ key.projection     # (N, k)
    out = []
    for j in range(scheme.carriers):
        sub = scheme.sub_codebook(key, j)
        if scheme.kind in ("single", "fdm"):
            carr = np.sin(TWO_PI * (j + 1) * queries.t)
            s_hat = (carr[:, None] * proj).mean(axis=0)
        else:
            mask = tdm_segment(scheme, queries.t) == j
            if not np.any(mask):
                s_hat = np.zeros(key.code_dim)
            else:
                carr = np.sin(TWO_PI * scheme.carriers * queries.t[mask])
                s_hat = (carr[:, None] * proj[mask]).mean(axis=0)
        scores = sub @ s_hat
        m_hat = int(np.argmax(scores))
        out.append(Signature(s_hat=s_hat, scores=scores, decoded=m_hat,
                             confidence=float(scores[m_hat])))
    return out


def multiplex_trial(field, key, scheme, submessages, N, rng):
    """Full-message trial: every carrier must decode its submessage."""
    queries = sample_queries(rng, N, key.data_dim)
    sigs = multiplex_signature(field, key, scheme, queries)
    decoded = [s.decoded for s in sigs]
    hit = all(d == int(m) for d, m in zip(decoded, submessages))
    return {"hit": hit, "decoded": decoded,
            "confidence": min(s.confidence for s in sigs)}
