"""Flow matching primitives and the watermarked training objective.

The flow is the straight-line interpolation x_t = (1-t) x0 + t x1 with
regression target u = x1 - x0.  Watermarking adds eps0 * s(t) to the
target plus a correlation bonus weighted by lam; the population
minimizer is then u + (eps0 + lam/2) * s(t), see optimal_predictor.
"""

from dataclasses import dataclass

import numpy as np

from .codec import multiplex_signal, watermark_signal


@dataclass(frozen=True)
class LossConfig:
    """epsilon0: nominal amplitude; lam: watermark loss weight lambda."""

    epsilon0: float = 0.2
    lam: float = 0.02

    def __post_init__(self):
        if not (np.isfinite(self.epsilon0) and np.isfinite(self.lam)):
            raise ValueError("epsilon0 and lam must be finite")
        if self.epsilon0 < 0 or self.lam < 0:
            raise ValueError("epsilon0 and lam must be >= 0")


CLEAN = LossConfig(0.0, 0.0)


def interpolate(x0, x1, t):
    """Return (x_t, u): the interpolated state and the velocity target.

    t scalar or shape-(B,) for batched x0, x1 of shape (B, D).
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if x0.shape != x1.shape:
        raise ValueError("x0/x1 shapes differ: %r vs %r"
                         % (x0.shape, x1.shape))
    t = np.asarray(t, dtype=float)
    if t.ndim == x0.ndim - 1 and x0.ndim > 0:
        t = t[..., None]
    return (1.0 - t) * x0 + t * x1, x1 - x0


def signal_batch(key, m, t, scheme=None, submessages=None):
    """Unit-budget watermark signal s(t) for a batch of times.

    Single-carrier path when scheme is None; otherwise the multiplexed
    composite.  Shape (B, D) for t of shape (B,).
    """
    if scheme is None:
        return watermark_signal(key, m, None, t)
    if submessages is None:
        raise ValueError("multiplex signal needs submessages")
    return multiplex_signal(key, scheme, submessages, t)


def watermarked_target(u, key, m, x_t, t, cfg):
    """Training target u + eps0 * sin(2 pi t) P c_m (x_t unused)."""
    return np.asarray(u, dtype=float) + cfg.epsilon0 * watermark_signal(
        key, m, x_t, t)


def _loss_with_signal(v_hat, target, sig, lam):
    """Joint loss and its exact gradient wrt v_hat.

    loss = mean ||v - target||^2 - lam * mean <v_i, sig_i>
    grad_i = (2/B)(v_i - target_i) - (lam/B) sig_i
    """
    v_hat = np.asarray(v_hat, dtype=float)
    target = np.asarray(target, dtype=float)
    if v_hat.shape != target.shape:
        raise ValueError("v_hat/target shapes differ: %r vs %r"
                         % (v_hat.shape, target.shape))
    B = v_hat.shape[0]
    resid = v_hat - target
    loss_vel = float(np.sum(resid * resid)) / B
    corr = float(np.sum(v_hat * sig)) / B
    loss = loss_vel - lam * corr
    grad = (2.0 / B) * resid - (lam / B) * sig
    return loss, grad, loss_vel, corr


def joint_loss(v_hat, target, key, m, t_batch, cfg):
    """Batch loss of the composite objective and its gradient wrt v_hat."""
    sig = signal_batch(key, m, np.asarray(t_batch, dtype=float))
    loss, grad, _, _ = _loss_with_signal(v_hat, target, sig, cfg.lam)
    return loss, grad


def optimal_predictor(u, key, m, t, cfg):
    """Population minimizer v* = u + (eps0 + lam/2) sin(2 pi t) P c_m."""
    coef = cfg.epsilon0 + 0.5 * cfg.lam
    return np.asarray(u, dtype=float) + coef * watermark_signal(
        key, m, None, t)


def euler_sample(field, x0, steps=100):
    """Explicit Euler from t=0 to t=1 with step 1/steps.

    field(x, t) -> velocity, batched or single point alike.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.array(x0, dtype=float, copy=True)
    h = 1.0 / steps
    for i in range(steps):
        v = np.asarray(field(x, i * h))
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(
                "non-finite velocity at t=%.4f" % (i * h))
        x += h * v
    return x
