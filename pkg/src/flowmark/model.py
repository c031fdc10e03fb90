"""MLP velocity field with hand-rolled backprop, AdamW, and training.

The network maps the concatenated (x, t) through dense layers with SiLU
on hidden units and identity on the output.  Gradients are exact for the
joint objective; the finite-difference tests hold them to 1e-5 relative.
Everything is seeded through SeededRng, so a (dataset, config) pair
reproduces final parameters bit for bit.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError
from .flow import CLEAN, LossConfig, _loss_with_signal, interpolate, \
    signal_batch
from .rng import SeededRng, derive_seed

CKPT_MAGIC = b"FLOWMARK-CKPT v1"


def _sigmoid(z):
    # floor at -700 keeps exp() in range; sigmoid there is 0 to ~1e-300
    return 1.0 / (1.0 + np.exp(-np.maximum(z, -700.0)))


def silu(z):
    return z * _sigmoid(z)


def silu_prime(z):
    sig = _sigmoid(z)
    return sig * (1.0 + z * (1.0 - sig))


class MlpVelocityField:
    """Dense net: widths[0] = D + 1 inputs, widths[-1] = D outputs."""

    def __init__(self, widths, rng=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2:
            raise ValueError("need at least one layer")
        if widths[0] != widths[-1] + 1:
            raise DimensionError(
                "input width must be output width + 1 for the t channel")
        self.widths = widths
        self.W = []
        self.b = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                W = np.zeros((fan_out, fan_in))
            else:
                W = bound * (2.0 * rng.uniform((fan_out, fan_in)) - 1.0)
            self.W.append(W)
            self.b.append(np.zeros(fan_out))

    @property
    def data_dim(self):
        return self.widths[-1]

    @property
    def n_layers(self):
        return len(self.W)

    def parameters(self):
        out = []
        for W, b in zip(self.W, self.b):
            out.append(W)
            out.append(b)
        return out

    def _stack_input(self, x, t):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.shape[1] != self.data_dim:
            raise DimensionError("expected %d input features, got %d"
                                 % (self.data_dim, x2.shape[1]))
        t = np.asarray(t, dtype=float)
        tcol = np.full((x2.shape[0], 1), float(t)) if t.ndim == 0 \
            else t.reshape(-1, 1)
        return np.concatenate([x2, tcol], axis=1), single

    def forward(self, x, t):
        """v(x, t); accepts (D,) or (B, D) with scalar or (B,) times."""
        h, single = self._stack_input(x, t)
        for i in range(self.n_layers):
            h = h @ self.W[i].T + self.b[i]
            if i < self.n_layers - 1:
                h = silu(h)
        return h[0] if single else h

    def __call__(self, x, t):
        return self.forward(x, t)

    def _forward_cached(self, h0):
        """Forward from stacked input, keeping pre-activations for backprop."""
        pre = []
        acts = [h0]
        h = h0
        for i in range(self.n_layers):
            z = h @ self.W[i].T + self.b[i]
            pre.append(z)
            h = silu(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return pre, acts

    def backprop(self, h0, grad_out, pre, acts):
        """Parameter gradients given d loss / d output, summed over batch."""
        gW = [None] * self.n_layers
        gb = [None] * self.n_layers
        delta = grad_out
        for i in range(self.n_layers - 1, -1, -1):
            gW[i] = delta.T @ acts[i]
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.W[i]) * silu_prime(pre[i - 1])
        grads = []
        for a, c in zip(gW, gb):
            grads.append(a)
            grads.append(c)
        return grads


def backward(model, x0, x1, t, key, m, cfg, scheme=None, submessages=None):
    """Loss and exact parameter gradients for one training batch.

    Returns (loss, grads, vel_loss, wm_corr); grads aligns with
    model.parameters().  Clean training passes key=None or cfg=CLEAN.
    """
    x_t, u = interpolate(x0, x1, t)
    if key is None or (m is None and submessages is None) \
            or (cfg.epsilon0 == 0.0 and cfg.lam == 0.0):
        sig = np.zeros_like(u)
    else:
        sig = signal_batch(key, m, t, scheme, submessages)
    target = u + cfg.epsilon0 * sig
    h0, _ = model._stack_input(x_t, t)
    pre, acts = model._forward_cached(h0)
    v_hat = acts[-1]
    loss, grad_v, vel, corr = _loss_with_signal(v_hat, target, sig, cfg.lam)
    grads = model.backprop(h0, grad_v, pre, acts)
    return loss, grads, vel, corr


class AdamW:
    """Decoupled-weight-decay Adam; update order matches parameters()."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p -= self.lr * (update + self.weight_decay * p)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch: int = 256
    lr: float = 1e-3
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    eval_every: int = 50
    width: int = 256
    depth: int = 4          # number of dense layers
    weight_decay: float = 0.01
    ema_decay: float = 0.999   # 0 disables weight averaging

    def __post_init__(self):
        if self.steps < 1 or self.batch < 1 or self.depth < 1:
            raise ValueError("steps, batch, depth must be positive")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must be in [0, 1)")

    def digest(self):
        blob = json.dumps(self.__dict__, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TrainResult:
    model: object
    telemetry: dict    # per-step arrays: step, loss, vel_loss, wm_corr


def train(dataset, key, m, cfg, scheme=None, submessages=None):
    """Seeded training loop; returns TrainResult(model, telemetry).

    m None means a clean model: the watermark terms are forced to zero.
    Telemetry records the velocity loss and the watermark correlation
    (the negated watermark loss term) at every step.  The returned model
    carries the bias-corrected exponential moving average of the weights
    (decay cfg.ema_decay); telemetry stays per-step raw.
    """
    data = np.asarray(dataset, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (n, D) array")
    n, D = data.shape
    marked = m is not None or submessages is not None
    if marked and key is None:
        raise ValueError("watermarked training needs a key")
    loss_cfg = cfg.loss if marked else CLEAN
    if marked and scheme is None:
        key.check_message(m)

    rng = SeededRng(derive_seed(cfg.seed, "train"))
    widths = [D + 1] + [cfg.width] * (cfg.depth - 1) + [D]
    model = MlpVelocityField(widths, rng=rng.spawn("init"))
    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    decay = cfg.ema_decay
    ema = [np.zeros_like(p) for p in params]

    tel = {"step": [], "loss": [], "vel_loss": [], "wm_corr": []}
    for step in range(cfg.steps):
        idx = rng.integers(n, cfg.batch)
        x1 = data[idx]
        x0 = rng.normal((cfg.batch, D))
        t = rng.uniform(cfg.batch)
        loss, grads, vel, corr = backward(
            model, x0, x1, t, key, m, loss_cfg, scheme, submessages)
        if not np.isfinite(loss):
            raise FloatingPointError(
                "non-finite loss %r at step %d (lr too high?)"
                % (loss, step))
        opt.step(grads)
        for e, p in zip(ema, params):
            e *= decay
            e += (1.0 - decay) * p
        tel["step"].append(step)
        tel["loss"].append(loss)
        tel["vel_loss"].append(vel)
        tel["wm_corr"].append(corr)
    if decay > 0.0:
        scale = 1.0 / (1.0 - decay ** cfg.steps)
        for p, e in zip(params, ema):
            p[...] = scale * e
    for k2 in tel:
        tel[k2] = np.asarray(tel[k2])
    return TrainResult(model=model, telemetry=tel)


# ----------------------------------------------------------------------
# checkpoint format: FLOWMARK-CKPT v1
# ----------------------------------------------------------------------

def save_checkpoint(model, path, config_digest=""):
    """Magic line, JSON header, then little-endian f64 blocks per layer."""
    header = {"widths": model.widths, "activation": "silu",
              "config_digest": config_digest}
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for W, b in zip(model.W, model.b):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (model, header dict).  Truncated or edited files raise."""
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != CKPT_MAGIC:
            raise FormatError("%s: bad magic %r at offset 0" % (path, magic))
        try:
            header = json.loads(fh.readline().decode())
        except ValueError:
            raise FormatError("%s: unreadable header" % path)
        widths = header.get("widths")
        if not widths or header.get("activation") != "silu":
            raise FormatError("%s: header missing widths/activation" % path)
        model = MlpVelocityField(widths)
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            for shape, dest in (((fan_out, fan_in), model.W),
                                ((fan_out,), model.b)):
                count = int(np.prod(shape))
                raw = fh.read(8 * count)
                if len(raw) != 8 * count:
                    raise FormatError(
                        "%s: truncated at layer %d (offset %d)"
                        % (path, i, fh.tell()))
                dest[i] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return model, header
