"""Denoising-diffusion generator for encoded tables: Gaussian diffusion over
the quantile-transformed numeric block, uniform-mixing multinomial diffusion
over each one-hot block, one shared MLP denoiser trained with Adam under a
cosine learning-rate decay, and ancestral sampling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .preprocess import DEFAULT_CLAMP, EncodedMatrix

_MAGIC = b"TDPM"


class DiffusionError(ValueError):
    pass


class TrainingDiverged(DiffusionError):
    def __init__(self, step, loss):
        super().__init__(f"non-finite loss {loss!r} at optimizer step {step}")
        self.step = step


# -- noise schedule ---------------------------------------------------------

class NoiseSchedule:
    """Discrete-time schedule; index t runs 1..T. alpha_bar[0] here is
    alpha_bar_1; abar_prev(1) == 1 by convention."""

    def __init__(self, betas):
        b = np.asarray(betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise DiffusionError("betas must be a non-empty vector")
        if np.any(b <= 0) or np.any(b >= 1):
            raise DiffusionError("betas must lie in (0, 1)")
        self.betas = b
        self.alphas = 1.0 - b
        self.alpha_bars = np.cumprod(self.alphas)
        if np.any(np.diff(self.alpha_bars) >= 0):
            raise DiffusionError("alpha_bar must be strictly decreasing")
        self.T = b.size

    def abar(self, t):
        return self.alpha_bars[np.asarray(t) - 1]

    def abar_prev(self, t):
        t = np.asarray(t)
        return np.where(t >= 2, self.alpha_bars[np.maximum(t - 2, 0)], 1.0)


def make_cosine_schedule(T) -> NoiseSchedule:
    """Cosine alpha-bar ramp with betas clipped to (1e-8, 0.999]."""
    if T < 2:
        raise DiffusionError("T must be >= 2")
    u = np.arange(T + 1) / T
    f = np.cos((u + 0.008) / 1.008 * np.pi / 2.0) ** 2
    abar = f / f[0]
    betas = np.clip(1.0 - abar[1:] / abar[:-1], 1e-8, 0.999)
    return NoiseSchedule(betas)


# -- forward processes -------------------------------------------------------

def forward_diffuse_numeric(x0, t, noise, sched):
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise, per-row t."""
    a = sched.abar(t)
    a = a[..., None] if np.ndim(x0) == 2 else a
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * noise


def forward_diffuse_categorical(x0_index, t, rng, sched, n_categories):
    """Draw from the t-step marginal Cat(abar_t x0 + (1 - abar_t)/K):
    keep the original category with probability abar_t, else uniform."""
    x0_index = np.asarray(x0_index)
    a = sched.abar(t)
    keep = rng.random(x0_index.shape) < a
    uniform = rng.integers(0, n_categories, size=x0_index.shape)
    return np.where(keep, x0_index, uniform)


def categorical_posterior(x_t_index, x0_probs, t, sched):
    """q(x_{t-1} | x_t, x0) for the uniform-mixing chain, rows stacked.
    t == 1 rows return x0_probs."""
    x0_probs = np.atleast_2d(np.asarray(x0_probs, dtype=np.float64))
    n, K = x0_probs.shape
    t = np.broadcast_to(np.asarray(t), (n,))
    x_t_index = np.broadcast_to(np.asarray(x_t_index), (n,))
    alpha = sched.alphas[t - 1]
    abar_prev = sched.abar_prev(t)

    term_xt = np.repeat((1.0 - alpha)[:, None] / K, K, axis=1)
    term_xt[np.arange(n), x_t_index] += alpha
    term_x0 = abar_prev[:, None] * x0_probs + (1.0 - abar_prev)[:, None] / K
    post = term_xt * term_x0
    z = post.sum(axis=1, keepdims=True)
    if np.any(z <= 0):
        raise DiffusionError("zero normalizer in categorical posterior")
    post = post / z
    first = t == 1
    if np.any(first):
        post[first] = x0_probs[first]
    return post


# -- denoiser ---------------------------------------------------------------

def timestep_embedding(t, dim):
    """Sinusoidal embedding of integer timesteps, shape (n, dim)."""
    if dim % 2 or dim < 2:
        raise DiffusionError("embedding dimension must be even and >= 2")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, s


class Denoiser:
    """MLP over [encoded row || timestep embedding] with SiLU hidden layers;
    outputs eps-hat for the numeric block and one logit vector per categorical
    feature. Output layer is zero-initialized."""

    def __init__(self, numeric_dim, cat_sizes, hidden, emb_dim, params):
        self.numeric_dim = int(numeric_dim)
        self.cat_sizes = [int(k) for k in cat_sizes]
        self.hidden = tuple(int(h) for h in hidden)
        self.emb_dim = int(emb_dim)
        self.params = params  # list of [W (in,out), b (out,)]
        self.in_dim = self.params[0][0].shape[0]
        self.out_dim = self.params[-1][0].shape[1]
        expected_out = self.numeric_dim + sum(self.cat_sizes)
        if self.out_dim != expected_out:
            raise DiffusionError(f"output width {self.out_dim} != layout width {expected_out}")

    @classmethod
    def init(cls, encoded_dim, numeric_dim, cat_sizes, hidden, emb_dim, rng):
        sizes = [encoded_dim + emb_dim, *hidden, numeric_dim + sum(cat_sizes)]
        params = []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            if i == len(sizes) - 2:
                W = np.zeros((fan_in, fan_out))
            else:
                W = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            params.append([W, np.zeros(fan_out)])
        return cls(numeric_dim, cat_sizes, hidden, emb_dim, params)

    def forward(self, x, want_cache=False):
        h = x
        cache = [(x, None)]
        for i, (W, b) in enumerate(self.params):
            z = h @ W + b
            if i < len(self.params) - 1:
                h, sig = _silu(z)
                cache.append((z, sig))
            else:
                h = z
        if want_cache:
            return h, cache
        return h

    def backward(self, cache, dout):
        """Gradients of a scalar loss wrt parameters given d(loss)/d(output)."""
        grads = [None] * len(self.params)
        delta = dout
        for i in range(len(self.params) - 1, -1, -1):
            if i == 0:
                h_in = cache[0][0]
            else:
                z, sig = cache[i]
                h_in = z * sig
            W, _ = self.params[i]
            grads[i] = [h_in.T @ delta, delta.sum(axis=0)]
            if i > 0:
                z, sig = cache[i]
                dsilu = sig * (1.0 + z * (1.0 - sig))
                delta = (delta @ W.T) * dsilu
        return grads

    def split_output(self, out):
        eps_hat = out[:, :self.numeric_dim]
        logits = []
        off = self.numeric_dim
        for k in self.cat_sizes:
            logits.append(out[:, off:off + k])
            off += k
        return eps_hat, logits


def denoiser_forward(denoiser, x_t, t):
    """Forward pass on already-encoded rows with integer timesteps."""
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    t = np.broadcast_to(np.asarray(t), (x_t.shape[0],))
    x_in = np.concatenate([x_t, timestep_embedding(t, denoiser.emb_dim)], axis=1)
    return denoiser.split_output(denoiser.forward(x_in))


# -- model + training ---------------------------------------------------------

@dataclass
class TrainConfig:
    steps: int = 5000
    learning_rate: float = 2e-4
    batch_size: int = 256
    seed: int = 0
    lr_schedule: str = "cosine"
    T: int = 100
    hidden: tuple = (256, 256)
    emb_dim: int = 32
    categorical_weight: float | None = None  # None -> 1 / n_categorical_features
    clip_denoised: float = DEFAULT_CLAMP

    def __post_init__(self):
        if self.steps < 0:
            raise DiffusionError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise DiffusionError("learning rate must be positive")
        if self.batch_size < 1:
            raise DiffusionError("batch size must be >= 1")
        if self.lr_schedule not in ("cosine", "constant"):
            raise DiffusionError(f"unknown lr schedule {self.lr_schedule!r}")


@dataclass
class DiffusionModel:
    schedule: NoiseSchedule
    denoiser: Denoiser
    schema_hash: str = ""
    clip_denoised: float = DEFAULT_CLAMP
    steps_run: int = 0
    final_loss: float = float("nan")
    loss_curve: list = field(default_factory=list)

    @property
    def numeric_dim(self):
        return self.denoiser.numeric_dim

    @property
    def cat_sizes(self):
        return self.denoiser.cat_sizes


def _split_encoded(data, numeric_dim, cat_sizes):
    x_num = np.ascontiguousarray(data[:, :numeric_dim])
    cat_idx = np.empty((data.shape[0], len(cat_sizes)), dtype=np.int64)
    off = numeric_dim
    for i, k in enumerate(cat_sizes):
        cat_idx[:, i] = np.argmax(data[:, off:off + k], axis=1)
        off += k
    return x_num, cat_idx


def _onehot(idx, k):
    out = np.zeros((idx.shape[0], k))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def _kl_and_grad(q_true, x_t_idx, logits, t, sched):
    """KL(q_true || posterior(softmax(logits))) per row (mean), and d/dlogits
    of the mean. The posterior mixing coefficients are constants wrt logits."""
    n, K = logits.shape
    m = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(m)
    s = e / e.sum(axis=1, keepdims=True)

    t = np.broadcast_to(np.asarray(t), (n,))
    alpha = sched.alphas[t - 1]
    abar_prev = sched.abar_prev(t)
    A = (1.0 - alpha)[:, None] / K * np.ones((n, K))
    A[np.arange(n), x_t_idx] += alpha

    first = t == 1
    u = A * (abar_prev[:, None] * s + (1.0 - abar_prev)[:, None] / K)
    z = u.sum(axis=1, keepdims=True)
    q_pred = u / z
    q_pred[first] = s[first]

    safe_pred = np.maximum(q_pred, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        lq = np.where(q_true > 0, np.log(np.maximum(q_true, 1e-300)), 0.0)
    kl_rows = np.sum(q_true * (lq - np.log(safe_pred)), axis=1)
    kl = float(np.mean(kl_rows))

    # d(mean KL)/du, then through u = A (abar' s + (1-abar')/K), then softmax
    du = (1.0 / z - q_true / np.maximum(u, 1e-300)) / n
    ds = abar_prev[:, None] * A * du
    ds[first] = (-q_true[first] / np.maximum(s[first], 1e-300)) / n
    dlogits = s * (ds - np.sum(ds * s, axis=1, keepdims=True))
    return kl, dlogits


def loss_and_grads_fixed(denoiser, sched, x0_num, cat_idx, t, eps, noisy_cat_idx,
                         cat_weight):
    """Loss and exact parameter gradients for fixed noise draws (the
    deterministic core of loss_and_grad; finite-difference checkable)."""
    n = x0_num.shape[0] if x0_num.size else noisy_cat_idx.shape[0]
    n_num = denoiser.numeric_dim
    x_t_num = forward_diffuse_numeric(x0_num, t, eps, sched) if n_num else x0_num

    parts = [x_t_num]
    for i, k in enumerate(denoiser.cat_sizes):
        parts.append(_onehot(noisy_cat_idx[:, i], k))
    parts.append(timestep_embedding(t, denoiser.emb_dim))
    x_in = np.concatenate(parts, axis=1)

    out, cache = denoiser.forward(x_in, want_cache=True)
    eps_hat, logits = denoiser.split_output(out)

    dout = np.zeros_like(out)
    loss = 0.0
    if n_num:
        diff = eps_hat - eps
        loss += float(np.mean(diff * diff))
        dout[:, :n_num] = 2.0 * diff / diff.size

    off = n_num
    for i, k in enumerate(denoiser.cat_sizes):
        q_true = categorical_posterior(
            noisy_cat_idx[:, i], _onehot(cat_idx[:, i], k), t, sched)
        kl, dlog = _kl_and_grad(q_true, noisy_cat_idx[:, i], logits[i], t, sched)
        loss += cat_weight * kl
        dout[:, off:off + k] = cat_weight * dlog
        off += k

    grads = denoiser.backward(cache, dout)
    return loss, grads


def loss_and_grad(model, batch, rng, cat_weight=None):
    """Draw per-row timesteps and noise, return (loss, parameter grads)."""
    data = batch.data if isinstance(batch, EncodedMatrix) else np.asarray(batch)
    if data.shape[0] == 0:
        raise DiffusionError("empty batch")
    den, sched = model.denoiser, model.schedule
    x0_num, cat_idx = _split_encoded(data, den.numeric_dim, den.cat_sizes)
    if cat_weight is None:
        cat_weight = 1.0 / len(den.cat_sizes) if den.cat_sizes else 0.0
    n = data.shape[0]
    t = rng.integers(1, sched.T + 1, size=n)
    eps = rng.standard_normal((n, den.numeric_dim))
    noisy = np.empty_like(cat_idx)
    for i, k in enumerate(den.cat_sizes):
        noisy[:, i] = forward_diffuse_categorical(cat_idx[:, i], t, rng, sched, k)
    return loss_and_grads_fixed(den, sched, x0_num, cat_idx, t, eps, noisy, cat_weight)


def train(encoded, cfg: TrainConfig, layout=None) -> DiffusionModel:
    """Adam over cfg.steps batches with cosine-decayed learning rate.
    Deterministic in cfg.seed (initialization, batches and noise)."""
    data = encoded.data if isinstance(encoded, EncodedMatrix) else np.asarray(encoded)
    layout = layout if layout is not None else getattr(encoded, "layout", None)
    if layout is None:
        raise DiffusionError("an encoder layout is required")
    n = data.shape[0]
    if n < cfg.batch_size and cfg.steps > 0:
        raise DiffusionError(f"{n} rows < batch size {cfg.batch_size}")

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    sched = make_cosine_schedule(cfg.T)
    den = Denoiser.init(layout.dim, layout.numeric_dim, layout.cat_sizes,
                        cfg.hidden, cfg.emb_dim, rng)
    x0_num, cat_idx = _split_encoded(data, den.numeric_dim, den.cat_sizes)
    cat_weight = cfg.categorical_weight
    if cat_weight is None:
        cat_weight = 1.0 / len(den.cat_sizes) if den.cat_sizes else 0.0

    m_state = [[np.zeros_like(W), np.zeros_like(b)] for W, b in den.params]
    v_state = [[np.zeros_like(W), np.zeros_like(b)] for W, b in den.params]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    curve = []
    for step in range(cfg.steps):
        if cfg.lr_schedule == "cosine":
            lr = cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / cfg.steps))
        else:
            lr = cfg.learning_rate
        rows = rng.integers(0, n, size=cfg.batch_size)
        t = rng.integers(1, sched.T + 1, size=cfg.batch_size)
        eps = rng.standard_normal((cfg.batch_size, den.numeric_dim))
        noisy = np.empty((cfg.batch_size, len(den.cat_sizes)), dtype=np.int64)
        for i, k in enumerate(den.cat_sizes):
            noisy[:, i] = forward_diffuse_categorical(cat_idx[rows, i], t, rng, sched, k)
        loss, grads = loss_and_grads_fixed(
            den, sched, x0_num[rows], cat_idx[rows], t, eps, noisy, cat_weight)
        if not np.isfinite(loss):
            raise TrainingDiverged(step, loss)
        curve.append(loss)
        bc1 = 1.0 - beta1 ** (step + 1)
        bc2 = 1.0 - beta2 ** (step + 1)
        for p, g, ms, vs in zip(den.params, grads, m_state, v_state):
            for j in range(2):
                ms[j] = beta1 * ms[j] + (1 - beta1) * g[j]
                vs[j] = beta2 * vs[j] + (1 - beta2) * g[j] * g[j]
                p[j] -= lr * (ms[j] / bc1) / (np.sqrt(vs[j] / bc2) + adam_eps)

    return DiffusionModel(
        schedule=sched, denoiser=den,
        schema_hash=layout.schema_hash() if hasattr(layout, "schema_hash") else "",
        clip_denoised=cfg.clip_denoised, steps_run=cfg.steps,
        final_loss=curve[-1] if curve else float("nan"), loss_curve=curve)


def sample(model: DiffusionModel, n, seed, layout=None) -> EncodedMatrix:
    """Ancestral sampling t = T..1; categorical blocks come back one-hot."""
    if n < 1:
        raise DiffusionError("n must be >= 1")
    rng = np.random.default_rng(seed)
    den, sched = model.denoiser, model.schedule
    n_num = den.numeric_dim
    x_num = rng.standard_normal((n, n_num))
    cats = [rng.integers(0, k, size=n) for k in den.cat_sizes]

    for t in range(sched.T, 0, -1):
        tv = np.full(n, t)
        eps_hat, logits = denoiser_forward(
            den, np.concatenate([x_num] + [_onehot(c, k) for c, k in zip(cats, den.cat_sizes)],
                                axis=1), tv)
        abar = sched.abar(t)
        abar_prev = float(sched.abar_prev(t))
        beta = sched.betas[t - 1]
        alpha = sched.alphas[t - 1]
        if n_num:
            x0_hat = (x_num - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)
            if model.clip_denoised:
                x0_hat = np.clip(x0_hat, -model.clip_denoised, model.clip_denoised)
            mean = (np.sqrt(abar_prev) * beta * x0_hat
                    + np.sqrt(alpha) * (1.0 - abar_prev) * x_num) / (1.0 - abar)
            if t > 1:
                var = beta * (1.0 - abar_prev) / (1.0 - abar)
                x_num = mean + np.sqrt(var) * rng.standard_normal((n, n_num))
            else:
                x_num = mean
        for i, k in enumerate(den.cat_sizes):
            probs = _softmax(logits[i])
            if t > 1:
                probs = categorical_posterior(cats[i], probs, t, sched)
            u = rng.random(n)
            cum = np.cumsum(probs, axis=1)
            cats[i] = np.minimum((cum < u[:, None]).sum(axis=1), k - 1)

    parts = [x_num] + [_onehot(c, k) for c, k in zip(cats, den.cat_sizes)]
    return EncodedMatrix(np.concatenate(parts, axis=1), layout)


def _softmax(logits):
    m = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(m)
    return e / e.sum(axis=1, keepdims=True)


# -- checkpoint format --------------------------------------------------------

def save_checkpoint(model: DiffusionModel, path):
    den = model.denoiser
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<64s", model.schema_hash.encode("ascii")))
        fh.write(struct.pack("<I", model.schedule.T))
        fh.write(model.schedule.betas.tobytes())
        fh.write(struct.pack("<II", den.numeric_dim, len(den.cat_sizes)))
        for k in den.cat_sizes:
            fh.write(struct.pack("<I", k))
        fh.write(struct.pack("<Id", den.emb_dim, model.clip_denoised))
        fh.write(struct.pack("<Id", model.steps_run, model.final_loss))
        fh.write(struct.pack("<I", len(den.params)))
        for W, b in den.params:
            fh.write(struct.pack("<II", W.shape[0], W.shape[1]))
        for W, b in den.params:
            fh.write(np.ascontiguousarray(W).tobytes())
            fh.write(np.ascontiguousarray(b).tobytes())


def load_checkpoint(path) -> DiffusionModel:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DiffusionError(f"{path}: bad magic")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != 1:
            raise DiffusionError(f"{path}: unsupported version {version}")
        (schema_hash,) = struct.unpack("<64s", fh.read(64))
        (T,) = struct.unpack("<I", fh.read(4))
        betas = np.frombuffer(fh.read(8 * T), dtype=np.float64)
        n_num, n_cat = struct.unpack("<II", fh.read(8))
        cat_sizes = [struct.unpack("<I", fh.read(4))[0] for _ in range(n_cat)]
        emb_dim, clip = struct.unpack("<Id", fh.read(12))
        steps_run, final_loss = struct.unpack("<Id", fh.read(12))
        (n_layers,) = struct.unpack("<I", fh.read(4))
        shapes = [struct.unpack("<II", fh.read(8)) for _ in range(n_layers)]
        params = []
        for fan_in, fan_out in shapes:
            W = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype=np.float64)
            b = np.frombuffer(fh.read(8 * fan_out), dtype=np.float64)
            params.append([W.reshape(fan_in, fan_out).copy(), b.copy()])
    hidden = tuple(s[1] for s in shapes[:-1])
    den = Denoiser(n_num, cat_sizes, hidden, emb_dim, params)
    model = DiffusionModel(
        schedule=NoiseSchedule(betas), denoiser=den,
        schema_hash=schema_hash.decode("ascii").rstrip("\x00"),
        clip_denoised=clip, steps_run=steps_run, final_loss=final_loss)
    return model
