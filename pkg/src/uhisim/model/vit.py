"""Tiny masked-autoencoder vision transformer with a pixel-wise regression head.

The network is small enough to train on a desktop CPU but exercises the full
mechanism: images are cut into square tokens, a random subset is hidden, an
encoder-decoder transformer reconstructs the hidden tokens (MSE over masked
tokens only), and for fine-tuning the encoder feeds a per-token regression
head that emits one value per pixel.

All forward passes are pure numpy; gradients come from the hand-written
reverse pass in this module (validated against central finite differences in
the test suite), not from an autodiff framework.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erf

from ..errors import NonFiniteLoss, ShapeMismatch
from ..raster import BandStack, Grid, REFLECTANCE_ROLES

LN_EPS = 1e-5
INIT_STD = 0.02

# channel order fed to the network
INPUT_ROLES = REFLECTANCE_ROLES + ("t2m",)


@dataclass(frozen=True)
class TinyViTConfig:
    """Architecture hyperparameters.

    token_size is the pixel side length of one transformer token; image_size
    is the native training tile side (smaller inputs reuse the top-left
    corner of the positional grid). Activation is fixed to GeLU.
    """

    image_size: int = 64
    token_size: int = 8
    embed_dim: int = 128
    num_heads: int = 4
    encoder_depth: int = 2
    decoder_depth: int = 1
    mlp_ratio: float = 2.0
    in_channels: int = 7
    mask_ratio: float = 0.75

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")
        if not (0.0 < self.mask_ratio < 1.0):
            raise ValueError("mask_ratio must be in (0, 1)")
        if self.image_size % self.token_size != 0:
            raise ValueError("token grid must divide the image exactly")

    @property
    def grid_side(self) -> int:
        return self.image_size // self.token_size

    @property
    def num_tokens(self) -> int:
        return self.grid_side**2

    @property
    def token_dim(self) -> int:
        return self.in_channels * self.token_size**2

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))

    def to_json(self) -> dict:
        return {
            "image_size": self.image_size,
            "token_size": self.token_size,
            "embed_dim": self.embed_dim,
            "num_heads": self.num_heads,
            "encoder_depth": self.encoder_depth,
            "decoder_depth": self.decoder_depth,
            "mlp_ratio": self.mlp_ratio,
            "in_channels": self.in_channels,
            "mask_ratio": self.mask_ratio,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TinyViTConfig":
        return cls(**doc)


@dataclass
class NormStats:
    """Per-channel input standardization and label scaling, from the train split."""

    input_mean: np.ndarray = field(default_factory=lambda: np.zeros(7))
    input_std: np.ndarray = field(default_factory=lambda: np.ones(7))
    label_mean: float = 0.0
    label_std: float = 1.0

    @classmethod
    def identity(cls, in_channels: int) -> "NormStats":
        return cls(np.zeros(in_channels), np.ones(in_channels), 0.0, 1.0)

    @classmethod
    def fit(cls, images: np.ndarray, labels: np.ndarray | None = None,
            label_weights: np.ndarray | None = None) -> "NormStats":
        """images (B, C, H, W); labels (B, H, W) with optional validity weights."""
        mean = images.mean(axis=(0, 2, 3))
        std = images.std(axis=(0, 2, 3))
        std = np.where(std < 1e-6, 1.0, std)
        lmean, lstd = 0.0, 1.0
        if labels is not None:
            if label_weights is None:
                flat = labels.ravel()
            else:
                flat = labels[label_weights > 0]
            lmean = float(flat.mean())
            lstd = float(flat.std())
            if lstd < 1e-6:
                lstd = 1.0
        return cls(mean, std, lmean, lstd)

    def to_json(self) -> dict:
        return {
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "label_mean": self.label_mean,
            "label_std": self.label_std,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NormStats":
        return cls(
            np.asarray(doc["input_mean"], dtype=np.float64),
            np.asarray(doc["input_std"], dtype=np.float64),
            float(doc["label_mean"]),
            float(doc["label_std"]),
        )


@dataclass
class ModelParams:
    """Named parameter tensors plus everything needed to run them."""

    config: TinyViTConfig
    tensors: dict[str, np.ndarray]
    norm: NormStats
    seed: int = 0
    epoch: int = 0

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            {k: v.copy() for k, v in self.tensors.items()},
            replace(self.norm),
            self.seed,
            self.epoch,
        )

    def finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())


def _trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal draw truncated to two standard deviations (resampled, not clipped)."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def _block_names(prefix: str, depth: int):
    for i in range(depth):
        yield f"{prefix}{i}"


def init_params(config: TinyViTConfig, seed: int = 0) -> ModelParams:
    """Seeded initialization: truncated normal weights, zero biases, unit LN gains."""
    rng = np.random.default_rng(seed)
    d = config.embed_dim
    t = {}

    def block(name: str):
        t[f"{name}.ln1.g"] = np.ones(d)
        t[f"{name}.ln1.b"] = np.zeros(d)
        for w in ("wq", "wk", "wv", "wo"):
            t[f"{name}.attn.{w}"] = _trunc_normal(rng, (d, d))
        for b in ("bq", "bk", "bv", "bo"):
            t[f"{name}.attn.{b}"] = np.zeros(d)
        t[f"{name}.ln2.g"] = np.ones(d)
        t[f"{name}.ln2.b"] = np.zeros(d)
        t[f"{name}.mlp.w1"] = _trunc_normal(rng, (d, config.mlp_hidden))
        t[f"{name}.mlp.b1"] = np.zeros(config.mlp_hidden)
        t[f"{name}.mlp.w2"] = _trunc_normal(rng, (config.mlp_hidden, d))
        t[f"{name}.mlp.b2"] = np.zeros(d)

    t["embed.w"] = _trunc_normal(rng, (config.token_dim, d))
    t["embed.b"] = np.zeros(d)
    t["pos_enc"] = _trunc_normal(rng, (config.num_tokens, d))
    for name in _block_names("enc", config.encoder_depth):
        block(name)
    t["enc_ln.g"] = np.ones(d)
    t["enc_ln.b"] = np.zeros(d)

    t["dec_embed.w"] = _trunc_normal(rng, (d, d))
    t["dec_embed.b"] = np.zeros(d)
    t["mask_token"] = _trunc_normal(rng, (d,))
    t["pos_dec"] = _trunc_normal(rng, (config.num_tokens, d))
    for name in _block_names("dec", config.decoder_depth):
        block(name)
    t["dec_ln.g"] = np.ones(d)
    t["dec_ln.b"] = np.zeros(d)
    t["dec_head.w"] = _trunc_normal(rng, (d, config.token_dim))
    t["dec_head.b"] = np.zeros(config.token_dim)

    t["reg_head.w"] = _trunc_normal(rng, (d, config.token_size**2))
    t["reg_head.b"] = np.zeros(config.token_size**2)

    return ModelParams(config, t, NormStats.identity(config.in_channels), seed=seed)


def sample_mask(rng: np.random.Generator, num_tokens: int, mask_ratio: float) -> np.ndarray:
    """Sorted token indices hidden during pretraining; |mask| = round(ratio * N)."""
    n_mask = int(round(mask_ratio * num_tokens))
    return np.sort(rng.permutation(num_tokens)[:n_mask])


# ---------------------------------------------------------------------------
# primitive layers: each forward returns (out, cache); backward consumes the
# cache, returns dx, and writes parameter grads through `add`.


def _add(grads: dict, name: str, g: np.ndarray):
    if name in grads:
        grads[name] += g
    else:
        grads[name] = g.copy()


def _linear_fwd(x, w, b):
    return x @ w + b, x


def _linear_bwd(dy, x, w, grads, wname, bname):
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    _add(grads, wname, x2.T @ dy2)
    _add(grads, bname, dy2.sum(axis=0))
    return dy @ w.T


def _layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_bwd(dy, cache, g, grads, gname, bname):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    _add(grads, gname, (dy * xhat).sum(axis=axes))
    _add(grads, bname, dy.sum(axis=axes))
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return inv * (dxhat - m1 - xhat * m2)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2)), x


def _gelu_bwd(dy, x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return dy * (cdf + x * pdf)


def _split_heads(x, h):
    b, n, d = x.shape
    return x.reshape(b, n, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def _attention_fwd(x, t, name, h):
    q, _ = _linear_fwd(x, t[f"{name}.wq"], t[f"{name}.bq"])
    k, _ = _linear_fwd(x, t[f"{name}.wk"], t[f"{name}.bk"])
    v, _ = _linear_fwd(x, t[f"{name}.wv"], t[f"{name}.bv"])
    qh, kh, vh = _split_heads(q, h), _split_heads(k, h), _split_heads(v, h)
    scale = 1.0 / np.sqrt(qh.shape[-1])
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    expd = np.exp(scores)
    attn = expd / expd.sum(axis=-1, keepdims=True)
    oh = attn @ vh
    o = _merge_heads(oh)
    y, _ = _linear_fwd(o, t[f"{name}.wo"], t[f"{name}.bo"])
    return y, (x, qh, kh, vh, attn, o, scale)


def _attention_bwd(dy, cache, t, name, h, grads):
    x, qh, kh, vh, attn, o, scale = cache
    do = _linear_bwd(dy, o, t[f"{name}.wo"], grads, f"{name}.wo", f"{name}.bo")
    doh = _split_heads(do, h)
    dattn = doh @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ doh
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores *= scale
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh
    dq, dk, dv = _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh)
    dx = _linear_bwd(dq, x, t[f"{name}.wq"], grads, f"{name}.wq", f"{name}.bq")
    dx += _linear_bwd(dk, x, t[f"{name}.wk"], grads, f"{name}.wk", f"{name}.bk")
    dx += _linear_bwd(dv, x, t[f"{name}.wv"], grads, f"{name}.wv", f"{name}.bv")
    return dx


def _block_fwd(x, t, name, h):
    ln1, c_ln1 = _layernorm_fwd(x, t[f"{name}.ln1.g"], t[f"{name}.ln1.b"])
    att, c_att = _attention_fwd(ln1, t, f"{name}.attn", h)
    x1 = x + att
    ln2, c_ln2 = _layernorm_fwd(x1, t[f"{name}.ln2.g"], t[f"{name}.ln2.b"])
    h1, c_h1 = _linear_fwd(ln2, t[f"{name}.mlp.w1"], t[f"{name}.mlp.b1"])
    act, c_act = _gelu_fwd(h1)
    mlp, c_mlp = _linear_fwd(act, t[f"{name}.mlp.w2"], t[f"{name}.mlp.b2"])
    return x1 + mlp, (c_ln1, c_att, c_ln2, c_h1, c_act, c_mlp)


def _block_bwd(dy, cache, t, name, h, grads):
    c_ln1, c_att, c_ln2, c_h1, c_act, c_mlp = cache
    dact = _linear_bwd(dy, c_mlp, t[f"{name}.mlp.w2"], grads,
                       f"{name}.mlp.w2", f"{name}.mlp.b2")
    dh1 = _gelu_bwd(dact, c_act)
    dln2 = _linear_bwd(dh1, c_h1, t[f"{name}.mlp.w1"], grads,
                       f"{name}.mlp.w1", f"{name}.mlp.b1")
    dx1 = dy + _layernorm_bwd(dln2, c_ln2, t[f"{name}.ln2.g"], grads,
                              f"{name}.ln2.g", f"{name}.ln2.b")
    dln1 = _attention_bwd(dx1, c_att, t, f"{name}.attn", h, grads)
    dx = dx1 + _layernorm_bwd(dln1, c_ln1, t[f"{name}.ln1.g"], grads,
                              f"{name}.ln1.g", f"{name}.ln1.b")
    return dx


def _patchify(images: np.ndarray, token: int):
    b, c, height, width = images.shape
    gh, gw = height // token, width // token
    x = images.reshape(b, c, gh, token, gw, token)
    x = x.transpose(0, 2, 4, 1, 3, 5)
    return np.ascontiguousarray(x.reshape(b, gh * gw, c * token * token)), (gh, gw)


def _unpatchify(tokens: np.ndarray, token: int, gh: int, gw: int, channels: int):
    b = tokens.shape[0]
    x = tokens.reshape(b, gh, gw, channels, token, token)
    x = x.transpose(0, 3, 1, 4, 2, 5)
    return np.ascontiguousarray(x.reshape(b, channels, gh * token, gw * token))


def _pos_indices(config: TinyViTConfig, gh: int, gw: int) -> np.ndarray:
    side = config.grid_side
    if gh > side or gw > side:
        raise ShapeMismatch(
            f"input token grid {gh}x{gw} exceeds configured {side}x{side}"
        )
    return (np.arange(gh)[:, None] * side + np.arange(gw)[None, :]).ravel()


def _check_images(config: TinyViTConfig, images: np.ndarray):
    if images.ndim != 4:
        raise ShapeMismatch(f"expected (B, C, H, W), got {images.shape}")
    b, c, height, width = images.shape
    if c != config.in_channels:
        raise ShapeMismatch(f"expected {config.in_channels} channels, got {c}")
    if height % config.token_size or width % config.token_size:
        raise ShapeMismatch(
            f"dims {height}x{width} not divisible by token size {config.token_size}"
        )


# ---------------------------------------------------------------------------
# whole-model passes


def _encoder_fwd(t, config, tokens, pos_idx, keep_idx=None):
    x = tokens @ t["embed.w"] + t["embed.b"]
    x = x + t["pos_enc"][pos_idx]
    if keep_idx is not None:
        x = x[:, keep_idx]
    caches = []
    for name in _block_names("enc", config.encoder_depth):
        x, cache = _block_fwd(x, t, name, config.num_heads)
        caches.append(cache)
    z, c_ln = _layernorm_fwd(x, t["enc_ln.g"], t["enc_ln.b"])
    return z, (caches, c_ln)


def _encoder_bwd(dz, enc_cache, t, config, tokens, pos_idx, keep_idx, grads):
    caches, c_ln = enc_cache
    dx = _layernorm_bwd(dz, c_ln, t["enc_ln.g"], grads, "enc_ln.g", "enc_ln.b")
    for name, cache in zip(
        reversed(list(_block_names("enc", config.encoder_depth))), reversed(caches)
    ):
        dx = _block_bwd(dx, cache, t, name, config.num_heads, grads)
    if keep_idx is not None:
        full = np.zeros((dx.shape[0], len(pos_idx), dx.shape[2]))
        full[:, keep_idx] = dx
        dx = full
    pos_grad = np.zeros_like(t["pos_enc"])
    np.add.at(pos_grad, pos_idx, dx.sum(axis=0))
    _add(grads, "pos_enc", pos_grad)
    _linear_bwd(dx, tokens, t["embed.w"], grads, "embed.w", "embed.b")
    return None


def forward_mae(params: ModelParams, images: np.ndarray, mask_idx: np.ndarray,
                _cache_out: list | None = None,
                targets: np.ndarray | None = None):
    """Masked-autoencoding pass over a normalized batch (B, C, H, W).

    Returns (reconstructed_tokens, loss). The loss is MSE over masked-token
    pixels only; unmasked tokens never touch it. Reconstruction targets
    default to the input batch itself; an explicit `targets` batch of the
    same shape is read ONLY at masked-token pixels.
    """
    config, t = params.config, params.tensors
    _check_images(config, images)
    tokens, (gh, gw) = _patchify(images, config.token_size)
    if targets is None:
        target_tokens = tokens
    else:
        if targets.shape != images.shape:
            raise ShapeMismatch("targets must match the input batch shape")
        target_tokens, _ = _patchify(targets, config.token_size)
    n = gh * gw
    mask_idx = np.asarray(mask_idx, dtype=int)
    if mask_idx.size and (mask_idx.min() < 0 or mask_idx.max() >= n):
        raise ShapeMismatch("mask indices out of token range")
    keep_idx = np.setdiff1d(np.arange(n), mask_idx)
    pos_idx = _pos_indices(config, gh, gw)

    z, enc_cache = _encoder_fwd(t, config, tokens, pos_idx, keep_idx)
    dec_in, c_dec_embed = _linear_fwd(z, t["dec_embed.w"], t["dec_embed.b"])

    b = images.shape[0]
    full = np.empty((b, n, config.embed_dim))
    full[:, mask_idx] = t["mask_token"]
    full[:, keep_idx] = dec_in
    full = full + t["pos_dec"][pos_idx]

    x = full
    dec_caches = []
    for name in _block_names("dec", config.decoder_depth):
        x, cache = _block_fwd(x, t, name, config.num_heads)
        dec_caches.append(cache)
    y, c_dln = _layernorm_fwd(x, t["dec_ln.g"], t["dec_ln.b"])
    recon, c_head = _linear_fwd(y, t["dec_head.w"], t["dec_head.b"])

    diff = recon[:, mask_idx] - target_tokens[:, mask_idx]
    denom = max(diff.size, 1)
    loss = float((diff * diff).sum() / denom)

    if _cache_out is not None:
        _cache_out.append(
            (tokens, pos_idx, keep_idx, mask_idx, enc_cache, c_dec_embed,
             dec_caches, c_dln, c_head, diff, denom, (gh, gw))
        )
    return recon, loss


def _backward_mae(params: ModelParams, cache, grads):
    config, t = params.config, params.tensors
    (tokens, pos_idx, keep_idx, mask_idx, enc_cache, c_dec_embed,
     dec_caches, c_dln, c_head, diff, denom, _) = cache

    drecon = np.zeros((tokens.shape[0], tokens.shape[1], config.token_dim))
    drecon[:, mask_idx] = 2.0 * diff / denom

    dy = _linear_bwd(drecon, c_head, t["dec_head.w"], grads, "dec_head.w", "dec_head.b")
    dx = _layernorm_bwd(dy, c_dln, t["dec_ln.g"], grads, "dec_ln.g", "dec_ln.b")
    for name, c in zip(
        reversed(list(_block_names("dec", config.decoder_depth))), reversed(dec_caches)
    ):
        dx = _block_bwd(dx, c, t, name, config.num_heads, grads)

    pos_grad = np.zeros_like(t["pos_dec"])
    np.add.at(pos_grad, pos_idx, dx.sum(axis=0))
    _add(grads, "pos_dec", pos_grad)
    _add(grads, "mask_token", dx[:, mask_idx].sum(axis=(0, 1)))
    ddec_in = dx[:, keep_idx]
    dz = _linear_bwd(ddec_in, c_dec_embed, t["dec_embed.w"], grads,
                     "dec_embed.w", "dec_embed.b")
    _encoder_bwd(dz, enc_cache, t, config, tokens, pos_idx, keep_idx, grads)


def _forward_regress_tokens(params: ModelParams, images_norm: np.ndarray,
                            _cache_out: list | None = None):
    """Regression pass on normalized images; returns standardized (B, H, W)."""
    config, t = params.config, params.tensors
    _check_images(config, images_norm)
    tokens, (gh, gw) = _patchify(images_norm, config.token_size)
    pos_idx = _pos_indices(config, gh, gw)
    z, enc_cache = _encoder_fwd(t, config, tokens, pos_idx, None)
    pred_tok, c_head = _linear_fwd(z, t["reg_head.w"], t["reg_head.b"])
    pred = _unpatchify(pred_tok, config.token_size, gh, gw, 1)[:, 0]
    if _cache_out is not None:
        _cache_out.append((tokens, pos_idx, enc_cache, c_head, (gh, gw)))
    return pred


def _backward_regress(params: ModelParams, dpred, cache, grads):
    config, t = params.config, params.tensors
    tokens, pos_idx, enc_cache, c_head, (gh, gw) = cache
    dpred_tok, _ = _patchify(dpred[:, None], config.token_size)
    dz = _linear_bwd(dpred_tok, c_head, t["reg_head.w"], grads,
                     "reg_head.w", "reg_head.b")
    _encoder_bwd(dz, enc_cache, t, config, tokens, pos_idx, None, grads)


def normalize_images(params: ModelParams, images: np.ndarray) -> np.ndarray:
    n = params.norm
    return (images - n.input_mean[None, :, None, None]) / n.input_std[None, :, None, None]


def predict_celsius(params: ModelParams, images: np.ndarray) -> np.ndarray:
    """Raw channel batch (B, C, H, W) -> LST prediction (B, H, W) in celsius."""
    x = normalize_images(params, images)
    pred = _forward_regress_tokens(params, x)
    return pred * params.norm.label_std + params.norm.label_mean


def stack_to_channels(stack: BandStack) -> tuple[np.ndarray, np.ndarray]:
    """Extract the model input channels from a stack.

    Returns (channels (C, H, W), valid mask (H, W)); valid is False where any
    input band is nodata.
    """
    chans = []
    valid = np.ones((stack.height, stack.width), dtype=bool)
    for role in INPUT_ROLES:
        g = stack.band(role)
        chans.append(g.values)
        valid &= ~g.nodata_mask
    return np.stack(chans), valid


def forward_regress(params: ModelParams, sample_patch: BandStack) -> Grid:
    """Pixel-wise LST prediction over one input stack, as a celsius grid."""
    channels, valid = stack_to_channels(sample_patch)
    pred = predict_celsius(params, channels[None])[0]
    pred = np.where(valid, pred, 0.0)
    return Grid(pred, sample_patch.georef, "celsius", ~valid)


def regression_loss(params: ModelParams, images: np.ndarray, labels: np.ndarray,
                    weights: np.ndarray | None = None,
                    _cache_out: list | None = None) -> float:
    """Weighted MSE on standardized labels; weights zero out invalid pixels."""
    x = normalize_images(params, images)
    pred = _forward_regress_tokens(params, x, _cache_out)
    n = params.norm
    y = (labels - n.label_mean) / n.label_std
    if weights is None:
        weights = np.ones_like(y)
    wsum = float(weights.sum())
    if wsum <= 0:
        raise NonFiniteLoss("no valid label pixels in batch")
    diff = pred - y
    loss = float((weights * diff * diff).sum() / wsum)
    if _cache_out is not None:
        _cache_out.append((diff, weights, wsum))
    return loss


def backward(params: ModelParams, batch, objective: str) -> tuple[float, dict]:
    """Loss and analytic gradients for one batch.

    objective "mae": batch = (images_norm, mask_idx[, targets]).
    objective "regress": batch = (images_raw, labels_celsius[, weights]).
    Gradients are returned for every parameter tensor; tensors with no path
    to the loss get exact zeros.
    """
    grads: dict[str, np.ndarray] = {}
    if objective == "mae":
        images, mask_idx = batch[0], batch[1]
        targets = batch[2] if len(batch) > 2 else None
        cache_out: list = []
        _, loss = forward_mae(params, images, mask_idx, cache_out, targets)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"mae loss = {loss}")
        _backward_mae(params, cache_out[0], grads)
    elif objective == "regress":
        images, labels = batch[0], batch[1]
        weights = batch[2] if len(batch) > 2 else None
        cache_out = []
        loss = regression_loss(params, images, labels, weights, cache_out)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"regression loss = {loss}")
        fwd_cache, (diff, w, wsum) = cache_out
        dpred = 2.0 * w * diff / wsum
        _backward_regress(params, dpred, fwd_cache, grads)
    else:
        raise ValueError(f"unknown objective {objective!r}")

    for name, tensor in params.tensors.items():
        if name not in grads:
            grads[name] = np.zeros_like(tensor)
        elif not np.all(np.isfinite(grads[name])):
            raise NonFiniteLoss(f"non-finite gradient in {name}")
    return loss, grads
