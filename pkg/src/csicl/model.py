"""Transformer-based CSI sequence discriminator.

Architecture: a two-layer MLP encoder maps each preprocessed sample row to a
feature vector; a stack of residual blocks (multi-head self-attention followed
by a two-layer feed-forward) mixes information across the sequence; the
probability predictor reads the first feature vector of the final sequence and
softmaxes a linear map to class probabilities.

Every fully connected layer computes Norm(ReLU(W x + b)) where Norm
standardizes over the feature dimension (zero mean, unit variance, no affine
parameters).  All trainable parameters live in one flat vector; the structured
per-layer matrices are numpy views aliasing that storage, which keeps
whole-vector updates (gradient steps, norm computations, importance weights)
trivial.

The backward pass is hand-written reverse mode over the same graph and is
validated against central finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NORM_EPS = 1e-5
_MASK_FILL = -1e30


@dataclass(frozen=True)
class ModelConfig:
    input_width: int                      # L_P
    mlp_widths: tuple[int, int] = (128, 64)
    feature_width: int = 64               # L, transformer width
    n_heads: int = 8
    n_blocks: int = 2
    n_classes: int = 10
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.feature_width % self.n_heads != 0:
            raise ValueError("feature width must be divisible by the head count")
        if self.mlp_widths[-1] != self.feature_width:
            raise ValueError("last MLP width must equal the transformer width")
        if min(self.input_width, *self.mlp_widths, self.n_heads,
               self.n_blocks, self.n_classes) < 1:
            raise ValueError("all widths and counts must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    @property
    def head_width(self) -> int:
        return self.feature_width // self.n_heads


def _layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) of every parameter tensor in the flat vector."""
    lp, (w1, w2) = config.input_width, config.mlp_widths
    l, a, hd, c = config.feature_width, config.n_heads, config.head_width, config.n_classes
    spec = [("enc0_W", (w1, lp)), ("enc0_b", (w1,)),
            ("enc1_W", (w2, w1)), ("enc1_b", (w2,))]
    for b in range(config.n_blocks):
        spec += [(f"blk{b}_Wq", (a, hd, hd)), (f"blk{b}_Wk", (a, hd, hd)),
                 (f"blk{b}_Wv", (a, hd, hd)),
                 (f"blk{b}_ff0_W", (l, l)), (f"blk{b}_ff0_b", (l,)),
                 (f"blk{b}_ff1_W", (l, l)), (f"blk{b}_ff1_b", (l,))]
    spec += [("head_W", (c, l)), ("head_b", (c,))]
    return spec


def param_count(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in _layout(config))


def _views(config: ModelConfig, flat: np.ndarray) -> dict[str, np.ndarray]:
    views, offset = {}, 0
    for name, shape in _layout(config):
        size = int(np.prod(shape))
        views[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    assert offset == flat.size
    return views


@dataclass
class ModelParams:
    """Flat trainable vector theta with aliasing per-layer views."""

    config: ModelConfig
    flat: np.ndarray
    views: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.flat.size != param_count(self.config):
            raise ValueError("flat vector length does not match the configuration")
        if not self.views:
            self.views = _views(self.config, self.flat)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.views[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.flat.copy())

    @classmethod
    def from_flat(cls, config: ModelConfig, flat: np.ndarray) -> "ModelParams":
        return cls(config, flat)


def init_params(config: ModelConfig, seed, dtype=np.float64) -> ModelParams:
    """Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(param_count(config), dtype=dtype)
    params = ModelParams(config, flat)
    for name, shape in _layout(config):
        if name.endswith("_b"):
            continue
        fan_in, fan_out = shape[-1], shape[-2]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        params.views[name][...] = rng.uniform(-bound, bound, size=shape)
    return params


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def _norm_rows(x: np.ndarray):
    """Standardize over the last axis; returns (y, inv_std) for the backward pass."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + NORM_EPS)
    return xc * inv, inv


def _fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    a = x @ w.T
    a += b
    mask = a > 0
    a *= mask                                  # ReLU
    a -= a.mean(axis=-1, keepdims=True)
    var = np.mean(a * a, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + NORM_EPS)
    a *= inv
    return a, (x, mask, a, inv)


def _fc_backward(dy: np.ndarray, cache, w: np.ndarray, gw: np.ndarray, gb: np.ndarray):
    x, mask, y, inv = cache
    m1 = dy.mean(axis=-1, keepdims=True)
    m2 = np.mean(dy * y, axis=-1, keepdims=True)
    da = (dy - m1 - y * m2) * inv
    da *= mask
    flat_da = da.reshape(-1, da.shape[-1])
    flat_x = x.reshape(-1, x.shape[-1])
    gw += flat_da.T @ flat_x
    gb += flat_da.sum(axis=0)
    return da @ w


def softmax(y: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = y - y.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_rows_inplace(scores, lengths):
    """Row softmax (max-subtracted) over the first lengths[b] keys of every
    (head, b, query) row, in place; padded key columns become exact zeros
    (the additive fill underflows through exp)."""
    if lengths is not None:
        n_keys = scores.shape[-1]
        key_valid = np.arange(n_keys)[None, None, None, :] < lengths[None, :, None, None]
        scores += np.where(key_valid, scores.dtype.type(0), scores.dtype.type(_MASK_FILL))
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)


def _softmax_rows_backward_inplace(dprobs, probs, scale):
    """In place: dprobs <- probs * (dprobs - <dprobs, probs>) * scale.

    Rows of probs are exact zeros at padded key columns, which silently zeroes
    the corresponding gradient entries.
    """
    dot = np.einsum("abij,abij->abi", dprobs, probs)[..., None]
    dprobs -= dot
    dprobs *= probs
    dprobs *= scale


def _attention_core(q, k, v, lengths):
    """Scaled dot-product attention over head-major (A, B, N, head_width) tensors.

    lengths[b] is the number of valid (non-padded) key positions of batch row
    b; query rows beyond it produce padding that never reaches the loss.  The
    softmax runs in place on the score buffer.  Returns (output, attention
    probabilities).
    """
    hd = q.shape[-1]
    scores = q @ np.swapaxes(k, -1, -2)
    scores *= 1.0 / math.sqrt(hd)
    _softmax_rows_inplace(scores, lengths)
    return scores @ v, scores


def pad_batch(xs: list[np.ndarray], dtype=None):
    """Stack variable-length (N_i, L_P) inputs into (B, N_max, L_P) plus a validity mask."""
    n_max = max(x.shape[0] for x in xs)
    width = xs[0].shape[1]
    dtype = dtype or xs[0].dtype
    out = np.zeros((len(xs), n_max, width), dtype=dtype)
    mask = np.zeros((len(xs), n_max), dtype=bool)
    for i, x in enumerate(xs):
        out[i, :x.shape[0]] = x
        mask[i, :x.shape[0]] = True
    return out, mask


@dataclass
class ForwardCache:
    """Intermediate activations retained for the backward pass / inspection.

    Attention probabilities live in blocks[b]["probs"] with head-major layout
    (n_heads, batch, N, N).
    """

    x: np.ndarray
    mask: np.ndarray | None
    lengths: np.ndarray
    enc_caches: list
    drop_enc: np.ndarray | None
    blocks: list
    z_final: np.ndarray
    feat: np.ndarray
    logits: np.ndarray
    train_mode: bool


def _split_heads(z: np.ndarray, n_heads: int) -> np.ndarray:
    """(B, N, L) -> contiguous head-major (A, B, N, L/A)."""
    b, n, l = z.shape
    return np.ascontiguousarray(z.reshape(b, n, n_heads, l // n_heads).transpose(2, 0, 1, 3))


def _merge_heads(zh: np.ndarray) -> np.ndarray:
    a, b, n, hd = zh.shape
    return zh.transpose(1, 2, 0, 3).reshape(b, n, a * hd)


def _per_head(z4: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Batched per-head projection: (A, B, N, hd) @ (A, hd, hd) without copies."""
    a, b, n, hd = z4.shape
    return (z4.reshape(a, b * n, hd) @ w).reshape(a, b, n, hd)


def _head_weight_grad(z4: np.ndarray, d4: np.ndarray, out: np.ndarray):
    """out[a] += z4[a]^T d4[a], contracting over every (batch, position) pair."""
    a, b, n, hd = z4.shape
    z2 = z4.reshape(a, b * n, hd)
    d2 = d4.reshape(a, b * n, hd)
    out += np.swapaxes(z2, -1, -2) @ d2


def _dropout_mask(rng, shape, rate, dtype):
    keep = rng.random(shape, dtype=np.float32) >= rate
    return keep.astype(dtype) / (1.0 - rate)


def forward_batch(params: ModelParams, x: np.ndarray, mask: np.ndarray | None = None,
                  train_mode: bool = False, rng: np.random.Generator | None = None):
    """Run the discriminator on a padded batch; returns (logits (B, C), cache).

    Padded rows never leak into valid positions: attention masks invalid keys
    and the predictor reads only the first (always valid) row.
    """
    cfg = params.config
    if x.ndim != 3 or x.shape[-1] != cfg.input_width:
        raise ValueError(f"expected input (B, N, {cfg.input_width}), got {x.shape}")
    dropping = train_mode and cfg.dropout_rate > 0
    if dropping and rng is None:
        raise ValueError("training-mode forward with dropout needs an rng")
    dtype = params.flat.dtype
    x = x.astype(dtype, copy=False)
    lengths = None
    if mask is not None and not mask.all():
        lengths = mask.sum(axis=1).astype(np.int64)

    z, c0 = _fc_forward(x, params["enc0_W"], params["enc0_b"])
    z, c1 = _fc_forward(z, params["enc1_W"], params["enc1_b"])
    drop_enc = None
    if dropping:
        drop_enc = _dropout_mask(rng, z.shape, cfg.dropout_rate, dtype)
        z = z * drop_enc

    blocks = []
    for b in range(cfg.n_blocks):
        zh = _split_heads(z, cfg.n_heads)
        q = _per_head(zh, params[f"blk{b}_Wq"])
        k = _per_head(zh, params[f"blk{b}_Wk"])
        v = _per_head(zh, params[f"blk{b}_Wv"])
        attn_out_h, probs = _attention_core(q, k, v, lengths)
        attn_out = _merge_heads(attn_out_h)
        drop_attn = None
        if dropping:
            drop_attn = _dropout_mask(rng, attn_out.shape, cfg.dropout_rate, dtype)
            attn_out = attn_out * drop_attn
        z_mid = z + attn_out

        f1, cf0 = _fc_forward(z_mid, params[f"blk{b}_ff0_W"], params[f"blk{b}_ff0_b"])
        f2, cf1 = _fc_forward(f1, params[f"blk{b}_ff1_W"], params[f"blk{b}_ff1_b"])
        drop_ff = None
        if dropping:
            drop_ff = _dropout_mask(rng, f2.shape, cfg.dropout_rate, dtype)
            f2 = f2 * drop_ff
        z_next = z_mid + f2
        blocks.append({"z_in": z, "zh": zh, "q": q, "k": k, "v": v, "probs": probs,
                       "drop_attn": drop_attn, "z_mid": z_mid, "cf0": cf0, "cf1": cf1,
                       "drop_ff": drop_ff})
        z = z_next

    feat = z[:, 0, :]
    logits = feat @ params["head_W"].T + params["head_b"]
    cache = ForwardCache(x=x, mask=mask, lengths=lengths, enc_caches=[c0, c1],
                         drop_enc=drop_enc, blocks=blocks, z_final=z, feat=feat,
                         logits=logits, train_mode=train_mode)
    return logits, cache


def backward_batch(params: ModelParams, cache: ForwardCache,
                   dlogits: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient of sum(dlogits * logits) w.r.t. the flat vector."""
    cfg = params.config
    grad = np.zeros_like(params.flat)
    g = _views(cfg, grad)

    g["head_W"] += dlogits.T @ cache.feat
    g["head_b"] += dlogits.sum(axis=0)
    dz = np.zeros_like(cache.z_final)
    dz[:, 0, :] = dlogits @ params["head_W"]

    for b in reversed(range(cfg.n_blocks)):
        blk = cache.blocks[b]
        # z_next = z_mid + drop * FF(z_mid)
        dff = dz if blk["drop_ff"] is None else dz * blk["drop_ff"]
        df1 = _fc_backward(dff, blk["cf1"], params[f"blk{b}_ff1_W"],
                           g[f"blk{b}_ff1_W"], g[f"blk{b}_ff1_b"])
        dz_mid = dz + _fc_backward(df1, blk["cf0"], params[f"blk{b}_ff0_W"],
                                   g[f"blk{b}_ff0_W"], g[f"blk{b}_ff0_b"])
        # z_mid = z_in + drop * merge(attention)
        dattn = dz_mid if blk["drop_attn"] is None else dz_mid * blk["drop_attn"]
        dh = _split_heads(dattn, cfg.n_heads)
        probs, q, k, v, zh = blk["probs"], blk["q"], blk["k"], blk["v"], blk["zh"]
        dprobs = dh @ np.swapaxes(v, -1, -2)
        dv = np.swapaxes(probs, -1, -2) @ dh
        # softmax backward runs in place, turning dprobs into dscores
        _softmax_rows_backward_inplace(dprobs, probs, 1.0 / math.sqrt(cfg.head_width))
        dscores = dprobs
        dq = dscores @ k
        dk = np.swapaxes(dscores, -1, -2) @ q
        _head_weight_grad(zh, dq, g[f"blk{b}_Wq"])
        _head_weight_grad(zh, dk, g[f"blk{b}_Wk"])
        _head_weight_grad(zh, dv, g[f"blk{b}_Wv"])
        dzh = _per_head(dq, np.swapaxes(params[f"blk{b}_Wq"], -1, -2))
        dzh += _per_head(dk, np.swapaxes(params[f"blk{b}_Wk"], -1, -2))
        dzh += _per_head(dv, np.swapaxes(params[f"blk{b}_Wv"], -1, -2))
        dz = dz_mid + _merge_heads(dzh)

    if cache.drop_enc is not None:
        dz = dz * cache.drop_enc
    dz = _fc_backward(dz, cache.enc_caches[1], params["enc1_W"], g["enc1_W"], g["enc1_b"])
    _fc_backward(dz, cache.enc_caches[0], params["enc0_W"], g["enc0_W"], g["enc0_b"])
    return grad


# ---------------------------------------------------------------------------
# single-sequence conveniences
# ---------------------------------------------------------------------------

def forward(params: ModelParams, x: np.ndarray, train_mode: bool = False,
            rng: np.random.Generator | None = None):
    """Class probabilities for one preprocessed sequence; returns (p, cache)."""
    logits, cache = forward_batch(params, x[None], None, train_mode, rng)
    return softmax(logits[0]), cache


def forward_downscaled(params: ModelParams, x: np.ndarray, eta: float) -> np.ndarray:
    """Confidence-downscaled prediction softmax(logits / eta), evaluation mode."""
    if eta < 1.0:
        raise ValueError("the confidence downscaling factor must satisfy eta >= 1")
    logits, _ = forward_batch(params, x[None])
    return softmax(logits[0] / eta)


def extract_feature(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Encoder-only output: the feature vector the predictor consumes (eval mode)."""
    _, cache = forward_batch(params, x[None])
    return cache.feat[0]


def extract_features(params: ModelParams, xs: list[np.ndarray],
                     batch_size: int = 128) -> np.ndarray:
    out = np.empty((len(xs), params.config.feature_width), dtype=params.flat.dtype)
    for start in range(0, len(xs), batch_size):
        chunk = xs[start:start + batch_size]
        x, mask = pad_batch(chunk, dtype=params.flat.dtype)
        _, cache = forward_batch(params, x, mask)
        out[start:start + len(chunk)] = cache.feat
    return out


def predict_proba(params: ModelParams, xs: list[np.ndarray], eta: float = 1.0,
                  batch_size: int = 128) -> np.ndarray:
    if eta < 1.0:
        raise ValueError("the confidence downscaling factor must satisfy eta >= 1")
    out = np.empty((len(xs), params.config.n_classes), dtype=params.flat.dtype)
    for start in range(0, len(xs), batch_size):
        chunk = xs[start:start + batch_size]
        x, mask = pad_batch(chunk, dtype=params.flat.dtype)
        logits, _ = forward_batch(params, x, mask)
        out[start:start + len(chunk)] = softmax(logits / eta)
    return out
