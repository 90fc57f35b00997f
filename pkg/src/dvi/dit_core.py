"""Toy DiT backbone with value-biased ID cross-attention.

Every block is ``self-attention -> ID cross-attention -> MLP``, each a
pre-normed residual branch. ID cross-attention computes

    softmax(Q K^T / sqrt(d)) (V + alpha_l * f)

where K and V come from the (visually modulated) fused ID tokens and the
bias tokens ``f`` from the raw ID embedding, both mapped to ``d_model`` by one
shared frozen projection. All weights are frozen seeded Gaussians scaled by
``1/sqrt(fan_in)``; arithmetic is float64, storage float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .modulation import FusedEmbedding
from .tensors_io import LatentTensor, SeededGenerator, TokenMatrix

BIAS_SOURCES = ("raw", "fused")


@dataclass(frozen=True)
class DitConfig:
    C: int = 16
    d_model: int = 64
    heads: int = 4
    layers: int = 4
    patch: int = 2
    D: int = 2048
    weight_seed: int = 0
    mlp_ratio: int = 2
    bias_source: str = "raw"
    zero_weights: bool = False  # test hook: every weight is 0

    def __post_init__(self):
        if min(self.C, self.d_model, self.heads, self.layers, self.patch, self.D, self.mlp_ratio) < 1:
            raise ValueError(f"all DiT dims must be positive: {self}")
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.bias_source not in BIAS_SOURCES:
            raise ValueError(f"bias_source must be one of {BIAS_SOURCES}, got {self.bias_source!r}")


@dataclass(frozen=True)
class LayerWeights:
    sa_q: np.ndarray
    sa_k: np.ndarray
    sa_v: np.ndarray
    sa_o: np.ndarray
    ca_q: np.ndarray
    ca_k: np.ndarray
    ca_v: np.ndarray
    mlp_in: np.ndarray
    mlp_out: np.ndarray


@dataclass(frozen=True)
class DitWeights:
    config: DitConfig
    patch_in: np.ndarray  # (C*p*p, d_model); its transpose unpatchifies
    id_proj: np.ndarray  # (D, d_model)
    layers: tuple[LayerWeights, ...] = field(repr=False)


def _gauss(rng: np.random.Generator, fan_in: int, fan_out: int, zero: bool) -> np.ndarray:
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        w = rng.standard_normal(size=(fan_in, fan_out)) / math.sqrt(fan_in)
    w = w.astype(np.float32).astype(np.float64)
    w.flags.writeable = False
    return w


def init_weights(cfg: DitConfig) -> DitWeights:
    gen = SeededGenerator(cfg.weight_seed)
    d, z = cfg.d_model, cfg.zero_weights
    patch_dim = cfg.C * cfg.patch * cfg.patch
    layers = []
    for l in range(cfg.layers):
        rng = gen.rng(2, l)
        sa = [_gauss(rng, d, d, z) for _ in range(4)]
        ca = [_gauss(rng, d, d, z) for _ in range(3)]
        hidden = cfg.mlp_ratio * d
        layers.append(LayerWeights(*sa, *ca, _gauss(rng, d, hidden, z), _gauss(rng, hidden, d, z)))
    return DitWeights(
        config=cfg,
        patch_in=_gauss(gen.rng(0), patch_dim, d, z),
        id_proj=_gauss(gen.rng(1), cfg.D, d, z),
        layers=tuple(layers),
    )


# -- tokenisation ----------------------------------------------------------------


def patch_vectors(z: np.ndarray, p: int) -> np.ndarray:
    """Raw ``(h/p * w/p, C*p*p)`` patch vectors in row-major patch order."""
    C, h, w = z.shape
    if h % p or w % p:
        raise ValueError(f"latent {h}x{w} is not divisible by patch size {p}")
    x = z.reshape(C, h // p, p, w // p, p).transpose(1, 3, 0, 2, 4)
    return x.reshape((h // p) * (w // p), C * p * p)


def patchify(z: LatentTensor, p: int, proj: np.ndarray) -> TokenMatrix:
    vecs = patch_vectors(z.data.astype(np.float64), p)
    if proj.shape[0] != vecs.shape[1]:
        raise ValueError(f"projection expects patch dim {proj.shape[0]}, got {vecs.shape[1]}")
    return TokenMatrix(vecs @ proj)


def unpatchify(tokens: np.ndarray, proj: np.ndarray, C: int, h: int, w: int, p: int) -> np.ndarray:
    """Inverse tokenisation through ``proj.T``; restores the C x h x w layout."""
    vecs = np.asarray(tokens, dtype=np.float64) @ np.asarray(proj, dtype=np.float64).T
    x = vecs.reshape(h // p, w // p, C, p, p).transpose(2, 0, 3, 1, 4)
    return x.reshape(C, h, w)


def timestep_embedding(t: float, dim: int, max_period: float = 10000.0) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / max(half, 1))
    args = 1000.0 * t * freqs
    emb = np.concatenate([np.cos(args), np.sin(args)])
    return np.pad(emb, (0, dim - emb.size))


# -- attention -------------------------------------------------------------------


@dataclass(frozen=True)
class AttentionIO:
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    f: np.ndarray | None = None
    alpha: float = 0.0

    def __post_init__(self):
        q, k, v = (np.asarray(a, dtype=np.float64) for a in (self.Q, self.K, self.V))
        if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
            raise ValueError("Q, K, V must be 2-D")
        if q.shape[1] != k.shape[1]:
            raise ValueError(f"Q and K widths differ: {q.shape[1]} vs {k.shape[1]}")
        if k.shape[0] != v.shape[0]:
            raise ValueError(f"K has {k.shape[0]} tokens but V has {v.shape[0]}")
        arrays = [q, k, v]
        f = self.f
        if f is not None:
            f = np.asarray(f, dtype=np.float64)
            if f.shape != v.shape:
                raise ValueError(f"bias tokens must match V's shape {v.shape}, got {f.shape}")
            arrays.append(f)
        if not all(np.all(np.isfinite(a)) for a in arrays) or not math.isfinite(self.alpha):
            raise ValueError("non-finite attention inputs")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "K", k)
        object.__setattr__(self, "V", v)
        object.__setattr__(self, "f", f)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def attention_weights(Q: np.ndarray, K: np.ndarray) -> np.ndarray:
    return softmax_rows(Q @ K.T / math.sqrt(Q.shape[-1]))


def attend(io: AttentionIO) -> np.ndarray:
    A = attention_weights(io.Q, io.K)
    values = io.V if io.f is None or io.alpha == 0 else io.V + io.alpha * io.f
    return A @ values


def _multihead(Q, K, V, heads: int, f=None, alpha: float = 0.0) -> np.ndarray:
    hd = Q.shape[1] // heads
    out = []
    for h in range(heads):
        s = slice(h * hd, (h + 1) * hd)
        out.append(attend(AttentionIO(Q[:, s], K[:, s], V[:, s], None if f is None else f[:, s], alpha)))
    return np.concatenate(out, axis=1)


def _layer_norm(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def _id_tokens(x, D: int) -> np.ndarray | None:
    if x is None:
        return None
    if isinstance(x, FusedEmbedding):
        arr = x.values
    elif isinstance(x, TokenMatrix):
        arr = x.data.astype(np.float64)
    else:
        arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != D:
        raise ValueError(f"ID tokens must be N x {D}, got shape {arr.shape}")
    return arr


def _id_cross_delta(q_src, kv_tokens, bias_tokens, alpha_l, layer: LayerWeights, id_proj, heads):
    if kv_tokens is None:
        kv = np.zeros((1, id_proj.shape[1]))
        bias = np.zeros_like(kv)
    else:
        if bias_tokens is not None and bias_tokens.shape[0] != kv_tokens.shape[0]:
            raise ValueError(
                f"bias tokens ({bias_tokens.shape[0]}) and key/value tokens ({kv_tokens.shape[0]}) differ"
            )
        kv = kv_tokens @ id_proj
        bias = None if bias_tokens is None else bias_tokens @ id_proj
    return _multihead(q_src @ layer.ca_q, kv @ layer.ca_k, kv @ layer.ca_v, heads, bias, alpha_l)


def id_cross_attention(
    image_tokens,
    f_fused,
    f_id_raw,
    alpha_l: float,
    weights: DitWeights,
    layer: int = 0,
) -> np.ndarray:
    """Residual ID cross-attention for one layer; returns float64 tokens.

    ``f_fused=None`` stands for the unconditional branch: one all-zero key/value
    token and no bias, so the branch adds nothing.
    """
    cfg = weights.config
    x = image_tokens.data if isinstance(image_tokens, TokenMatrix) else image_tokens
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.d_model:
        raise ValueError(f"image tokens must be n x {cfg.d_model}, got {x.shape}")
    kv = _id_tokens(f_fused, cfg.D)
    bias = _id_tokens(f_id_raw, cfg.D) if kv is not None else None
    delta = _id_cross_delta(x, kv, bias, alpha_l, weights.layers[layer], weights.id_proj, cfg.heads)
    return x + delta


def dit_forward(
    z: LatentTensor,
    f_fused,
    f_id_raw,
    t: float,
    weights: DitWeights,
    alphas: Sequence[float],
    prompt: np.ndarray | None = None,
) -> LatentTensor:
    """Predicted velocity with the shape of ``z``.

    ``prompt`` is an optional ``n_tokens x d_model`` array added to the image
    tokens. With ``bias_source="fused"`` the value bias uses ``f_fused``
    instead of ``f_id_raw``.
    """
    cfg = weights.config
    if z.channels != cfg.C:
        raise ValueError(f"latent has {z.channels} channels, config expects {cfg.C}")
    if len(alphas) != cfg.layers:
        raise ValueError(f"got {len(alphas)} alphas for {cfg.layers} layers")
    C, h, w = z.shape
    x = patch_vectors(z.data.astype(np.float64), cfg.patch) @ weights.patch_in
    x = x + timestep_embedding(t, cfg.d_model)
    if prompt is not None:
        if prompt.shape != x.shape:
            raise ValueError(f"prompt tokens must have shape {x.shape}, got {prompt.shape}")
        x = x + prompt

    kv = _id_tokens(f_fused, cfg.D)
    if kv is None:
        bias = None
    elif cfg.bias_source == "fused":
        bias = kv
    else:
        bias = _id_tokens(f_id_raw, cfg.D)

    for lw, alpha in zip(weights.layers, alphas):
        hn = _layer_norm(x)
        x = x + _multihead(hn @ lw.sa_q, hn @ lw.sa_k, hn @ lw.sa_v, cfg.heads) @ lw.sa_o
        x = x + _id_cross_delta(_layer_norm(x), kv, bias, float(alpha), lw, weights.id_proj, cfg.heads)
        x = x + _gelu(_layer_norm(x) @ lw.mlp_in) @ lw.mlp_out
    return LatentTensor(unpatchify(x, weights.patch_in, C, h, w, cfg.patch))
