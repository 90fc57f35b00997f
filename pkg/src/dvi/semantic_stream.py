"""Fine semantic stream with frozen stand-ins for the face backbone and projector.

Token layout of an ID embedding: rows ``0..K-1`` are projected from the local
feature rows, rows ``K..N-1`` are projected from the global feature.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .tensors_io import SeededGenerator, TokenMatrix

IdEmbedding = TokenMatrix

DEFAULT_G = 512
DEFAULT_K = 4
DEFAULT_N = 8
DEFAULT_D = 2048


@dataclass(frozen=True)
class RawIdFeatures:
    f_global: np.ndarray
    f_local: np.ndarray

    def __post_init__(self):
        g = np.array(self.f_global, dtype=np.float32)
        loc = np.array(self.f_local, dtype=np.float32)
        if g.ndim != 1 or loc.ndim != 2 or loc.shape[1] != g.shape[0]:
            raise ValueError(f"expected f_global (G,) and f_local (K, G), got {g.shape} and {loc.shape}")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(loc))):
            raise ValueError("non-finite values")
        g.flags.writeable = False
        loc.flags.writeable = False
        object.__setattr__(self, "f_global", g)
        object.__setattr__(self, "f_local", loc)

    @property
    def G(self) -> int:
        return self.f_global.shape[0]

    @property
    def K(self) -> int:
        return self.f_local.shape[0]

    def scaled(self, a: float) -> "RawIdFeatures":
        return RawIdFeatures(self.f_global * np.float32(a), self.f_local * np.float32(a))


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


def mock_extract(
    identity_label: str,
    gen: SeededGenerator,
    G: int = DEFAULT_G,
    K: int = DEFAULT_K,
    clamp: float = 4.0,
) -> RawIdFeatures:
    """Gaussian features keyed by the label hash, clipped to ``+-clamp`` sigma."""
    if not identity_label:
        raise ValueError("identity label must be non-empty")
    rng = gen.rng(_label_key(identity_label))
    feats = np.clip(rng.standard_normal(size=(K + 1, G)), -clamp, clamp)
    return RawIdFeatures(f_global=feats[0], f_local=feats[1:])


@dataclass(frozen=True)
class FrozenProjection:
    """Per-slot ``D x G`` weights plus the shared offset vector."""

    weights: np.ndarray  # (N, D, G)
    delta_offset: np.ndarray  # (D,)
    n_local: int

    @property
    def N(self) -> int:
        return self.weights.shape[0]

    @property
    def D(self) -> int:
        return self.weights.shape[1]

    @property
    def G(self) -> int:
        return self.weights.shape[2]


def make_projection(
    gen: SeededGenerator,
    G: int = DEFAULT_G,
    D: int = DEFAULT_D,
    N: int = DEFAULT_N,
    K: int = DEFAULT_K,
) -> FrozenProjection:
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}, N={N}")
    w = gen.rng(0).standard_normal(size=(N, D, G), dtype=np.float32) * np.float32(1.0 / np.sqrt(G))
    delta = gen.rng(1).standard_normal(size=D) * (0.01 / np.sqrt(D))
    w.flags.writeable = False
    delta = delta.astype(np.float32)
    delta.flags.writeable = False
    return FrozenProjection(weights=w, delta_offset=delta, n_local=K)


def identity_projection(G: int, N: int, K: int) -> FrozenProjection:
    """Square (G == D) projection with every slot the identity and zero offset."""
    w = np.broadcast_to(np.eye(G, dtype=np.float32), (N, G, G)).copy()
    return FrozenProjection(weights=w, delta_offset=np.zeros(G, dtype=np.float32), n_local=K)


def fuse_project(raw: RawIdFeatures, proj: FrozenProjection) -> IdEmbedding:
    if raw.G != proj.G:
        raise ValueError(f"feature dim mismatch: projection expects G={proj.G}, got {raw.G}")
    if raw.K != proj.n_local:
        raise ValueError(f"local token mismatch: projection expects K={proj.n_local}, got {raw.K}")
    n_global = proj.N - proj.n_local
    sources = np.concatenate(
        [raw.f_local, np.broadcast_to(raw.f_global, (n_global, raw.G))], axis=0
    ).astype(np.float64)
    mapped = np.einsum("ndg,ng->nd", proj.weights.astype(np.float64), sources)
    return TokenMatrix(mapped + proj.delta_offset.astype(np.float64))


def make_id_embedding(
    label: str,
    seed: int,
    G: int = DEFAULT_G,
    K: int = DEFAULT_K,
    N: int = DEFAULT_N,
    D: int = DEFAULT_D,
) -> IdEmbedding:
    """Whole semantic stream as a pure function of (label, seed, dims)."""
    gen = SeededGenerator(seed)
    raw = mock_extract(label, gen.child("extract"), G=G, K=K)
    proj = make_projection(gen.child("projection"), G=G, D=D, N=N, K=K)
    return fuse_project(raw, proj)
