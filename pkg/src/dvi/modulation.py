"""Parameter-free feature modulation of ID tokens by visual statistics.

``pffm`` keeps its two summands apart: ``normed`` is the cached float32
layer-norm of the ID tokens and ``bias`` the float32 visual offset shared by
every token. Their sum is formed in float64, which is exact for two float32
operands within 29 binary orders of magnitude of each other, so
``values - bias`` gives ``normed`` back bit-for-bit in practice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors_io import TokenMatrix

DEFAULT_EPS_NORM = 1e-5
DEFAULT_PSI = 0.5


@dataclass(frozen=True)
class ModulationVector:
    m_vis: np.ndarray

    @property
    def D(self) -> int:
        return self.m_vis.shape[0]


def broadcast(v_ctx: np.ndarray, D: int) -> ModulationVector:
    """Tile ``v_ctx`` ceil(D / len) times and keep the first ``D`` entries."""
    v = np.asarray(v_ctx, dtype=np.float64).ravel()
    if v.size < 1 or D < 1:
        raise ValueError(f"need non-empty v_ctx and D >= 1, got len={v.size}, D={D}")
    reps = -(-D // v.size)
    m = np.tile(v, reps)[:D]
    m.flags.writeable = False
    return ModulationVector(m)


def token_norm(row: np.ndarray, eps_norm: float = DEFAULT_EPS_NORM) -> np.ndarray:
    """Affine-free layer norm of one token (or each row of a 2-D array)."""
    x = np.asarray(row, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError(f"token dim must be >= 2, got {x.shape[-1]}")
    mean = x.mean(axis=-1, keepdims=True)
    centred = x - mean
    var = (centred**2).mean(axis=-1, keepdims=True)
    return centred / np.sqrt(var + eps_norm)


def norm_tokens(f_id: TokenMatrix, eps_norm: float = DEFAULT_EPS_NORM) -> TokenMatrix:
    return TokenMatrix(token_norm(f_id.data, eps_norm))


@dataclass(frozen=True)
class FusedEmbedding:
    normed: TokenMatrix
    bias: np.ndarray  # float32, length D
    lambda_applied: float
    psi_coeff: float

    @property
    def values(self) -> np.ndarray:
        """Fused tokens ``normed + bias`` as float64, shape N x D."""
        return self.normed.data.astype(np.float64) + self.bias.astype(np.float64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.normed.shape

    def to_token_matrix(self) -> TokenMatrix:
        return TokenMatrix(self.values)

    def token_stats(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.values
        return v.mean(axis=1), v.var(axis=1)


def pffm(
    f_id: TokenMatrix,
    m_vis: ModulationVector,
    lambda_t: float,
    psi: float = DEFAULT_PSI,
    eps_norm: float = DEFAULT_EPS_NORM,
    normed: TokenMatrix | None = None,
) -> FusedEmbedding:
    """Normalise ID tokens and add ``lambda_t * psi * m_vis`` to every one.

    ``normed`` lets the per-step caller reuse ``norm_tokens(f_id)``, which does
    not depend on the timestep.
    """
    if f_id.dim != m_vis.D:
        raise ValueError(f"dim mismatch: f_id has D={f_id.dim}, m_vis has D={m_vis.D}")
    if lambda_t < 0:
        raise ValueError(f"lambda_t must be >= 0, got {lambda_t}")
    if normed is None:
        normed = norm_tokens(f_id, eps_norm)
    elif normed.shape != f_id.shape:
        raise ValueError(f"cached norm has shape {normed.shape}, expected {f_id.shape}")
    with np.errstate(over="ignore"):
        bias = (float(lambda_t) * float(psi) * m_vis.m_vis).astype(np.float32)
    if not np.all(np.isfinite(bias)):
        raise ValueError("modulation bias overflows float32")
    bias.flags.writeable = False
    return FusedEmbedding(normed=normed, bias=bias, lambda_applied=float(lambda_t), psi_coeff=float(psi))


def concat_baseline(f_id: TokenMatrix, m_vis: ModulationVector) -> TokenMatrix:
    """Append ``m_vis`` as one extra raw token; nothing is normalised."""
    if f_id.dim != m_vis.D:
        raise ValueError(f"dim mismatch: f_id has D={f_id.dim}, m_vis has D={m_vis.D}")
    return TokenMatrix(np.vstack([f_id.data, m_vis.m_vis.astype(np.float32)[None, :]]))


def concat_diagnostics(f_id: TokenMatrix, m_vis: ModulationVector) -> dict:
    """Norm of the appended visual token against the mean ID-token norm."""
    id_norms = np.linalg.norm(f_id.data.astype(np.float64), axis=1)
    appended = float(np.linalg.norm(m_vis.m_vis.astype(np.float32).astype(np.float64)))
    id_mean = float(id_norms.mean())
    return {
        "appended_token_norm": appended,
        "id_token_mean_norm": id_mean,
        "norm_ratio": appended / id_mean if id_mean > 0 else float("inf"),
    }
