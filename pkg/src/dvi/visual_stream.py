"""Coarse visual stream: crop geometry, a stand-in encoder and latent statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors_io import LatentTensor, SeededGenerator

DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class CropPlan:
    src_h: int
    src_w: int
    scaled_h: int
    scaled_w: int
    crop_top: int
    crop_left: int
    target: int


def _round_half_up_ratio(num: int, den: int) -> int:
    # floor(num/den + 1/2) in exact integer arithmetic
    return (2 * num + den) // (2 * den)


def plan_crop(src_h: int, src_w: int, S: int) -> CropPlan:
    """Shortest-edge resize to ``S`` followed by a centred ``S x S`` crop.

    Only the geometry is computed. Scaled dims are rounded half-up, crop
    origins are floored.
    """
    if min(src_h, src_w, S) < 1:
        raise ValueError(f"dims must be positive, got src=({src_h}, {src_w}), S={S}")
    short = min(src_h, src_w)
    scaled_h = S if src_h == short else _round_half_up_ratio(src_h * S, short)
    scaled_w = S if src_w == short else _round_half_up_ratio(src_w * S, short)
    return CropPlan(
        src_h=src_h,
        src_w=src_w,
        scaled_h=scaled_h,
        scaled_w=scaled_w,
        crop_top=(scaled_h - S) // 2,
        crop_left=(scaled_w - S) // 2,
        target=S,
    )


def mixing_matrix(gen: SeededGenerator, out_C: int, in_C: int = 3) -> np.ndarray:
    """Positive ``out_C x in_C`` matrix whose rows sum to one."""
    m = gen.rng().uniform(0.1, 1.0, size=(out_C, in_C))
    return m / m.sum(axis=1, keepdims=True)


def mock_encode(
    pixels: LatentTensor,
    plan: CropPlan,
    out_C: int = 16,
    factor: int = 8,
    mixing: np.ndarray | None = None,
    gen: SeededGenerator | None = None,
) -> LatentTensor:
    """Deterministic surrogate for a VAE encoder.

    Crops ``pixels`` (already rasterised at the plan's scaled size), averages
    each ``factor x factor`` block per channel and mixes channels with a
    row-stochastic matrix. Pass ``mixing`` explicitly or a ``gen`` to draw one.
    """
    if pixels.channels != 3:
        raise ValueError(f"expected 3 input channels, got {pixels.channels}")
    if (pixels.height, pixels.width) != (plan.scaled_h, plan.scaled_w):
        raise ValueError(
            f"pixels are {pixels.height}x{pixels.width} but plan expects "
            f"{plan.scaled_h}x{plan.scaled_w}; resampling is not performed here"
        )
    S = plan.target
    if factor < 1 or S % factor:
        raise ValueError(f"crop side {S} is not divisible by factor {factor}")
    if mixing is None:
        if gen is None:
            raise ValueError("either mixing or gen must be given")
        mixing = mixing_matrix(gen, out_C)
    mixing = np.asarray(mixing, dtype=np.float64)
    if mixing.shape != (out_C, 3):
        raise ValueError(f"mixing matrix must be {(out_C, 3)}, got {mixing.shape}")

    crop = pixels.data[:, plan.crop_top : plan.crop_top + S, plan.crop_left : plan.crop_left + S]
    n = S // factor
    blocks = crop.astype(np.float64).reshape(3, n, factor, n, factor).mean(axis=(2, 4))
    return LatentTensor(np.einsum("oc,chw->ohw", mixing, blocks))


@dataclass(frozen=True)
class VisualContext:
    mu: np.ndarray
    sigma: np.ndarray
    eps: float

    @property
    def channels(self) -> int:
        return self.mu.shape[0]

    @property
    def v_ctx(self) -> np.ndarray:
        return np.concatenate([self.mu, self.sigma])

    def to_json(self) -> dict:
        return {
            "C": self.channels,
            "eps": self.eps,
            "mu": [float(x) for x in self.mu],
            "sigma": [float(x) for x in self.sigma],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VisualContext":
        mu = np.asarray(obj["mu"], dtype=np.float64)
        sigma = np.asarray(obj["sigma"], dtype=np.float64)
        C = int(obj.get("C", mu.shape[0]))
        eps = float(obj.get("eps", DEFAULT_EPS))
        if mu.shape != (C,) or sigma.shape != (C,):
            raise ValueError(f"mu/sigma must both have length C={C}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("non-finite values in visual context")
        if np.any(sigma <= 0):
            raise ValueError("sigma must be strictly positive")
        return cls(mu=mu, sigma=sigma, eps=eps)


def extract_stats(Z: LatentTensor | np.ndarray, eps: float = DEFAULT_EPS) -> VisualContext:
    """Per-channel spatial mean and stabilised population std of a latent.

    Accumulates in float64. Also accepts a raw float64 ``C x h x w`` array so
    callers can avoid the float32 storage round-trip.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    z = Z.data if isinstance(Z, LatentTensor) else np.asarray(Z)
    if z.ndim != 3:
        raise ValueError(f"expected a C x h x w latent, got shape {z.shape}")
    flat = z.reshape(z.shape[0], -1).astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise ValueError("non-finite values")
    mu = flat.mean(axis=1)
    var = ((flat - mu[:, None]) ** 2).mean(axis=1)
    sigma = np.sqrt(var + eps)
    return VisualContext(mu=mu, sigma=sigma, eps=float(eps))
