"""Euler sampling with classifier-free guidance and per-step re-modulation."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .config import MODES, RunConfig
from .dit_core import DitConfig, DitWeights, dit_forward, init_weights
from .modulation import FusedEmbedding, broadcast, concat_baseline, concat_diagnostics, norm_tokens, pffm
from .scheduler import build_grid, lambda_at
from .semantic_stream import IdEmbedding
from .tensors_io import LatentTensor, SeededGenerator, synth_latent
from .visual_stream import VisualContext

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step


def cfg_combine(v_cond: LatentTensor, v_uncond: LatentTensor, g: float) -> LatentTensor:
    if v_cond.shape != v_uncond.shape:
        raise ValueError(f"shape mismatch: {v_cond.shape} vs {v_uncond.shape}")
    c = v_cond.data.astype(np.float64)
    u = v_uncond.data.astype(np.float64)
    return LatentTensor(u + g * (c - u))


def euler_step(z: LatentTensor, v: LatentTensor, t_i: float, t_next: float) -> LatentTensor:
    """One step ``z + (t_next - t_i) v`` along a grid descending from 1 to 0."""
    if z.shape != v.shape:
        raise ValueError(f"shape mismatch: {z.shape} vs {v.shape}")
    if not t_next < t_i:
        raise ValueError(f"timesteps must decrease, got {t_i} -> {t_next}")
    return LatentTensor(z.data.astype(np.float64) + (t_next - t_i) * v.data.astype(np.float64))


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    t: float
    lambda_: float
    fused_mean: float
    fused_var: float
    latent_mean: float
    latent_var: float
    alphas: tuple[float, ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        d["alphas"] = list(self.alphas)
        return d


@dataclass(frozen=True)
class GenerationResult:
    latent: LatentTensor
    diagnostics: tuple[StepDiagnostics, ...]
    mode: str

    def diagnostics_json(self, cfg: RunConfig) -> dict:
        z = self.latent.data.astype(np.float64)
        return {
            "mode": self.mode,
            "config": cfg.to_dict(),
            "steps": [d.to_dict() for d in self.diagnostics],
            "final": {"mean": float(z.mean()), "var": float(z.var())},
        }


def dit_config(cfg: RunConfig) -> DitConfig:
    return DitConfig(
        C=cfg.C,
        d_model=cfg.d_model,
        heads=cfg.heads,
        layers=cfg.layers,
        patch=cfg.patch,
        D=cfg.D,
        weight_seed=cfg.weight_seed,
        bias_source=cfg.bias_source,
    )


def prompt_tokens(cfg: RunConfig) -> np.ndarray:
    """Seeded stand-in for a text conditioning, one vector per image token."""
    n = (cfg.h // cfg.patch) * (cfg.w // cfg.patch)
    p = SeededGenerator(cfg.prompt_seed).rng().standard_normal(size=(n, cfg.d_model))
    return p.astype(np.float32).astype(np.float64)


def initial_noise(cfg: RunConfig) -> LatentTensor:
    return synth_latent(SeededGenerator(cfg.noise_seed), cfg.C, cfg.h, cfg.w, "gaussian")


def _check_inputs(cfg: RunConfig, stats: VisualContext | None, id_emb: IdEmbedding) -> None:
    if id_emb.dim != cfg.D:
        raise ValueError(f"ID embedding has D={id_emb.dim}, config expects D={cfg.D}")
    if id_emb.tokens != cfg.N:
        raise ValueError(f"ID embedding has N={id_emb.tokens} tokens, config expects N={cfg.N}")
    if cfg.mode != "no_visual" and stats is None:
        raise ValueError(f"mode {cfg.mode!r} needs visual statistics")


def generate(
    cfg: RunConfig,
    stats: VisualContext | None,
    id_emb: IdEmbedding,
    weights: DitWeights | None = None,
) -> GenerationResult:
    """Run the full sampler; a pure function of its arguments.

    ``full`` re-modulates the ID tokens every step with the scheduled
    weight, ``no_visual`` uses the plain normalised tokens and ``concat``
    feeds the raw tokens plus one appended statistics token.
    """
    _check_inputs(cfg, stats, id_emb)
    grid = build_grid(cfg.steps, cfg.lambda_base, cfg.layers, cfg.alpha)
    if weights is None:
        weights = init_weights(dit_config(cfg))
    prompt = prompt_tokens(cfg)
    alphas = grid.alpha_per_layer

    normed = norm_tokens(id_emb, cfg.eps_norm)
    m_vis = broadcast(stats.v_ctx, cfg.D) if stats is not None else None
    if cfg.mode == "concat":
        concat_kv = concat_baseline(id_emb, m_vis)
        concat_bias = np.vstack([id_emb.data, np.zeros((1, cfg.D), dtype=np.float32)])
    zero_bias = np.zeros(cfg.D, dtype=np.float32)

    z = initial_noise(cfg)
    diags = []
    for i in range(grid.steps):
        t_i, t_next = grid.t_values[i], grid.t_values[i + 1]
        try:
            if cfg.mode == "full":
                fused = pffm(id_emb, m_vis, lambda_at(grid, i), cfg.psi, cfg.eps_norm, normed=normed)
                kv, bias, lam = fused, id_emb, fused.lambda_applied
                kv_vals = fused.values
            elif cfg.mode == "no_visual":
                fused = FusedEmbedding(normed=normed, bias=zero_bias, lambda_applied=0.0, psi_coeff=cfg.psi)
                kv, bias, lam = fused, id_emb, 0.0
                kv_vals = fused.values
            else:
                kv, bias, lam = concat_kv, concat_bias, 0.0
                kv_vals = concat_kv.data.astype(np.float64)

            v_cond = dit_forward(z, kv, bias, t_i, weights, alphas, prompt)
            v_uncond = dit_forward(z, None, None, t_i, weights, alphas, None)
            z = euler_step(z, cfg_combine(v_cond, v_uncond, cfg.guidance), t_i, t_next)
        except Exception as exc:
            raise PipelineError(i, exc) from exc

        zd = z.data.astype(np.float64)
        diags.append(
            StepDiagnostics(
                step=i,
                t=t_i,
                lambda_=lam,
                fused_mean=float(kv_vals.mean()),
                fused_var=float(kv_vals.var()),
                latent_mean=float(zd.mean()),
                latent_var=float(zd.var()),
                alphas=alphas,
            )
        )
        log.debug("step %d t=%.4f lambda=%.4f latent_var=%.6g", i, t_i, lam, diags[-1].latent_var)
    log.info("generated %s latent in %d steps (mode=%s)", z.shape, grid.steps, cfg.mode)
    return GenerationResult(latent=z, diagnostics=tuple(diags), mode=cfg.mode)


def _latent_summary(z: LatentTensor) -> dict:
    d = z.data.astype(np.float64)
    return {"mean": float(d.mean()), "var": float(d.var()), "l2_norm": float(np.linalg.norm(d))}


def ablate(cfg: RunConfig, stats: VisualContext, id_emb: IdEmbedding, parallel: bool = True) -> dict:
    """Run all three modes with shared seeds and compare the final latents."""
    weights = init_weights(dit_config(cfg))
    configs = {m: cfg.replace(mode=m) for m in MODES}

    def run(mode):
        return generate(configs[mode], stats, id_emb, weights)

    if parallel:
        with ThreadPoolExecutor(max_workers=len(MODES)) as pool:
            results = dict(zip(MODES, pool.map(run, MODES)))
    else:
        results = {m: run(m) for m in MODES}

    distances = {}
    for a, b in itertools.combinations(MODES, 2):
        diff = results[a].latent.data.astype(np.float64) - results[b].latent.data.astype(np.float64)
        distances[f"{a}__{b}"] = float(np.linalg.norm(diff))
    return {
        "config": cfg.to_dict(),
        "modes": {m: _latent_summary(r.latent) for m, r in results.items()},
        "pairwise_l2": distances,
        "concat_diagnostics": concat_diagnostics(id_emb, broadcast(stats.v_ctx, cfg.D)),
    }
