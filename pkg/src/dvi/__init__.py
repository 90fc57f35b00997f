"""Dual-stream identity injection for a toy diffusion transformer."""

from .config import RunConfig, load_config
from .modulation import FusedEmbedding, ModulationVector, broadcast, concat_baseline, pffm, token_norm
from .pipeline import ablate, cfg_combine, euler_step, generate
from .scheduler import ScheduleGrid, build_grid, lambda_at
from .semantic_stream import IdEmbedding, RawIdFeatures, fuse_project, make_id_embedding, mock_extract
from .tensors_io import LatentTensor, SeededGenerator, TokenMatrix, read_tensor, synth_latent, write_tensor
from .visual_stream import CropPlan, VisualContext, extract_stats, mock_encode, plan_crop

__all__ = [
    "CropPlan",
    "FusedEmbedding",
    "IdEmbedding",
    "LatentTensor",
    "ModulationVector",
    "RawIdFeatures",
    "RunConfig",
    "ScheduleGrid",
    "SeededGenerator",
    "TokenMatrix",
    "VisualContext",
    "ablate",
    "broadcast",
    "build_grid",
    "cfg_combine",
    "concat_baseline",
    "euler_step",
    "extract_stats",
    "fuse_project",
    "generate",
    "lambda_at",
    "load_config",
    "make_id_embedding",
    "mock_encode",
    "mock_extract",
    "pffm",
    "plan_crop",
    "read_tensor",
    "synth_latent",
    "token_norm",
    "write_tensor",
]
