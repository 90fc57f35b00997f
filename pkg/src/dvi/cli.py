"""Command-line entry point: ``dvi <subcommand> ...``.

Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
Logging verbosity follows ``DVI_LOG`` (quiet, info, trace).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from .config import MODES, load_config
from .modulation import DEFAULT_EPS_NORM, DEFAULT_PSI, broadcast, pffm
from .pipeline import ablate, generate
from .scheduler import DEFAULT_LAMBDA_BASE, DEFAULT_STEPS, build_grid
from .semantic_stream import DEFAULT_D, DEFAULT_G, DEFAULT_K, DEFAULT_N, make_id_embedding
from .tensors_io import LatentTensor, SeededGenerator, TokenMatrix, parse_family, read_tensor, synth_latent, write_tensor
from .visual_stream import DEFAULT_EPS, VisualContext, extract_stats, mock_encode, plan_crop

log = logging.getLogger("dvi")

_LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "trace": logging.DEBUG}


class CliError(Exception):
    pass


def _setup_logging() -> None:
    level = os.environ.get("DVI_LOG", "quiet").lower()
    if level not in _LOG_LEVELS:
        raise CliError(f"DVI_LOG must be one of {sorted(_LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=_LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", force=True)


def _write_json(path: str, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _read_stats(path: str) -> VisualContext:
    try:
        return VisualContext.from_json(json.loads(Path(path).read_text()))
    except (KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"{path}: malformed visual context ({exc})") from None


def _read_tokens(path: str) -> TokenMatrix:
    t = read_tensor(path)
    if not isinstance(t, TokenMatrix):
        raise CliError(f"{path}: expected a rank-2 token matrix, got shape {t.shape}")
    return t


def schedule_csv(steps: int, lambda_base: float) -> str:
    grid = build_grid(steps, lambda_base)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "t", "lambda"])
    for i, t, lam in grid.rows():
        writer.writerow([i, repr(t), repr(lam)])
    return buf.getvalue()


# -- subcommands -------------------------------------------------------------------


def cmd_extract_stats(args) -> None:
    if sum(x is not None for x in (args.latent, args.image, args.synth)) != 1:
        raise CliError("give exactly one of --latent, --image, --synth")
    if args.latent:
        z = read_tensor(args.latent)
        if not isinstance(z, LatentTensor):
            raise CliError(f"{args.latent}: expected a rank-3 latent")
    elif args.image:
        pixels = read_tensor(args.image)
        if not isinstance(pixels, LatentTensor):
            raise CliError(f"{args.image}: expected a rank-3 3 x H x W image")
        plan = plan_crop(pixels.height, pixels.width, args.size)
        gen = SeededGenerator(args.seed).child("mixing")
        z = mock_encode(pixels, plan, out_C=args.channels, factor=args.factor, gen=gen)
    else:
        family, k = parse_family(args.synth)
        z = synth_latent(SeededGenerator(args.seed), args.channels, args.height, args.width, family, k)
    ctx = extract_stats(z, args.eps)
    _write_json(args.out, ctx.to_json())
    log.info("wrote visual context (C=%d) to %s", ctx.channels, args.out)


def cmd_make_id(args) -> None:
    emb = make_id_embedding(args.label, args.seed, G=args.G, K=args.K, N=args.N, D=args.D)
    write_tensor(args.out, emb)
    log.info("wrote %dx%d ID embedding to %s", emb.tokens, emb.dim, args.out)


def cmd_modulate(args) -> None:
    f_id = _read_tokens(args.id)
    ctx = _read_stats(args.stats)
    if not 0.0 <= args.t <= 1.0:
        raise CliError(f"--t must lie in [0, 1], got {args.t}")
    lam = args.lambda_base * args.t
    fused = pffm(f_id, broadcast(ctx.v_ctx, f_id.dim), lam, args.psi, args.eps_norm)
    write_tensor(args.out, fused.to_token_matrix())
    means, variances = fused.token_stats()
    sidecar = args.sidecar or f"{args.out}.json"
    _write_json(
        sidecar,
        {
            "t": args.t,
            "lambda_base": args.lambda_base,
            "lambda_applied": fused.lambda_applied,
            "psi": fused.psi_coeff,
            "token_mean": [float(x) for x in means],
            "token_var": [float(x) for x in variances],
        },
    )


def cmd_schedule(args) -> None:
    text = schedule_csv(args.steps, args.lambda_base)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _run_config(args):
    overrides = {
        "steps": args.steps,
        "guidance": args.guidance,
        "lambda_base": args.lambda_base,
        "psi": args.psi,
        "alpha": args.alpha,
        "mode": getattr(args, "mode", None),
        "noise_seed": args.noise_seed,
        "weight_seed": args.weight_seed,
        "D": args.D,
        "N": args.N,
    }
    return load_config(args.config, **overrides)


def cmd_generate(args) -> None:
    cfg = _run_config(args)
    if cfg.mode != "no_visual" and not args.stats:
        raise CliError(f"--stats is required in mode={cfg.mode}")
    stats = _read_stats(args.stats) if args.stats else None
    result = generate(cfg, stats, _read_tokens(args.id))
    write_tensor(args.out, result.latent)
    if args.diagnostics:
        _write_json(args.diagnostics, result.diagnostics_json(cfg))


def cmd_ablate(args) -> None:
    cfg = _run_config(args)
    if not args.stats:
        raise CliError("--stats is required for ablate")
    report = ablate(cfg, _read_stats(args.stats), _read_tokens(args.id))
    _write_json(args.out, report)


# -- parser ------------------------------------------------------------------------


def _alpha(text: str):
    parts = [float(x) for x in text.split(",")]
    return parts[0] if len(parts) == 1 else tuple(parts)


def _add_run_flags(p: argparse.ArgumentParser, with_mode: bool) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--stats", help="visual context JSON")
    p.add_argument("--id", required=True, help="ID embedding .dvt")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--guidance", type=float)
    p.add_argument("--lambda-base", type=float)
    p.add_argument("--psi", type=float)
    p.add_argument("--alpha", type=_alpha, help="one value or comma-separated per-layer values")
    p.add_argument("--noise-seed", type=int)
    p.add_argument("--weight-seed", type=int)
    p.add_argument("--D", type=int)
    p.add_argument("--N", type=int)
    if with_mode:
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--diagnostics", help="write per-step diagnostics JSON here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dvi", description="Dual-stream identity injection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-stats", help="latent statistics as JSON")
    p.add_argument("--latent", help="rank-3 .dvt latent")
    p.add_argument("--image", help="rank-3 3 x H x W .dvt image, encoded with the mock encoder")
    p.add_argument("--synth", help="synthetic latent family, e.g. gaussian or constant:100")
    p.add_argument("--size", type=int, default=64, help="crop side for --image")
    p.add_argument("--factor", type=int, default=8, help="downsampling factor for --image")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_stats)

    p = sub.add_parser("make-id", help="seeded ID embedding as .dvt")
    p.add_argument("--label", required=True)
    p.add_argument("--seed", type=int, default=2)
    p.add_argument("--G", type=int, default=DEFAULT_G)
    p.add_argument("--K", type=int, default=DEFAULT_K)
    p.add_argument("--N", type=int, default=DEFAULT_N)
    p.add_argument("--D", type=int, default=DEFAULT_D)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_id)

    p = sub.add_parser("modulate", help="apply feature modulation at one timestep")
    p.add_argument("--id", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--lambda-base", type=float, default=DEFAULT_LAMBDA_BASE)
    p.add_argument("--psi", type=float, default=DEFAULT_PSI)
    p.add_argument("--eps-norm", type=float, default=DEFAULT_EPS_NORM)
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar", help="JSON sidecar path (default: <out>.json)")
    p.set_defaults(func=cmd_modulate)

    p = sub.add_parser("schedule", help="CSV of step,t,lambda")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--lambda-base", type=float, default=DEFAULT_LAMBDA_BASE)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("generate", help="sample a latent")
    _add_run_flags(p, with_mode=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ablate", help="compare full, no_visual and concat modes")
    _add_run_flags(p, with_mode=False)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _setup_logging()
        args.func(args)
    except (CliError, ValueError, OSError, IndexError, RuntimeError) as exc:
        print(f"dvi {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
