"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or as a script with
``python tests/test_acceptance.py``.
"""

import json
import math
import time

import numpy as np
import pytest

from dvi.cli import main as cli_main
from dvi.config import RunConfig
from dvi.dit_core import AttentionIO, attend
from dvi.modulation import broadcast, norm_tokens, pffm
from dvi.pipeline import cfg_combine, generate
from dvi.scheduler import build_grid, lambda_at
from dvi.semantic_stream import make_id_embedding
from dvi.tensors_io import (
    DVTFormatError,
    LatentTensor,
    SeededGenerator,
    TokenMatrix,
    read_tensor,
    synth_latent,
    write_tensor,
)
from dvi.visual_stream import extract_stats

RESULTS: list[str] = []


def report(n: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {name}" + (f" ({detail})" if detail else "")
    RESULTS.append(line)
    print(line)
    assert ok, line


def stats_oracle(z):
    C, h, w = z.shape
    mu, sigma = [], []
    for c in range(C):
        cells = [float(v) for v in z[c].ravel()]
        m = math.fsum(cells) / (h * w)
        var = math.fsum((v - m) ** 2 for v in cells) / (h * w)
        mu.append(m)
        sigma.append(math.sqrt(var + 1e-6))
    return np.array(mu), np.array(sigma)


def test_c01_statistics_oracle():
    worst = 0.0
    for seed in range(100):
        z = synth_latent(SeededGenerator(seed), 16, 32, 32, "gaussian" if seed % 2 else "uniform")
        ctx = extract_stats(z, 1e-6)
        mu, sigma = stats_oracle(z.data)
        worst = max(worst, np.abs(ctx.mu - mu).max(), np.abs(ctx.sigma - sigma).max())
    hand = extract_stats(LatentTensor(np.array([[[1.0, 3.0], [5.0, 7.0]]])), 1e-6)
    exact = hand.mu[0] == 4.0 and hand.sigma[0] == math.sqrt(5 + 1e-6)
    report(1, "statistics match 64-bit oracle", worst <= 1e-9 and exact, f"max err {worst:.2e}, 2x2 exact={exact}")


def test_c02_permutation_invariance():
    z = synth_latent(SeededGenerator(77), 16, 32, 32, "gaussian").data
    base = extract_stats(z)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        perm = rng.permutation(32 * 32)
        zp = z.reshape(16, -1)[:, perm].reshape(16, 32, 32)
        ctx = extract_stats(zp)
        worst = max(worst, np.abs(ctx.v_ctx - base.v_ctx).max())
    report(2, "spatial permutation invariance", worst <= 1e-9, f"max err {worst:.2e}")


def test_c03_broadcast_law():
    cases = [(32, 2048)]
    rng = np.random.default_rng(3)
    cases += [(int(rng.integers(1, 65)), int(rng.integers(1, 4097))) for _ in range(20)]
    ok = True
    for n, D in cases:
        v = rng.standard_normal(n)
        m = broadcast(v, D).m_vis
        ok &= m.shape == (D,) and all(m[i] == v[i % n] for i in range(D))
    report(3, "broadcast index law", ok, f"{len(cases)} (2C, D) pairs")


def test_c04_pffm_decomposition():
    exact, worst_mean, worst_shared = True, 0.0, 0.0
    for seed, D in [(0, 64), (1, 64), (2, 2048), (3, 2048)]:
        G = 512 if D == 2048 else 32
        f_id = make_id_embedding(f"subject-{seed}", seed, G=G, D=D)
        ctx = extract_stats(synth_latent(SeededGenerator(seed), 16, 16, 16, "gaussian"))
        m = broadcast(ctx.v_ctx, D)
        normed = norm_tokens(f_id)
        for lam in (0.0, 0.04, 0.52, 0.8, 1.0):
            fused = pffm(f_id, m, lam, 0.5)
            exact &= bool(np.array_equal(fused.values - fused.bias.astype(np.float64), normed.data.astype(np.float64)))
            exact &= bool(np.allclose(fused.bias, lam * 0.5 * m.m_vis, rtol=1e-7, atol=0))
            worst_mean = max(worst_mean, np.abs(normed.data.astype(np.float64).mean(axis=1)).max())
            v, n = fused.values, normed.data.astype(np.float64)
            for i in range(1, v.shape[0]):
                worst_shared = max(worst_shared, np.abs((v[i] - v[0]) - (n[i] - n[0])).max())
    ok = exact and worst_mean <= 1e-6 and worst_shared <= 1e-7
    report(4, "PFFM decomposition", ok, f"bit-exact={exact}, mean {worst_mean:.1e}, shared-bias {worst_shared:.1e}")


def test_c05_schedule():
    T, base = 25, 1.0
    g = build_grid(T, base)
    lams = [lambda_at(g, i) for i in range(T + 1)]
    endpoints = lams[0] == base and lams[T] == 0.0
    strict = all(a > b for a, b in zip(lams, lams[1:]))
    sum_err = abs(math.fsum(lams[:T]) - base * (T + 1) / 2)
    report(5, "schedule endpoints and sum", endpoints and strict and sum_err <= 1e-9, f"sum err {sum_err:.1e}")


def _standard_attention(Q, K, V):
    out = []
    for q in Q:
        s = [float(np.dot(q, k)) / math.sqrt(len(q)) for k in K]
        top = max(s)
        e = [math.exp(x - top) for x in s]
        tot = math.fsum(e)
        out.append(sum((ei / tot) * V[j] for j, ei in enumerate(e)))
    return np.array(out)


def test_c06_attention_collapse_and_affinity():
    worst_collapse = worst_affine = 0.0
    for seed in range(30):
        r = SeededGenerator(seed).rng()
        nq, nk, d = 3 + seed % 4, 2 + seed % 5, 4 * (1 + seed % 3)
        Q, K, V, f = r.standard_normal((nq, d)), r.standard_normal((nk, d)), r.standard_normal((nk, d)), r.standard_normal((nk, d))
        a = 0.8
        o0 = attend(AttentionIO(Q, K, V, f, 0.0))
        worst_collapse = max(worst_collapse, np.abs(o0 - _standard_attention(Q, K, V)).max())
        o1 = attend(AttentionIO(Q, K, V, f, a))
        o2 = attend(AttentionIO(Q, K, V, f, 2 * a))
        worst_affine = max(worst_affine, np.abs((o2 - o0) - 2 * (o1 - o0)).max())
    ok = worst_collapse <= 1e-6 and worst_affine <= 1e-5
    report(6, "value-bias collapse and affinity", ok, f"collapse {worst_collapse:.1e}, affine {worst_affine:.1e}")


@pytest.fixture(scope="module")
def default_inputs():
    cfg = RunConfig()
    f_id = make_id_embedding("alice", cfg.id_seed)
    ctx = extract_stats(synth_latent(SeededGenerator(5), 16, 32, 32, "gaussian"))
    return cfg, ctx, f_id


def test_c07_ablation_equivalence(default_inputs):
    cfg, ctx, f_id = default_inputs
    a = generate(cfg.replace(lambda_base=0.0), ctx, f_id)
    b = generate(cfg.replace(lambda_base=0.0, mode="no_visual"), ctx, f_id)
    same_latent = a.latent.data.tobytes() == b.latent.data.tobytes()
    same_diag = json.dumps([d.to_dict() for d in a.diagnostics]) == json.dumps([d.to_dict() for d in b.diagnostics])
    report(7, "lambda_base=0 full == no_visual", same_latent and same_diag, f"latent={same_latent}, diagnostics={same_diag}")


def test_c08_determinism(default_inputs):
    cfg, ctx, f_id = default_inputs
    assert (cfg.steps, cfg.guidance, cfg.alpha, cfg.psi) == (25, 4.0, 0.8, 0.5)
    t0 = time.perf_counter()
    a = generate(cfg, ctx, f_id)
    elapsed = time.perf_counter() - t0
    b = generate(cfg, ctx, f_id)
    same = a.latent.data.tobytes() == b.latent.data.tobytes()
    same &= json.dumps(a.diagnostics_json(cfg)) == json.dumps(b.diagnostics_json(cfg))
    report(8, "end-to-end determinism at defaults", same and elapsed < 30, f"{elapsed:.2f}s per run")


def test_c09_cfg_identities():
    r = SeededGenerator(9).rng()
    c = LatentTensor(r.standard_normal((16, 8, 8)))
    u = LatentTensor(r.standard_normal((16, 8, 8)))
    g1 = np.array_equal(cfg_combine(c, u, 1.0).data, c.data)
    g0 = np.array_equal(cfg_combine(c, u, 0.0).data, u.data)
    one = LatentTensor(np.ones((1, 1, 1)))
    scalar = cfg_combine(LatentTensor(np.full((1, 1, 1), 2.0)), one, 4.0).data.item() == 5.0
    report(9, "guidance identities", g1 and g0 and scalar, f"g=1 {g1}, g=0 {g0}, scalar {scalar}")


def test_c10_file_format(tmp_path):
    rng = np.random.default_rng(10)
    ok = True
    for k in range(200):
        rank = 2 + k % 2
        shape = tuple(int(s) for s in rng.integers(1, 9, size=rank))
        data = (rng.standard_normal(shape) * 10.0 ** rng.integers(-5, 6)).astype(np.float32)
        t = TokenMatrix(data) if rank == 2 else LatentTensor(data)
        path = tmp_path / f"t{k}.dvt"
        write_tensor(path, t)
        raw = path.read_bytes()
        back = read_tensor(path)
        write_tensor(tmp_path / "again.dvt", back)
        ok &= back.data.tobytes() == t.data.tobytes() and (tmp_path / "again.dvt").read_bytes() == raw

    fixtures = {
        "not a DVT file": b"XXXX\x02" + b"\x01\x00\x00\x00" * 2 + b"\x00" * 4,
        "payload length mismatch": b"DVT1\x02" + b"\x02\x00\x00\x00" * 2 + b"\x00" * 12,
        "non-finite values": b"DVT1\x02" + b"\x01\x00\x00\x00" * 2 + np.array([np.inf], "<f4").tobytes(),
    }
    errors_ok = True
    for msg, blob in fixtures.items():
        path = tmp_path / "bad.dvt"
        path.write_bytes(blob)
        try:
            read_tensor(path)
            errors_ok = False
        except DVTFormatError as exc:
            errors_ok &= msg in str(exc)
    report(10, "file format round-trip and errors", ok and errors_ok, f"round-trip={ok}, errors={errors_ok}")


def test_c11_concat_baseline_diagnostic(tmp_path):
    latent, stats, ident, out = (tmp_path / n for n in ("bright.dvt", "stats.json", "id.dvt", "ablate.json"))
    write_tensor(latent, synth_latent(SeededGenerator(0), 16, 32, 32, "constant", 100.0))
    assert cli_main(["extract-stats", "--latent", str(latent), "--out", str(stats)]) == 0
    assert cli_main(["make-id", "--label", "alice", "--out", str(ident)]) == 0
    assert cli_main(["ablate", "--stats", str(stats), "--id", str(ident), "--out", str(out)]) == 0
    diag = json.loads(out.read_text())["concat_diagnostics"]
    ok = diag["appended_token_norm"] > diag["id_token_mean_norm"]
    report(
        11,
        "concat token norm exceeds ID token norm",
        ok,
        f"{diag['appended_token_norm']:.1f} vs {diag['id_token_mean_norm']:.1f}",
    )


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
