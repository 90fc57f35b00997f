import numpy as np
import pytest

from dvi.cli import schedule_csv
from dvi.config import RunConfig, dump_config, load_config, parse_config_text
from dvi.dit_core import dit_forward, init_weights
from dvi.modulation import broadcast, pffm
from dvi.pipeline import (
    PipelineError,
    ablate,
    cfg_combine,
    dit_config,
    euler_step,
    generate,
    initial_noise,
    prompt_tokens,
)
from dvi.scheduler import build_grid
from dvi.tensors_io import LatentTensor, TokenMatrix
from dvi.visual_stream import VisualContext


def lt(x):
    return LatentTensor(np.asarray(x, dtype=np.float64).reshape(1, 1, -1))


def test_cfg_identities(rng):
    c = LatentTensor(rng.standard_normal((2, 3, 3)))
    u = LatentTensor(rng.standard_normal((2, 3, 3)))
    assert np.array_equal(cfg_combine(c, u, 1.0).data, c.data)
    assert np.array_equal(cfg_combine(c, u, 0.0).data, u.data)
    assert cfg_combine(lt([2.0]), lt([1.0]), 4.0).data.item() == 5.0
    with pytest.raises(ValueError):
        cfg_combine(c, lt([1.0]), 1.0)


def test_euler_step_cases(rng):
    z = LatentTensor(rng.standard_normal((2, 2, 2)))
    assert np.array_equal(euler_step(z, LatentTensor(np.zeros((2, 2, 2))), 1.0, 0.5).data, z.data)
    out = euler_step(LatentTensor(np.zeros((1, 2, 2))), LatentTensor(np.full((1, 2, 2), 0.75)), 1.0, 0.0)
    assert np.all(out.data == -0.75)
    with pytest.raises(ValueError):
        euler_step(z, z, 0.5, 0.5)


def test_euler_composition_equals_single_step():
    grid = build_grid(25)
    v = LatentTensor(np.full((2, 3, 3), 0.9))
    z = LatentTensor(np.full((2, 3, 3), 0.1))
    for i in range(25):
        z = euler_step(z, v, grid.t_values[i], grid.t_values[i + 1])
    one = euler_step(LatentTensor(np.full((2, 3, 3), 0.1)), v, 1.0, 0.0)
    np.testing.assert_allclose(z.data, one.data, atol=1e-6)


def test_generate_shapes_and_diagnostics(toy_cfg, toy_stats, toy_id):
    res = generate(toy_cfg, toy_stats, toy_id)
    assert res.latent.shape == (16, 8, 8)
    assert len(res.diagnostics) == toy_cfg.steps
    lams = [d.lambda_ for d in res.diagnostics]
    grid = build_grid(toy_cfg.steps, toy_cfg.lambda_base)
    assert lams == [toy_cfg.lambda_base * t for t in grid.t_values[:-1]]
    assert all(a > b for a, b in zip(lams, lams[1:]))
    assert all(d.alphas == (0.8,) * 4 for d in res.diagnostics)
    for d in res.diagnostics:
        assert all(np.isfinite([d.fused_mean, d.fused_var, d.latent_mean, d.latent_var]))


def test_ablation_identity(toy_cfg, toy_stats, toy_id):
    cfg = toy_cfg.replace(lambda_base=0.0)
    a = generate(cfg, toy_stats, toy_id)
    b = generate(cfg.replace(mode="no_visual"), None, toy_id)
    assert a.latent.data.tobytes() == b.latent.data.tobytes()
    assert a.diagnostics == b.diagnostics


def test_guidance_one_equals_single_pass(toy_cfg, toy_stats, toy_id):
    cfg = toy_cfg.replace(guidance=1.0)
    got = generate(cfg, toy_stats, toy_id).latent.data.astype(np.float64)

    weights = init_weights(dit_config(cfg))
    grid = build_grid(cfg.steps, cfg.lambda_base, cfg.layers, cfg.alpha)
    m = broadcast(toy_stats.v_ctx, cfg.D)
    z = initial_noise(cfg).data.astype(np.float64)
    for i in range(cfg.steps):
        t0, t1 = grid.t_values[i], grid.t_values[i + 1]
        fused = pffm(toy_id, m, cfg.lambda_base * t0, cfg.psi)
        v = dit_forward(LatentTensor(z), fused, toy_id, t0, weights, grid.alpha_per_layer, prompt_tokens(cfg))
        z = z + (t1 - t0) * v.data.astype(np.float64)
    np.testing.assert_allclose(got, z, atol=1e-6)


def test_visual_sensitivity(toy_cfg, toy_stats, toy_id):
    mu = toy_stats.mu.copy()
    mu[3] += 0.1
    shifted = VisualContext(mu=mu, sigma=toy_stats.sigma, eps=toy_stats.eps)
    a = generate(toy_cfg, toy_stats, toy_id).latent.data
    b = generate(toy_cfg, shifted, toy_id).latent.data
    assert not np.array_equal(a, b)


def test_concat_mode_runs(toy_cfg, toy_stats, toy_id):
    res = generate(toy_cfg.replace(mode="concat"), toy_stats, toy_id)
    assert all(np.isfinite(res.latent.data).ravel())
    assert all(d.lambda_ == 0.0 for d in res.diagnostics)


def test_input_validation(toy_cfg, toy_stats, toy_id):
    with pytest.raises(ValueError, match="visual statistics"):
        generate(toy_cfg, None, toy_id)
    with pytest.raises(ValueError, match="D=64"):
        generate(toy_cfg, toy_stats, TokenMatrix(np.ones((8, 32))))
    with pytest.raises(ValueError, match="N=3"):
        generate(toy_cfg, toy_stats, TokenMatrix(np.ones((3, 64))))


def test_step_errors_carry_index(toy_cfg, toy_stats, toy_id):
    bad = VisualContext(mu=np.zeros(16), sigma=np.full(16, 1e38), eps=1e-6)
    with pytest.raises(PipelineError, match="step 0"):
        generate(toy_cfg.replace(lambda_base=10.0), bad, toy_id)


def test_ablate_parallel_matches_sequential(toy_cfg, toy_stats, toy_id):
    par = ablate(toy_cfg, toy_stats, toy_id, parallel=True)
    seq = ablate(toy_cfg, toy_stats, toy_id, parallel=False)
    assert par == seq
    assert set(par["modes"]) == {"full", "no_visual", "concat"}
    assert par["pairwise_l2"]["full__no_visual"] > 0


def test_diagnostics_lambda_matches_schedule_csv(toy_stats):
    from dvi.semantic_stream import make_id_embedding

    cfg = RunConfig(D=64)
    res = generate(cfg, toy_stats, make_id_embedding("alice", 2, G=32, D=64))
    rows = schedule_csv(25, 1.0).strip().splitlines()[1:]
    csv_lams = [float(r.split(",")[2]) for r in rows]
    assert [d.lambda_ for d in res.diagnostics] == csv_lams[:-1]


def test_config_roundtrip(tmp_path):
    cfg = RunConfig(steps=7, alpha=(0.8, 0.7, 0.6, 0.5), mode="concat", D=64)
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n" + dump_config(cfg))
    assert load_config(path) == cfg
    assert load_config(path, steps=9).steps == 9


@pytest.mark.parametrize(
    "text",
    ['steps = "ten"', "nope = 1", "steps 3", "steps = 3\nsteps = 4", 'mode = "weird"', "guidance = -1.0", "alpha = [true]"],
)
def test_config_rejects(text):
    with pytest.raises(ValueError):
        RunConfig(**parse_config_text(text))


def test_run_config_groups():
    cfg = RunConfig()
    assert cfg.seeds == {"noise": 0, "weights": 1, "id": 2, "prompt": 3}
    assert cfg.dims["D"] == 2048 and cfg.dims["C"] == 16
    assert (cfg.steps, cfg.guidance, cfg.alpha, cfg.psi) == (25, 4.0, 0.8, 0.5)
