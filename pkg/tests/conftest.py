import hypothesis
import numpy as np
import pytest

from dvi.config import RunConfig
from dvi.semantic_stream import make_id_embedding
from dvi.tensors_io import SeededGenerator, synth_latent
from dvi.visual_stream import extract_stats

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def toy_cfg():
    return RunConfig(steps=6, D=64)


@pytest.fixture(scope="session")
def toy_id(toy_cfg):
    return make_id_embedding("alice", toy_cfg.id_seed, G=32, N=toy_cfg.N, D=toy_cfg.D)


@pytest.fixture(scope="session")
def toy_stats():
    return extract_stats(synth_latent(SeededGenerator(11), 16, 8, 8, "gaussian"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
