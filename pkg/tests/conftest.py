import numpy as np
import pytest
import torch

from tkgr.config import TrainConfig
from tkgr.data import from_synthetic
from tkgr.graph import Quadruple, build_graph
from tkgr.model import Reasoner
from tkgr.synthetic import generate

torch.set_default_dtype(torch.float64)


def small_config(**overrides) -> TrainConfig:
    """Dims <= 8 so finite differences and loop oracles stay cheap."""
    base = dict(dim_entity=4, dim_relation=4, heads_raga=2, heads_tsan=2, hidden=4, window=4,
                max_hop=2, hop_samples=3, max_steps=3, action_cap=5, beam_width=50,
                kernel_rows=3, kernel_cols=3, conv_filters=2, n_demos=4,
                time_constraint="history", seed=0)
    base.update(overrides)
    return TrainConfig(**base)


def tiny_quads():
    """Six entities, three relations, timestamps 0..3."""
    return [Quadruple(*q) for q in [
        (0, 0, 1, 0), (1, 1, 2, 1), (0, 2, 2, 3), (2, 0, 3, 1),
        (3, 1, 4, 2), (4, 2, 5, 2), (5, 0, 0, 1), (1, 2, 3, 2),
        (0, 1, 4, 2), (2, 2, 0, 0),
    ]]


@pytest.fixture
def tiny_graph():
    return build_graph(tiny_quads(), 6, 3)


@pytest.fixture
def tiny_model(tiny_graph):
    return Reasoner(tiny_graph, small_config())


@pytest.fixture(scope="session")
def toy_data():
    return generate(seed=0)


@pytest.fixture(scope="session")
def toy_dataset(toy_data):
    return from_synthetic(toy_data)


def random_quads(rng: np.random.Generator, n_ent=6, n_rel=3, n_time=5, n=14):
    return [Quadruple(int(rng.integers(n_ent)), int(rng.integers(n_rel)), int(rng.integers(n_ent)),
                      int(rng.integers(n_time))) for _ in range(n)]


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
