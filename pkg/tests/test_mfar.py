import math

import numpy as np
import pytest
import torch

from tkgr import oracle
from tkgr.graph import Quadruple, build_graph
from tkgr.mfar import (attention_weights, attenuation, auxiliary_relation, raga_combine,
                       triple_scores, tsan_encode, tsan_sequence)
from tkgr.model import Reasoner

from checks import raga_diffs, table_tsan_diffs, tsan_diffs
from conftest import small_config


def test_attenuation_values_and_monotone():
    assert attenuation(0, 1.0) == 1.0
    assert attenuation(1, 1.0) == pytest.approx(math.exp(-0.5))
    ks = torch.arange(0, 6)
    w = attenuation(ks, 0.7)
    assert torch.all(w[1:] < w[:-1])
    with pytest.raises(ValueError):
        attenuation(1, 0.0)


def test_auxiliary_relation_sums_the_path():
    rel = torch.arange(12.0).reshape(4, 3)
    assert torch.equal(auxiliary_relation(rel, [2]), rel[2])
    assert torch.equal(auxiliary_relation(rel, [0, 3]), rel[0] + rel[3])
    with pytest.raises(ValueError):
        auxiliary_relation(rel, [])


def test_attention_weights_positive_and_normalised():
    rng = np.random.default_rng(0)
    beta = torch.as_tensor(rng.normal(size=(5, 2)))
    w = attenuation(torch.as_tensor([1, 1, 2, 2, 3]), 1.0)
    a = attention_weights(beta, w)
    assert torch.all(a > 0)
    assert torch.allclose(a.sum(0), torch.ones(2), atol=1e-12)


def test_zero_parameters_give_half():
    W1 = torch.zeros(2, 2, 12)
    W2 = torch.zeros(2, 2)
    e = torch.ones(4)
    t, beta, w = triple_scores(W1, W2, e, torch.ones(3, 4), torch.ones(3, 4), [1, 1, 2], 1.0)
    out = raga_combine(attention_weights(beta, w), t)
    assert torch.allclose(out, torch.full((4,), 0.5))


def test_raga_matches_loop_oracle():
    assert raga_diffs(20) <= 1e-10


def test_isolated_entity_uses_fallback(tiny_graph):
    model = Reasoner(tiny_graph, small_config())
    # entity 5 has no edge at timestamp 0
    p = model.store
    with torch.no_grad():
        got = model.mfar.raga_update(0, 5)
    ref = oracle.oracle_raga(p["mfar.raga.W1"], p["mfar.raga.W2"], p["emb.entity"][5], [], 1.0,
                             W_iso=p["mfar.raga.W_iso"])
    assert np.allclose(got.numpy(), ref, atol=1e-12)


def test_tsan_matches_loop_oracle():
    assert tsan_diffs(30) <= 1e-10


def test_table_columns_match_loop_oracle():
    assert table_tsan_diffs(3) <= 1e-10


def test_tsan_single_snapshot_is_value_projection():
    rng = np.random.default_rng(0)
    x = torch.as_tensor(rng.normal(size=(1, 4)))
    W = [torch.as_tensor(rng.normal(size=(2, 4, 2))) for _ in range(3)]
    got = tsan_encode(x, *W)
    assert torch.allclose(got, torch.einsum("c,hcd->hd", x[0], W[2]).reshape(-1))
    with pytest.raises(ValueError):
        tsan_encode(torch.zeros(0, 4), *W)


def test_tsan_is_causal():
    rng = np.random.default_rng(1)
    X = torch.as_tensor(rng.normal(size=(1, 6, 4)))
    W = [torch.as_tensor(rng.normal(size=(2, 4, 2))) for _ in range(3)]
    base = tsan_sequence(X, *W)
    Y = X.clone()
    Y[0, 4:] += torch.as_tensor(rng.normal(size=(2, 4)))
    moved = tsan_sequence(Y, *W)
    assert torch.equal(base[0, :4], moved[0, :4])
    assert not torch.allclose(base[0, 4:], moved[0, 4:])


def test_tsan_window_limits_context():
    rng = np.random.default_rng(2)
    X = torch.as_tensor(rng.normal(size=(1, 5, 4)))
    W = [torch.as_tensor(rng.normal(size=(1, 4, 4))) for _ in range(3)]
    base = tsan_sequence(X, *W, window=2)
    Y = X.clone()
    Y[0, 0] += 5.0
    # position 4 only sees positions 3 and 4
    assert torch.equal(base[0, 4], tsan_sequence(Y, *W, window=2)[0, 4])


def test_table_shape_and_cold_column(tiny_graph):
    model = Reasoner(tiny_graph, small_config())
    table = model.mfar.table()
    assert table.shape == (6, len(tiny_graph.snapshots) + 1, 4)
    assert model.mfar.table() is table  # cached per version
    model.store.bump()
    assert model.mfar.table() is not table


def test_ablation_flags_change_the_table(tiny_graph):
    full = Reasoner(tiny_graph, small_config()).mfar.table()
    for flag in ("no_mfar", "no_raga", "no_tsan"):
        other = Reasoner(tiny_graph, small_config(**{flag: True})).mfar.table()
        assert other.shape == full.shape
        assert not torch.allclose(other, full), flag


def test_no_mfar_uses_static_embeddings(tiny_graph):
    model = Reasoner(tiny_graph, small_config(no_mfar=True))
    table = model.mfar.table()
    assert torch.equal(table[3, 2], model.store["emb.entity"][3])


def test_multi_hop_neighbours_respect_sample_cap():
    quads = [Quadruple(0, 0, i, 0) for i in range(1, 6)] + \
            [Quadruple(i, 1, 10 + i, 0) for i in range(1, 6)]
    g = build_graph(quads, 16, 2)
    model = Reasoner(g, small_config(hop_samples=2))
    s = model.mfar.structure
    idx = s.segment(0, 0, g.num_entities)
    assert sorted(s.hops[idx].tolist()) == [1] * 5 + [2, 2]
