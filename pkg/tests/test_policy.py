import numpy as np
import pytest
import torch

from tkgr import oracle
from tkgr.env import QueryTask, initial_state
from tkgr.graph import build_graph
from tkgr.model import Reasoner
from tkgr.policy import action_distribution, encode_history

from checks import action_distribution_diffs
from conftest import random_quads, small_config


def oracle_for(model):
    g = model.graph
    acts = oracle.OracleActions(sorted(g.edge_set), g.stop_relation, model.cfg.action_cap,
                                model.cfg.time_constraint)
    pol = oracle.OraclePolicy(model.mfar.table().numpy(), g.timestamps, model.store.arrays(),
                              g.start_relation, model.cfg.window, model.cfg.time_encoding)
    return acts, pol


def test_gated_cell_zero_parameters():
    h, c = encode_history(torch.zeros(3), torch.zeros(3), torch.zeros(2), torch.zeros(12, 2),
                          torch.zeros(12, 3), torch.zeros(12))
    assert torch.equal(h, torch.zeros(3)) and torch.equal(c, torch.zeros(3))


def test_gated_cell_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        H, X = 3, 4
        args = [torch.as_tensor(rng.normal(size=s)) for s in ((H,), (H,), (X,), (4 * H, X),
                                                               (4 * H, H), (4 * H,))]
        h, c = encode_history(*args)
        rh, rc = oracle.oracle_gated_cell(*args)
        assert np.allclose(h.numpy(), rh, atol=1e-12) and np.allclose(c.numpy(), rc, atol=1e-12)


def test_action_distribution_matches_oracle():
    assert action_distribution_diffs(30) <= 1e-10


def test_action_distribution_normalised():
    rng = np.random.default_rng(1)
    p = action_distribution(*(torch.as_tensor(rng.normal(size=s)) for s in
                              ((4,), (3,), (4,), (6, 8), (3, 11), (8, 3))))
    assert abs(float(p.sum()) - 1) <= 1e-6 and torch.all(p >= 0)


def test_state_distribution_matches_oracle(tiny_model):
    acts, pol = oracle_for(tiny_model)
    q = QueryTask(0, 0, None, 3)
    cands, probs, _, _ = tiny_model.policy.distribution(initial_state(q), tiny_model.graph.start_relation)
    h, c = pol.initial()
    h, c = pol.advance(h, c, pol.start, 0, 3, 3)
    ref = pol.probs(h, 0, 3, 3, 0, acts.actions(0, 3, 3))
    assert [tuple(a) for a in cands] == acts.actions(0, 3, 3)
    assert np.allclose(probs.detach().numpy(), ref, atol=1e-10)


@pytest.mark.parametrize("seed", range(6))
def test_beam_marginals_equal_exhaustive_enumeration(seed):
    rng = np.random.default_rng(seed)
    g = build_graph(random_quads(rng), 6, 3)
    mode = ["strict", "inclusive", "history"][seed % 3]
    model = Reasoner(g, small_config(seed=seed, time_constraint=mode, beam_width=10 ** 4))
    acts, pol = oracle_for(model)
    q = QueryTask(int(rng.integers(6)), int(rng.integers(6)), None, 5)
    marginals, paths = oracle.oracle_enumerate_paths(acts, pol, q.subject, q.relation, q.time, 3)
    assert sum(marginals.values()) == pytest.approx(1.0, abs=1e-10)
    got = dict(model.policy.beam_inference(q))
    assert set(got) == set(marginals)
    for e, p in marginals.items():
        assert got[e] == pytest.approx(p, abs=1e-10)
    beams = model.policy.beam_search(q)
    assert len(beams) == len(paths)


def test_narrow_beam_keeps_the_best_paths(tiny_model):
    q = QueryTask(0, 0, None, 4)
    wide = tiny_model.policy.beam_search(q, 10 ** 4)
    narrow = tiny_model.policy.beam_search(q, 3)
    assert len(narrow) == 3
    full = {tuple(map(tuple, b.actions)): b.log_prob for b in wide}
    for b in narrow:
        assert full[tuple(map(tuple, b.actions))] == pytest.approx(b.log_prob, abs=1e-12)
    assert [b.log_prob for b in narrow] == sorted((b.log_prob for b in narrow), reverse=True)
    with pytest.raises(ValueError):
        tiny_model.policy.beam_search(q, 0)


def test_rollout_log_probs_replay_exactly(tiny_model):
    rng = np.random.default_rng(0)
    qs = [QueryTask(e, 0, None, 4) for e in range(6)] * 3
    trajs = tiny_model.policy.rollout(qs, "sample", rng)
    replayed = tiny_model.policy.log_probs(trajs)
    recorded = torch.as_tensor([t.log_probs for t in trajs])
    assert torch.allclose(replayed.detach(), recorded, atol=1e-12)
    for t in trajs:
        assert len(t.actions) == 3
        # once the agent stops, every later step is inactive
        first_stop = next((l for l, a in enumerate(t.actions)
                           if a.relation == tiny_model.graph.stop_relation), None)
        if first_stop is not None:
            assert not any(t.active[first_stop + 1:])


def test_rollout_modes(tiny_model):
    q = [QueryTask(0, 0, None, 4)]
    with pytest.raises(ValueError):
        tiny_model.policy.rollout(q, "sample")
    with pytest.raises(ValueError):
        tiny_model.policy.rollout(q, "argmax")
    a = tiny_model.policy.rollout(q, "greedy")[0]
    b = tiny_model.policy.rollout(q, "greedy")[0]
    assert a.actions == b.actions
