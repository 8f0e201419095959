import numpy as np
import pytest
import torch

from tkgr.env import QueryTask
from tkgr.model import Reasoner
from tkgr.trainer import Trainer, discounted_returns, policy_loss

from conftest import small_config, tiny_quads


def make_trainer(graph, **overrides):
    cfg = small_config(batch_size=5, **overrides)
    return Trainer(Reasoner(graph, cfg), tiny_quads(), tiny_quads()[:3])


def test_discounted_returns_by_hand():
    r = torch.tensor([[0.0, 0.0, 1.0], [1.0, 0.5, 0.0]])
    out = discounted_returns(r, 0.5)
    assert torch.allclose(out, torch.tensor([[0.25, 0.5, 1.0], [1.25, 0.5, 0.0]]))
    assert torch.equal(discounted_returns(r, 1.0)[:, 0], r.sum(1))


def test_ten_facts_in_batches_of_five_take_two_updates(tiny_graph):
    trainer = make_trainer(tiny_graph)
    m = trainer.train_epoch(validate=False)
    assert m.updates == 2 and trainer.updates == 2
    assert m.epoch == 0 and trainer.epoch == 1


def test_zero_advantage_gives_zero_gradient(tiny_model):
    trajs = tiny_model.policy.rollout([QueryTask(e, 0, None, 4) for e in range(4)], "sample",
                                      np.random.default_rng(0))
    rewards = torch.as_tensor(np.random.default_rng(1).random((4, 3)))
    active = torch.ones(4, 3)
    baseline = discounted_returns(rewards, 0.9)
    loss = policy_loss(tiny_model.policy.log_probs(trajs), rewards, active, 0.9, baseline)
    loss.backward()
    for name in tiny_model.policy_param_names:
        g = tiny_model.store[name].grad
        assert g is None or float(g.abs().max()) == 0.0


def _grads(model, trajs, rewards):
    for name in model.policy_param_names:
        model.store[name].grad = None
    active = torch.as_tensor([t.active for t in trajs], dtype=torch.float64)
    policy_loss(model.policy.log_probs(trajs), rewards, active, 0.9, 0.2).backward()
    return {n: model.store[n].grad.clone() for n in model.policy_param_names
            if model.store[n].grad is not None}


def test_identical_trajectories_give_the_single_gradient(tiny_model):
    traj = tiny_model.policy.rollout([QueryTask(0, 0, None, 4)], "sample",
                                     np.random.default_rng(3))[0]
    r = torch.tensor([[0.3, 0.0, 1.0]])
    one = _grads(tiny_model, [traj], r)
    three = _grads(tiny_model, [traj] * 3, r.repeat(3, 1))
    assert one.keys() == three.keys() and one
    for n in one:
        assert torch.allclose(one[n], three[n], atol=1e-14)


def test_inactive_steps_carry_no_weight(tiny_model):
    traj = tiny_model.policy.rollout([QueryTask(0, 0, None, 4)], "sample",
                                     np.random.default_rng(3))[0]
    logp = tiny_model.policy.log_probs([traj]).detach()
    rewards = torch.tensor([[1.0, 2.0, 3.0]])
    full = policy_loss(logp, rewards, torch.tensor([[1.0, 1.0, 0.0]]), 1.0, 0.0)
    assert float(full) == pytest.approx(-(float(logp[0, 0]) * 6 + float(logp[0, 1]) * 5))


def test_same_seed_same_metrics(tiny_graph):
    runs = []
    for _ in range(2):
        trainer = make_trainer(tiny_graph, reward_mode="adaptive")
        rows = []
        for _ in range(2):
            m = trainer.train_epoch()
            m.seconds = 0.0
            rows.append(m.csv_row())
        runs.append((rows, {n: p.detach().clone() for n, p in trainer.model.store.items()}))
    assert runs[0][0] == runs[1][0]
    for n, p in runs[0][1].items():
        assert torch.equal(p, runs[1][1][n])


def test_different_seed_differs(tiny_graph):
    a = make_trainer(tiny_graph, seed=0).train_epoch(validate=False)
    b = make_trainer(tiny_graph, seed=1).train_epoch(validate=False)
    assert (a.mean_reward, a.loss_sem) != (b.mean_reward, b.loss_sem)


def test_empty_batch_warns(tiny_graph):
    trainer = make_trainer(tiny_graph)
    with pytest.warns(UserWarning, match="empty batch"):
        assert trainer.policy_update([]) == 0.0
    assert trainer.updates == 0


@pytest.mark.parametrize("mode", ["adaptive", "terminal-only"])
def test_step_rewards_stay_in_range(tiny_graph, mode):
    trainer = make_trainer(tiny_graph, reward_mode=mode)
    facts = tiny_quads()
    queries = [q for q in trainer.epoch_queries(facts) for _ in range(2)]
    rng = np.random.default_rng(0)
    trajs = trainer.model.policy.rollout(queries, "sample", rng)
    terminals = trainer.assign_rewards(trajs, [True] * len(trajs), rng)
    assert set(terminals) <= {0.0, 1.0}
    for t, term in zip(trajs, terminals):
        assert all(0.0 <= r <= 2.0 for r in t.rewards)
        inactive = [r for r, a in zip(t.rewards, t.active) if not a]
        assert all(r == 0.0 for r in inactive)
        if mode == "terminal-only":
            assert sum(t.rewards) == term


def test_query_relation_filter(tiny_graph):
    trainer = make_trainer(tiny_graph, query_relations=[1])
    qs = trainer.epoch_queries(tiny_quads())
    # three relation-1 facts, each asked in both directions
    assert sorted(q.relation for q in qs) == [1, 1, 1, 4, 4, 4]
    assert trainer.train_epoch(validate=False).updates == 1
