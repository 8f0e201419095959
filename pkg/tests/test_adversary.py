import math

import numpy as np
import pytest
import torch

from tkgr.adversary import (adaptive_reward, gated_rewards, logic_disc_loss, noise_scores,
                            pad_rows, path_to_rule, quad_truth, rule_score, semantic_disc_loss,
                            semantic_score)
from tkgr.env import QueryTask

from checks import quad_truth_diffs, rule_score_diffs, semantic_score_diffs


def test_rule_score_boundaries():
    assert float(rule_score(torch.tensor([1.0, 1.0]), 0.7)) == pytest.approx(0.7, abs=1e-15)
    assert float(rule_score(torch.tensor([0.0, 0.4]), 0.2)) == 1.0
    assert float(rule_score(torch.tensor([0.5, 0.5]), 0.8)) == pytest.approx(0.95, abs=1e-15)
    # tends to 1 as any body truth vanishes
    vals = [float(rule_score(torch.tensor([eps, 0.9]), 0.1)) for eps in (1e-2, 1e-4, 1e-8)]
    assert vals == sorted(vals) and 1 - vals[-1] < 1e-8


def test_rule_score_monotone_in_head():
    body = torch.tensor([0.3, 0.8])
    heads = torch.linspace(0.01, 0.99, 20)
    scores = rule_score(body, heads)
    assert torch.all(scores[1:] >= scores[:-1])


def test_scores_in_open_unit_interval():
    rng = np.random.default_rng(0)
    for _ in range(20):
        P = torch.as_tensor(rng.normal(size=(3, 8)) * 3)
        s = semantic_score(P, torch.as_tensor(rng.normal(size=(2, 3, 5))),
                           torch.as_tensor(rng.normal(size=2)), torch.as_tensor(rng.normal(size=(1, 8))))
        assert 0 < float(s) < 1
        q = quad_truth(*(torch.as_tensor(rng.normal(size=4)) for _ in range(3)),
                       torch.as_tensor(rng.normal(size=(1, 12))))
        assert 0 < float(q) < 1


def test_zero_parameters_give_half():
    assert float(semantic_score(torch.zeros(3, 10), torch.zeros(1, 3, 5), torch.zeros(1),
                                torch.zeros(1, 6))) == 0.5
    assert float(quad_truth(torch.ones(2), torch.ones(2), torch.ones(2), torch.zeros(1, 6))) == 0.5


def test_equation_oracles():
    assert semantic_score_diffs(30) <= 1e-10
    assert quad_truth_diffs(30) <= 1e-10
    assert rule_score_diffs(30) <= 1e-12


def test_padding():
    rows = torch.ones(1, 4)
    out = pad_rows(rows, 3)
    assert out.shape == (3, 4) and out[1:].abs().sum() == 0
    with pytest.raises(ValueError):
        pad_rows(torch.zeros(0, 4), 3)
    with pytest.raises(ValueError):
        pad_rows(torch.ones(4, 4), 3)


def test_noise_and_gating():
    a = noise_scores(np.random.default_rng(5))
    assert a == noise_scores(np.random.default_rng(5))
    rng = np.random.default_rng(0)
    draws = np.array([noise_scores(rng) for _ in range(10_000)])
    assert np.all((draws > 0) & (draws < 1))
    assert abs(draws.mean() - 0.5) <= 0.02
    assert gated_rewards(0.8, 0.5, 0.3, 0.5) == pytest.approx((0.5, 0.0))
    assert gated_rewards(0.2, 0.9, 0.6, 0.1) == pytest.approx((0.0, 0.8))


def test_adaptive_reward():
    assert adaptive_reward(1.0, 0.4, 0.2, 0.5) == pytest.approx(1.3)
    assert adaptive_reward(0.0, 0.4, 0.2, 0.0) == pytest.approx(0.2)
    assert adaptive_reward(0.0, 0.4, 0.2, 1.0) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        adaptive_reward(0, 0, 0, 1.5)


def test_logic_loss_values():
    half = torch.tensor([0.5])
    assert float(logic_disc_loss(half, half)) == pytest.approx(2 * math.log(2))
    assert float(logic_disc_loss(torch.tensor([1 - 1e-9]), torch.tensor([1e-9]))) < 1e-8


def test_semantic_loss_cancels_on_identical_batches():
    rng = np.random.default_rng(0)
    P = torch.as_tensor(rng.normal(size=(4, 3, 8)))
    kernel, bias, W_s = (torch.as_tensor(rng.normal(size=s)) for s in ((2, 3, 5), (2,), (1, 8)))
    with_penalty = semantic_disc_loss(P, P, 5.0, np.random.default_rng(1), kernel, bias, W_s)
    # identical pairs: the interpolate equals both, so only the penalty remains
    grads = []
    for i in range(4):
        x = P[i].clone().requires_grad_(True)
        (g,) = torch.autograd.grad(semantic_score(x, kernel, bias, W_s), x)
        grads.append((g.norm() - 1) ** 2)
    expected = 5.0 * float(torch.stack(grads).mean().detach())
    assert float(with_penalty.detach()) == pytest.approx(expected, abs=1e-12)
    no_penalty = semantic_disc_loss(P, P, 0.0, np.random.default_rng(1), kernel, bias, W_s)
    assert float(no_penalty.detach()) == pytest.approx(0.0, abs=1e-15)


def test_path_to_rule_canonicalises():
    q = QueryTask(0, 1, None, 9)
    stop = 6
    # traversal goes back in time: reversed with inverse relations (R = 3)
    edges = [(0, 2, 5, 7), (5, 0, 4, 3), (4, stop, 4, 3)]
    rule = path_to_rule(edges, q, 4, stop, 3)
    assert rule.body == ((4, 3, 5, 3), (5, 5, 0, 7))
    assert rule.head == (0, 1, 4, 9)
    forward = path_to_rule([(0, 2, 5, 3), (5, 0, 4, 7)], q, 4, stop, 3)
    assert forward.body == ((0, 2, 5, 3), (5, 0, 4, 7))
    empty = path_to_rule([(0, stop, 0, 9)], q, 0, stop, 3)
    assert empty.degenerate and empty.body == ((0, stop, 0, 9),)


def test_path_matrices(tiny_model):
    adv, g = tiny_model.adversary, tiny_model.graph
    table = tiny_model.mfar.table()
    q = QueryTask(0, 0, 1, 4)
    P = adv.matrices_for([([(0, 0, 1, 0)], q), ([(0, 1, 4, 2), (4, 2, 5, 2)], q), ([], q)], table)
    assert P.shape == (3, 3, 8)
    assert P[0, 1:].abs().sum() == 0 and P[1, 2:].abs().sum() == 0
    pol = tiny_model.policy
    expected = torch.cat([pol.rel_vec([1], [2])[0] + pol.rel_vec([0])[0],
                          pol.z(table, [4], [2], [4])[0]])
    assert torch.equal(P[1, 0], expected)
    stop_row = torch.cat([pol.rel_vec([g.stop_relation], [0])[0] + pol.rel_vec([0])[0],
                          pol.z(table, [0], [4], [4])[0]])
    assert torch.equal(P[2, 0], stop_row)
    # the same edges under the inverse query give a different matrix
    P_inv = adv.matrices_for([([(0, 0, 1, 0)], q._replace(relation=3))], table)
    assert not torch.equal(P_inv[0], P[0])
    with pytest.raises(ValueError):
        adv.matrices_for([([(0, 0, 1, 0)] * 4, q)], table)


def test_rule_scores_match_per_rule_products(tiny_model):
    adv = tiny_model.adversary
    table = tiny_model.mfar.table()
    q = QueryTask(0, 0, 1, 4)
    rules = [path_to_rule([(0, 0, 1, 0)], q, 1, 6, 3),
             path_to_rule([(0, 1, 4, 2), (4, 2, 5, 3)], q, 5, 6, 3)]
    got = adv.rule_scores(rules, table).detach()
    for rule, score in zip(rules, got):
        (zs, rel, zo), _ = adv.rule_features([rule], table)
        truths = quad_truth(zs, rel, zo, tiny_model.store["adv.logic.W_r"]).detach()
        assert float(score) == pytest.approx(float(rule_score(truths[:-1], truths[-1])), abs=1e-14)
