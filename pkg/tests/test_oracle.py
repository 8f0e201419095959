"""The oracles themselves, on cases small enough to check by hand."""

import math

import numpy as np
import pytest

from tkgr import oracle


class FixedPolicy:
    """Stands in for OraclePolicy with hand-set action probabilities."""

    def __init__(self, table):
        self.table = table
        self.start = -1

    def initial(self):
        return [], []

    def advance(self, h, c, r, e, t, tq):
        return h + [e], c

    def probs(self, h, entity, t, tq, rq, actions):
        return self.table[tuple(h)]


def test_two_paths_to_the_same_entity_add_up():
    # 0 -> 1 -> 3 with probability 0.2 and 0 -> 2 -> 3 with probability 0.1
    edges = [(0, 0, 1, 1), (0, 0, 2, 1), (1, 0, 3, 0), (2, 0, 3, 0)]
    acts = oracle.OracleActions(edges, 9, 10, "strict")
    assert acts.actions(0, 2, 2) == [(9, 0, 2), (0, 1, 1), (0, 2, 1)]
    table = {(0,): [0.7, 0.2, 0.1], (0, 1): [0.0, 1.0], (0, 2): [0.0, 1.0]}
    marginals, paths = oracle.oracle_enumerate_paths(acts, FixedPolicy(table), 0, 0, 2, 2)
    assert marginals[3] == pytest.approx(0.3)
    assert marginals[0] == pytest.approx(0.7)
    assert sum(marginals.values()) == pytest.approx(1.0)


def test_single_path_graph():
    acts = oracle.OracleActions([(0, 0, 1, 0)], 9, 10, "strict")
    table = {(0,): [0.0, 1.0], (0, 1): [1.0]}
    marginals, _ = oracle.oracle_enumerate_paths(acts, FixedPolicy(table), 0, 0, 1, 3)
    # zero-probability endpoints are kept in the table
    assert marginals == {0: 0.0, 1: 1.0}


def test_enumeration_overflow():
    edges = [(0, 0, o, 0) for o in range(1, 6)] + [(o, 0, 0, 0) for o in range(1, 6)]
    acts = oracle.OracleActions(edges, 9, 50, "history")
    uniform = type("U", (), {"start": -1, "initial": lambda self: ([], []),
                             "advance": lambda self, h, c, *a: (h, c),
                             "probs": lambda self, h, e, t, tq, rq, a: [1 / len(a)] * len(a)})()
    with pytest.raises(oracle.PathOverflow):
        oracle.oracle_enumerate_paths(acts, uniform, 0, 0, 1, 3, limit=20)


def test_shortest_hops_by_hand():
    edges = [(0, 0, 1, 3), (1, 0, 2, 2), (0, 0, 2, 5)]
    assert oracle.oracle_shortest_hops(edges, 0, 2, 4, 3, "strict") == 2
    assert oracle.oracle_shortest_hops(edges, 0, 2, 6, 3, "strict") == 1
    assert oracle.oracle_shortest_hops(edges, 0, 2, 4, 1, "strict") is None


def test_filtered_rank_by_hand():
    # ten reached entities, gold unreached with the lowest id among the rest
    scores = {e: 1.0 / e for e in range(1, 11)}
    assert oracle.oracle_filtered_rank(scores, 0, set()) == 11
    # tie with a higher id: gold first
    assert oracle.oracle_filtered_rank({2: 0.5, 5: 0.5}, 2, set()) == 1
    assert oracle.oracle_filtered_rank({2: 0.5, 5: 0.5}, 5, {2}) == 1


def test_metrics_and_true_answers():
    m = oracle.oracle_metrics([1, 2, 4])
    assert m["mrr"] == pytest.approx(7 / 12)
    facts = [(0, 0, 1, 3), (0, 0, 2, 3), (4, 0, 0, 3), (0, 0, 5, 2)]
    assert oracle.oracle_true_answers(facts, 2, 0, 0, 3) == {1, 2}
    assert oracle.oracle_true_answers(facts, 2, 0, 2, 3) == {4}


def test_zero_parameter_values():
    assert oracle.oracle_semantic(np.zeros((3, 10)), np.zeros((1, 3, 5)), [0.0],
                                  np.zeros((1, 6))) == 0.5
    assert oracle.oracle_quad_truth([1.0], [2.0], [3.0], [[0.0, 0.0, 0.0]]) == 0.5
    h, c = oracle.oracle_gated_cell([0.0], [0.0], [0.0], [[0.0]] * 4, [[0.0]] * 4, [0.0] * 4)
    assert h == [0.0] and c == [0.0]


def test_central_difference_on_a_quadratic():
    x = np.array([1.0, -2.0, 0.5])
    g = oracle.central_difference(lambda: float((x ** 2).sum() + math.sin(x[0])), x)
    assert np.allclose(g, 2 * np.array([1.0, -2.0, 0.5]) + [math.cos(1.0), 0, 0], atol=1e-7)
    assert np.array_equal(x, [1.0, -2.0, 0.5])


def test_oracle_shares_no_code_with_the_package():
    import ast
    import inspect
    tree = ast.parse(inspect.getsource(oracle))
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            assert node.level == 0 and not (node.module or "").startswith("tkgr")
        if isinstance(node, ast.Import):
            assert all(not a.name.startswith(("tkgr", "torch", "numpy")) for a in node.names)
