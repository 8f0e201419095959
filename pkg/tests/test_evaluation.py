import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tkgr.env import QueryTask
from tkgr.errors import ContractViolation
from tkgr.evaluation import MetricsReport, percent, rank_of_gold, time_aware_filter
from tkgr.graph import Quadruple, build_graph
from tkgr.oracle import oracle_filtered_rank


def test_rank_list_rendering():
    rep = MetricsReport.from_ranks([1, 2, 4])
    assert rep.mrr == pytest.approx((1 + 0.5 + 0.25) / 3)
    assert percent(rep.mrr) == "58.3"
    assert rep.hits[1] == pytest.approx(1 / 3) and rep.hits[3] == pytest.approx(2 / 3)
    assert percent(MetricsReport.from_ranks([1, 1, 1]).hits[10]) == "100.0"


def test_empty_rank_list_rejected():
    with pytest.raises(ValueError):
        MetricsReport.from_ranks([])


def test_csv_and_table_contain_percentages():
    rep = MetricsReport.from_ranks([1, 2, 4])
    assert "MRR,0.5833333333,58.3" in rep.to_csv()
    assert "58.3" in rep.to_table()


def test_rank_ties_and_filter():
    scores = {3: 0.5, 1: 0.5, 2: 0.9}
    assert rank_of_gold(scores, 3, set(), 6) == 3  # 2 higher, 1 ties with lower id
    assert rank_of_gold(scores, 3, {2}, 6) == 2
    # gold never reached: every scored entity then lower ids first
    assert rank_of_gold(scores, 4, set(), 6) == 3 + 1 + 1  # 3 scored, entity 0 unscored
    with pytest.raises(ContractViolation):
        rank_of_gold(scores, 3, {3}, 6)


def test_time_aware_filter_only_removes_cotemporal_answers():
    g = build_graph([Quadruple(0, 0, 1, 5), Quadruple(0, 0, 2, 5), Quadruple(0, 0, 3, 4)], 4, 1)
    assert time_aware_filter(QueryTask(0, 0, 1, 5), g) == {2}


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.integers(0, 9), st.sampled_from([0.1, 0.2, 0.5, 0.9]), max_size=10),
       st.integers(0, 9), st.sets(st.integers(0, 9), max_size=4))
def test_rank_matches_linear_scan(scores, gold, filt):
    filt = filt - {gold}
    assert rank_of_gold(scores, gold, filt, 10) == oracle_filtered_rank(scores, gold, filt)
