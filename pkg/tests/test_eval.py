import math
import warnings
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dhrec.evaluation import (
    MetricsError,
    MetricsReport,
    RankedQuery,
    build_queries,
    conversion_rate,
    hits_at_k,
    make_query,
    mrr,
    rank_actions,
    summarize,
    time_split,
)


def q_at(rank, n=8, qid=0):
    """Query whose relevant action (0) sits at the given 1-based rank, or no relevant action."""
    if rank is None:
        return RankedQuery(qid, tuple(range(n)), None)
    order = list(range(1, n))
    order.insert(rank - 1, 0)
    return RankedQuery(qid, tuple(order), rank)


def test_mrr_fixtures():
    assert mrr([q_at(1), q_at(1)]) == 1.0
    assert mrr([q_at(2)]) == 0.5
    assert mrr([q_at(1), q_at(2), q_at(4)]) == (1 + 0.5 + 0.25) / 3


def test_mrr_absent_relevant_counts_zero():
    assert mrr([q_at(1), q_at(None)]) == 0.5


def test_hits_fixtures():
    assert hits_at_k([q_at(3)], 1) == 0.0
    assert hits_at_k([q_at(3)], 3) == 1.0
    assert hits_at_k([q_at(None), q_at(None)], 5) == 0.0
    assert hits_at_k([q_at(1), q_at(5), q_at(2), q_at(9, n=9)], 2) == 0.5


def test_conversion_fixtures():
    s = lambda deal: [SimpleNamespace(deal=False), SimpleNamespace(deal=deal)]
    assert conversion_rate([s(False)] * 4) == 0.0
    assert conversion_rate([s(True)] * 4) == 1.0
    assert conversion_rate([s(True)] * 3 + [s(False)] * 5) == 0.375


def test_errors():
    with pytest.raises(MetricsError):
        mrr([])
    with pytest.raises(MetricsError):
        hits_at_k([q_at(1)], 0)
    with pytest.raises(MetricsError):
        conversion_rate([])
    with pytest.raises(MetricsError):
        RankedQuery(0, (0, 0, 1), 1)


def rec(sid, ts, reward=0.0, action=0):
    return SimpleNamespace(session_id=sid, timestamp=ts, reward=reward, action=action)


def test_time_split_edges():
    records = [rec(0, 5), rec(0, 6), rec(1, 9)]
    with pytest.warns(UserWarning):
        train, valid = time_split(records, 0)
    assert train == [] and valid == records
    with pytest.warns(UserWarning):
        train, valid = time_split(records, 100)
    assert valid == [] and train == records


def test_time_split_median_brute_force():
    g = np.random.default_rng(0)
    starts = list(range(0, 100, 10))
    records = [rec(i, s + k) for i, s in enumerate(starts) for k in range(int(g.integers(1, 30)))]
    split = 45
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        train, valid = time_split(records, split)
    first = {}
    for r in records:
        first.setdefault(r.session_id, r.timestamp)
    assert {r.session_id for r in train} == {i for i, s in first.items() if s < split} == {0, 1, 2, 3, 4}
    assert {r.session_id for r in valid} == {5, 6, 7, 8, 9}
    # sessions stay whole even when they run past the split
    assert any(r.timestamp >= split for r in train)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 50)), max_size=60), st.integers(-5, 60))
def test_time_split_partitions(pairs, split):
    records = [rec(sid, ts) for sid, ts in pairs]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        train, valid = time_split(records, split)
    assert len(train) + len(valid) == len(records)
    assert {id(r) for r in train}.isdisjoint({id(r) for r in valid})
    assert {r.session_id for r in train}.isdisjoint({r.session_id for r in valid})


queries_strategy = st.lists(st.one_of(st.none(), st.integers(1, 8)), min_size=1, max_size=40)


@settings(max_examples=150)
@given(queries_strategy, st.randoms(use_true_random=False))
def test_metric_invariants(ranks, rnd):
    qs = [q_at(r, qid=i) for i, r in enumerate(ranks)]
    shuffled = list(qs)
    rnd.shuffle(shuffled)
    assert mrr(shuffled) == pytest.approx(mrr(qs), abs=1e-12)
    hits = [hits_at_k(qs, k) for k in range(1, 9)]
    assert all(a <= b for a, b in zip(hits, hits[1:]))
    assert hits[-1] == sum(r is not None for r in ranks) / len(ranks)
    # brute force of the rank-bound: reciprocal ranks past the first are at most 1/2
    brute = sum(1.0 if r == 1 else (1.0 / r if r else 0.0) for r in ranks) / len(ranks)
    assert mrr(qs) == pytest.approx(brute, abs=1e-12)
    assert mrr(qs) <= hits[0] + 0.5 * (1 - hits[0]) + 1e-12


def test_rank_ties_keep_lowest_index():
    assert rank_actions(np.array([0.2, 0.5, 0.5, 0.1])) == (1, 2, 0, 3)
    q = make_query(0, np.array([0.2, 0.5, 0.5, 0.1]), 2)
    assert q.relevant_rank == 2


def test_random_ranking_mrr_matches_harmonic_expectation():
    g = np.random.default_rng(0)
    records = [rec(0, 0, reward=1.0, action=int(g.integers(8))) for _ in range(10_000)]
    qs = build_queries(records, lambda part: g.random((len(part), 8)))
    expected = sum(1 / r for r in range(1, 9)) / 8
    assert expected == pytest.approx(0.3397, abs=1e-4)
    assert abs(mrr(qs) - expected) < 0.01


def test_build_queries_relevance():
    records = [rec(0, 0, 1.0, 2), rec(0, 1, 0.0, 1)]
    qs = build_queries(records, lambda part: np.tile(np.arange(4.0), (len(part), 1)))
    assert qs[0].relevant_rank == 2 and qs[1].relevant_rank is None


def test_report_round_trip():
    qs = [q_at(1), q_at(3), q_at(None)]
    sessions = [[SimpleNamespace(deal=True, reward=1.0)], [SimpleNamespace(deal=False, reward=0.0)]]
    r = summarize("sac", qs, sessions, "abc", 3, policy_entropy=1.5)
    assert r.n_relevant == 2 and r.mrr_relevant == pytest.approx((1 + 1 / 3) / 2)
    assert r.conversion_rate == 0.5 and r.mean_return == 0.5
    back = MetricsReport.from_json(r.to_json())
    assert back == r and back.to_json() == r.to_json()
