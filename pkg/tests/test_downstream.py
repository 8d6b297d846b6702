import math

import numpy as np
import pytest

from atlas_lab.chain import BaseChain, tilted_marginals, sample_paths
from atlas_lab.downstream import DownstreamReport, NextPoiModel, evaluate_next_poi, train_next_poi
from atlas_lab.world import PoiCatalog


@pytest.fixture
def catalog():
    rng = np.random.default_rng(0)
    return PoiCatalog(rng.uniform(37, 39, 12), rng.uniform(-80, -77, 12), np.zeros(12, dtype=int), 1)


def test_unsmoothed_bigram():
    m = train_next_poi([[0, 1], [0, 1]], 3, eps=0.0)
    assert m.scores()[0, 1] == 1.0


def test_unseen_context_uniform():
    m = train_next_poi([[0, 1]], 4, eps=0.1)
    np.testing.assert_allclose(m.scores()[3], 0.25)
    m0 = train_next_poi([[0, 1]], 4, eps=0.0)
    np.testing.assert_allclose(m0.scores()[3], 0.25)


def test_scores_formula():
    m = train_next_poi([[0, 1, 1, 2], [1, 0, 0, 1]], 3, eps=0.1)
    # context 1 seen 3 times: 1->1, 1->2, 1->0
    np.testing.assert_allclose(m.scores()[1], [(1 + 0.1) / (3 + 0.3)] * 3)
    np.testing.assert_allclose(m.scores().sum(axis=1), 1.0)


def test_training_recovers_transitions():
    rng = np.random.default_rng(1)
    T = rng.dirichlet(np.ones(4), size=4)
    chain = BaseChain(np.full(4, 0.25), T, 6)
    x = sample_paths(tilted_marginals(chain), 50_000, rng)
    m = train_next_poi(x, 4, eps=0.0)
    n_from = m.unigram_counts[:, None]
    se = np.sqrt(T * (1 - T) / n_from)
    assert np.all(np.abs(m.scores() - T) <= 4 * se + 1e-12)


def test_training_errors():
    with pytest.raises(ValueError):
        train_next_poi(np.zeros((0, 3), dtype=int), 3)
    with pytest.raises(ValueError):
        train_next_poi([[0, 3]], 3)
    with pytest.raises(ValueError):
        train_next_poi([[0, 1]], 3, eps=-1)


def test_perfect_predictor(catalog):
    test = [[0, 1, 2, 3], [3, 4, 5, 6]]
    m = train_next_poi(test, 12, eps=0.0)
    acc, hr, ndcg, geo = evaluate_next_poi(m, catalog, test)
    assert acc == hr == ndcg == 1.0 and geo == 0.0


def test_rank_three_ndcg(catalog):
    bigram = np.zeros((12, 12))
    bigram[0, [5, 6, 7]] = [9, 8, 7]  # truth 7 has rank 3
    m = NextPoiModel(bigram, bigram.sum(axis=1), 0.1)
    acc, hr, ndcg, _ = evaluate_next_poi(m, catalog, [[0, 7]])
    assert acc == 0.0 and hr == 1.0
    assert ndcg == pytest.approx(1 / math.log2(4)) == pytest.approx(0.5)


def test_ties_break_to_lowest_id(catalog):
    m = train_next_poi([[1, 2]], 12, eps=0.1)  # context 0 unseen: all tied
    acc, hr, ndcg, geo = evaluate_next_poi(m, catalog, [[0, 0], [0, 3], [0, 11]])
    # truth 0 is rank 1, truth 3 rank 4, truth 11 rank 12
    assert acc == pytest.approx(1 / 3)
    assert hr == pytest.approx(2 / 3)
    assert ndcg == pytest.approx((1 + 1 / math.log2(5)) / 3)
    assert geo > 0


def test_metric_ordering_invariants(catalog):
    rng = np.random.default_rng(2)
    m = train_next_poi(rng.integers(0, 12, (40, 6)), 12)
    acc, hr, ndcg, geo = evaluate_next_poi(m, catalog, rng.integers(0, 12, (30, 6)))
    assert acc <= hr <= 1 and acc <= ndcg <= 1 and geo >= 0


def test_deterministic(catalog):
    rng = np.random.default_rng(3)
    train, test = rng.integers(0, 12, (40, 6)), rng.integers(0, 12, (30, 6))
    a = evaluate_next_poi(train_next_poi(train, 12), catalog, test)
    b = evaluate_next_poi(train_next_poi(train, 12), catalog, test)
    assert np.array_equal(a, b)


def test_short_test_trajectories_rejected(catalog):
    m = train_next_poi([[0, 1]], 12)
    with pytest.raises(ValueError):
        evaluate_next_poi(m, catalog, [[0], [1]])


def test_report_csv():
    rep = DownstreamReport({"real": np.full((2, 4), 0.5), "baseline": np.zeros((2, 4))}, ("a", "b"))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "metric,setup,a,b,Avg"
    assert len(lines) == 1 + 4 * 2
    assert rep.to_dict()["setups"]["real"]["avg"]["accuracy"] == 0.5
