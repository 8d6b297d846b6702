import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from atlas_lab.chain import BaseChain
from atlas_lab.features import (
    AggregateMatrix,
    FeatureMap,
    FeatureMapKind,
    empirical_regional_aggregates,
    exact_group_means,
    exact_regional_aggregates,
    phi_apply,
)
from atlas_lab.recovery import finite_sample_bound
from atlas_lab.world import GroundTruthModel, TrajectorySet, WorldConfig, build_world, sample_population

KINDS = list(FeatureMapKind)


def fmap(kind, categories, C):
    return FeatureMap(FeatureMapKind(kind), np.asarray(categories), C)


def test_poi_histogram_direct_count():
    np.testing.assert_allclose(phi_apply(fmap("poi_histogram", [0, 0, 0], 1), [0, 0, 1]), [2 / 3, 1 / 3, 0])


def test_category_transition_row_major():
    out = phi_apply(fmap("category_transition", [0, 1, 0], 2), [0, 1, 0])
    np.testing.assert_allclose(out, [0, 0.5, 0.5, 0])


def test_category_histogram():
    np.testing.assert_allclose(phi_apply(fmap("category_histogram", [0, 1, 0, 2], 3), [3, 0, 1, 1]), [0.25, 0.5, 0.25])


def test_bigram_needs_two_tokens():
    with pytest.raises(ValueError):
        phi_apply(fmap("category_transition", [0, 1], 2), [1])


def test_token_out_of_range():
    with pytest.raises(ValueError):
        phi_apply(fmap("poi_histogram", [0, 0], 1), [0, 2])


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(KINDS), st.lists(st.integers(0, 5), min_size=2, max_size=12))
def test_feature_vectors_are_bounded_histograms(kind, path):
    categories = [0, 1, 2, 0, 1, 2]
    phi = phi_apply(fmap(kind, categories, 3), path)
    assert (phi >= 0).all()
    assert abs(phi.sum() - 1) <= 1e-12
    assert np.linalg.norm(phi) <= 1 + 1e-12
    ref = {
        FeatureMapKind.POI_HISTOGRAM: lambda: oracles.poi_histogram(path, 6),
        FeatureMapKind.CATEGORY_HISTOGRAM: lambda: oracles.category_histogram(path, categories, 3),
        FeatureMapKind.CATEGORY_TRANSITION: lambda: oracles.category_bigrams(path, categories, 3),
    }[kind]()
    np.testing.assert_allclose(phi, ref, atol=1e-15)


def test_dimensions():
    assert fmap("poi_histogram", [0, 1, 1, 0], 2).m == 4
    assert fmap("category_histogram", [0, 1, 1, 0], 2).m == 2
    assert fmap("category_transition", [0, 1, 1, 0], 2).m == 4


def test_empirical_aggregates_examples():
    f = fmap("poi_histogram", [0, 0], 1)
    one_each = TrajectorySet([[0, 0], [1, 0]], None, [0, 1])
    agg = empirical_regional_aggregates(f, one_each)
    np.testing.assert_allclose(agg.values, [[1, 0], [0.5, 0.5]])
    assert list(agg.sample_counts) == [1, 1]
    two = TrajectorySet([[0, 0], [1, 1]], None, [0, 0])
    np.testing.assert_allclose(empirical_regional_aggregates(f, two).values, [[0.5, 0.5]])


def test_empirical_aggregates_empty_region():
    f = fmap("poi_histogram", [0, 0], 1)
    ts = TrajectorySet([[0, 0]], None, [1])
    with pytest.raises(ValueError):
        empirical_regional_aggregates(f, ts)
    agg = empirical_regional_aggregates(f, ts, allow_empty=True)
    assert agg.sample_counts[0] == 0
    with pytest.raises(ValueError):
        empirical_regional_aggregates(f, TrajectorySet([[0, 0]]))  # no region ids


def test_empirical_aggregates_within_sampling_bound():
    """Over 1000 draws the sampled rows stay inside the δ = 0.01 envelope in ≥ 99% of draws."""
    catalog, model = build_world(WorldConfig(V=6, C=2, K=2, G=3, T=4, seed=5))
    f = FeatureMap.for_catalog("poi_histogram", catalog)
    P = np.array([[1, 0], [0.5, 0.5], [0.2, 0.8]])
    exact = exact_regional_aggregates(P, exact_group_means(f, model)).values
    n = 50
    eps = finite_sample_bound(1.0, f.m, 3, n, 0.01)
    rng = np.random.default_rng(0)
    inside = 0
    for _ in range(1000):
        pop = sample_population(model, P, [n] * 3, rng)
        err = np.linalg.norm(empirical_regional_aggregates(f, pop).values - exact)
        inside += err <= eps
    assert inside >= 990


def test_exact_group_means_zero_tilt():
    catalog, model = build_world(WorldConfig(V=7, C=2, K=3, G=3, T=5, tilt_scale=0.0))
    M = exact_group_means(FeatureMap.for_catalog("poi_histogram", catalog), model).values
    np.testing.assert_allclose(M, np.repeat(M[:1], 3, axis=0), atol=1e-15)
    np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-12)


def test_exact_group_means_single_step():
    model = GroundTruthModel(BaseChain([0.5, 0.5], np.eye(2), 1), tilts=[[math.log(3), 0.0]])
    M = exact_group_means(fmap("poi_histogram", [0, 0], 1), model).values
    np.testing.assert_allclose(M, [[0.75, 0.25]], atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("target", ["unigram", "transition"])
def test_exact_group_means_enumeration(kind, target):
    catalog, model = build_world(WorldConfig(V=3, C=2, K=2, G=2, T=3, seed=8, tilt_target=target))
    f = FeatureMap.for_catalog(kind, catalog)
    M = exact_group_means(f, model).values
    cats = catalog.category
    phi = {
        FeatureMapKind.POI_HISTOGRAM: lambda x: oracles.poi_histogram(x, 3),
        FeatureMapKind.CATEGORY_HISTOGRAM: lambda x: oracles.category_histogram(x, cats, 2),
        FeatureMapKind.CATEGORY_TRANSITION: lambda x: oracles.category_bigrams(x, cats, 2),
    }[FeatureMapKind(kind)]
    for d in range(2):
        chain, lam = model.group_chain(d)
        paths, probs, _ = oracles.enumerate_paths(chain.initial, chain.transition, 3, lam)
        np.testing.assert_allclose(M[d], oracles.expectation(paths, probs, phi), atol=1e-10)


def test_exact_group_means_bigram_needs_T2():
    catalog, model = build_world(WorldConfig(V=3, C=2, K=2, G=2, T=1))
    with pytest.raises(ValueError):
        exact_group_means(FeatureMap.for_catalog("category_transition", catalog), model)


def test_exact_regional_aggregates(rng):
    M = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(exact_regional_aggregates(np.eye(2), M).values, M)
    np.testing.assert_allclose(exact_regional_aggregates([[0.5, 0.5]], M).values, [[0.5, 0.5]])
    P = rng.dirichlet(np.ones(4), size=6)
    M = rng.dirichlet(np.ones(9), size=4)
    V = exact_regional_aggregates(P, M).values
    np.testing.assert_allclose(V.sum(axis=1), 1.0, atol=1e-12)
    M2 = rng.dirichlet(np.ones(9), size=4)
    np.testing.assert_allclose(exact_regional_aggregates(P, 0.3 * M + 0.7 * M2).values,
                               0.3 * V + 0.7 * exact_regional_aggregates(P, M2).values, atol=1e-14)
    with pytest.raises(ValueError):
        exact_regional_aggregates(P, M[:3])


def test_aggregate_csv_round_trip(tmp_path, rng):
    agg = AggregateMatrix(rng.dirichlet(np.ones(5), size=3), [10, 0, 7], "region")
    text = agg.to_csv(tmp_path / "a.csv")
    assert text.splitlines()[0] == "region,n,f0,f1,f2,f3,f4"
    back = AggregateMatrix.from_csv(tmp_path / "a.csv")
    assert np.array_equal(back.values, agg.values)
    assert np.array_equal(back.sample_counts, agg.sample_counts)
    assert back.row_kind == "region"


def test_expand_and_pullback_are_adjoint(rng):
    for kind in KINDS:
        f = fmap(kind, [0, 1, 2, 0, 1], 3)
        theta = rng.standard_normal(f.m)
        unary, pair = f.expand(theta)
        if f.is_pairwise:
            G = rng.standard_normal((5, 5))
            assert np.sum(pair * G) == pytest.approx(theta @ f.pullback(pair_grad=G), abs=1e-12)
        else:
            g = rng.standard_normal(5)
            assert unary @ g == pytest.approx(theta @ f.pullback(unary_grad=g), abs=1e-12)
