"""Finite samples: how much the partition amplifies sampling noise.

Aggregates now come from n trajectories per region. The recovery error
should shrink like 1/sqrt(n) and stay under the high-probability bound.
"""
import numpy as np

from atlas_lab import WorldConfig, build_world, exact_group_means
from atlas_lab.partitions import random_composition
from atlas_lab.features import empirical_regional_aggregates
from atlas_lab.recovery import bound_report, recover_group_means
from atlas_lab.tilt import poi_feature_map
from atlas_lab.world import sample_population

catalog, model = build_world(WorldConfig(V=20, C=4, K=4, G=6, T=8, seed=3))
fmap = poi_feature_map(catalog.V)
M_star = exact_group_means(fmap, model).values
comp = random_composition(6, 4, np.random.default_rng(3))

print("   n   mean |M_hat - M*|   bound (delta=0.1)")
for n in (100, 400, 1600, 6400):
    errs = []
    for rep in range(20):
        pop = sample_population(model, comp, np.full(6, n), np.random.default_rng([n, rep]))
        rec = recover_group_means(comp, empirical_regional_aggregates(fmap, pop, 6))
        errs.append(np.linalg.norm(rec.M_hat - M_star))
    bound = bound_report(comp, [n] * 6, m=catalog.V, delta=0.1).total_bound
    print(f"{n:5d}   {np.mean(errs):.4f}             {bound:.3f}")
