"""Aggregate feature maps and region/group level feature aggregates."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .chain import ChainMarginals
from .world import GroundTruthModel, PoiCatalog, TrajectorySet, as_token_array


class FeatureMapKind(str, Enum):
    POI_HISTOGRAM = "poi_histogram"
    CATEGORY_HISTOGRAM = "category_histogram"
    CATEGORY_TRANSITION = "category_transition"


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """A normalized-histogram feature map φ over fixed-length trajectories.

    The same object also describes the matching exponential tilt: ``expand``
    turns natural parameters over the feature space into per-POI (unary) or
    per-POI-pair (pairwise) log weights, and ``count_scale`` converts normalized
    features into raw counts (T unigram slots or T-1 bigram slots).
    """

    kind: FeatureMapKind
    categories: np.ndarray
    n_categories: int

    @classmethod
    def for_catalog(cls, kind, catalog: PoiCatalog) -> "FeatureMap":
        return cls(FeatureMapKind(kind), catalog.category, catalog.n_categories)

    @property
    def V(self) -> int:
        return self.categories.size

    @property
    def m(self) -> int:
        if self.kind is FeatureMapKind.POI_HISTOGRAM:
            return self.V
        if self.kind is FeatureMapKind.CATEGORY_HISTOGRAM:
            return self.n_categories
        return self.n_categories ** 2

    @property
    def is_pairwise(self) -> bool:
        return self.kind is FeatureMapKind.CATEGORY_TRANSITION

    def count_scale(self, T: int) -> int:
        if self.is_pairwise:
            if T < 2:
                raise ValueError("category-transition features need trajectories of length >= 2")
            return T - 1
        return T

    def apply(self, trajectories) -> np.ndarray:
        """φ for every trajectory; returns an (n, m) array."""
        tokens = as_token_array(trajectories)
        n, T = tokens.shape
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.V):
            raise ValueError(f"token out of range for a vocabulary of {self.V} POIs")
        scale = self.count_scale(T)
        if self.kind is FeatureMapKind.POI_HISTOGRAM:
            codes, m = tokens, self.V
        elif self.kind is FeatureMapKind.CATEGORY_HISTOGRAM:
            codes, m = self.categories[tokens], self.n_categories
        else:
            cats = self.categories[tokens]
            codes, m = cats[:, :-1] * self.n_categories + cats[:, 1:], self.n_categories ** 2
        rows = np.repeat(np.arange(n), codes.shape[1])
        out = np.zeros((n, m))
        np.add.at(out, (rows, codes.reshape(-1)), 1.0)
        return out / scale

    def expected(self, marginals: ChainMarginals) -> np.ndarray:
        """E[φ(X)] under a chain with the given exact marginals."""
        if self.kind is FeatureMapKind.POI_HISTOGRAM:
            return marginals.mean_occupancy()
        if self.kind is FeatureMapKind.CATEGORY_HISTOGRAM:
            return self.pool_pois(marginals.mean_occupancy())
        T = marginals.horizon
        self.count_scale(T)
        pair = marginals.pair
        if pair is None:
            pair = marginals.position[:-1, :, None] * marginals.steps
        return self.pool_pairs(pair.sum(axis=0)) / (T - 1)

    def pool_pois(self, poi_values: np.ndarray) -> np.ndarray:
        """Sum the last (POI) axis into categories."""
        poi_values = np.asarray(poi_values)
        out = np.zeros(poi_values.shape[:-1] + (self.n_categories,))
        for c in range(self.n_categories):
            out[..., c] = poi_values[..., self.categories == c].sum(axis=-1)
        return out

    def pool_pairs(self, pair_values: np.ndarray) -> np.ndarray:
        C = self.n_categories
        onehot = np.eye(C)[self.categories]  # (V, C)
        return (onehot.T @ pair_values @ onehot).reshape(C * C)

    def expand(self, params):
        """Natural parameters over the feature space -> (unary (V,), pairwise (V, V) or None)."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.m,):
            raise ValueError(f"expected {self.m} tilt parameters, got {params.shape}")
        if self.kind is FeatureMapKind.POI_HISTOGRAM:
            return params, None
        if self.kind is FeatureMapKind.CATEGORY_HISTOGRAM:
            return params[self.categories], None
        C = self.n_categories
        table = params.reshape(C, C)
        return np.zeros(self.V), table[self.categories[:, None], self.categories[None, :]]

    def pullback(self, unary_grad=None, pair_grad=None) -> np.ndarray:
        """Adjoint of ``expand`` for POI-level gradients."""
        if self.kind is FeatureMapKind.POI_HISTOGRAM:
            return np.asarray(unary_grad)
        if self.kind is FeatureMapKind.CATEGORY_HISTOGRAM:
            return self.pool_pois(unary_grad)
        return self.pool_pairs(pair_grad)


def phi_apply(feature_map: FeatureMap, trajectory) -> np.ndarray:
    tokens = getattr(trajectory, "tokens", trajectory)
    return feature_map.apply(np.asarray(tokens, dtype=np.int64)[None, :])[0]


@dataclass(frozen=True, eq=False)
class AggregateMatrix:
    """Rows are regions (or groups), columns feature indices.

    ``sample_counts[i]`` is the number of trajectories averaged into row ``i``;
    0 marks an exact (population) row.
    """

    values: np.ndarray
    sample_counts: np.ndarray
    row_kind: str = "region"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        counts = np.asarray(self.sample_counts, dtype=np.int64)
        if values.ndim != 2 or counts.shape != (values.shape[0],):
            raise ValueError("values must be (rows, m) with one sample count per row")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_counts", counts)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def exact(cls, values, row_kind="region") -> "AggregateMatrix":
        values = np.asarray(values, dtype=float)
        return cls(values, np.zeros(values.shape[0], dtype=np.int64), row_kind)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.row_kind, "n"] + [f"f{j}" for j in range(self.values.shape[1])])
        for i, (row, n) in enumerate(zip(self.values, self.sample_counts)):
            writer.writerow([i, int(n)] + [f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path) -> "AggregateMatrix":
        return cls.parse_csv(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def parse_csv(cls, text: str) -> "AggregateMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        return cls(
            np.array([[float(v) for v in r[2:]] for r in body]).reshape(len(body), len(header) - 2),
            np.array([int(r[1]) for r in body], dtype=np.int64),
            header[0],
        )


def empirical_regional_aggregates(
    feature_map: FeatureMap, trajectories: TrajectorySet, n_regions: int | None = None,
    allow_empty: bool = False,
) -> AggregateMatrix:
    """Row g is the mean of φ over the region-g trajectories (labels unused)."""
    regions = trajectories.regions
    if (regions < 0).any():
        raise ValueError("every trajectory needs a region id")
    G = int(regions.max()) + 1 if n_regions is None else int(n_regions)
    phi = feature_map.apply(trajectories)
    values = np.zeros((G, feature_map.m))
    counts = np.bincount(regions, minlength=G)[:G]
    for g in range(G):
        if counts[g] == 0:
            if not allow_empty:
                raise ValueError(f"region {g} has no trajectories")
            continue
        values[g] = phi[regions == g].mean(axis=0)
    return AggregateMatrix(values, counts, "region")


def exact_group_means(feature_map: FeatureMap, model: GroundTruthModel) -> AggregateMatrix:
    """μ(d) = E[φ(X) | group d], computed from exact chain marginals (no sampling)."""
    feature_map.count_scale(model.T)
    values = np.stack([feature_map.expected(model.marginals(d)) for d in range(model.K)])
    return AggregateMatrix.exact(values, "group")


def exact_regional_aggregates(composition, group_means) -> AggregateMatrix:
    """V = P M with M stored group-by-feature (rows are μ(d))."""
    P = np.asarray(getattr(composition, "P", composition), dtype=float)
    M = np.asarray(getattr(group_means, "values", group_means), dtype=float)
    if P.ndim != 2 or M.ndim != 2 or P.shape[1] != M.shape[0]:
        raise ValueError(f"composition {P.shape} and group means {M.shape} do not conform")
    return AggregateMatrix.exact(P @ M, "region")
