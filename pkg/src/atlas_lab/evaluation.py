"""Per-group trajectory fidelity metrics: spatial, travel distance, trip and POI-frequency JSD."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .divergence import js_divergence
from .world import PoiCatalog, as_token_array

EARTH_RADIUS_KM = 6371.0088
METRICS = ("spatial_jsd", "travel_jsd", "trip_jsd", "poi_freq_jsd")


@dataclass(frozen=True)
class EvalGrid:
    bbox: tuple  # (lat_min, lat_max, lon_min, lon_max)
    n_rows: int = 40
    n_cols: int = 40

    def __post_init__(self):
        lat0, lat1, lon0, lon1 = map(float, self.bbox)
        if not (lat0 < lat1 and lon0 < lon1):
            raise ValueError(f"degenerate bounding box {self.bbox}")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid needs at least one row and column")
        object.__setattr__(self, "bbox", (lat0, lat1, lon0, lon1))

    @classmethod
    def covering(cls, catalog: PoiCatalog, n_rows: int = 40, n_cols: int = 40, pad: float = 1e-9):
        return cls((catalog.lat.min() - pad, catalog.lat.max() + pad,
                    catalog.lon.min() - pad, catalog.lon.max() + pad), n_rows, n_cols)

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def cell_of(self, lat, lon) -> np.ndarray:
        """Row-major cell index; points outside the box land in the border cells."""
        lat0, lat1, lon0, lon1 = self.bbox
        r = np.floor((np.asarray(lat) - lat0) / (lat1 - lat0) * self.n_rows).astype(np.int64)
        c = np.floor((np.asarray(lon) - lon0) / (lon1 - lon0) * self.n_cols).astype(np.int64)
        return np.clip(r, 0, self.n_rows - 1) * self.n_cols + np.clip(c, 0, self.n_cols - 1)


def default_distance_edges() -> np.ndarray:
    """20 log-spaced edges from 0.1 km to 1000 km; with under/overflow that is 21 bins."""
    return np.logspace(-1, 3, 20)


def haversine_km(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(a, dtype=float)) for a in (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def _tokens(trajectories, V=None):
    tokens = as_token_array(trajectories)
    if tokens.shape[0] == 0 or tokens.shape[1] == 0:
        raise ValueError("empty trajectory set")
    if V is not None and (tokens.min() < 0 or tokens.max() >= V):
        raise ValueError(f"token out of range for V={V}")
    return tokens


def jsd_from_codes(codes_a, codes_b) -> float:
    """JSD between the empirical distributions of two integer code samples."""
    codes_a = np.ravel(codes_a)
    codes_b = np.ravel(codes_b)
    support, inverse = np.unique(np.concatenate([codes_a, codes_b]), return_inverse=True)
    pa = np.bincount(inverse[:codes_a.size], minlength=support.size)
    pb = np.bincount(inverse[codes_a.size:], minlength=support.size)
    return js_divergence(pa / pa.sum(), pb / pb.sum())


def spatial_jsd(grid: EvalGrid, catalog: PoiCatalog, real, synth) -> float:
    real, synth = _tokens(real, catalog.V), _tokens(synth, catalog.V)
    cells = grid.cell_of(catalog.lat, catalog.lon)
    return jsd_from_codes(cells[real], cells[synth])


def travel_distances(catalog: PoiCatalog, trajectories) -> np.ndarray:
    """Total haversine length of each trajectory, summed over consecutive legs."""
    tokens = _tokens(trajectories, catalog.V)
    if tokens.shape[1] < 2:
        return np.zeros(tokens.shape[0])
    a, b = tokens[:, :-1], tokens[:, 1:]
    legs = haversine_km(catalog.lat[a], catalog.lon[a], catalog.lat[b], catalog.lon[b])
    return legs.sum(axis=1)


def travel_distance_jsd(bins, catalog: PoiCatalog, real, synth) -> float:
    edges = default_distance_edges() if bins is None else np.asarray(bins, dtype=float)
    if edges.ndim != 1 or (np.diff(edges) <= 0).any():
        raise ValueError("distance bin edges must be strictly increasing")
    ra = np.searchsorted(edges, travel_distances(catalog, real), side="right")
    sa = np.searchsorted(edges, travel_distances(catalog, synth), side="right")
    return jsd_from_codes(ra, sa)


def trip_jsd(grid: EvalGrid, catalog: PoiCatalog, real, synth) -> float:
    real, synth = _tokens(real, catalog.V), _tokens(synth, catalog.V)
    cells = grid.cell_of(catalog.lat, catalog.lon)
    od = lambda t: cells[t[:, 0]] * grid.n_cells + cells[t[:, -1]]
    return jsd_from_codes(od(real), od(synth))


def poi_frequency_jsd(V: int, real, synth) -> float:
    real, synth = _tokens(real, V), _tokens(synth, V)
    return js_divergence(np.bincount(real.ravel(), minlength=V) / real.size,
                         np.bincount(synth.ravel(), minlength=V) / synth.size)


def gap_closed(metric_baseline: float, metric_strong: float, metric_atlas: float) -> float:
    """``1 - (atlas - strong) / (baseline - strong)``; NaN when baseline equals strong."""
    denom = metric_baseline - metric_strong
    if denom == 0:
        return float("nan")
    return 1.0 - (metric_atlas - metric_strong) / denom


@dataclass(frozen=True, eq=False)
class GroupEvalReport:
    per_group: np.ndarray  # (K, 4) in METRICS order
    labels: tuple = ()

    @property
    def avg(self) -> np.ndarray:
        return self.per_group.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.per_group.std(axis=0)

    def metric(self, name: str) -> np.ndarray:
        return self.per_group[:, METRICS.index(name)]

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "per_group": {m: self.per_group[:, i].tolist() for i, m in enumerate(METRICS)},
            "avg": dict(zip(METRICS, self.avg.tolist())),
            "std": dict(zip(METRICS, self.std.tolist())),
        }

    def to_csv(self) -> str:
        """One row per metric; group columns followed by Avg and Std."""
        labels = list(self.labels) or [f"g{d}" for d in range(self.per_group.shape[0])]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric"] + labels + ["Avg", "Std"])
        for i, name in enumerate(METRICS):
            col = self.per_group[:, i]
            writer.writerow([name] + [f"{v:.6f}" for v in col] + [f"{col.mean():.6f}", f"{col.std():.6f}"])
        return buf.getvalue()


def evaluate_group(grid: EvalGrid, catalog: PoiCatalog, real, synth, distance_edges=None) -> np.ndarray:
    return np.array([
        spatial_jsd(grid, catalog, real, synth),
        travel_distance_jsd(distance_edges, catalog, real, synth),
        trip_jsd(grid, catalog, real, synth),
        poi_frequency_jsd(catalog.V, real, synth),
    ])


def evaluate_groups(grid: EvalGrid, catalog: PoiCatalog, real_by_group, synth_by_group,
                    distance_edges=None, labels=()) -> GroupEvalReport:
    if len(real_by_group) != len(synth_by_group):
        raise ValueError("need one real and one synthetic set per group")
    rows = [evaluate_group(grid, catalog, r, s, distance_edges) for r, s in zip(real_by_group, synth_by_group)]
    return GroupEvalReport(np.array(rows), tuple(labels))
