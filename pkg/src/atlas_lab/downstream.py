"""Next-POI prediction with a smoothed bigram count model."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .evaluation import haversine_km
from .world import PoiCatalog, as_token_array

DEFAULT_EPS = 0.1
DOWNSTREAM_METRICS = ("accuracy", "hr_at_10", "ndcg_at_10", "geo_error_km")


@dataclass(frozen=True, eq=False)
class NextPoiModel:
    bigram_counts: np.ndarray  # (V, V), [prev, next]
    unigram_counts: np.ndarray  # (V,), how often each POI appears as a context
    smoothing_eps: float = DEFAULT_EPS
    group: int = -1

    @property
    def V(self) -> int:
        return self.unigram_counts.size

    def scores(self) -> np.ndarray:
        """Row u holds P(next = v | prev = u); unseen contexts are uniform."""
        num = self.bigram_counts + self.smoothing_eps
        den = self.unigram_counts[:, None] + self.V * self.smoothing_eps
        with np.errstate(invalid="ignore", divide="ignore"):
            out = num / den
        out[den[:, 0] == 0] = 1.0 / self.V
        return out


def train_next_poi(trajectories, V: int, eps: float = DEFAULT_EPS, group: int = -1) -> NextPoiModel:
    tokens = as_token_array(trajectories)
    if tokens.size == 0:
        raise ValueError("cannot train a next-POI model on an empty corpus")
    if eps < 0:
        raise ValueError("smoothing eps must be nonnegative")
    if tokens.min() < 0 or tokens.max() >= V:
        raise ValueError(f"token out of range for V={V}")
    prev, nxt = tokens[:, :-1].ravel(), tokens[:, 1:].ravel()
    bigram = np.zeros((V, V))
    np.add.at(bigram, (prev, nxt), 1.0)
    return NextPoiModel(bigram, bigram.sum(axis=1), float(eps), int(group))


def _events(test):
    tokens = as_token_array(test)
    if tokens.ndim != 2 or tokens.shape[1] < 2 or tokens.shape[0] == 0:
        raise ValueError("no test trajectory has length >= 2")
    return tokens[:, :-1].ravel(), tokens[:, 1:].ravel()


def evaluate_next_poi(model: NextPoiModel, catalog: PoiCatalog, test, k: int = 10) -> np.ndarray:
    """Accuracy, HR@k, NDCG@k and mean geographic error (km) of the top prediction.

    Ranking is by score with ties broken towards the lower POI id, so results are
    reproducible bit for bit.
    """
    prev, truth = _events(test)
    if prev.max() >= model.V or truth.max() >= model.V:
        raise ValueError("test tokens exceed the model vocabulary")
    S = model.scores()[prev]  # (n_events, V)
    s_true = S[np.arange(truth.size), truth]
    ids = np.arange(model.V)
    ahead = (S > s_true[:, None]) | ((S == s_true[:, None]) & (ids[None, :] < truth[:, None]))
    rank = ahead.sum(axis=1) + 1
    top = np.argmax(S, axis=1)  # first maximum, i.e. lowest id
    hit = rank <= k
    ndcg = np.where(hit, 1.0 / np.log2(1.0 + rank), 0.0)
    geo = haversine_km(catalog.lat[top], catalog.lon[top], catalog.lat[truth], catalog.lon[truth])
    return np.array([(rank == 1).mean(), hit.mean(), ndcg.mean(), geo.mean()])


@dataclass(frozen=True, eq=False)
class DownstreamReport:
    """Per-setup (K, 4) metric tables in ``DOWNSTREAM_METRICS`` order."""

    per_setup: dict
    labels: tuple = ()

    def avg(self, setup: str) -> np.ndarray:
        return self.per_setup[setup].mean(axis=0)

    def metric(self, setup: str, name: str) -> np.ndarray:
        return self.per_setup[setup][:, DOWNSTREAM_METRICS.index(name)]

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "setups": {
                s: {
                    "per_group": {m: t[:, i].tolist() for i, m in enumerate(DOWNSTREAM_METRICS)},
                    "avg": dict(zip(DOWNSTREAM_METRICS, t.mean(axis=0).tolist())),
                }
                for s, t in self.per_setup.items()
            },
        }

    def to_csv(self) -> str:
        """Metric blocks, one row per setup, group columns then Avg."""
        first = next(iter(self.per_setup.values()))
        labels = list(self.labels) or [f"g{d}" for d in range(first.shape[0])]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "setup"] + labels + ["Avg"])
        for i, name in enumerate(DOWNSTREAM_METRICS):
            for setup, table in self.per_setup.items():
                col = table[:, i]
                writer.writerow([name, setup] + [f"{v:.6f}" for v in col] + [f"{col.mean():.6f}"])
        return buf.getvalue()
