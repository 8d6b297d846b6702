"""Synthetic ground-truth mobility worlds: POIs, group-tilted chains, samplers."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .chain import BaseChain, ChainMarginals, chain_marginals, sample_paths, tilted_marginals

# Virginia-sized default bounding box (lat_min, lat_max, lon_min, lon_max)
DEFAULT_EXTENT = (36.5, 39.5, -83.7, -75.2)
ROW_FLOOR = 1e-6


class ConfigError(ValueError):
    """Invalid sizes or options in a configuration."""


class TiltTarget(str, Enum):
    UNIGRAM = "unigram"
    TRANSITION = "transition"


@dataclass(frozen=True)
class WorldConfig:
    V: int = 50
    C: int = 5
    K: int = 8
    G: int = 8
    T: int = 16
    seed: int = 0
    tilt_scale: float = 1.0
    grid_extent: tuple = DEFAULT_EXTENT
    tilt_target: TiltTarget = TiltTarget.UNIGRAM
    # Dirichlet-like concentration of the random base-chain rows
    concentration: float = 0.5

    def __post_init__(self):
        for name in ("V", "C", "K", "G", "T"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.C > self.V:
            raise ConfigError(f"C={self.C} categories cannot all be nonempty with V={self.V} POIs")
        if self.tilt_scale < 0:
            raise ConfigError(f"tilt_scale must be nonnegative, got {self.tilt_scale}")
        if self.concentration <= 0:
            raise ConfigError("concentration must be positive")
        lat0, lat1, lon0, lon1 = map(float, self.grid_extent)
        if not (-90 <= lat0 < lat1 <= 90 and -180 <= lon0 < lon1 <= 180):
            raise ConfigError(f"degenerate or out-of-range grid_extent {self.grid_extent}")
        object.__setattr__(self, "grid_extent", (lat0, lat1, lon0, lon1))
        try:
            object.__setattr__(self, "tilt_target", TiltTarget(self.tilt_target))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        if "grid_extent" in d:
            d["grid_extent"] = tuple(d["grid_extent"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid_extent"] = list(self.grid_extent)
        d["tilt_target"] = self.tilt_target.value
        return d


@dataclass(frozen=True, eq=False)
class PoiCatalog:
    lat: np.ndarray
    lon: np.ndarray
    category: np.ndarray
    n_categories: int

    def __post_init__(self):
        lat = np.asarray(self.lat, dtype=float)
        lon = np.asarray(self.lon, dtype=float)
        cat = np.asarray(self.category, dtype=np.int64)
        if not (lat.shape == lon.shape == cat.shape) or lat.ndim != 1:
            raise ValueError("lat, lon and category must be equal-length vectors")
        if (np.abs(lat) > 90).any() or (np.abs(lon) > 180).any():
            raise ValueError("POI coordinates out of range")
        if cat.size and (cat.min() < 0 or cat.max() >= self.n_categories):
            raise ValueError("category id out of range")
        if np.bincount(cat, minlength=self.n_categories).min(initial=1) == 0:
            raise ValueError("every category needs at least one POI")
        for a in (lat, lon, cat):
            a.setflags(write=False)
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "category", cat)

    @property
    def V(self) -> int:
        return self.lat.size

    @property
    def C(self) -> int:
        return self.n_categories

    @property
    def poi_ids(self) -> np.ndarray:
        return np.arange(self.V)

    def __eq__(self, other):
        if not isinstance(other, PoiCatalog):
            return NotImplemented
        return (
            self.n_categories == other.n_categories
            and np.array_equal(self.lat, other.lat)
            and np.array_equal(self.lon, other.lon)
            and np.array_equal(self.category, other.category)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GroundTruthModel:
    """K group-conditioned trajectory distributions built on one base chain.

    In unigram mode group ``d`` is the base chain tilted by ``exp(Σ_t tilts[d, x_t])``.
    In transition mode the tilts are absent and group ``d`` runs its own
    transition matrix ``transitions[d]`` (same initial distribution).
    """

    base: BaseChain
    tilts: np.ndarray | None = None
    transitions: np.ndarray | None = None

    def __post_init__(self):
        if (self.tilts is None) == (self.transitions is None):
            raise ValueError("exactly one of tilts / transitions must be given")
        V = self.base.n_states
        if self.tilts is not None:
            tilts = np.asarray(self.tilts, dtype=float)
            if tilts.ndim != 2 or tilts.shape[1] != V or not np.isfinite(tilts).all():
                raise ValueError(f"tilts must be a finite (K, {V}) array")
            tilts.setflags(write=False)
            object.__setattr__(self, "tilts", tilts)
        else:
            trans = np.asarray(self.transitions, dtype=float)
            if trans.ndim != 3 or trans.shape[1:] != (V, V):
                raise ValueError(f"transitions must be a (K, {V}, {V}) array")
            for d in range(trans.shape[0]):
                BaseChain(self.base.initial, trans[d], self.base.horizon)
            trans.setflags(write=False)
            object.__setattr__(self, "transitions", trans)

    @property
    def K(self) -> int:
        return (self.tilts if self.tilts is not None else self.transitions).shape[0]

    @property
    def V(self) -> int:
        return self.base.n_states

    @property
    def T(self) -> int:
        return self.base.horizon

    @property
    def tilt_target(self) -> TiltTarget:
        return TiltTarget.UNIGRAM if self.tilts is not None else TiltTarget.TRANSITION

    def group_chain(self, group: int) -> tuple[BaseChain, np.ndarray | None]:
        """(chain, unigram tilt or None) defining group ``group``."""
        self._check_group(group)
        if self.tilts is not None:
            return self.base, self.tilts[group]
        return BaseChain(self.base.initial, self.transitions[group], self.base.horizon), None

    @cached_property
    def _marginals(self) -> list[ChainMarginals]:
        out = []
        for d in range(self.K):
            if self.tilts is not None:
                out.append(tilted_marginals(self.base, self.tilts[d]))
            else:
                out.append(chain_marginals(self.base.initial, self.transitions[d], self.T))
        return out

    def marginals(self, group: int) -> ChainMarginals:
        self._check_group(group)
        return self._marginals[group]

    def _check_group(self, group):
        if not 0 <= int(group) < self.K:
            raise ValueError(f"group {group} out of range 0..{self.K - 1}")

    def __eq__(self, other):
        if not isinstance(other, GroundTruthModel):
            return NotImplemented
        same = lambda a, b: (a is None and b is None) or (
            a is not None and b is not None and np.array_equal(a, b)
        )
        return self.base == other.base and same(self.tilts, other.tilts) and same(
            self.transitions, other.transitions
        )

    __hash__ = None


@dataclass(frozen=True)
class Trajectory:
    tokens: tuple
    group_label: int | None = None
    region_id: int | None = None


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """A batch of equal-length trajectories stored column-wise.

    ``groups``/``regions`` use -1 for "unknown". Iterating yields ``Trajectory`` records.
    """

    tokens: np.ndarray
    groups: np.ndarray = field(default=None)
    regions: np.ndarray = field(default=None)

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        if tokens.ndim != 2:
            raise ValueError("tokens must be an (n, T) array")
        n = tokens.shape[0]
        for name in ("groups", "regions"):
            val = getattr(self, name)
            arr = np.full(n, -1, dtype=np.int64) if val is None else np.asarray(val, dtype=np.int64)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "tokens", tokens)

    def __len__(self):
        return self.tokens.shape[0]

    def __iter__(self):
        for row, g, r in zip(self.tokens, self.groups, self.regions):
            yield Trajectory(
                tuple(int(v) for v in row),
                None if g < 0 else int(g),
                None if r < 0 else int(r),
            )

    def __getitem__(self, idx):
        return TrajectorySet(self.tokens[idx], self.groups[idx], self.regions[idx])

    @property
    def horizon(self) -> int:
        return self.tokens.shape[1]

    def unlabeled(self) -> "TrajectorySet":
        """Copy with group labels stripped, as seen by the fitting code."""
        return TrajectorySet(self.tokens, None, self.regions)

    @classmethod
    def concat(cls, parts) -> "TrajectorySet":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        return cls(
            np.concatenate([p.tokens for p in parts]),
            np.concatenate([p.groups for p in parts]),
            np.concatenate([p.regions for p in parts]),
        )


def as_token_array(trajectories) -> np.ndarray:
    """Accept a TrajectorySet, an (n, T) array, or an iterable of Trajectory / sequences."""
    if isinstance(trajectories, TrajectorySet):
        return trajectories.tokens
    if isinstance(trajectories, np.ndarray):
        arr = trajectories
    else:
        rows = [t.tokens if isinstance(t, Trajectory) else t for t in trajectories]
        arr = np.asarray(rows, dtype=np.int64)
    if arr.ndim == 1 and arr.size == 0:
        return arr.reshape(0, 0).astype(np.int64)
    if arr.ndim != 2:
        raise ValueError("trajectories must all have the same length")
    return arr.astype(np.int64, copy=False)


def _random_rows(rng, shape, concentration):
    rows = rng.gamma(concentration, size=shape)
    rows /= rows.sum(axis=-1, keepdims=True)
    rows = np.maximum(rows, ROW_FLOOR)
    return rows / rows.sum(axis=-1, keepdims=True)


def build_world(config: WorldConfig) -> tuple[PoiCatalog, GroundTruthModel]:
    """Deterministically build a POI catalog and a ground-truth model from ``config``."""
    rng = np.random.default_rng(config.seed)
    V, K = config.V, config.K
    lat0, lat1, lon0, lon1 = config.grid_extent
    catalog = PoiCatalog(
        lat=rng.uniform(lat0, lat1, size=V),
        lon=rng.uniform(lon0, lon1, size=V),
        category=np.arange(V) % config.C,
        n_categories=config.C,
    )
    base = BaseChain(
        initial=_random_rows(rng, V, config.concentration),
        transition=_random_rows(rng, (V, V), config.concentration),
        horizon=config.T,
    )
    if config.tilt_target is TiltTarget.UNIGRAM:
        tilts = config.tilt_scale * rng.standard_normal((K, V))
        tilts -= tilts.mean(axis=1, keepdims=True)
        return catalog, GroundTruthModel(base, tilts=tilts)
    perturb = config.tilt_scale * rng.standard_normal((K, V, V))
    trans = base.transition[None] * np.exp(perturb)
    trans /= trans.sum(axis=2, keepdims=True)
    return catalog, GroundTruthModel(base, transitions=trans)


def sample_group(model: GroundTruthModel, group: int, n: int, rng) -> TrajectorySet:
    tokens = sample_paths(model.marginals(group), n, rng)
    return TrajectorySet(tokens, np.full(n, group))


def sample_trajectory(model: GroundTruthModel, group: int, rng) -> Trajectory:
    return next(iter(sample_group(model, group, 1, rng)))


def sample_population(model: GroundTruthModel, composition, n_per_region, rng) -> TrajectorySet:
    """Draw ``n_per_region[g]`` trajectories per region from its demographic mixture.

    Each individual's group is drawn from ``composition[g]`` first; the label is kept
    on the returned set for evaluation only.
    """
    P = getattr(composition, "P", composition)
    P = np.asarray(P, dtype=float)
    n_per_region = np.asarray(n_per_region, dtype=np.int64).reshape(-1)
    if P.ndim != 2 or P.shape[1] != model.K:
        raise ValueError(f"composition must have {model.K} columns, got shape {P.shape}")
    if n_per_region.size != P.shape[0]:
        raise ValueError(f"n_per_region needs {P.shape[0]} entries, got {n_per_region.size}")
    if (n_per_region < 0).any():
        raise ValueError("n_per_region must be nonnegative")

    G = P.shape[0]
    regions = np.repeat(np.arange(G), n_per_region)
    groups = np.empty(regions.size, dtype=np.int64)
    offset = 0
    for g in range(G):
        n = int(n_per_region[g])
        groups[offset:offset + n] = rng.choice(model.K, size=n, p=P[g] / P[g].sum())
        offset += n
    tokens = np.empty((regions.size, model.T), dtype=np.int64)
    for d in range(model.K):
        idx = np.flatnonzero(groups == d)
        tokens[idx] = sample_paths(model.marginals(d), idx.size, rng)
    return TrajectorySet(tokens, groups, regions)


def world_to_dict(config: WorldConfig, catalog: PoiCatalog, model: GroundTruthModel) -> dict:
    # floats go through repr in json, which round-trips bit-exactly
    return {
        "config": config.to_dict(),
        "catalog": {
            "lat": catalog.lat.tolist(),
            "lon": catalog.lon.tolist(),
            "category": catalog.category.tolist(),
            "n_categories": catalog.n_categories,
        },
        "base": {
            "initial": model.base.initial.tolist(),
            "transition": model.base.transition.tolist(),
            "horizon": model.base.horizon,
        },
        "tilts": None if model.tilts is None else model.tilts.tolist(),
        "transitions": None if model.transitions is None else model.transitions.tolist(),
    }


def world_from_dict(d: dict):
    config = WorldConfig.from_dict(d["config"])
    catalog = PoiCatalog(**d["catalog"])
    base = BaseChain(**d["base"])
    model = GroundTruthModel(
        base,
        tilts=None if d.get("tilts") is None else np.array(d["tilts"]),
        transitions=None if d.get("transitions") is None else np.array(d["transitions"]),
    )
    return config, catalog, model


def save_world(path, config, catalog, model) -> None:
    Path(path).write_text(json.dumps(world_to_dict(config, catalog, model)), encoding="utf-8")


def load_world(path):
    return world_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_trajectories_csv(trajectories: TrajectorySet, path=None) -> str:
    """One row per trajectory: region, group (-1 when unknown), then the T tokens."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["region", "group"] + [f"t{t}" for t in range(trajectories.horizon)])
    for row, g, r in zip(trajectories.tokens, trajectories.groups, trajectories.regions):
        writer.writerow([int(r), int(g)] + row.tolist())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_trajectories_csv(path) -> TrajectorySet:
    rows = list(csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    if not rows:
        raise ValueError(f"{path}: empty trajectory file")
    body = np.array([[int(v) for v in r] for r in rows[1:] if r], dtype=np.int64).reshape(-1, len(rows[0]))
    return TrajectorySet(body[:, 2:], body[:, 1], body[:, 0])
