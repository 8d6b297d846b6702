"""End-to-end RQ1/RQ2/RQ3 pipelines driven by a single config.

Each seed builds its own world (``WorldConfig.seed`` is replaced by the run seed),
samples, aggregates, fits and evaluates sequentially. Seeds run on a thread pool;
results are gathered in seed order so report files do not depend on scheduling.

Random streams are keyed by ``(seed, purpose, group)``. Every synthetic setup
(Baseline, Strong, ATLAS) draws its evaluation samples from the same stream per
group, so differences between setups are not blurred by independent sampling noise.
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from .downstream import DEFAULT_EPS, DOWNSTREAM_METRICS, DownstreamReport, evaluate_next_poi, train_next_poi
from .evaluation import METRICS, EvalGrid, GroupEvalReport, evaluate_groups, gap_closed
from .features import (
    FeatureMap,
    FeatureMapKind,
    empirical_regional_aggregates,
    exact_group_means,
    exact_regional_aggregates,
)
from .partitions import (
    GROUP_LABELS,
    CompositionMatrix,
    Provenance,
    build_paper_partition,
    diagnostics,
    load_composition_csv,
)
from .recovery import recover_group_means
from .tilt import FitMode, FitOptions, FittedBy, TiltParams, atlas_fit, baseline_params, fit_base_chain, fit_tilt_dual
from .world import ConfigError, GroundTruthModel, PoiCatalog, WorldConfig, build_world, sample_group, sample_population

log = logging.getLogger(__name__)

THREADS_ENV = "ATLAS_LAB_THREADS"
FIXED_PARTITIONS = ("demogroups", "fullrank", "rankdef", "messy")


class AggregateSource(str, Enum):
    EXACT = "exact"
    SAMPLED = "sampled"


class BaseSource(str, Enum):
    MLE = "mle"  # smoothed MLE on the unlabeled regional population
    TRUTH = "truth"  # the world's own base chain


@dataclass(frozen=True)
class EvalSettings:
    n_rows: int = 40
    n_cols: int = 40
    distance_edges: tuple | None = None
    n_eval: int = 2000  # trajectories per group and side

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1 or self.n_eval < 1:
            raise ConfigError("eval grid sizes and n_eval must be >= 1")
        if self.distance_edges is not None:
            object.__setattr__(self, "distance_edges", tuple(float(e) for e in self.distance_edges))


@dataclass(frozen=True)
class DownstreamSettings:
    n_train: int = 2000  # per group and setup
    n_test: int = 1000  # held-out ground-truth trajectories per group
    eps: float = DEFAULT_EPS
    k: int = 10
    # use the ground-truth tilts as the "fitted" ATLAS model (sanity check)
    oracle_injection: bool = False


def _enum_tuple(enum, values):
    return tuple(enum(v) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    partitions: tuple = FIXED_PARTITIONS
    counts_file: str | None = None
    feature_map: FeatureMapKind = FeatureMapKind.POI_HISTOGRAM
    feature_maps: tuple = tuple(FeatureMapKind)
    n_per_region: int = 2000
    aggregate_source: AggregateSource = AggregateSource.EXACT
    fit_modes: tuple = (FitMode.TWO_STAGE,)
    base_source: BaseSource = BaseSource.MLE
    base_smoothing: float = 1e-3
    seeds: tuple = (0,)
    fit: FitOptions = field(default_factory=FitOptions)
    eval: EvalSettings = field(default_factory=EvalSettings)
    downstream: DownstreamSettings = field(default_factory=DownstreamSettings)
    output_dir: str = "atlas_out"

    def __post_init__(self):
        try:
            object.__setattr__(self, "feature_map", FeatureMapKind(self.feature_map))
            object.__setattr__(self, "feature_maps", _enum_tuple(FeatureMapKind, self.feature_maps))
            object.__setattr__(self, "aggregate_source", AggregateSource(self.aggregate_source))
            object.__setattr__(self, "fit_modes", _enum_tuple(FitMode, self.fit_modes))
            object.__setattr__(self, "base_source", BaseSource(self.base_source))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        parts = tuple(str(p).lower() for p in self.partitions)
        if self.counts_file is None:
            for p in parts:
                if p not in FIXED_PARTITIONS:
                    raise ConfigError(f"unknown partition {p!r}; give counts_file for custom ones")
        object.__setattr__(self, "partitions", parts)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if not self.fit_modes or not self.feature_maps:
            raise ConfigError("fit_modes and feature_maps must be nonempty")
        if self.n_per_region < 1:
            raise ConfigError("n_per_region must be >= 1")
        if self.counts_file is None and (self.world.K != 8 or self.world.G != 8):
            raise ConfigError("the fixed partitions need K = G = 8; set counts_file otherwise")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "world" in d:
                d["world"] = WorldConfig.from_dict(d["world"])
            if "fit" in d:
                d["fit"] = FitOptions.from_dict(d["fit"])
            if "eval" in d:
                d["eval"] = EvalSettings(**d["eval"])
            if "downstream" in d:
                d["downstream"] = DownstreamSettings(**d["downstream"])
            for key in ("partitions", "feature_maps", "fit_modes", "seeds"):
                if key in d and isinstance(d[key], (str, int)):
                    d[key] = (d[key],)
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "world": self.world.to_dict(),
            "partitions": list(self.partitions),
            "counts_file": self.counts_file,
            "feature_map": self.feature_map.value,
            "feature_maps": [k.value for k in self.feature_maps],
            "n_per_region": self.n_per_region,
            "aggregate_source": self.aggregate_source.value,
            "fit_modes": [m.value for m in self.fit_modes],
            "base_source": self.base_source.value,
            "base_smoothing": self.base_smoothing,
            "seeds": list(self.seeds),
            "fit": asdict(self.fit),
            "eval": {**asdict(self.eval), "distance_edges": None if self.eval.distance_edges is None
                     else list(self.eval.distance_edges)},
            "downstream": asdict(self.downstream),
            "output_dir": self.output_dir,
        }


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON, which is a YAML subset) experiment config."""


    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(data or {})


@dataclass
class ExperimentResult:
    name: str
    files: list
    summary: dict
    converged: bool


# ---------------------------------------------------------------------------
# helpers


def worker_count(n_tasks: int) -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0")
    if n == 0:
        n = os.cpu_count() or 1
    return max(1, min(n, n_tasks))


def _map_seeds(fn, seeds):
    with ThreadPoolExecutor(max_workers=worker_count(len(seeds))) as pool:
        return list(pool.map(fn, seeds))


def _rng(seed, *key):
    return np.random.default_rng([seed, *key])


def resolve_partition(config: ExperimentConfig, kind: str) -> CompositionMatrix:
    if config.counts_file is not None:
        return load_composition_csv(config.counts_file, normalize=True)
    return build_paper_partition(kind, config.world.K)


def _partition_names(config):
    return (Provenance.FROM_COUNTS.value,) if config.counts_file is not None else config.partitions


@dataclass
class _SeedWorld:
    seed: int
    catalog: PoiCatalog
    model: GroundTruthModel


def _world(config, seed) -> _SeedWorld:
    catalog, model = build_world(replace(config.world, seed=seed))
    return _SeedWorld(seed, catalog, model)


def _prepare(config, sw: _SeedWorld, comp: CompositionMatrix, fmap: FeatureMap):
    """Population sample, base chain and regional aggregates for one partition."""
    if comp.K != sw.model.K:
        raise ConfigError(f"partition has {comp.K} groups, world has {sw.model.K}")
    n = np.full(comp.G, config.n_per_region)
    pop = sample_population(sw.model, comp, n, _rng(sw.seed, 1)).unlabeled()
    if config.base_source is BaseSource.TRUTH:
        base = sw.model.base
    else:
        base = fit_base_chain(pop, sw.model.V, config.base_smoothing)
    M_star = exact_group_means(fmap, sw.model).values
    if config.aggregate_source is AggregateSource.EXACT:
        aggregates = exact_regional_aggregates(comp, M_star)
    else:
        aggregates = empirical_regional_aggregates(fmap, pop, comp.G)
    return base, M_star, aggregates


def _strong(config, base, M_star, fmap):
    fits = [fit_tilt_dual(base, M_star[d], config.fit, fmap) for d in range(M_star.shape[0])]
    params = TiltParams(np.stack([f[0] for f in fits]), base, fmap, FittedBy.DUAL)
    return params, all(f[1].converged for f in fits)


def _sample_setup(params_or_model, K, n, seed, purpose):
    out = []
    for d in range(K):
        rng = _rng(seed, purpose, d)
        if isinstance(params_or_model, GroundTruthModel):
            out.append(sample_group(params_or_model, d, n, rng))
        else:
            out.append(params_or_model.sample(d, n, rng))
    return out


def _grid(config):
    return EvalGrid(config.world.grid_extent, config.eval.n_rows, config.eval.n_cols)


def _evaluate_setups(config, sw, setups: dict) -> dict:
    """GroupEvalReport per setup against fresh ground-truth samples."""
    K, n = sw.model.K, config.eval.n_eval
    real = _sample_setup(sw.model, K, n, sw.seed, 2)
    grid = _grid(config)
    labels = GROUP_LABELS if K == len(GROUP_LABELS) else ()
    out = {}
    for name, params in setups.items():
        synth = _sample_setup(params, K, n, sw.seed, 3)
        out[name] = evaluate_groups(grid, sw.catalog, real, synth, config.eval.distance_edges, labels)
    return out


def _gap_closed_table(reports: dict) -> dict:
    base, strong = reports["baseline"].avg, reports["strong"].avg
    return {
        name: {m: gap_closed(base[i], strong[i], rep.avg[i]) for i, m in enumerate(METRICS)}
        for name, rep in reports.items() if name.startswith("atlas")
    }


def _fit_atlas(config, base, comp, aggregates, fmap, mode):
    return atlas_fit(base, comp, aggregates, mode, config.fit, fmap)


def _setup_name(mode: FitMode) -> str:
    return f"atlas_{mode.value}"


# ---------------------------------------------------------------------------
# report writing


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.ndarray):
        return _json_safe(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, Enum):
        return x.value
    return x


def _write(out_dir: Path, name: str, text: str, files: list):
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    files.append(path)


def _write_json(out_dir, name, payload, files, timestamp):
    payload = dict(payload)
    if timestamp:
        payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _write(out_dir, name, json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n", files)


def _fmt(v) -> str:
    return "nan" if v is None or not np.isfinite(v) else f"{v:.6f}"


def _long_csv(rows, header) -> str:
    lines = [",".join(header)]
    lines += [",".join(str(c) if isinstance(c, (str, int)) else _fmt(c) for c in row) for row in rows]
    return "\n".join(lines) + "\n"


def _mean_group_report(reports):
    return GroupEvalReport(np.mean([r.per_group for r in reports], axis=0), reports[0].labels)


# ---------------------------------------------------------------------------
# RQ1


def _rq1_seed(config, seed):
    sw = _world(config, seed)
    fmap = FeatureMap.for_catalog(FeatureMapKind.POI_HISTOGRAM, sw.catalog)
    out = {}
    for name in _partition_names(config):
        comp = resolve_partition(config, name)
        base, M_star, aggregates = _prepare(config, sw, comp, fmap)
        recovery = recover_group_means(comp, aggregates, config.fit.rcond)
        strong, strong_ok = _strong(config, base, M_star, fmap)
        setups = {"baseline": baseline_params(base, sw.model.K, fmap), "strong": strong}
        fits = {}
        for mode in config.fit_modes:
            params, report = _fit_atlas(config, base, comp, aggregates, fmap, mode)
            setups[_setup_name(mode)] = params
            fits[mode.value] = report
        reports = _evaluate_setups(config, sw, setups)
        out[name] = {
            "recovery_error_fro": float(np.linalg.norm(recovery.M_hat - M_star)),
            "model_mean_error_fro": {
                m: float(np.linalg.norm(setups[_setup_name(FitMode(m))].feature_means() - M_star))
                for m in fits
            },
            "fits": {m: r.to_dict() for m, r in fits.items()},
            "converged": strong_ok and all(r.converged for r in fits.values()),
            "reports": reports,
            "gap_closed": _gap_closed_table(reports),
        }
    return out


def run_rq1(config: ExperimentConfig, timestamp: bool = True) -> ExperimentResult:
    """Partition sweep with POI-histogram supervision: Baseline, Strong and ATLAS per partition."""
    if config.feature_map is not FeatureMapKind.POI_HISTOGRAM:
        raise ConfigError("RQ1 uses POI-histogram aggregates; set feature_map: poi_histogram")
    per_seed = _map_seeds(lambda s: _rq1_seed(config, s), config.seeds)
    names = _partition_names(config)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []

    rows = []
    for seed, res in zip(config.seeds, per_seed):
        for name in names:
            for setup, rep in res[name]["reports"].items():
                for d, row in enumerate(rep.per_group):
                    rows.append([seed, name, setup, d, *row])
    _write(out_dir, "rq1_per_group.csv",
           _long_csv(rows, ["seed", "partition", "setup", "group", *METRICS]), files)

    summary = {}
    srows = []
    for name in names:
        entries = [res[name] for res in per_seed]
        setups = list(entries[0]["reports"])
        summary[name] = {
            "diagnostics": diagnostics(resolve_partition(config, name)).to_dict(),
            "recovery_error_fro": [e["recovery_error_fro"] for e in entries],
            "mean_recovery_error_fro": float(np.mean([e["recovery_error_fro"] for e in entries])),
            "avg": {s: {m: [float(e["reports"][s].avg[i]) for e in entries] for i, m in enumerate(METRICS)}
                    for s in setups},
            "gap_closed": [e["gap_closed"] for e in entries],
            "converged": all(e["converged"] for e in entries),
        }
        for s in setups:
            mean_rep = _mean_group_report([e["reports"][s] for e in entries])
            _write(out_dir, f"rq1_{name}_{s}.csv", mean_rep.to_csv(), files)
            avgs = np.array([e["reports"][s].avg for e in entries])
            srows.append([name, s, *avgs.mean(axis=0), *avgs.std(axis=0)])
    _write(out_dir, "rq1_summary.csv", _long_csv(
        srows, ["partition", "setup", *METRICS, *[f"{m}_std" for m in METRICS]]), files)

    detail = {str(seed): {n: {k: v for k, v in res[n].items() if k != "reports"}
                          for n in names} for seed, res in zip(config.seeds, per_seed)}
    converged = all(summary[n]["converged"] for n in names)
    _write_json(out_dir, "rq1_report.json", {
        "experiment": "rq1", "config": config.to_dict(), "partitions": summary,
        "per_seed": detail, "converged": converged,
    }, files, timestamp)
    return ExperimentResult("rq1", files, summary, converged)


# ---------------------------------------------------------------------------
# RQ2


def _rq2_seed(config, seed):
    sw = _world(config, seed)
    comp = build_paper_partition(Provenance.DEMO_GROUPS, sw.model.K) if config.counts_file is None \
        else resolve_partition(config, Provenance.FROM_COUNTS.value)
    poi_map = FeatureMap.for_catalog(FeatureMapKind.POI_HISTOGRAM, sw.catalog)
    base, M_poi, _ = _prepare(config, sw, comp, poi_map)
    strong, ok = _strong(config, base, M_poi, poi_map)
    setups = {"baseline": baseline_params(base, sw.model.K, poi_map), "strong": strong}
    fits = {}
    for kind in config.feature_maps:
        fmap = FeatureMap.for_catalog(kind, sw.catalog)
        _, _, aggregates = _prepare(config, sw, comp, fmap)
        for mode in config.fit_modes:
            if mode is FitMode.DIRECT_L2 and fmap.is_pairwise:
                continue
            params, report = _fit_atlas(config, base, comp, aggregates, fmap, mode)
            key = f"atlas_{mode.value}_{kind.value}"
            setups[key] = params
            fits[key] = report
    reports = _evaluate_setups(config, sw, setups)
    return {
        "reports": reports,
        "gap_closed": _gap_closed_table(reports),
        "fits": {k: r.to_dict() for k, r in fits.items()},
        "converged": ok and all(r.converged for r in fits.values()),
        "diagnostics": diagnostics(comp).to_dict(),
    }


def run_rq2(config: ExperimentConfig, timestamp: bool = True) -> ExperimentResult:
    """Feature-map sweep on the DemoGroups partition."""
    for kind in config.feature_maps:
        if kind is FeatureMapKind.CATEGORY_TRANSITION and config.world.T < 2:
            raise ConfigError("category_transition features need T >= 2")
    per_seed = _map_seeds(lambda s: _rq2_seed(config, s), config.seeds)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    setups = list(per_seed[0]["reports"])
    rows = [[seed, s, d, *row] for seed, res in zip(config.seeds, per_seed)
            for s in setups for d, row in enumerate(res["reports"][s].per_group)]
    _write(out_dir, "rq2_per_group.csv", _long_csv(rows, ["seed", "setup", "group", *METRICS]), files)
    srows = []
    for s in setups:
        avgs = np.array([res["reports"][s].avg for res in per_seed])
        srows.append([s, *avgs.mean(axis=0), *avgs.std(axis=0)])
        _write(out_dir, f"rq2_{s}.csv", _mean_group_report([r["reports"][s] for r in per_seed]).to_csv(), files)
    _write(out_dir, "rq2_summary.csv", _long_csv(
        srows, ["setup", *METRICS, *[f"{m}_std" for m in METRICS]]), files)
    summary = {
        "diagnostics": per_seed[0]["diagnostics"],
        "avg": {s: {m: [float(r["reports"][s].avg[i]) for r in per_seed] for i, m in enumerate(METRICS)}
                for s in setups},
        "gap_closed": [r["gap_closed"] for r in per_seed],
    }
    converged = all(r["converged"] for r in per_seed)
    detail = {str(seed): {"fits": r["fits"], "gap_closed": r["gap_closed"]}
              for seed, r in zip(config.seeds, per_seed)}
    _write_json(out_dir, "rq2_report.json", {
        "experiment": "rq2", "config": config.to_dict(), "summary": summary,
        "per_seed": detail, "converged": converged,
    }, files, timestamp)
    return ExperimentResult("rq2", files, summary, converged)


# ---------------------------------------------------------------------------
# RQ3


def _oracle_params(sw, fmap):
    if sw.model.tilts is None:
        raise ConfigError("oracle injection needs a unigram-tilt world")
    return TiltParams(sw.model.tilts, sw.model.base, fmap, FittedBy.GROUND_TRUTH)


def _downstream(config, sw, corpora: dict) -> DownstreamReport:
    K, V = sw.model.K, sw.model.V
    ds = config.downstream
    test = _sample_setup(sw.model, K, ds.n_test, sw.seed, 5)
    tables = {}
    for name, corpus in corpora.items():
        rows = []
        for d in range(K):
            if len(corpus[d]) == 0:
                raise ValueError(f"setup {name!r} produced no trajectories for group {d}")
            model = train_next_poi(corpus[d], V, ds.eps, d)
            rows.append(evaluate_next_poi(model, sw.catalog, test[d], ds.k))
        tables[name] = np.array(rows)
    labels = GROUP_LABELS if K == len(GROUP_LABELS) else ()
    return DownstreamReport(tables, labels)


def _rq3_seed(config, seed):
    sw = _world(config, seed)
    fmap = FeatureMap.for_catalog(FeatureMapKind.POI_HISTOGRAM, sw.catalog)
    ds = config.downstream
    out = {}
    for name in _partition_names(config):
        comp = resolve_partition(config, name)
        base, _, aggregates = _prepare(config, sw, comp, fmap)
        fits = {}
        setups = {"real": sw.model, "baseline": baseline_params(base, sw.model.K, fmap)}
        for mode in config.fit_modes:
            if ds.oracle_injection:
                params = _oracle_params(sw, fmap)
            else:
                params, report = _fit_atlas(config, base, comp, aggregates, fmap, mode)
                fits[mode.value] = report
            setups[_setup_name(mode)] = params
        corpora = {k: _sample_setup(p, sw.model.K, ds.n_train, seed, 4) for k, p in setups.items()}
        report = _downstream(config, sw, corpora)
        out[name] = {
            "report": report,
            "fits": {m: r.to_dict() for m, r in fits.items()},
            "converged": all(r.converged for r in fits.values()),
        }
    return out


def run_rq3(config: ExperimentConfig, timestamp: bool = True) -> ExperimentResult:
    """Next-POI prediction trained on Real, Baseline and ATLAS corpora, tested on held-out truth."""
    per_seed = _map_seeds(lambda s: _rq3_seed(config, s), config.seeds)
    names = _partition_names(config)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    rows, summary = [], {}
    for name in names:
        setups = list(per_seed[0][name]["report"].per_setup)
        for seed, res in zip(config.seeds, per_seed):
            for s in setups:
                for d, row in enumerate(res[name]["report"].per_setup[s]):
                    rows.append([seed, name, s, d, *row])
        mean_tables = {s: np.mean([r[name]["report"].per_setup[s] for r in per_seed], axis=0) for s in setups}
        _write(out_dir, f"rq3_{name}.csv", DownstreamReport(mean_tables, per_seed[0][name]["report"].labels).to_csv(),
               files)
        avg = {s: {m: [float(r[name]["report"].avg(s)[i]) for r in per_seed]
                   for i, m in enumerate(DOWNSTREAM_METRICS)} for s in setups}
        acc = {s: float(np.mean(avg[s]["accuracy"])) for s in setups}
        summary[name] = {
            "diagnostics": diagnostics(resolve_partition(config, name)).to_dict(),
            "avg": avg,
            "mean_accuracy": acc,
            "accuracy_gap_closed": {
                s: gap_closed(acc["baseline"], acc["real"], acc[s]) for s in setups if s.startswith("atlas")
            },
            "converged": all(r[name]["converged"] for r in per_seed),
        }
    _write(out_dir, "rq3_per_group.csv",
           _long_csv(rows, ["seed", "partition", "setup", "group", *DOWNSTREAM_METRICS]), files)
    converged = all(summary[n]["converged"] for n in names)
    detail = {str(seed): {n: res[n]["fits"] for n in names} for seed, res in zip(config.seeds, per_seed)}
    _write_json(out_dir, "rq3_report.json", {
        "experiment": "rq3", "config": config.to_dict(), "partitions": summary,
        "per_seed": detail, "converged": converged,
    }, files, timestamp)
    return ExperimentResult("rq3", files, summary, converged)


RUNNERS = {"rq1": run_rq1, "rq2": run_rq2, "rq3": run_rq3}
