"""``atlas-lab`` command-line front end.

Exit codes: 0 success, 1 runtime failure (including non-converged fits unless
``--allow-nonconverged``), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import experiments
from .evaluation import EvalGrid, evaluate_groups
from .features import (
    AggregateMatrix,
    FeatureMap,
    FeatureMapKind,
    empirical_regional_aggregates,
    exact_group_means,
    exact_regional_aggregates,
)
from .partitions import GROUP_LABELS, FIXED_KINDS, build_paper_partition, diagnostics, load_composition_csv
from .recovery import bound_report
from .tilt import FitMode, FitOptions, TiltParams, atlas_fit, fit_base_chain
from .world import (
    ConfigError,
    WorldConfig,
    build_world,
    load_trajectories_csv,
    load_world,
    sample_group,
    sample_population,
    save_trajectories_csv,
    save_world,
)

log = logging.getLogger("atlas_lab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load_yaml(path):
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data or {}


def _composition(args):
    if getattr(args, "counts", None):
        return load_composition_csv(args.counts, normalize=True)
    if getattr(args, "composition", None):
        return load_composition_csv(args.composition)
    return build_paper_partition(args.kind)


def _add_partition_args(p, required=False):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--kind", choices=[k.value for k in FIXED_KINDS], help="one of the fixed 8-group partitions")
    g.add_argument("--counts", help="CSV of region-by-group counts (row-normalized on load)")
    g.add_argument("--composition", help="CSV of row-stochastic proportions")


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# subcommands


def cmd_world_gen(args):
    cfg = WorldConfig.from_dict(_load_yaml(args.config).get("world", {})) if args.config else WorldConfig()
    if args.seed_override is not None:
        cfg = replace(cfg, seed=args.seed_override)
    catalog, model = build_world(cfg)
    save_world(args.out, cfg, catalog, model)
    print(f"wrote world (V={cfg.V}, K={cfg.K}, T={cfg.T}, seed={cfg.seed}) to {args.out}")
    if args.trajectories or args.aggregates:
        if not (args.kind or args.counts or args.composition):
            raise UsageError("world-gen: --trajectories/--aggregates need a partition (--kind/--counts/--composition)")
        comp = _composition(args)
        rng = np.random.default_rng([cfg.seed, 1])
        pop = sample_population(model, comp, np.full(comp.G, args.n_per_region), rng)
        if args.trajectories:
            save_trajectories_csv(pop, args.trajectories)
            print(f"wrote {len(pop)} trajectories to {args.trajectories}")
        if args.aggregates:
            fmap = FeatureMap.for_catalog(args.feature_map, catalog)
            if args.exact:
                agg = exact_regional_aggregates(comp, exact_group_means(fmap, model))
            else:
                agg = empirical_regional_aggregates(fmap, pop.unlabeled(), comp.G)
            agg.to_csv(args.aggregates)
            print(f"wrote {agg.shape[0]}x{agg.shape[1]} aggregates to {args.aggregates}")
    return 0


def cmd_diagnose(args):
    comp = _composition(args)
    diag = diagnostics(comp, args.rank_tol)
    print(f"partition: {comp.provenance.value} ({comp.G} regions x {comp.K} groups)")
    print(f"rank: {diag.rank}")
    print(f"sigma_min: {diag.sigma_min:.6e}")
    print(f"condition_number: {diag.condition_number:.6e}")
    print("singular_values: " + " ".join(f"{s:.6e}" for s in diag.singular_values))
    return 0


def cmd_fit(args):
    cfg, catalog, model = load_world(args.world)
    comp = _composition(args)
    aggregates = AggregateMatrix.from_csv(args.aggregates)
    fmap = FeatureMap.for_catalog(args.feature_map, catalog)
    if args.trajectories:
        base = fit_base_chain(load_trajectories_csv(args.trajectories).unlabeled(), catalog.V, args.smoothing)
    else:
        base = model.base
    opts = FitOptions.from_dict(_load_yaml(args.config).get("fit")) if args.config else FitOptions()
    params, report = atlas_fit(base, comp, aggregates, args.mode, opts, fmap)
    Path(args.out).write_text(json.dumps({"params": params.to_dict(), "report": report.to_dict()}), encoding="utf-8")
    print(f"fit {args.mode}: converged={report.converged} iterations={report.iterations} "
          f"eps_opt={report.eps_opt:.3e}; wrote {args.out}")
    if not report.converged and not args.allow_nonconverged:
        print("error: fit did not converge (pass --allow-nonconverged to accept)", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args):
    cfg, catalog, model = load_world(args.world)
    payload = json.loads(Path(args.params).read_text(encoding="utf-8"))
    params = TiltParams.from_dict(payload.get("params", payload), catalog.category, catalog.n_categories)
    if params.K != model.K:
        raise ConfigError(f"params have {params.K} groups, world has {model.K}")
    seed = cfg.seed if args.seed_override is None else args.seed_override
    real = [sample_group(model, d, args.n_eval, np.random.default_rng([seed, 2, d])) for d in range(model.K)]
    synth = [params.sample(d, args.n_eval, np.random.default_rng([seed, 3, d])) for d in range(model.K)]
    grid = EvalGrid(cfg.grid_extent, args.grid, args.grid)
    labels = GROUP_LABELS if model.K == len(GROUP_LABELS) else ()
    report = evaluate_groups(grid, catalog, real, synth, labels=labels)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_bounds(args):
    comp = _composition(args)
    rep = bound_report(comp, [args.n_min] * comp.G, args.m, args.delta, args.eps_opt, args.B)
    _print(rep.to_dict())
    return 0


def cmd_rq(args):
    cfg = experiments.load_config(args.config) if args.config else experiments.ExperimentConfig()
    if args.seed_override is not None:
        cfg = replace(cfg, seeds=(args.seed_override,))
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    result = experiments.RUNNERS[args.command](cfg, timestamp=not args.no_timestamp)
    for f in result.files:
        print(f)
    if not result.converged:
        if args.allow_nonconverged:
            log.warning("%s: some fits did not converge", result.name)
        else:
            print(f"error: {result.name} had non-converged fits (pass --allow-nonconverged to accept)",
                  file=sys.stderr)
            return 1
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="atlas-lab", description="Learning group trajectory models from regional aggregates.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("world-gen", help="build a synthetic world, optionally sample a population")
    p.add_argument("--config", help="YAML config; its 'world' section is used")
    p.add_argument("--seed-override", type=int)
    p.add_argument("--out", required=True, help="world JSON to write")
    _add_partition_args(p)
    p.add_argument("--n-per-region", type=int, default=2000)
    p.add_argument("--trajectories", help="write the sampled population to this CSV")
    p.add_argument("--aggregates", help="write regional aggregates to this CSV")
    p.add_argument("--feature-map", default="poi_histogram", choices=[k.value for k in FeatureMapKind])
    p.add_argument("--exact", action="store_true", help="exact aggregates instead of sample means")
    p.set_defaults(func=cmd_world_gen)

    p = sub.add_parser("diagnose-partition", help="rank, sigma_min and conditioning of a partition")
    _add_partition_args(p, required=True)
    p.add_argument("--rank-tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("fit", help="fit group tilts from regional aggregates")
    p.add_argument("--world", required=True)
    p.add_argument("--aggregates", required=True)
    _add_partition_args(p, required=True)
    p.add_argument("--trajectories", help="unlabeled CSV for the base chain (default: the world's base)")
    p.add_argument("--smoothing", type=float, default=1e-3)
    p.add_argument("--mode", default="two_stage", choices=[m.value for m in FitMode])
    p.add_argument("--feature-map", default="poi_histogram", choices=[k.value for k in FeatureMapKind])
    p.add_argument("--config", help="YAML config; its 'fit' section is used")
    p.add_argument("--out", required=True)
    p.add_argument("--allow-nonconverged", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="per-group JSD table of fitted params against the world")
    p.add_argument("--world", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--n-eval", type=int, default=2000)
    p.add_argument("--grid", type=int, default=40)
    p.add_argument("--seed-override", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    for name, text in (("rq1", "partition sweep"), ("rq2", "feature-map sweep"), ("rq3", "next-POI prediction")):
        p = sub.add_parser(name, help=f"run the {text} experiment")
        p.add_argument("--config", help="YAML experiment config (defaults apply when omitted)")
        p.add_argument("--seed-override", type=int)
        p.add_argument("--output-dir")
        p.add_argument("--no-timestamp", action="store_true")
        p.add_argument("--allow-nonconverged", action="store_true")
        p.set_defaults(func=cmd_rq)

    p = sub.add_parser("bounds-report", help="finite-sample recovery bound for a partition")
    _add_partition_args(p, required=True)
    p.add_argument("--n-min", type=int, required=True)
    p.add_argument("--m", type=int, required=True, help="feature dimension")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--eps-opt", type=float, default=0.0)
    p.add_argument("--B", type=float, default=1.0, help="bound on the feature norm")
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage(), end="", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
