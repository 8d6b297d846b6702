"""Recover group-conditioned trajectory models from regional aggregates.

The world is a Markov chain over POIs; each demographic group is an exponential
tilt of it. Regions only reveal mixtures of group feature means, weighted by a
known composition matrix.
"""
from .chain import BaseChain, ChainMarginals, count_covariance, forward_log_partition, sample_paths, tilted_marginals
from .divergence import js_divergence, tv_distance
from .downstream import DownstreamReport, NextPoiModel, evaluate_next_poi, train_next_poi
from .evaluation import (
    EvalGrid,
    GroupEvalReport,
    evaluate_groups,
    gap_closed,
    haversine_km,
    poi_frequency_jsd,
    spatial_jsd,
    travel_distance_jsd,
    trip_jsd,
)
from .experiments import ExperimentConfig, load_config, run_rq1, run_rq2, run_rq3
from .features import (
    AggregateMatrix,
    FeatureMap,
    FeatureMapKind,
    empirical_regional_aggregates,
    exact_group_means,
    exact_regional_aggregates,
    phi_apply,
)
from .partitions import (
    CompositionMatrix,
    PartitionDiagnostics,
    Provenance,
    build_from_counts,
    build_paper_partition,
    diagnostics,
)
from .recovery import (
    RankDeficientError,
    RecoveryResult,
    bound_report,
    finite_sample_bound,
    overall_bound,
    phi_ipm,
    recover_group_means,
    stability_check,
)
from .tilt import (
    FitMode,
    FitOptions,
    FitReport,
    TiltParams,
    atlas_fit,
    baseline_params,
    fit_base_chain,
    fit_direct_l2,
    fit_tilt_dual,
)
from .world import (
    ConfigError,
    GroundTruthModel,
    PoiCatalog,
    TiltTarget,
    Trajectory,
    TrajectorySet,
    WorldConfig,
    build_world,
    sample_population,
    sample_trajectory,
)

__version__ = "0.1.0"
