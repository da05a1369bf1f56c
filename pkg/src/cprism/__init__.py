"""Causal subgroup discovery over observational data.

Pipeline: ingest a CSV, binarize covariates into atoms, fit a propensity
model, search the constrained multi-objective space of rule-described
subgroups for the Pareto front of treatment effect versus outcome variances,
then validate effects through propensity-score matching and project units for
visual inspection. See the CLI (``cprism --help``) and the HTTP service for
the two front doors.
"""

__version__ = "0.1.0"

from .dataset import (
    Atom,
    AtomSchema,
    BinaryAtomMatrix,
    CovariateSpec,
    CprismError,
    IngestConfig,
    IngestError,
    ObservationalDataset,
    Subgroup,
    SubgroupError,
    all_units_subgroup,
    antecedent_length,
    binarize,
    cover,
    ingest_csv,
    merge_subgroups,
    split_subgroup,
    subgroup_from_json,
    subgroup_to_json,
)
from .discovery import (
    DiscoveryError,
    ParetoResult,
    RankedSubgroup,
    SearchParams,
    crowding_distance,
    discover,
    dominates,
    non_dominated_sort,
)
from .estimators import (
    EffectNotIdentifiable,
    PropensityModel,
    SubgroupMetrics,
    estimate_cate,
    estimate_variances,
    evaluate_subgroup,
    fit_propensity,
    ipw_weights,
)
from .matching import (
    MatchedPair,
    MatchReport,
    build_match_report,
    ite_distribution,
    match_units,
    propensity_histogram,
    sample_pairs_for_display,
)
from .projection import ProjectionLayout, gower_distance, nmds, project_dataset, stress_1
from .synth import (
    BenchMetrics,
    GroundTruth,
    RuleClause,
    SynthSpec,
    bench_metrics,
    exhaustive_front,
    generate_synthetic,
    syn_table_spec,
)

__all__ = [name for name in dir() if not name.startswith("_")]
