"""Step-length statistics of saccadic eye movements.

Pipeline: parse and segment gaze traces, measure step lengths in euclidean
or hyperbolic (Poincare disc) geometry, fit generalized Pareto tails over
bootstrap image subsets, characterize observers in (shape, scale) space
with Gaussian mixtures, and identify observers with one-vs-rest linear
SVMs over root-density feature vectors.
"""
from .classify import EvalConfig, EvalReport, SvmModel, evaluate, sweep, train_ovr
from .features import (
    FeatureSelection,
    FeatureVector,
    common_grid,
    embed_pdf,
    project,
    select_top_variance,
)
from .geometry import (
    DiscPoint,
    StepLength,
    euclidean_distance,
    hyperbolic_distance,
    to_disc,
)
from .gmm import GmmModel, cluster_observer_map, fit_gmm, responsibilities
from .gpd import (
    FitError,
    GofStats,
    GpdParams,
    cdf,
    fit_three_param,
    fit_two_param_mle,
    gof_adjusted_r2,
    pdf,
    quantile,
    sample,
)
from .ingest import (
    EyeSample,
    EyeTrace,
    IngestConfig,
    SegmentationParams,
    nonfixation_pairs,
    parse_trace_file,
    segment_fixations,
    write_trace_file,
)
from .synth import ObserverProfile, generate_traces
from .trials import TrialPlan, TrialRecord, ecdf_of_r2, pool_step_lengths, run_trials

__version__ = "0.1.0"
