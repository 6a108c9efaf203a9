"""Transfer-function intervention analysis for count-valued multivariate
time series: per-taxon boosted autoregressive models, counterfactual
forecasting, mirror-statistic selection with FDR control, a negative-binomial
VAR simulator, and forecasting/inference benchmarks.
"""

__version__ = "0.1.0"

from .errors import DataError, TransferFXError, ValidationError
from .evalbench import (EvalReport, carry_forward, cv_forecast_eval,
                        export_inference_csv, fold_assignments, global_mean,
                        inference_eval, training_means)
from .gbrt import BoostConfig, TreeEnsemble, fit
from .mirrors import (MirrorReport, SplitPlan, fdp_estimate, fdp_threshold,
                      make_split_plan, mirror_statistics, multi_split_select,
                      partial_dependence, select_taxa)
from .normalize import (MODE_NONE, MODE_SIZE_FACTOR, MODE_SIZE_FACTOR_ASINH,
                        SizeFactors, apply_normalization, size_factors_auto,
                        size_factors_from_reference,
                        size_factors_median_ratios,
                        size_factors_positive_ratios)
from .simgen import SimConfig, SimTruth, nb_sample, nonnull_sets, simulate
from .transfer import (InterventionScenario, TransferModel,
                       counterfactual_difference, counterfactual_summary,
                       first_onset_index, fit_transfer, forecast, steps)
from .ts_core import (InterventionSeriesSet, SubjectSeries, TrainingSegment,
                      export, extract_segments, ingest, interpolate,
                      segment_table, subset_values)

__all__ = [
    "__version__",
    "BoostConfig", "DataError", "EvalReport", "InterventionScenario",
    "InterventionSeriesSet", "MODE_NONE", "MODE_SIZE_FACTOR",
    "MODE_SIZE_FACTOR_ASINH", "MirrorReport", "SimConfig", "SimTruth",
    "SizeFactors", "SplitPlan", "SubjectSeries", "TrainingSegment",
    "TransferFXError", "TransferModel", "TreeEnsemble", "ValidationError",
    "apply_normalization", "carry_forward", "counterfactual_difference",
    "counterfactual_summary", "cv_forecast_eval", "export",
    "export_inference_csv", "extract_segments", "fdp_estimate",
    "fdp_threshold", "first_onset_index",
    "fit", "fit_transfer", "fold_assignments", "forecast", "global_mean",
    "inference_eval", "ingest", "interpolate", "make_split_plan",
    "mirror_statistics", "multi_split_select", "nb_sample", "nonnull_sets",
    "partial_dependence", "segment_table", "select_taxa", "simulate",
    "size_factors_auto", "size_factors_from_reference",
    "size_factors_median_ratios", "size_factors_positive_ratios", "steps",
    "subset_values", "training_means",
]
