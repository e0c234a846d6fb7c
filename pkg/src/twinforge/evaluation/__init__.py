"""Error measures, fair test sets, correlations and ranking studies."""

from .measures import MEASURES, EvalTable, MeasureSet, aggregate, error_measures, quartiles, write_aggregates
from .selection import FairSubset, select_fair_subset
from .stats import (Chi2Result, CorrelationTable, chi2_from_counts, chi2_sf, chi2_uniformity,
                    gammainc_upper, pearson, pearson_table)
from .studies import ExtrapolationResult, extrapolation_study, rank_and_best_k, split_window_measures

__all__ = [
    "MEASURES", "EvalTable", "MeasureSet", "aggregate", "error_measures", "quartiles",
    "write_aggregates", "FairSubset", "select_fair_subset", "Chi2Result", "CorrelationTable",
    "chi2_from_counts", "chi2_sf", "chi2_uniformity", "gammainc_upper", "pearson",
    "pearson_table", "ExtrapolationResult", "extrapolation_study", "rank_and_best_k",
    "split_window_measures",
]
