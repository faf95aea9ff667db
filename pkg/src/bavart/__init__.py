"""Sum-of-trees vector autoregressions with stochastic volatility."""

from .data import (DataError, LagDesign, NsCurveConfig, TimeSeriesMatrix, build_lag_design, load_csv,
                   ns_extract_factors, ns_loadings, ns_map_forecasts)
from .errors import ConfigError
from .forecast import BacktestConfig, PredictiveDraws, backtest, crps, msfe, predict
from .girf import GirfSpec, girf
from .io import read_draws, write_draws
from .sampler import ModelConfig, PosteriorDraws, estimate
from .sv import SvPrior, SvState
from .tree import DecisionTree, TreePriorConfig

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig", "ConfigError", "DataError", "DecisionTree", "GirfSpec", "LagDesign", "ModelConfig",
    "NsCurveConfig", "PosteriorDraws", "PredictiveDraws", "SvPrior", "SvState", "TimeSeriesMatrix",
    "TreePriorConfig", "backtest", "build_lag_design", "crps", "estimate", "girf", "load_csv", "msfe",
    "ns_extract_factors", "ns_loadings", "ns_map_forecasts", "predict", "read_draws", "write_draws",
]
