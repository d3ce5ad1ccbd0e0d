"""Web-data prediction stream: lagged designs and four regressors."""

from .design import FeatureMatrix, as_targets, build_design, build_features
from .linear import (
    LinearModel,
    fit_lasso,
    fit_ols,
    lasso_lambda_grid,
    lasso_lambda_max,
    lasso_standardized,
    least_squares,
)
from .trees import (
    BOOST_DEFAULTS,
    FOREST_DEFAULTS,
    RegressionTree,
    TreeEnsembleModel,
    fit_boost,
    fit_rf,
    grow_tree,
)
from .validation import CvReport, cross_validate, fold_indices, model_from_dict, predict, predict_values

__all__ = [
    "BOOST_DEFAULTS",
    "CvReport",
    "FOREST_DEFAULTS",
    "FeatureMatrix",
    "LinearModel",
    "RegressionTree",
    "TreeEnsembleModel",
    "as_targets",
    "build_design",
    "build_features",
    "cross_validate",
    "fit_boost",
    "fit_lasso",
    "fit_ols",
    "fit_rf",
    "fold_indices",
    "grow_tree",
    "lasso_lambda_grid",
    "lasso_lambda_max",
    "lasso_standardized",
    "least_squares",
    "model_from_dict",
    "predict",
    "predict_values",
]
