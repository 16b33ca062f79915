"""Classifiers: binary SMO-trained SVM, one-against-all multiclass wrapper,
sigmoid calibration and shrinkage LDA, plus grid-search model selection."""

from .lda import DEFAULT_SHRINKAGE, LdaModel, train_lda
from .multiclass import (
    DEFAULT_C_GRID,
    DEFAULT_GAMMA_GRID,
    LdaTrainer,
    MulticlassSvmModel,
    SvmTrainer,
    cross_validate,
    train_multiclass_svm,
)
from .platt import PlattSigmoid, fit_platt, platt_nll
from .smo import BinarySvm, SmoConvergenceError, train_binary_svm

__all__ = [
    "BinarySvm",
    "DEFAULT_C_GRID",
    "DEFAULT_GAMMA_GRID",
    "DEFAULT_SHRINKAGE",
    "LdaModel",
    "LdaTrainer",
    "MulticlassSvmModel",
    "PlattSigmoid",
    "SmoConvergenceError",
    "SvmTrainer",
    "cross_validate",
    "fit_platt",
    "platt_nll",
    "train_binary_svm",
    "train_lda",
    "train_multiclass_svm",
]
