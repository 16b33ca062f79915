"""One-against-all multiclass SVM, calibrated posteriors and model selection.

One binary machine per class (that class versus the rest, all sharing the
same kernel and C); the predicted class is the argmax of the per-class
decision values, with ties going to the lowest class id. Posteriors, when
requested, come from per-class sigmoid calibration fitted on cross-validated
decision values and renormalized across classes.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np

from ..kernels import KernelConfig
from .lda import DEFAULT_SHRINKAGE, LdaModel, train_lda
from .platt import PlattSigmoid, fit_platt
from .smo import DEFAULT_MAX_UPDATES, DEFAULT_TOL, BinarySvm, train_binary_svm

logger = logging.getLogger(__name__)

DEFAULT_C_GRID = tuple(10.0 ** k for k in range(-1, 4))      # 0.1 .. 1000
DEFAULT_GAMMA_GRID = tuple(10.0 ** k for k in range(-3, 2))  # 0.001 .. 10


@dataclass
class MulticlassSvmModel:
    """One-against-all ensemble over a shared training set.

    ``support_mask`` and ``bounded_mask`` flag training rows that are support
    vectors (respectively bounded ones, alpha at C) for at least one machine;
    ``train_features`` keeps the training matrix so support-vector geometry
    stays available to batch heuristics after training.
    """

    machines: tuple[BinarySvm, ...]
    kernel: KernelConfig
    c_penalty: float
    n_classes: int
    train_features: np.ndarray
    support_mask: np.ndarray
    bounded_mask: np.ndarray
    calibrators: tuple[PlattSigmoid, ...] | None = None

    @property
    def n_train(self) -> int:
        return len(self.train_features)

    def decision_matrix(self, x) -> np.ndarray:
        """(m, n_classes) decision values, one column per class machine."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty((len(x), self.n_classes))
        for cls, machine in enumerate(self.machines):
            out[:, cls] = machine.decision_values(x)
        return out

    def decision_value(self, x, class_id: int) -> float:
        if not 0 <= class_id < self.n_classes:
            raise ValueError(f"class id {class_id} out of range")
        return float(self.machines[class_id].decision_values(np.atleast_2d(x))[0])

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.decision_matrix(x), axis=1)

    def posterior(self, x) -> np.ndarray:
        """Calibrated class probabilities, renormalized to sum to one per row."""
        if self.calibrators is None:
            raise ValueError("model was trained without calibration; no posteriors")
        decisions = self.decision_matrix(x)
        raw = np.empty_like(decisions)
        for cls, sigmoid in enumerate(self.calibrators):
            raw[:, cls] = sigmoid.prob(decisions[:, cls])
        totals = raw.sum(axis=1, keepdims=True)
        # All-zero rows cannot occur: each sigmoid output is strictly positive.
        return raw / totals


def _stratified_fold_ids(labels: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Assign each sample a fold id, balanced within every label value."""
    fold_ids = np.empty(len(labels), dtype=np.int64)
    for value in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == value))
        fold_ids[idx] = np.arange(len(idx)) % folds
    return fold_ids


def _calibration_values(
    x: np.ndarray,
    signed: np.ndarray,
    kernel: KernelConfig,
    c_penalty: float,
    tol: float,
    folds: int,
    rng: np.random.Generator,
    fallback_machine: BinarySvm,
) -> np.ndarray:
    """Decision values for calibration, cross-validated when counts allow.

    With fewer than two samples of either sign per fold the split would leave
    a training part single-signed, so calibration falls back to in-sample
    decision values from the already-trained machine.
    """
    n_pos = int(np.sum(signed > 0))
    n_neg = int(np.sum(signed < 0))
    usable = min(folds, n_pos, n_neg)
    if usable < 2:
        logger.info("calibration falling back to in-sample decision values")
        return fallback_machine.decision_values(x)
    if usable < folds:
        logger.warning("calibration folds reduced from %d to %d", folds, usable)
    fold_ids = _stratified_fold_ids(signed, usable, rng)
    values = np.empty(len(x))
    for fold in range(usable):
        held = fold_ids == fold
        machine = train_binary_svm(x[~held], signed[~held], kernel, c_penalty, tol)
        values[held] = machine.decision_values(x[held])
    return values


def train_multiclass_svm(
    features,
    labels,
    n_classes: int,
    kernel: KernelConfig,
    c_penalty: float,
    tol: float = DEFAULT_TOL,
    max_updates: int = DEFAULT_MAX_UPDATES,
    calibrate: bool = False,
    calibration_folds: int = 3,
    seed: int = 0,
) -> MulticlassSvmModel:
    """Fit one-against-all machines; optionally calibrate per-class sigmoids."""
    x = np.ascontiguousarray(features, dtype=float)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise ValueError("features must be (n, d) with one label per row")
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if len(y) and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError("label outside {0..n_classes-1}")
    counts = np.bincount(y, minlength=n_classes)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"class {missing} has no samples")

    machines = []
    support = np.zeros(len(x), dtype=bool)
    bounded = np.zeros(len(x), dtype=bool)
    calibrators = [] if calibrate else None
    rng = np.random.default_rng(seed)
    for cls in range(n_classes):
        signed = np.where(y == cls, 1.0, -1.0)
        machine = train_binary_svm(x, signed, kernel, c_penalty, tol, max_updates)
        machines.append(machine)
        support[machine.support_idx] = True
        bounded[machine.bounded_support_idx()] = True
        if calibrate:
            values = _calibration_values(
                x, signed, kernel, c_penalty, tol, calibration_folds, rng, machine
            )
            calibrators.append(fit_platt(values, signed))
    return MulticlassSvmModel(
        machines=tuple(machines),
        kernel=kernel,
        c_penalty=float(c_penalty),
        n_classes=n_classes,
        train_features=x,
        support_mask=support,
        bounded_mask=bounded,
        calibrators=tuple(calibrators) if calibrate else None,
    )


@dataclass(frozen=True)
class SvmTrainer:
    """Reusable SVM fitting configuration (the ``fit`` side of a model)."""

    kernel: KernelConfig = KernelConfig()
    c_penalty: float = 10.0
    tol: float = DEFAULT_TOL
    calibrate: bool = False
    calibration_folds: int = 3
    seed: int = 0

    def fit(self, features, labels, n_classes: int) -> MulticlassSvmModel:
        return train_multiclass_svm(
            features,
            labels,
            n_classes,
            kernel=self.kernel,
            c_penalty=self.c_penalty,
            tol=self.tol,
            calibrate=self.calibrate,
            calibration_folds=self.calibration_folds,
            seed=self.seed,
        )

    def with_params(self, kernel: KernelConfig, c_penalty: float) -> "SvmTrainer":
        return replace(self, kernel=kernel, c_penalty=c_penalty)


@dataclass(frozen=True)
class LdaTrainer:
    shrinkage: float = DEFAULT_SHRINKAGE

    def fit(self, features, labels, n_classes: int) -> LdaModel:
        return train_lda(features, labels, n_classes, shrinkage=self.shrinkage)


def cross_validate(
    features,
    labels,
    n_classes: int,
    kernel_grid=None,
    c_grid=None,
    folds: int = 5,
    seed: int = 0,
) -> tuple[KernelConfig, float]:
    """Pick (kernel, C) by stratified k-fold accuracy.

    Accuracy ties break toward the smaller C, then the smaller gamma (the
    linear kernel orders as gamma 0). When the rarest class has fewer samples
    than ``folds`` the fold count is reduced to that size and a warning is
    logged; below two usable folds the split is impossible and fails.
    """
    x = np.ascontiguousarray(features, dtype=float)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if kernel_grid is None:
        kernel_grid = tuple(
            KernelConfig("rbf", gamma) for gamma in DEFAULT_GAMMA_GRID
        )
    if c_grid is None:
        c_grid = DEFAULT_C_GRID
    kernel_grid = tuple(kernel_grid)
    c_grid = tuple(float(c) for c in c_grid)
    if not kernel_grid or not c_grid:
        raise ValueError("empty hyperparameter grid")
    counts = np.bincount(y, minlength=n_classes)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"class {missing} has no samples")
    usable = min(folds, int(counts.min()))
    if usable < 2:
        raise ValueError(
            f"cannot form 2 stratified folds: rarest class has {counts.min()} samples"
        )
    if usable < folds:
        logger.warning("cross-validation folds reduced from %d to %d", folds, usable)

    rng = np.random.default_rng(seed)
    fold_ids = _stratified_fold_ids(y, usable, rng)
    best = None
    for kernel, c_penalty in itertools.product(kernel_grid, c_grid):
        correct = 0
        for fold in range(usable):
            held = fold_ids == fold
            model = train_multiclass_svm(
                x[~held], y[~held], n_classes, kernel=kernel, c_penalty=c_penalty
            )
            correct += int(np.sum(model.predict(x[held]) == y[held]))
        accuracy = correct / len(y)
        gamma_key = kernel.gamma if kernel.kind == "rbf" else 0.0
        key = (-accuracy, c_penalty, gamma_key)
        if best is None or key < best[0]:
            best = (key, kernel, c_penalty)
    return best[1], best[2]
