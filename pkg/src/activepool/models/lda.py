"""Multiclass linear discriminant analysis with a shrunk pooled covariance.

Gaussian class-conditional model with one shared covariance: class means are
sample means, the pooled covariance is the within-class scatter divided by
(n - N), and a shrinkage blend (1 - lambda) S + lambda diag(S) keeps it
invertible when samples are scarce. Priors come from class frequencies, and
posteriors are computed through log-space normalization so well-separated
points do not underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SHRINKAGE = 0.1


@dataclass(frozen=True)
class LdaModel:
    class_means: np.ndarray
    pooled_covariance: np.ndarray
    priors: np.ndarray
    shrinkage: float
    _chol: np.ndarray  # lower Cholesky factor of the shrunk covariance

    @property
    def n_classes(self) -> int:
        return len(self.priors)

    def log_posterior(self, x) -> np.ndarray:
        """Row-normalized log p(class | x) for a batch of samples."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.class_means.shape[1]:
            raise ValueError(
                f"expected {self.class_means.shape[1]} features, got {x.shape[1]}"
            )
        scores = np.empty((len(x), self.n_classes))
        for cls in range(self.n_classes):
            diff = x - self.class_means[cls]
            # Mahalanobis distance through the Cholesky factor: solve L z = diff.
            z = np.linalg.solve(self._chol, diff.T)
            scores[:, cls] = np.log(self.priors[cls]) - 0.5 * np.einsum("ij,ij->j", z, z)
        peak = scores.max(axis=1, keepdims=True)
        log_norm = peak + np.log(np.exp(scores - peak).sum(axis=1, keepdims=True))
        return scores - log_norm

    def posterior(self, x) -> np.ndarray:
        return np.exp(self.log_posterior(x))

    def predict(self, x) -> np.ndarray:
        """Most probable class per row; posterior ties go to the lowest id."""
        return np.argmax(self.log_posterior(x), axis=1)


def train_lda(
    features,
    labels,
    n_classes: int,
    shrinkage: float = DEFAULT_SHRINKAGE,
) -> LdaModel:
    """Fit the shared-covariance Gaussian classifier.

    Every class id in {0..n_classes-1} must occur. Raises ``ValueError`` with
    a "singular covariance" message when the shrunk pooled covariance has no
    Cholesky factor (e.g. shrinkage 0 with fewer samples than features).
    """
    x = np.ascontiguousarray(features, dtype=float)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise ValueError("features must be (n, d) with one label per row")
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if len(y) and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError("label outside {0..n_classes-1}")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")
    counts = np.bincount(y, minlength=n_classes)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"class {missing} has no samples")

    n, d = x.shape
    means = np.empty((n_classes, d))
    scatter = np.zeros((d, d))
    for cls in range(n_classes):
        rows = x[y == cls]
        means[cls] = rows.mean(axis=0)
        centered = rows - means[cls]
        scatter += centered.T @ centered
    dof = n - n_classes
    pooled = scatter / dof if dof > 0 else scatter
    shrunk = (1.0 - shrinkage) * pooled + shrinkage * np.diag(np.diag(pooled))
    try:
        chol = np.linalg.cholesky(shrunk)
    except np.linalg.LinAlgError:
        chol = None
    # LAPACK can factor an exactly semidefinite matrix without complaint,
    # leaving near-zero pivots that blow up at solve time; apply a relative
    # pivot tolerance in the spirit of rank-revealing factorizations.
    if chol is not None:
        pivot_tol = d * np.finfo(float).eps * max(float(np.diag(shrunk).max()), 1e-300)
        if np.any(np.diag(chol) ** 2 <= pivot_tol):
            chol = None
    if chol is None:
        raise ValueError(
            "singular covariance: increase shrinkage or provide more samples "
            f"(n={n}, d={d}, classes={n_classes})"
        )
    return LdaModel(
        class_means=means,
        pooled_covariance=shrunk,
        priors=counts / n,
        shrinkage=float(shrinkage),
        _chol=chol,
    )
