"""Kernel functions and Gram-matrix helpers.

Shared by the SVM, the batch-diversity criteria and kernel k-means. Only two
kernels are supported: the Gaussian RBF ``exp(-gamma * ||a - b||^2)`` and the
plain linear kernel ``<a, b>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VALID_KINDS = ("rbf", "linear")


@dataclass(frozen=True)
class KernelConfig:
    """Kernel choice plus its width parameter.

    ``gamma`` only matters for the RBF kernel and must be positive there; it
    is ignored for the linear kernel.
    """

    kind: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {VALID_KINDS}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf kernel needs gamma > 0")


def kernel_eval(config: KernelConfig, a, b) -> float:
    """Evaluate the kernel on a single pair of vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"expected two 1-d vectors of equal length, got {a.shape} and {b.shape}")
    if config.kind == "linear":
        return float(a @ b)
    diff = a - b
    return float(np.exp(-config.gamma * (diff @ diff)))


def gram_matrix(config: KernelConfig, rows, cols=None) -> np.ndarray:
    """Kernel matrix K[i, j] = k(rows[i], cols[j]); ``cols`` defaults to ``rows``."""
    rows = np.asarray(rows, dtype=float)
    cols = rows if cols is None else np.asarray(cols, dtype=float)
    if rows.ndim != 2 or cols.ndim != 2:
        raise ValueError("gram_matrix expects 2-d sample matrices")
    if rows.shape[1] != cols.shape[1]:
        raise ValueError(
            f"feature dimensions differ: {rows.shape[1]} vs {cols.shape[1]}"
        )
    if config.kind == "linear":
        return rows @ cols.T
    # Squared distances via the expansion trick; clamp the tiny negatives that
    # float cancellation produces so the RBF stays within (0, 1].
    r2 = np.einsum("ij,ij->i", rows, rows)
    c2 = np.einsum("ij,ij->i", cols, cols)
    sq = r2[:, None] + c2[None, :] - 2.0 * (rows @ cols.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-config.gamma * sq)


def normalized_similarity(config: KernelConfig, a, b) -> float:
    """Cosine-like similarity k(a,b) / sqrt(k(a,a) k(b,b)), in [-1, 1]."""
    k_ab = kernel_eval(config, a, b)
    k_aa = kernel_eval(config, a, a)
    k_bb = kernel_eval(config, b, b)
    denom = k_aa * k_bb
    if denom <= 0:
        raise ValueError("normalized similarity undefined for zero self-similarity")
    return float(np.clip(k_ab / np.sqrt(denom), -1.0, 1.0))


def normalized_gram(config: KernelConfig, rows, cols=None) -> np.ndarray:
    """Pairwise normalized similarities; identical to ``gram_matrix`` for RBF
    kernels (unit self-similarity)."""
    rows = np.asarray(rows, dtype=float)
    cols = rows if cols is None else np.asarray(cols, dtype=float)
    gram = gram_matrix(config, rows, cols)
    if config.kind == "rbf":
        return gram
    r_self = np.einsum("ij,ij->i", rows, rows)
    c_self = np.einsum("ij,ij->i", cols, cols)
    if np.any(r_self <= 0) or np.any(c_self <= 0):
        raise ValueError("normalized similarity undefined for zero self-similarity")
    gram = gram / np.sqrt(np.outer(r_self, c_self))
    return np.clip(gram, -1.0, 1.0)
