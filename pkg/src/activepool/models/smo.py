"""Binary soft-margin kernel SVM trained by sequential minimal optimization.

The solver maximizes the standard dual

    W(alpha) = sum_i alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
    s.t.      0 <= alpha_i <= C,  sum_i alpha_i y_i = 0

by repeatedly optimizing the pair of coefficients that most violates the KKT
conditions. With F_i = sum_j alpha_j y_j K_ij the violation measure for
sample i is simply y_i - F_i; the pair is the argmax over the index set that
may move up against the argmin over the set that may move down, and the
optimizer stops once that gap closes below the tolerance. The bias is the
midpoint of the final gap, which puts every free support vector within
tol/2 of |f| = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kernels import KernelConfig, gram_matrix

DEFAULT_TOL = 1e-3
DEFAULT_MAX_UPDATES = 1_000_000
_ETA_FLOOR = 1e-12


class SmoConvergenceError(RuntimeError):
    """Raised when the pair-update cap is reached before the KKT gap closes."""


@dataclass
class BinarySvm:
    """A trained binary machine: its support set and decision function.

    ``support_idx`` points into the training set the machine was fit on;
    coefficients for non-support samples (alpha = 0) are dropped. The
    decision function is f(x) = sum_j alpha_j y_j k(x, x_j) + b.
    """

    support_idx: np.ndarray
    support_vectors: np.ndarray
    alphas: np.ndarray
    signed_labels: np.ndarray
    bias: float
    kernel: KernelConfig
    c_penalty: float
    dual_objective: float
    n_updates: int

    def decision_values(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = gram_matrix(self.kernel, x, self.support_vectors)
        return k @ (self.alphas * self.signed_labels) + self.bias

    def bounded_support_idx(self, bound_tol: float = 1e-8) -> np.ndarray:
        """Training indices of support vectors sitting at the alpha = C bound."""
        at_bound = self.alphas >= self.c_penalty * (1.0 - bound_tol)
        return self.support_idx[at_bound]


def train_binary_svm(
    features,
    signed_labels,
    kernel: KernelConfig,
    c_penalty: float,
    tol: float = DEFAULT_TOL,
    max_updates: int = DEFAULT_MAX_UPDATES,
) -> BinarySvm:
    """Fit a binary SVM on +/-1 labels.

    Raises :class:`SmoConvergenceError` if ``max_updates`` pair updates do
    not close the KKT gap, and ``ValueError`` on malformed inputs (labels
    outside {-1, +1}, a single class, non-positive C).
    """
    x = np.ascontiguousarray(features, dtype=float)
    y = np.ascontiguousarray(signed_labels, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise ValueError("features must be (n, d) with one signed label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("signed labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes required to train a binary SVM")
    if not c_penalty > 0:
        raise ValueError("c_penalty must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")

    n = len(y)
    k = gram_matrix(kernel, x, x)
    alpha = np.zeros(n)
    f_raw = np.zeros(n)  # sum_j alpha_j y_j K_ij, bias-free
    updates = 0
    # Rounding residue from pair updates can leave an alpha a few ulps off
    # its bound; such dust keeps the index formally movable while float
    # absorption gives its box segment zero width, stalling the solver.
    # Snap dust to the exact bound (adjusting F consistently) instead.
    snap_eps = 1e-12 * c_penalty

    while True:
        viol = y - f_raw
        movable_up = ((y > 0) & (alpha < c_penalty)) | ((y < 0) & (alpha > 0))
        movable_dn = ((y < 0) & (alpha < c_penalty)) | ((y > 0) & (alpha > 0))
        up_viol = np.where(movable_up, viol, -np.inf)
        dn_viol = np.where(movable_dn, viol, np.inf)
        i = int(np.argmax(up_viol))
        j = int(np.argmin(dn_viol))
        gap_hi = up_viol[i]
        gap_lo = dn_viol[j]
        if gap_hi - gap_lo <= tol:
            break
        if updates >= max_updates:
            raise SmoConvergenceError(
                f"SMO did not converge within {max_updates} pair updates "
                f"(gap {gap_hi - gap_lo:.3e} > tol {tol:g})"
            )

        same_sign = y[i] * y[j] > 0
        if same_sign:
            total = alpha[i] + alpha[j]
            lo = max(0.0, total - c_penalty)
            hi = min(c_penalty, total)
        else:
            diff = alpha[j] - alpha[i]
            lo = max(0.0, diff)
            hi = min(c_penalty, c_penalty + diff)
        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        if eta < _ETA_FLOOR:
            eta = _ETA_FLOOR
        # E_i - E_j with E = f - y; the pair's joint optimum moves alpha_j by
        # y_j (E_i - E_j) / eta before clipping to the box segment [lo, hi].
        new_j = alpha[j] + y[j] * ((f_raw[i] - y[i]) - (f_raw[j] - y[j])) / eta
        new_j = min(max(new_j, lo), hi)
        delta_j = new_j - alpha[j]
        if delta_j == 0.0:
            # Unreachable for a maximal violating pair (the box segment always
            # leaves room in the descent direction); guard anyway.
            raise RuntimeError("SMO stalled on a violating pair")
        delta_i = -(y[i] * y[j]) * delta_j
        alpha[j] = new_j
        alpha[i] = alpha[i] + delta_i
        f_raw += (y[i] * delta_i) * k[:, i] + (y[j] * delta_j) * k[:, j]
        for t in (i, j):
            a_t = alpha[t]
            if a_t != 0.0 and abs(a_t) < snap_eps:
                alpha[t] = 0.0
                f_raw -= y[t] * a_t * k[:, t]
            elif a_t != c_penalty and abs(a_t - c_penalty) < snap_eps:
                alpha[t] = c_penalty
                f_raw += y[t] * (c_penalty - a_t) * k[:, t]
        updates += 1

    bias = 0.5 * (gap_hi + gap_lo)
    dual_objective = float(alpha.sum() - 0.5 * (alpha @ (y * f_raw)))
    keep = alpha > 1e-12 * max(1.0, c_penalty)
    return BinarySvm(
        support_idx=np.flatnonzero(keep),
        support_vectors=x[keep].copy(),
        alphas=alpha[keep],
        signed_labels=y[keep],
        bias=float(bias),
        kernel=kernel,
        c_penalty=float(c_penalty),
        dual_objective=dual_objective,
        n_updates=updates,
    )
