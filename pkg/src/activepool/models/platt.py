"""Sigmoid calibration of SVM decision values into class probabilities.

Fits p(y = +1 | f) = 1 / (1 + exp(A f + B)) by Newton iterations with
backtracking on the regularized negative log-likelihood, using the smoothed
targets t+ = (N+ + 1) / (N+ + 2) and t- = 1 / (N- + 2) instead of hard 0/1
labels. The objective is convex, so the fit is a global optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GRAD_TOL = 1e-10
_MAX_NEWTON = 200


@dataclass(frozen=True)
class PlattSigmoid:
    """Fitted sigmoid p(+1 | f) = 1 / (1 + exp(a_slope * f + b_offset)).

    On correctly oriented data (positives getting larger decision values)
    ``a_slope`` comes out negative.
    """

    a_slope: float
    b_offset: float

    def prob(self, decision_values) -> np.ndarray:
        z = self.a_slope * np.asarray(decision_values, dtype=float) + self.b_offset
        # Stable logistic: never exponentiate a large positive argument.
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = np.exp(-z[pos]) / (1.0 + np.exp(-z[pos]))
        out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
        return out


def _smoothed_targets(signed_labels: np.ndarray) -> np.ndarray:
    n_pos = int(np.sum(signed_labels > 0))
    n_neg = int(np.sum(signed_labels < 0))
    t_pos = (n_pos + 1.0) / (n_pos + 2.0)
    t_neg = 1.0 / (n_neg + 2.0)
    return np.where(signed_labels > 0, t_pos, t_neg)


def platt_nll(a_slope: float, b_offset: float, decision_values, signed_labels) -> float:
    """Negative log-likelihood of a sigmoid under the smoothed targets.

    The per-sample term is log(1 + exp(z)) - (1 - t) z with z = A f + B,
    evaluated in the overflow-safe form.
    """
    f = np.asarray(decision_values, dtype=float)
    y = np.asarray(signed_labels, dtype=float)
    t = _smoothed_targets(y)
    z = a_slope * f + b_offset
    softplus = np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(z)))
    return float(np.sum(softplus - (1.0 - t) * z))


def fit_platt(decision_values, signed_labels, max_iter: int = _MAX_NEWTON) -> PlattSigmoid:
    """Fit the sigmoid on decision values with +/-1 labels.

    Requires at least one sample of each sign. Converges to a gradient norm
    below 1e-10 or stops once backtracking can no longer make progress at
    float precision (the objective is convex either way).
    """
    f = np.asarray(decision_values, dtype=float).ravel()
    y = np.asarray(signed_labels, dtype=float).ravel()
    if len(f) != len(y) or len(f) < 2:
        raise ValueError("need at least two (decision value, label) pairs")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("signed labels must be -1 or +1")
    n_pos = int(np.sum(y > 0))
    n_neg = int(np.sum(y < 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both label signs required to calibrate")

    t = _smoothed_targets(y)
    a, b = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    nll = platt_nll(a, b, f, y)

    for _ in range(max_iter):
        z = a * f + b
        p = PlattSigmoid(1.0, 0.0).prob(z)  # logistic of z with unit slope
        resid = t - p
        grad = np.array([resid @ f, resid.sum()])
        if np.max(np.abs(grad)) < _GRAD_TOL:
            break
        w = p * (1.0 - p)
        h11 = float(w @ (f * f)) + 1e-12
        h12 = float(w @ f)
        h22 = float(w.sum()) + 1e-12
        det = h11 * h22 - h12 * h12
        if det <= 0:
            step_dir = -grad  # degenerate curvature; fall back to gradient descent
        else:
            step_dir = -np.array(
                [(h22 * grad[0] - h12 * grad[1]) / det, (h11 * grad[1] - h12 * grad[0]) / det]
            )
        descent = float(grad @ step_dir)
        if descent >= 0:
            step_dir = -grad
            descent = float(grad @ step_dir)
        step = 1.0
        while step > 1e-12:
            cand = platt_nll(a + step * step_dir[0], b + step * step_dir[1], f, y)
            if cand <= nll + 1e-4 * step * descent:
                break
            step *= 0.5
        else:
            break  # no representable progress left
        a += step * step_dir[0]
        b += step * step_dir[1]
        nll = platt_nll(a, b, f, y)

    return PlattSigmoid(a_slope=float(a), b_offset=float(b))
