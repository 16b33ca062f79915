"""Query heuristics for pool-based selection.

Three families, all operating on a snapshot of (current model, labeled set,
candidate pool):

* committee disagreement — normalized vote entropy over bootstrap members
  (``score_neqb``) and weighted multi-view disagreement (``score_amd``);
* SVM margins — smallest absolute decision value (``score_ms``), the gap
  between the two largest absolute values (``score_mclu``), plus batch
  variants that add diversity through kernel similarity (``select_mao``,
  ``select_mclu_abd``), distinct closest support vectors (``select_csv``),
  kernel clustering (``select_mclu_ecbd``, ``select_hmcs_i``) or the
  support-vector/non-support boundary (``select_ssc``);
* posterior probabilities — expected model change under the most likely
  label (``score_kl_max``) and the best-versus-second-best probability gap
  (``score_bt``), with uniform random sampling as the control.

Scoring heuristics return a :class:`ScoreVector`; batch heuristics return
the selected candidate positions directly. All tie-breaking is stable by
candidate position so repeated runs agree exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._seeds import derive_seed
from .clustering import binary_split_largest, kernel_kmeans, single_cluster
from .kernels import gram_matrix, normalized_gram

logger = logging.getLogger(__name__)

_BAG_REDRAWS = 20


class HeuristicError(RuntimeError):
    """A heuristic could not produce a valid score or batch."""


class SscDegenerateError(HeuristicError):
    """The support/non-support split is single-class, so no separating
    machine can be trained; callers fall back to margin sampling."""


@dataclass(frozen=True)
class ScoreVector:
    """Per-candidate scores plus the direction that means "select first".

    Sentinel infinities are allowed only on the losing side (``-inf`` when
    maximizing, ``+inf`` when minimizing) so that excluded candidates sort
    last; NaNs are rejected outright.
    """

    scores: np.ndarray
    orientation: str  # "maximize" or "minimize"

    def __post_init__(self):
        scores = np.ascontiguousarray(self.scores, dtype=float)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        if self.orientation not in ("maximize", "minimize"):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        if scores.ndim != 1:
            raise ValueError("scores must be 1-d")
        if np.any(np.isnan(scores)):
            raise ValueError("NaN score")
        bad = np.inf if self.orientation == "maximize" else -np.inf
        if np.any(scores == bad):
            raise ValueError("winning-side infinity is not a valid score")

    def ranking(self) -> np.ndarray:
        """Candidate positions ordered best to worst, ties by position."""
        key = self.scores if self.orientation == "minimize" else -self.scores
        return np.argsort(key, kind="stable")

    def top(self, q: int) -> np.ndarray:
        if not 1 <= q <= len(self.scores):
            raise ValueError(f"q={q} out of range for {len(self.scores)} candidates")
        return self.ranking()[:q]


def _fit_on_class_subset(trainer, features, labels, n_classes):
    """Fit on data that may miss some classes; map predictions back.

    Returns a ``predict(candidates) -> global labels`` callable. Members of a
    bootstrap committee only vote among classes their bag contains.
    """
    present = np.unique(labels)
    if len(present) == n_classes:
        model = trainer.fit(features, labels, n_classes)
        return model.predict
    dense = np.searchsorted(present, labels)
    model = trainer.fit(features, dense, len(present))

    def predict(candidates):
        return present[model.predict(candidates)]

    return predict


# ---------------------------------------------------------------------------
# Committee family


@dataclass(frozen=True)
class CommitteeConfig:
    """Bootstrap committee shape: member count and bag size as a fraction of
    the labeled set. Defaults are deliberately absent here; the engine picks
    them per classifier (7 members at 0.75 for the SVM, 12 at 0.85 for LDA).
    """

    k_members: int
    bag_fraction: float
    seed: int = 0

    def __post_init__(self):
        if self.k_members < 2:
            raise ValueError("committee needs at least two members")
        if not 0.0 < self.bag_fraction <= 1.0:
            raise ValueError("bag_fraction must lie in (0, 1]")


def normalized_vote_entropy(vote_counts) -> np.ndarray:
    """Vote entropy over predicted classes, normalized by log of their count.

    ``vote_counts[..., w]`` is how many members voted class w. Candidates on
    which the committee is unanimous score exactly 0; a uniform split over m
    classes scores exactly 1. Scores always lie in [0, 1].
    """
    counts = np.asarray(vote_counts, dtype=float)
    totals = counts.sum(axis=-1)
    if np.any(totals <= 0):
        raise ValueError("each candidate needs at least one vote")
    p = counts / totals[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    entropy = -plogp.sum(axis=-1)
    n_distinct = (counts > 0).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(n_distinct > 1, entropy / np.log(n_distinct), 0.0)
    return np.clip(scores, 0.0, 1.0)


def score_neqb(
    labeled_x,
    labeled_y,
    pool_x,
    committee: CommitteeConfig,
    base_trainer,
    n_classes: int,
) -> ScoreVector:
    """Normalized entropy of bootstrap-committee votes (maximize).

    Each member trains on a with-replacement bag of the labeled set; bags
    are redrawn (at most 20 times) until they contain at least two classes.
    """
    labeled_x = np.asarray(labeled_x, dtype=float)
    labeled_y = np.asarray(labeled_y, dtype=np.int64)
    pool_x = np.asarray(pool_x, dtype=float)
    n_labeled = len(labeled_y)
    if n_labeled < 2:
        raise ValueError("need at least two labeled samples to draw bags")
    rng = np.random.default_rng(committee.seed)
    bag_size = max(2, int(round(committee.bag_fraction * n_labeled)))

    votes = np.zeros((len(pool_x), n_classes), dtype=np.int64)
    for _ in range(committee.k_members):
        for _ in range(_BAG_REDRAWS):
            bag = rng.integers(0, n_labeled, size=bag_size)
            if len(np.unique(labeled_y[bag])) >= 2:
                break
        else:
            raise HeuristicError(
                f"no bag with two classes found in {_BAG_REDRAWS} redraws"
            )
        predict = _fit_on_class_subset(
            base_trainer, labeled_x[bag], labeled_y[bag], n_classes
        )
        preds = predict(pool_x)
        votes[np.arange(len(pool_x)), preds] += 1
    return ScoreVector(normalized_vote_entropy(votes), "maximize")


# ---------------------------------------------------------------------------
# Multi-view disagreement


@dataclass(frozen=True)
class ViewPartition:
    """Disjoint feature blocks covering all columns; one model per block."""

    views: tuple

    def __post_init__(self):
        views = tuple(np.ascontiguousarray(v, dtype=np.int64) for v in self.views)
        for v in views:
            v.setflags(write=False)
        object.__setattr__(self, "views", views)
        if len(views) < 2:
            raise ValueError("need at least two views")
        combined = np.concatenate(views)
        if any(len(v) == 0 for v in views):
            raise ValueError("empty view")
        expected = np.arange(combined.max() + 1) if len(combined) else np.array([])
        if not np.array_equal(np.sort(combined), expected):
            raise ValueError("views must partition the feature columns exactly")

    @property
    def n_views(self) -> int:
        return len(self.views)


@dataclass(frozen=True)
class ViewWeights:
    """Per-(class, view) vote weights; each view's column sums to one."""

    w: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        if w.ndim != 2:
            raise ValueError("weights must be (n_classes, n_views)")
        if np.any(w < 0):
            raise ValueError("negative view weight")
        sums = w.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("each view's weights must sum to 1 over classes")

    @property
    def n_classes(self) -> int:
        return self.w.shape[0]

    @property
    def n_views(self) -> int:
        return self.w.shape[1]


def uniform_view_weights(n_classes: int, n_views: int) -> ViewWeights:
    if n_classes < 2 or n_views < 2:
        raise ValueError("need at least two classes and two views")
    return ViewWeights(np.full((n_classes, n_views), 1.0 / n_classes))


def even_view_partition(n_features: int, n_views: int) -> ViewPartition:
    """Contiguous feature blocks of near-equal width."""
    if n_views < 2:
        raise ValueError("need at least two views")
    if n_features < n_views:
        raise ValueError(f"cannot split {n_features} features into {n_views} views")
    return ViewPartition(tuple(np.array_split(np.arange(n_features), n_views)))


def correlation_view_partition(features, n_views: int, threshold: float = 0.5) -> ViewPartition:
    """Group features by |correlation| components, then merge or split to
    reach exactly ``n_views`` blocks.

    Components (features connected by |corr| > threshold) are merged
    smallest-first while too many remain; an oversized component is split
    contiguously when there are too few.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must be 2-d")
    d = x.shape[1]
    if d < n_views:
        raise ValueError(f"cannot split {d} features into {n_views} views")
    std = x.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    centered = (x - x.mean(axis=0)) / safe
    corr = np.abs(centered.T @ centered) / max(len(x), 1)
    adjacency = corr > threshold

    # Union-find over feature columns.
    parent = list(range(d))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(d):
        for j in range(i + 1, d):
            if adjacency[i, j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(d):
        groups.setdefault(find(i), []).append(i)
    blocks = sorted(groups.values(), key=lambda b: (len(b), b[0]))
    while len(blocks) > n_views:
        merged = sorted(blocks[0] + blocks[1])
        blocks = sorted(blocks[2:] + [merged], key=lambda b: (len(b), b[0]))
    while len(blocks) < n_views:
        blocks.sort(key=lambda b: (-len(b), b[0]))
        big = blocks.pop(0)
        half = len(big) // 2
        blocks.extend([big[:half], big[half:]])
    blocks.sort(key=lambda b: b[0])
    return ViewPartition(tuple(np.array(b) for b in blocks))


def view_predictions(
    labeled_x, labeled_y, pool_x, partition: ViewPartition, base_trainer, n_classes: int
) -> np.ndarray:
    """(n_candidates, n_views) class predictions, one model per feature view."""
    labeled_x = np.asarray(labeled_x, dtype=float)
    pool_x = np.asarray(pool_x, dtype=float)
    preds = np.empty((len(pool_x), partition.n_views), dtype=np.int64)
    for v, cols in enumerate(partition.views):
        predict = _fit_on_class_subset(
            base_trainer, labeled_x[:, cols], labeled_y, n_classes
        )
        preds[:, v] = predict(pool_x[:, cols])
    return preds


def amd_entropy_scores(view_preds, weights: ViewWeights) -> ScoreVector:
    """Weighted-vote entropy over view predictions (maximize).

    The weighted vote for class w is sum_v W(w, v) over views predicting w,
    divided by N_i * sum_v W(w, v), where N_i is the number of distinct
    classes predicted for candidate i (0/0 counts as 0). Only candidates
    attaining the maximal N_i stay in the running; the rest are pushed to
    -inf so they rank behind every live candidate.
    """
    preds = np.asarray(view_preds, dtype=np.int64)
    if preds.ndim != 2 or preds.shape[1] != weights.n_views:
        raise ValueError("view_preds must be (n_candidates, n_views)")
    if preds.min(initial=0) < 0 or preds.max(initial=0) >= weights.n_classes:
        raise ValueError("view prediction outside the class range")
    n_cand = len(preds)
    n_classes = weights.n_classes
    rows = np.arange(n_cand)
    votes = np.zeros((n_cand, n_classes))
    hits = np.zeros((n_cand, n_classes), dtype=np.int64)
    for v in range(weights.n_views):
        votes[rows, preds[:, v]] += weights.w[preds[:, v], v]
        hits[rows, preds[:, v]] += 1
    n_distinct = (hits > 0).sum(axis=1)
    class_mass = weights.w.sum(axis=1)  # sum over views per class
    denom = n_distinct[:, None] * class_mass[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(denom > 0, votes / denom, 0.0)
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    entropy = -plogp.sum(axis=1)
    live = n_distinct == n_distinct.max()
    scores = np.where(live, entropy, -np.inf)
    return ScoreVector(scores, "maximize")


def score_amd(
    labeled_x,
    labeled_y,
    pool_x,
    partition: ViewPartition,
    weights: ViewWeights,
    base_trainer,
    n_classes: int,
) -> ScoreVector:
    """Adaptive multi-view disagreement: entropy of weighted view votes."""
    if weights.n_classes != n_classes:
        raise ValueError("weights do not match n_classes")
    preds = view_predictions(labeled_x, labeled_y, pool_x, partition, base_trainer, n_classes)
    return amd_entropy_scores(preds, weights)


def update_amd_weights(weights: ViewWeights, true_labels, selected_view_preds) -> ViewWeights:
    """Reward views that predicted the revealed labels, then renormalize.

    For every selected sample with true class w, each view that predicted w
    gets W(w, v) incremented by one; afterwards every view's column is scaled
    back to sum one. If no view was right anywhere the weights come back
    unchanged.
    """
    labels = np.asarray(true_labels, dtype=np.int64)
    preds = np.asarray(selected_view_preds, dtype=np.int64)
    if preds.ndim != 2 or len(labels) != len(preds):
        raise ValueError("need one row of view predictions per revealed label")
    if preds.shape[1] != weights.n_views:
        raise ValueError("view prediction width does not match the weights")
    if len(labels) and (labels.min() < 0 or labels.max() >= weights.n_classes):
        raise ValueError("label outside the class range")
    w = weights.w.copy()
    for label, row in zip(labels, preds):
        for v in range(weights.n_views):
            if row[v] == label:
                w[label, v] += 1.0
    return ViewWeights(w / w.sum(axis=0, keepdims=True))


# ---------------------------------------------------------------------------
# Margin family


def margin_scores(decision_matrix) -> ScoreVector:
    """Distance of the closest per-class decision value to zero (minimize)."""
    decisions = np.asarray(decision_matrix, dtype=float)
    if decisions.ndim != 2 or decisions.shape[1] < 2:
        raise ValueError("need a (n, n_classes>=2) decision matrix")
    return ScoreVector(np.abs(decisions).min(axis=1), "minimize")


def mclu_scores(decision_matrix) -> ScoreVector:
    """Gap between the two largest absolute decision values (minimize)."""
    decisions = np.asarray(decision_matrix, dtype=float)
    if decisions.ndim != 2 or decisions.shape[1] < 2:
        raise ValueError("need a (n, n_classes>=2) decision matrix")
    magnitudes = np.abs(decisions)
    part = np.partition(magnitudes, magnitudes.shape[1] - 2, axis=1)
    top = part[:, -1]
    second = part[:, -2]
    return ScoreVector(top - second, "minimize")


def score_ms(model, pool_x) -> ScoreVector:
    return margin_scores(model.decision_matrix(pool_x))


def score_mclu(model, pool_x) -> ScoreVector:
    """Multiclass-confidence gap. Degenerates to a constant 0 when the two
    one-against-all machines mirror each other (two classes); callers should
    substitute margin sampling there."""
    return mclu_scores(model.decision_matrix(pool_x))


def _uncertainty_subset(scores: ScoreVector, pool_size: int, q: int, subset_size):
    """Positions of the most uncertain candidates, returned in pool order."""
    if not 1 <= q <= pool_size:
        raise ValueError(f"batch size q={q} exceeds the pool ({pool_size} candidates)")
    if subset_size is None:
        subset_size = 3 * q
    if subset_size < q:
        raise ValueError(f"subset_size={subset_size} must be at least q={q}")
    subset_size = min(subset_size, pool_size)
    return np.sort(scores.top(subset_size))


def _greedy_diversity(positions, uncertainty, similarity, q, lam) -> np.ndarray:
    """Shared greedy batch loop: seed with the most uncertain candidate, then
    repeatedly add the argmin of lam * uncertainty + (1 - lam) * max
    similarity to the batch so far. Stable ties (argmin keeps the first, and
    ``positions`` is sorted by pool order)."""
    m = len(positions)
    chosen = [int(np.argmin(uncertainty))]
    active = np.ones(m, dtype=bool)
    active[chosen[0]] = False
    while len(chosen) < q:
        max_sim = similarity[:, chosen].max(axis=1)
        crit = lam * uncertainty + (1.0 - lam) * max_sim
        crit[~active] = np.inf
        pick = int(np.argmin(crit))
        chosen.append(pick)
        active[pick] = False
    return positions[np.array(chosen)]


def select_mao(model, pool_x, q: int, subset_size=None) -> np.ndarray:
    """Margin sampling with kernel anti-redundancy.

    Pre-filters the ``subset_size`` (default 3q) smallest-margin candidates,
    seeds the batch with the overall margin argmin, then repeatedly adds the
    candidate whose largest kernel similarity to the batch is smallest.
    """
    pool_x = np.asarray(pool_x, dtype=float)
    scores = score_ms(model, pool_x)
    positions = _uncertainty_subset(scores, len(pool_x), q, subset_size)
    sim = gram_matrix(model.kernel, pool_x[positions], pool_x[positions])
    return _greedy_diversity(positions, scores.scores[positions], sim, q, lam=0.0)


def select_mclu_abd(model, pool_x, q: int, subset_size=None, lam: float = 0.6) -> np.ndarray:
    """Confidence-gap sampling with angle-based diversity.

    Greedy criterion lam * gap + (1 - lam) * max normalized similarity to the
    batch; lam = 1 reduces to the q best gap candidates in ranking order.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    pool_x = np.asarray(pool_x, dtype=float)
    scores = score_mclu(model, pool_x)
    positions = _uncertainty_subset(scores, len(pool_x), q, subset_size)
    sim = normalized_gram(model.kernel, pool_x[positions], pool_x[positions])
    return _greedy_diversity(positions, scores.scores[positions], sim, q, lam=lam)


def select_csv(model, pool_x, q: int, subset_size=None) -> np.ndarray:
    """Low-margin candidates whose feature-space closest support vectors are
    pairwise distinct; the batch is topped up in plain margin order when
    fewer than q distinct support vectors are hit.
    """
    pool_x = np.asarray(pool_x, dtype=float)
    sv_mask = model.support_mask
    if not np.any(sv_mask):
        raise HeuristicError("model has no support vectors")
    scores = score_ms(model, pool_x)
    positions = _uncertainty_subset(scores, len(pool_x), q, subset_size)
    sub = pool_x[positions]
    sv = model.train_features[sv_mask]
    # Feature-space squared distance through the kernel.
    kernel = model.kernel
    if kernel.kind == "rbf":
        self_sub = np.ones(len(sub))
        self_sv = np.ones(len(sv))
    else:
        self_sub = np.einsum("ij,ij->i", sub, sub)
        self_sv = np.einsum("ij,ij->i", sv, sv)
    cross = gram_matrix(kernel, sub, sv)
    dist2 = self_sub[:, None] - 2.0 * cross + self_sv[None, :]
    closest = np.argmin(dist2, axis=1)  # ties go to the lowest support index

    order = np.argsort(scores.scores[positions], kind="stable")
    batch, used_sv, skipped = [], set(), []
    for pos in order:
        if len(batch) == q:
            break
        sv_id = int(closest[pos])
        if sv_id in used_sv:
            skipped.append(pos)
            continue
        used_sv.add(sv_id)
        batch.append(pos)
    for pos in skipped:  # margin-order fill when distinct SVs run out
        if len(batch) == q:
            break
        batch.append(pos)
    return positions[np.array(batch)]


def select_ssc(model, labeled_x, pool_x, q: int, seed: int = 0) -> np.ndarray:
    """Candidates the current machine would likely make support vectors.

    Trains a binary machine separating the labeled support vectors (+1) from
    the rest (-1), pools the candidates it scores positive and draws q of
    them uniformly; short batches are filled with the smallest |f| negatives.
    Raises :class:`SscDegenerateError` when all (or none) of the labeled
    samples are support vectors.
    """
    from .models.smo import train_binary_svm  # local import to avoid a cycle

    labeled_x = np.asarray(labeled_x, dtype=float)
    pool_x = np.asarray(pool_x, dtype=float)
    if not 1 <= q <= len(pool_x):
        raise ValueError(f"batch size q={q} exceeds the pool ({len(pool_x)} candidates)")
    if len(labeled_x) != model.n_train:
        raise ValueError("labeled_x must be the matrix the model was trained on")
    sv_mask = model.support_mask
    n_sv = int(sv_mask.sum())
    if n_sv == 0 or n_sv == len(labeled_x):
        raise SscDegenerateError(
            f"{n_sv} of {len(labeled_x)} labeled samples are support vectors; "
            "no separating machine exists"
        )
    signed = np.where(sv_mask, 1.0, -1.0)
    machine = train_binary_svm(labeled_x, signed, model.kernel, model.c_penalty)
    values = machine.decision_values(pool_x)
    positive = np.flatnonzero(values > 0)
    rng = np.random.default_rng(seed)
    if len(positive) >= q:
        return positive[rng.permutation(len(positive))[:q]]
    negative = np.flatnonzero(values <= 0)
    fill_order = negative[np.argsort(np.abs(values[negative]), kind="stable")]
    return np.concatenate([positive, fill_order[: q - len(positive)]])


def select_mclu_ecbd(model, pool_x, q: int, subset_size=None, seed: int = 0) -> np.ndarray:
    """Cluster the confidence-gap subset into q kernel clusters and take each
    cluster's lowest-gap member."""
    pool_x = np.asarray(pool_x, dtype=float)
    scores = score_mclu(model, pool_x)
    positions = _uncertainty_subset(scores, len(pool_x), q, subset_size)
    clusters = kernel_kmeans(pool_x[positions], model.kernel, k=q, seed=seed)
    sub_scores = scores.scores[positions]
    batch = []
    for cluster in range(q):
        members = np.flatnonzero(clusters.labels == cluster)
        best = members[int(np.argmin(sub_scores[members]))]
        batch.append(positions[best])
    return np.array(batch)


def select_hmcs_i(
    model,
    pool_x,
    q: int,
    subset_size=None,
    bounded_sv_features=None,
    seed: int = 0,
) -> np.ndarray:
    """Hierarchical clustering that steers the batch away from regions
    already anchored by bounded support vectors.

    The confidence-gap subset plus the previous bounded support vectors are
    clustered, starting from one cluster and binary-splitting the largest
    until at least q clusters are free of bounded vectors (or everything is a
    singleton). The q largest clean clusters each contribute their lowest-gap
    pool member.
    """
    pool_x = np.asarray(pool_x, dtype=float)
    scores = score_mclu(model, pool_x)
    positions = _uncertainty_subset(scores, len(pool_x), q, subset_size)
    sub = pool_x[positions]
    if bounded_sv_features is None:
        bounded = np.empty((0, sub.shape[1]))
    else:
        bounded = np.atleast_2d(np.asarray(bounded_sv_features, dtype=float))
        if bounded.size == 0:
            bounded = np.empty((0, sub.shape[1]))
    stacked = np.vstack([sub, bounded]) if len(bounded) else sub
    is_bounded = np.arange(len(stacked)) >= len(sub)

    partition = single_cluster(stacked, model.kernel)
    split_count = 0
    while True:
        members_of = [np.flatnonzero(partition.labels == c) for c in range(partition.k)]
        clean = [c for c in range(partition.k) if not np.any(is_bounded[members_of[c]])]
        if len(clean) >= q:
            break
        if partition.sizes().max() < 2:
            break
        partition = binary_split_largest(
            partition, stacked, model.kernel, seed=derive_seed(seed, split_count)
        )
        split_count += 1
    if len(clean) < q:
        # Unreachable by construction: once everything is a singleton every
        # pool candidate is its own clean cluster and there are >= q of them.
        raise HeuristicError("could not isolate enough clusters without bounded vectors")

    sub_scores = scores.scores[positions]
    clean.sort(key=lambda c: (-len(members_of[c]), c))
    batch = []
    for cluster in clean[:q]:
        members = members_of[cluster]
        best = members[int(np.argmin(sub_scores[members]))]
        batch.append(positions[best])
    return np.array(batch)


# ---------------------------------------------------------------------------
# Posterior family


def score_bt(posteriors) -> ScoreVector:
    """Best-versus-second-best posterior gap (minimize).

    Rows must be proper distributions (nonnegative, summing to one within
    1e-6).
    """
    p = np.asarray(posteriors, dtype=float)
    if p.ndim != 2 or p.shape[1] < 2:
        raise ValueError("need a (n, n_classes>=2) posterior matrix")
    if np.any(p < -1e-12):
        raise ValueError("negative posterior probability")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("posterior rows must sum to 1 within 1e-6")
    part = np.partition(p, p.shape[1] - 2, axis=1)
    return ScoreVector(part[:, -1] - part[:, -2], "minimize")


_KL_PROB_FLOOR = 1e-300


def score_kl_max(labeled_x, labeled_y, pool_x, base_trainer, n_classes: int) -> ScoreVector:
    """Expected posterior shift from adopting a candidate's most likely label
    (maximize).

    For each candidate, the model is retrained with the candidate added under
    its current argmax label; the score is the average over classes of the
    KL divergence between the retrained and current posteriors on the rest of
    the pool, weighted by the candidate's current posterior. Candidates whose
    retraining fails are pushed to -inf and a warning is logged.
    """
    labeled_x = np.asarray(labeled_x, dtype=float)
    labeled_y = np.asarray(labeled_y, dtype=np.int64)
    pool_x = np.asarray(pool_x, dtype=float)
    u = len(pool_x)
    if u < 2:
        raise ValueError("need at least two candidates to compare posteriors")
    model = base_trainer.fit(labeled_x, labeled_y, n_classes)
    current = np.clip(model.posterior(pool_x), _KL_PROB_FLOOR, None)
    likely = np.argmax(current, axis=1)

    scores = np.empty(u)
    others_mask = np.ones(u, dtype=bool)
    for i in range(u):
        others_mask[i] = False
        try:
            retrained = base_trainer.fit(
                np.vstack([labeled_x, pool_x[i : i + 1]]),
                np.append(labeled_y, likely[i]),
                n_classes,
            )
            updated = np.clip(retrained.posterior(pool_x[others_mask]), _KL_PROB_FLOOR, None)
        except Exception as exc:  # retraining failures lose, not crash
            logger.warning("retraining with candidate %d failed: %s", i, exc)
            scores[i] = -np.inf
            others_mask[i] = True
            continue
        base = current[others_mask]
        kl_per_class = np.sum(updated * np.log(updated / base), axis=0)
        scores[i] = float(kl_per_class @ current[i]) / (u - 1)
        others_mask[i] = True
    return ScoreVector(scores, "maximize")


def select_random(pool_size: int, q: int, seed: int) -> np.ndarray:
    """Uniform without-replacement baseline batch."""
    if not 1 <= q <= pool_size:
        raise ValueError(f"batch size q={q} exceeds the pool ({pool_size} candidates)")
    rng = np.random.default_rng(seed)
    return rng.permutation(pool_size)[:q]
