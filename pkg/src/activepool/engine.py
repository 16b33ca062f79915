"""The pool-based selection loop.

One iteration: fit the classifier on the labeled set, let the query
heuristic score or pick candidates, reveal the chosen labels through the
oracle, and move the batch from the pool into the labeled set. The engine
owns ordering guarantees (labeled indices stay sorted, batches are disjoint
from past selections by construction) and the per-iteration seed derivation,
so a whole run is a pure function of (dataset, split, heuristic, trainer,
q, seed).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import heuristics as H
from ._seeds import derive_seed, splitmix64
from .dataset import Dataset, Split
from .models import LdaTrainer, SvmTrainer, cross_validate

logger = logging.getLogger(__name__)

HEURISTIC_IDS = (
    "neqb",
    "amd",
    "ms",
    "mclu",
    "ssc",
    "mao",
    "mclu-abd",
    "csv",
    "mclu-ecbd",
    "hmcs-i",
    "kl-max",
    "bt",
    "random",
)

# Heuristics that read one-against-all decision values, hence need the SVM.
MARGIN_IDS = frozenset({"ms", "mclu", "ssc", "mao", "mclu-abd", "csv", "mclu-ecbd", "hmcs-i"})
# Heuristics that read class posteriors.
POSTERIOR_IDS = frozenset({"bt", "kl-max"})

_TAG_ITERATION = 1
_TAG_COMMITTEE = 2
_TAG_RANDOM = 3
_TAG_SSC = 4
_TAG_ECBD = 5
_TAG_HMCS = 6
_TAG_CV = 7

_COMMITTEE_DEFAULTS = {"svm": (7, 0.75), "lda": (12, 0.85)}


@dataclass(frozen=True)
class Oracle:
    """Ground-truth label lookup for selected samples.

    The optional noise hook flips each queried label to a different uniform
    class with probability ``noise_rate``; the flip decision is a pure
    function of (seed, sample index), so repeated queries agree. Off by
    default.
    """

    labels: np.ndarray
    n_classes: int
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must lie in [0, 1)")

    def label(self, indices) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        out = self.labels[idx].copy()
        if self.noise_rate > 0.0:
            for pos, i in enumerate(idx):
                draw = splitmix64(derive_seed(self.seed, int(i)))
                if draw / 2.0**64 < self.noise_rate:
                    shift = 1 + splitmix64(derive_seed(self.seed, int(i), 1)) % (self.n_classes - 1)
                    out[pos] = (out[pos] + shift) % self.n_classes
        return out


@dataclass(frozen=True)
class StoppingRule:
    """Stop after ``max_iterations`` selection rounds or once ``label_budget``
    labels are in use; pool exhaustion always stops."""

    max_iterations: int | None = None
    label_budget: int | None = None

    def __post_init__(self):
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.label_budget is not None and self.label_budget < 1:
            raise ValueError("label_budget must be >= 1")

    def should_stop(self, iterations_done: int, labels_used: int, pool_remaining: int) -> bool:
        if pool_remaining == 0:
            return True
        if self.max_iterations is not None and iterations_done >= self.max_iterations:
            return True
        if self.label_budget is not None and labels_used >= self.label_budget:
            return True
        return False


@dataclass
class IterationRecord:
    iteration: int
    selected: np.ndarray  # dataset indices, in selection order
    labels_used: int
    accuracy: float | None
    duration_s: float


@dataclass(frozen=True)
class ActiveState:
    """Immutable snapshot of one selection run.

    ``split`` carries the current labeled/pool partition (test set and
    standardization parameters never change); ``prev_bounded_svs`` holds the
    dataset indices that were bounded support vectors in the most recent fit.
    """

    split: Split
    iteration: int = 1
    history: tuple = ()
    prev_bounded_svs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def labeled_idx(self) -> np.ndarray:
        return self.split.labeled_idx

    @property
    def pool_idx(self) -> np.ndarray:
        return self.split.pool_idx

    @property
    def labels_used(self) -> int:
        return len(self.split.labeled_idx)


def initial_state(split: Split) -> ActiveState:
    return ActiveState(split=split)


@dataclass
class SelectionContext:
    """Everything a heuristic may look at when proposing a batch."""

    labeled_x: np.ndarray
    labeled_y: np.ndarray
    pool_x: np.ndarray
    n_classes: int
    q: int
    seed: int
    base_trainer: object
    bounded_sv_features: np.ndarray


def _require_margin_model(model, heuristic_id: str):
    if not hasattr(model, "decision_matrix"):
        raise ValueError(
            f"heuristic {heuristic_id!r} needs per-class decision values; "
            "train with the SVM classifier"
        )


class _ScorerRunner:
    """Adapter for heuristics that return a ScoreVector: take its top q."""

    def __init__(self, heuristic_id, score_fn):
        self.heuristic_id = heuristic_id
        self._score_fn = score_fn

    def propose(self, model, ctx: SelectionContext) -> np.ndarray:
        return self._score_fn(model, ctx).top(ctx.q)

    def observe(self, model, ctx, positions, revealed_labels):
        pass


class _NeqbRunner(_ScorerRunner):
    def __init__(self, k_members, bag_fraction):
        self.k_members = k_members
        self.bag_fraction = bag_fraction
        super().__init__("neqb", self._score)

    def _score(self, model, ctx):
        committee = H.CommitteeConfig(
            k_members=self.k_members,
            bag_fraction=self.bag_fraction,
            seed=derive_seed(ctx.seed, _TAG_COMMITTEE),
        )
        return H.score_neqb(
            ctx.labeled_x, ctx.labeled_y, ctx.pool_x, committee, ctx.base_trainer, ctx.n_classes
        )


class _AmdRunner:
    """Stateful multi-view disagreement: the view weights persist across
    iterations and are updated from each revealed batch."""

    heuristic_id = "amd"

    def __init__(self, n_views, view_mode, corr_threshold):
        self.n_views = n_views
        self.view_mode = view_mode
        self.corr_threshold = corr_threshold
        self.partition: H.ViewPartition | None = None
        self.weights: H.ViewWeights | None = None
        self._last_preds: np.ndarray | None = None

    def propose(self, model, ctx: SelectionContext) -> np.ndarray:
        if self.partition is None:
            if self.view_mode == "correlation":
                stacked = np.vstack([ctx.labeled_x, ctx.pool_x])
                self.partition = H.correlation_view_partition(
                    stacked, self.n_views, self.corr_threshold
                )
            else:
                self.partition = H.even_view_partition(ctx.labeled_x.shape[1], self.n_views)
        if self.weights is None:
            self.weights = H.uniform_view_weights(ctx.n_classes, self.partition.n_views)
        preds = H.view_predictions(
            ctx.labeled_x, ctx.labeled_y, ctx.pool_x, self.partition, ctx.base_trainer, ctx.n_classes
        )
        self._last_preds = preds
        return H.amd_entropy_scores(preds, self.weights).top(ctx.q)

    def observe(self, model, ctx, positions, revealed_labels):
        if self._last_preds is None:
            return
        self.weights = H.update_amd_weights(
            self.weights, revealed_labels, self._last_preds[positions]
        )
        self._last_preds = None


class _MsRunner(_ScorerRunner):
    def __init__(self):
        super().__init__("ms", self._score)

    def _score(self, model, ctx):
        _require_margin_model(model, "ms")
        return H.score_ms(model, ctx.pool_x)


class _McluRunner(_ScorerRunner):
    """Confidence-gap scorer; with two classes the one-against-all machines
    mirror each other and the gap is identically zero, so margin sampling is
    substituted (logged once)."""

    def __init__(self):
        super().__init__("mclu", self._score)
        self._warned = False

    def _score(self, model, ctx):
        _require_margin_model(model, "mclu")
        if ctx.n_classes == 2:
            if not self._warned:
                logger.info("mclu degenerates with two classes; using margin sampling")
                self._warned = True
            return H.score_ms(model, ctx.pool_x)
        return H.score_mclu(model, ctx.pool_x)


class _BtRunner(_ScorerRunner):
    def __init__(self):
        super().__init__("bt", self._score)

    def _score(self, model, ctx):
        if not hasattr(model, "posterior"):
            raise ValueError("heuristic 'bt' needs class posteriors")
        return H.score_bt(model.posterior(ctx.pool_x))


class _KlMaxRunner(_ScorerRunner):
    def __init__(self):
        super().__init__("kl-max", self._score)

    def _score(self, model, ctx):
        return H.score_kl_max(
            ctx.labeled_x, ctx.labeled_y, ctx.pool_x, ctx.base_trainer, ctx.n_classes
        )


class _SscRunner:
    """Support-vector candidate sampling with the documented fallback: when
    the labeled set is all (or no) support vectors, margin sampling takes
    over for that iteration."""

    heuristic_id = "ssc"

    def propose(self, model, ctx: SelectionContext) -> np.ndarray:
        _require_margin_model(model, "ssc")
        try:
            return H.select_ssc(
                model, ctx.labeled_x, ctx.pool_x, ctx.q, seed=derive_seed(ctx.seed, _TAG_SSC)
            )
        except H.SscDegenerateError as exc:
            logger.warning("ssc degenerate (%s); falling back to margin sampling", exc)
            return H.score_ms(model, ctx.pool_x).top(ctx.q)

    def observe(self, model, ctx, positions, revealed_labels):
        pass


class _BatchRunner:
    """Adapter for the diversity selectors that build a batch directly."""

    def __init__(self, heuristic_id, subset_size=None, lam=0.6):
        self.heuristic_id = heuristic_id
        self.subset_size = subset_size
        self.lam = lam

    def propose(self, model, ctx: SelectionContext) -> np.ndarray:
        _require_margin_model(model, self.heuristic_id)
        if self.heuristic_id == "mao":
            return H.select_mao(model, ctx.pool_x, ctx.q, self.subset_size)
        if self.heuristic_id == "mclu-abd":
            return H.select_mclu_abd(model, ctx.pool_x, ctx.q, self.subset_size, lam=self.lam)
        if self.heuristic_id == "csv":
            return H.select_csv(model, ctx.pool_x, ctx.q, self.subset_size)
        if self.heuristic_id == "mclu-ecbd":
            return H.select_mclu_ecbd(
                model, ctx.pool_x, ctx.q, self.subset_size, seed=derive_seed(ctx.seed, _TAG_ECBD)
            )
        if self.heuristic_id == "hmcs-i":
            return H.select_hmcs_i(
                model,
                ctx.pool_x,
                ctx.q,
                self.subset_size,
                bounded_sv_features=ctx.bounded_sv_features,
                seed=derive_seed(ctx.seed, _TAG_HMCS),
            )
        raise AssertionError(self.heuristic_id)

    def observe(self, model, ctx, positions, revealed_labels):
        pass


class _RandomRunner:
    heuristic_id = "random"

    def propose(self, model, ctx: SelectionContext) -> np.ndarray:
        return H.select_random(len(ctx.pool_x), ctx.q, seed=derive_seed(ctx.seed, _TAG_RANDOM))

    def observe(self, model, ctx, positions, revealed_labels):
        pass


def _pop(params: dict, key, default):
    return params.pop(key) if key in params else default


def build_heuristic(heuristic_id: str, params: dict | None = None, classifier: str = "svm"):
    """Instantiate a heuristic runner from its id and parameter dict.

    Unknown ids or parameter keys fail immediately. ``classifier`` picks the
    committee defaults (7 members at 0.75 bag fraction for the SVM, 12 at
    0.85 for LDA) and gates kl-max, which retrains its model per candidate
    and therefore requires the closed-form classifier unless ``allow_svm``
    is set.
    """
    if heuristic_id not in HEURISTIC_IDS:
        raise ValueError(f"unknown heuristic {heuristic_id!r}; expected one of {HEURISTIC_IDS}")
    params = dict(params or {})
    if heuristic_id == "neqb":
        k_default, frac_default = _COMMITTEE_DEFAULTS.get(classifier, _COMMITTEE_DEFAULTS["svm"])
        runner = _NeqbRunner(
            k_members=int(_pop(params, "k_members", k_default)),
            bag_fraction=float(_pop(params, "bag_fraction", frac_default)),
        )
    elif heuristic_id == "amd":
        runner = _AmdRunner(
            n_views=int(_pop(params, "n_views", 2)),
            view_mode=str(_pop(params, "view_mode", "contiguous")),
            corr_threshold=float(_pop(params, "corr_threshold", 0.5)),
        )
        if runner.view_mode not in ("contiguous", "correlation"):
            raise ValueError(f"unknown view_mode {runner.view_mode!r}")
    elif heuristic_id == "ms":
        runner = _MsRunner()
    elif heuristic_id == "mclu":
        runner = _McluRunner()
    elif heuristic_id == "ssc":
        runner = _SscRunner()
    elif heuristic_id in ("mao", "csv", "mclu-ecbd", "hmcs-i"):
        subset = _pop(params, "subset_size", None)
        runner = _BatchRunner(heuristic_id, subset_size=None if subset is None else int(subset))
    elif heuristic_id == "mclu-abd":
        subset = _pop(params, "subset_size", None)
        runner = _BatchRunner(
            "mclu-abd",
            subset_size=None if subset is None else int(subset),
            lam=float(_pop(params, "lambda", 0.6)),
        )
    elif heuristic_id == "bt":
        runner = _BtRunner()
    elif heuristic_id == "kl-max":
        allow_svm = bool(_pop(params, "allow_svm", False))
        if classifier == "svm" and not allow_svm:
            raise ValueError(
                "kl-max retrains per candidate and is restricted to the "
                "closed-form classifier (lda); pass allow_svm to override"
            )
        runner = _KlMaxRunner()
    else:
        runner = _RandomRunner()
    if params:
        raise ValueError(f"unknown parameters for {heuristic_id!r}: {sorted(params)}")
    return runner


def diversity_batch(model, pool_x, batch_builder: str, q: int, subset_size=None, lam: float = 0.6):
    """Run one diversity-building greedy batch directly (no engine state)."""
    builders = {
        "mao": lambda: H.select_mao(model, pool_x, q, subset_size),
        "abd": lambda: H.select_mclu_abd(model, pool_x, q, subset_size, lam=lam),
        "csv": lambda: H.select_csv(model, pool_x, q, subset_size),
    }
    if batch_builder not in builders:
        raise ValueError(f"unknown batch builder {batch_builder!r}; expected one of {sorted(builders)}")
    return builders[batch_builder]()


def run_iteration(
    state: ActiveState,
    runner,
    trainer,
    oracle: Oracle,
    q: int,
    features: np.ndarray,
    n_classes: int,
    seed: int = 0,
    model=None,
    base_trainer=None,
) -> tuple[ActiveState, object]:
    """One fit/select/label/move round; returns the new state and the model
    that was used for selection.

    If ``q`` exceeds the remaining pool, the whole pool is taken (and the
    heuristic is skipped; there is nothing to rank). On any heuristic or
    model failure the passed-in state is returned unchanged inside the raised
    error's context.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    pool = state.pool_idx
    if len(pool) == 0:
        raise ValueError("pool is exhausted")
    labeled = state.labeled_idx
    started = time.perf_counter()
    labeled_y = oracle.label(labeled)
    try:
        if model is None:
            model = trainer.fit(features[labeled], labeled_y, n_classes)
        bounded_idx = (
            labeled[model.bounded_mask] if hasattr(model, "bounded_mask")
            else np.empty(0, dtype=np.int64)
        )
        q_eff = min(q, len(pool))
        if q_eff == len(pool):
            positions = np.arange(len(pool))
        else:
            ctx = SelectionContext(
                labeled_x=features[labeled],
                labeled_y=labeled_y,
                pool_x=features[pool],
                n_classes=n_classes,
                q=q_eff,
                seed=seed,
                base_trainer=base_trainer if base_trainer is not None else trainer,
                bounded_sv_features=features[bounded_idx],
            )
            positions = np.asarray(runner.propose(model, ctx), dtype=np.int64)
            if (
                positions.ndim != 1
                or len(positions) != q_eff
                or len(np.unique(positions)) != q_eff
                or positions.min() < 0
                or positions.max() >= len(pool)
            ):
                raise ValueError(
                    f"heuristic returned an invalid batch of shape {positions.shape}"
                )
            revealed = oracle.label(pool[positions])
            runner.observe(model, ctx, positions, revealed)
    except Exception as exc:
        raise RuntimeError(
            f"iteration {state.iteration} failed with heuristic "
            f"{getattr(runner, 'heuristic_id', '?')!r}: {exc}"
        ) from exc

    batch = pool[positions]
    keep = np.ones(len(pool), dtype=bool)
    keep[positions] = False
    new_split = replace(
        state.split,
        labeled_idx=np.sort(np.concatenate([labeled, batch])),
        pool_idx=pool[keep],
    )
    record = IterationRecord(
        iteration=state.iteration,
        selected=batch,
        labels_used=len(new_split.labeled_idx),
        accuracy=None,
        duration_s=time.perf_counter() - started,
    )
    new_state = ActiveState(
        split=new_split,
        iteration=state.iteration + 1,
        history=state.history + (record,),
        prev_bounded_svs=bounded_idx,
    )
    return new_state, model


@dataclass
class TrialHistory:
    """One learning curve: labels used and test accuracy at each recorded
    point, plus the final state. ``completed`` is False when the run stopped
    on an error; the points gathered up to the failure are kept."""

    heuristic_id: str
    labels_used: list
    accuracies: list
    state: ActiveState
    completed: bool = True
    error: str | None = None


def run_curve(
    dataset: Dataset,
    split: Split,
    heuristic,
    trainer,
    q: int,
    stopping: StoppingRule | None = None,
    seed: int = 0,
    heuristic_params: dict | None = None,
    base_trainer=None,
    refit_every: int = 10,
    eval_every: int = 1,
    cv_folds: int = 5,
    kernel_grid=None,
    c_grid=None,
    oracle: Oracle | None = None,
) -> TrialHistory:
    """Run a full selection curve from an initial split.

    ``heuristic`` is an id string (a runner is built with
    ``heuristic_params``) or an already-built runner. The classifier is refit
    every iteration; its hyperparameters are re-selected by cross-validation
    every ``refit_every`` iterations (0 disables, SVM only). Accuracy is
    measured on the split's test set after every ``eval_every`` iterations
    and always at the start and end.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if eval_every < 1:
        raise ValueError("eval_every must be >= 1")
    if len(split.test_idx) == 0:
        raise ValueError("run_curve needs a non-empty test set")
    stopping = stopping or StoppingRule()
    if oracle is None:
        oracle = Oracle(dataset.labels, dataset.n_classes)
    if isinstance(heuristic, str):
        classifier = "svm" if isinstance(trainer, SvmTrainer) else "lda"
        runner = build_heuristic(heuristic, heuristic_params, classifier)
    else:
        runner = heuristic
    wants_posteriors = getattr(runner, "heuristic_id", None) in POSTERIOR_IDS
    if isinstance(trainer, SvmTrainer) and wants_posteriors and not trainer.calibrate:
        # Posterior heuristics read probabilities off the scoring model.
        # Calibration never changes predict(), so this only adds capability.
        trainer = replace(trainer, calibrate=True)
    if base_trainer is None:
        if isinstance(trainer, SvmTrainer):
            # Committees only need predictions, so retrains inside the
            # heuristic skip calibration unless posteriors are required.
            base_trainer = replace(trainer, calibrate=wants_posteriors)
        else:
            base_trainer = trainer

    features = split.transform_features(dataset)
    test_x = features[split.test_idx]
    test_y = dataset.labels[split.test_idx]
    state = initial_state(split)
    trainer_now = trainer
    labels_used, accuracies = [], []

    def evaluate(model) -> float:
        return float(np.mean(model.predict(test_x) == test_y))

    model = trainer_now.fit(features[state.labeled_idx], oracle.label(state.labeled_idx), dataset.n_classes)
    labels_used.append(state.labels_used)
    accuracies.append(evaluate(model))

    selections = 0
    completed = True
    error = None
    last_recorded = 0
    while not stopping.should_stop(selections, state.labels_used, len(state.pool_idx)):
        try:
            state, _ = run_iteration(
                state,
                runner,
                trainer_now,
                oracle,
                q,
                features,
                dataset.n_classes,
                seed=derive_seed(seed, _TAG_ITERATION, state.iteration),
                model=model,
                base_trainer=base_trainer,
            )
            selections += 1
            if (
                refit_every > 0
                and selections % refit_every == 0
                and isinstance(trainer_now, SvmTrainer)
            ):
                kernel, c_penalty = cross_validate(
                    features[state.labeled_idx],
                    oracle.label(state.labeled_idx),
                    dataset.n_classes,
                    kernel_grid,
                    c_grid,
                    folds=cv_folds,
                    seed=derive_seed(seed, _TAG_CV, selections),
                )
                trainer_now = trainer_now.with_params(kernel, c_penalty)
            model = trainer_now.fit(
                features[state.labeled_idx], oracle.label(state.labeled_idx), dataset.n_classes
            )
            accuracy = evaluate(model)
            state.history[-1].accuracy = accuracy
        except RuntimeError as exc:
            completed = False
            error = str(exc)
            logger.warning("curve stopped early: %s", exc)
            break
        if selections % eval_every == 0:
            labels_used.append(state.labels_used)
            accuracies.append(accuracy)
            last_recorded = selections
    if completed and selections > last_recorded:
        labels_used.append(state.labels_used)
        accuracies.append(accuracy)
    return TrialHistory(
        heuristic_id=getattr(runner, "heuristic_id", str(heuristic)),
        labels_used=labels_used,
        accuracies=accuracies,
        state=state,
        completed=completed,
        error=error,
    )
