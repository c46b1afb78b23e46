"""Training regimes: vanilla with early stopping, co-teaching, and consensus
training with two heads over a shared encoder.

Every run is deterministic given its TrainConfig. Batch order is drawn from
cfg.seed while parameter init and dropout are drawn from cfg.init_seed
(defaulting to cfg.seed); co-teaching relies on this split so that its two
networks can share one batch schedule while being seeded independently.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import ConsensusCollapseError, ValidationError
from scipy.sparse import issparse as sparse_issparse

from .model import (
    Featurizer,
    Grads,
    ModelParams,
    TrainConfig,
    apply_grads,
    _encode,
    _head_logits,
    _log_softmax,
    evaluate_features,
    featurize_dataset,
    init_params,
    instance_losses,
    mean_ce_and_grads,
)
from .util import derive_rng

HISTORY_COLUMNS = ("step", "train_batch_loss", "val_accuracy", "kept_fraction",
                   "consensus_fraction")


def total_variation(p: np.ndarray, q: np.ndarray) -> np.ndarray | float:
    """Distance between categorical distributions under the 0/1 ground metric:
    half the L1 difference. 0 for identical inputs, 1 for disjoint support."""
    d = 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)
    return float(d) if np.ndim(d) == 0 else d


@dataclass
class EarlyStopState:
    """Best-so-far validation accuracy with parameter snapshots."""

    best_val_accuracy: float = -math.inf
    evals_since_improvement: int = 0
    best_snapshots: tuple[ModelParams, ...] = ()

    def update(self, accuracy: float, *params: ModelParams) -> bool:
        """Record one evaluation; returns True on improvement."""
        if accuracy > self.best_val_accuracy:
            self.best_val_accuracy = accuracy
            self.best_snapshots = tuple(p.copy() for p in params)
            self.evals_since_improvement = 0
            return True
        self.evals_since_improvement += 1
        return False

    def should_stop(self, patience: int) -> bool:
        return self.evals_since_improvement >= patience


class _Batcher:
    """Endless seeded minibatches: reshuffle each epoch, drop ragged tails."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._queue: list[np.ndarray] = []

    @property
    def steps_per_epoch(self) -> int:
        return max(1, self.n // self.batch_size)

    def next(self) -> np.ndarray:
        if not self._queue:
            perm = self.rng.permutation(self.n)
            self._queue = [perm[s:s + self.batch_size]
                           for s in range(0, self.n - self.batch_size + 1,
                                          self.batch_size)]
            self._queue.reverse()  # pop() then consumes epoch order
        return self._queue.pop()


def _check_label_sets(train: Dataset, val: Dataset) -> None:
    if train.label_set.names != val.label_set.names:
        raise ValidationError("train and validation label sets differ")
    if len(train) == 0 or len(val) == 0:
        raise ValidationError("train and validation sets must be non-empty")


def history_to_csv(history: list[dict]) -> str:
    """Per-step training log as CSV (missing fields left blank)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for row in history:
        writer.writerow(["" if row.get(col) is None else repr(row[col])
                         if isinstance(row.get(col), float) else row.get(col)
                         for col in HISTORY_COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Vanilla
# ---------------------------------------------------------------------------


def train_vanilla(train: Dataset, val: Dataset, cfg: TrainConfig,
                  featurizer: Featurizer) -> tuple[ModelParams, list[dict]]:
    """SGD on the observed labels, early-stopped on validation accuracy.

    Returns the parameter snapshot with the best validation accuracy seen,
    plus a per-step history of batch losses and evaluation results.
    """
    _check_label_sets(train, val)
    init_seed = cfg.seed if cfg.init_seed is None else cfg.init_seed
    params = init_params(featurizer, len(train.label_set), cfg.hidden_size,
                         n_heads=1, drop_rate=cfg.drop_rate, seed=init_seed)
    x_train = featurize_dataset(featurizer, train)
    y_train = train.observed()
    x_val = featurize_dataset(featurizer, val)
    y_val = val.observed()
    batcher = _Batcher(len(train), cfg.batch_size, derive_rng(cfg.seed, "batches"))
    dropout_rng = derive_rng(init_seed, "dropout")

    state = EarlyStopState()
    history: list[dict] = []
    for step in range(1, cfg.steps + 1):
        batch = batcher.next()
        loss, grads = mean_ce_and_grads(params, x_train[batch], y_train[batch],
                                        heads=[0], scale_rng=dropout_rng,
                                        train_mode=True)
        apply_grads(params, grads, cfg.effective_lr(step), cfg.weight_decay)
        row = {"step": step, "train_batch_loss": loss}
        if step % cfg.eval_every == 0 or step == cfg.steps:
            acc = evaluate_features(params, x_val, y_val, head=0).accuracy
            state.update(acc, params)
            row["val_accuracy"] = acc
            history.append(row)
            if state.should_stop(cfg.patience):
                break
        else:
            history.append(row)
    return state.best_snapshots[0], history


# ---------------------------------------------------------------------------
# Co-teaching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoteachSchedule:
    """Forget rate ramps linearly from 0 to tau over ramp_steps."""

    tau: float = 0.2
    ramp_steps: int = 100

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0 or self.ramp_steps < 0:
            raise ValidationError("need 0 <= tau <= 1 and ramp_steps >= 0")

    def forget_rate(self, step: int) -> float:
        if self.ramp_steps <= 0:
            return self.tau
        return self.tau * min(1.0, step / self.ramp_steps)


def coteach_net2_init_seed(cfg: TrainConfig) -> int:
    """Init seed of the second co-teaching network (first uses cfg's own).

    A vanilla run with init_seed set to this value and the same cfg.seed
    follows network 2's trajectory exactly when the forget rate is zero.
    """
    return (cfg.seed if cfg.init_seed is None else cfg.init_seed) + 1


def train_coteaching(
    train: Dataset, val: Dataset, cfg: TrainConfig, sched: CoteachSchedule,
    featurizer: Featurizer,
) -> tuple[ModelParams, ModelParams, list[dict]]:
    """Two independently seeded networks exchanging small-loss instances.

    Per shared minibatch each network ranks instances by its own
    evaluation-mode loss and keeps the ceil((1 - forget_rate) * batch) with
    the smallest loss; each network is then updated on the OTHER network's
    kept set. Early stopping watches network 1's validation accuracy; both
    networks' best snapshots are returned.
    """
    _check_label_sets(train, val)
    init1 = cfg.seed if cfg.init_seed is None else cfg.init_seed
    init2 = coteach_net2_init_seed(cfg)
    k_labels = len(train.label_set)
    nets = [init_params(featurizer, k_labels, cfg.hidden_size, 1,
                        cfg.drop_rate, seed=s) for s in (init1, init2)]
    dropout = [derive_rng(s, "dropout") for s in (init1, init2)]
    x_train = featurize_dataset(featurizer, train)
    y_train = train.observed()
    x_val = featurize_dataset(featurizer, val)
    y_val = val.observed()
    batcher = _Batcher(len(train), cfg.batch_size, derive_rng(cfg.seed, "batches"))

    state = EarlyStopState()
    history: list[dict] = []
    for step in range(1, cfg.steps + 1):
        batch = batcher.next()
        keep = math.ceil((1.0 - sched.forget_rate(step)) * len(batch))
        if keep < 1:
            raise ValidationError(
                f"forget rate {sched.forget_rate(step):.3f} keeps no instances "
                f"from a batch of {len(batch)}")
        xb = x_train[batch]
        yb = y_train[batch]
        # simultaneous small-loss selection, then crossed updates
        kept = []
        for net in nets:
            losses = instance_losses(net, xb, yb, head=0)
            kept.append(np.sort(np.argsort(losses, kind="stable")[:keep]))
        losses_out = []
        for net, other_kept, rng in zip(nets, (kept[1], kept[0]), dropout):
            sel = batch[other_kept]
            loss, grads = mean_ce_and_grads(net, x_train[sel], y_train[sel],
                                            heads=[0], scale_rng=rng,
                                            train_mode=True)
            apply_grads(net, grads, cfg.effective_lr(step), cfg.weight_decay)
            losses_out.append(loss)
        row = {
            "step": step,
            "train_batch_loss": losses_out[0],
            "train_batch_loss_net2": losses_out[1],
            "kept_fraction": keep / len(batch),
            "batch_indices": batch.tolist(),
            "kept_net1": batch[kept[0]].tolist(),
            "kept_net2": batch[kept[1]].tolist(),
        }
        if step % cfg.eval_every == 0 or step == cfg.steps:
            acc = evaluate_features(nets[0], x_val, y_val, head=0).accuracy
            state.update(acc, *nets)
            row["val_accuracy"] = acc
            history.append(row)
            if state.should_stop(cfg.patience):
                break
        else:
            history.append(row)
    best1, best2 = state.best_snapshots
    return best1, best2, history


# ---------------------------------------------------------------------------
# Consensus training (shared encoder, two discrepant heads)
# ---------------------------------------------------------------------------

CONSENSUS_RULES = ("heads_agree", "heads_agree_with_label")


@dataclass(frozen=True)
class CetaConfig:
    """Consensus rule plus the weight of the distribution-alignment term.

    The alignment term is the total-variation distance between the two
    heads' probabilities, averaged over the whole batch; it acts as a
    secondary criterion next to the consensus cross-entropy.
    """

    consensus_rule: str = "heads_agree"
    lambda_w: float = 0.1
    ground_metric: str = "discrete"

    def __post_init__(self):
        if self.consensus_rule not in CONSENSUS_RULES:
            raise ValidationError(f"consensus_rule must be one of {CONSENSUS_RULES}")
        if self.lambda_w < 0:
            raise ValidationError("lambda_w must be >= 0")
        if self.ground_metric != "discrete":
            raise ValidationError("only the discrete ground metric is supported")


def _tv_logit_grad(p_self: np.ndarray, p_other: np.ndarray,
                   coeff: float) -> np.ndarray:
    """d(coeff * sum_i TV_i)/d(logits of p_self) via the softmax Jacobian."""
    g = coeff * 0.5 * np.sign(p_self - p_other)
    return p_self * (g - (g * p_self).sum(axis=1, keepdims=True))


def ceta_batch_objective(params: ModelParams, x, y: np.ndarray, ceta: CetaConfig,
                         scale_rng=None, train_mode: bool = False):
    """Consensus loss, its gradients, and the consensus mask for one batch.

    loss = mean over consensus instances of both heads' cross-entropy, plus
    lambda_w times the batch-mean total variation between the heads.

    Dropout is drawn independently per head (not shared), which keeps the two
    classifiers discrepant during training; without this the heads converge
    and the consensus filter stops selecting anything.
    """
    if params.n_heads != 2:
        raise ValidationError("consensus training needs exactly 2 heads")
    y = np.asarray(y, dtype=np.int64)
    b = x.shape[0]
    pre, hidden_raw, _ = _encode(params, x, train_mode=False, rng=None)
    scales: list[np.ndarray | None] = [None, None]
    if train_mode and params.drop_rate > 0.0:
        if scale_rng is None:
            raise ValidationError("train-mode forward with dropout needs an rng")
        keep = 1.0 - params.drop_rate
        scales = [(scale_rng.random(hidden_raw.shape) < keep) / keep
                  for _ in (0, 1)]
    hiddens = [hidden_raw if s is None else hidden_raw * s for s in scales]
    logps = [_log_softmax(hiddens[h] @ params.heads[h].weights
                          + params.heads[h].bias) for h in (0, 1)]
    probs = [np.exp(lp) for lp in logps]

    consensus = probs[0].argmax(axis=1) == probs[1].argmax(axis=1)
    if ceta.consensus_rule == "heads_agree_with_label":
        consensus = consensus & (probs[0].argmax(axis=1) == y)
    n_cons = int(consensus.sum())

    rows = np.arange(b)
    tv = total_variation(probs[0], probs[1])
    loss = float(ceta.lambda_w * tv.mean())
    logit_grads = [
        _tv_logit_grad(probs[0], probs[1], ceta.lambda_w / b),
        _tv_logit_grad(probs[1], probs[0], ceta.lambda_w / b),
    ]
    if n_cons:
        for h in (0, 1):
            loss += float(-logps[h][rows, y][consensus].mean())
            g = probs[h].copy()
            g[rows, y] -= 1.0
            g[~consensus] = 0.0
            logit_grads[h] += g / n_cons

    d_hidden_raw = np.zeros_like(hidden_raw)
    head_grads = {}
    for h in (0, 1):
        g = logit_grads[h]
        head_grads[h] = (hiddens[h].T @ g, g.sum(axis=0))
        d_h = g @ params.heads[h].weights.T
        d_hidden_raw += d_h if scales[h] is None else d_h * scales[h]
    d_pre = d_hidden_raw * (pre > 0.0)
    d_encoder = x.T @ d_pre
    if sparse_issparse(d_encoder):
        d_encoder = d_encoder.toarray()
    grads = Grads(np.asarray(d_encoder), head_grads)
    return loss, grads, consensus, float(tv.mean())


def train_ceta(
    train: Dataset, val: Dataset, cfg: TrainConfig, ceta: CetaConfig,
    featurizer: Featurizer, initial_params: ModelParams | None = None,
) -> tuple[ModelParams, list[dict]]:
    """Two heads over one encoder, updated only where the heads agree.

    Early stopping watches the validation accuracy of the head-averaged
    probabilities. Raises ConsensusCollapseError when no instance reaches
    consensus for an entire epoch. initial_params overrides the seeded
    init (used to study head-initialization effects).
    """
    _check_label_sets(train, val)
    init_seed = cfg.seed if cfg.init_seed is None else cfg.init_seed
    if initial_params is None:
        params = init_params(featurizer, len(train.label_set), cfg.hidden_size,
                             n_heads=2, drop_rate=cfg.drop_rate, seed=init_seed)
    else:
        params = initial_params.copy()
    x_train = featurize_dataset(featurizer, train)
    y_train = train.observed()
    x_val = featurize_dataset(featurizer, val)
    y_val = val.observed()
    batcher = _Batcher(len(train), cfg.batch_size, derive_rng(cfg.seed, "batches"))
    dropout_rng = derive_rng(init_seed, "dropout")

    state = EarlyStopState()
    history: list[dict] = []
    empty_streak = 0
    for step in range(1, cfg.steps + 1):
        batch = batcher.next()
        loss, grads, consensus, tv_mean = ceta_batch_objective(
            params, x_train[batch], y_train[batch], ceta,
            scale_rng=dropout_rng, train_mode=True)
        apply_grads(params, grads, cfg.effective_lr(step), cfg.weight_decay)
        empty_streak = 0 if consensus.any() else empty_streak + 1
        if empty_streak >= batcher.steps_per_epoch:
            raise ConsensusCollapseError(
                f"no consensus for {empty_streak} consecutive batches "
                "(a full epoch); lambda_w or the initialization is pathological")
        row = {
            "step": step,
            "train_batch_loss": loss,
            "consensus_fraction": float(consensus.mean()),
            "tv_mean": tv_mean,
        }
        if step % cfg.eval_every == 0 or step == cfg.steps:
            acc = evaluate_features(params, x_val, y_val, head="averaged").accuracy
            state.update(acc, params)
            row["val_accuracy"] = acc
            history.append(row)
            if state.should_stop(cfg.patience):
                break
        else:
            history.append(row)
    return state.best_snapshots[0], history
