"""Built-in lightweight text classifier: hashed n-gram features feeding a
one-hidden-layer network with a shared encoder and one or more softmax heads.

The two-head configuration exists so consensus training can run two discrepant
classifiers over a single encoder; vanilla training uses one head.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .data import Dataset
from .errors import DivergenceError, ValidationError
from .util import stable_hash

DEFAULT_HASH_DIM = 2**18
DEFAULT_HIDDEN = 128
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Featurizer:
    """Hashed bag of lowercased n-grams, L2-normalized per text."""

    hash_dim: int = DEFAULT_HASH_DIM
    ngram_orders: tuple[int, ...] = (1, 2)
    hash_seed: int = 0

    def __post_init__(self):
        if self.hash_dim < 2 or self.hash_dim & (self.hash_dim - 1):
            raise ValidationError("hash_dim must be a power of two")
        orders = tuple(sorted(set(self.ngram_orders)))
        if not orders or any(o < 1 for o in orders):
            raise ValidationError("ngram_orders must be positive integers")
        object.__setattr__(self, "ngram_orders", orders)

    def token_indices(self, text: str) -> list[int]:
        """Hashed index of every n-gram occurrence (repeats included)."""
        tokens = text.lower().split()
        out = []
        for order in self.ngram_orders:
            for i in range(len(tokens) - order + 1):
                gram = f"{order}:" + " ".join(tokens[i:i + order])
                out.append(stable_hash(gram, self.hash_seed) % self.hash_dim)
        return out


def featurize(featurizer: Featurizer, text: str) -> sparse.csr_array:
    """One text as a 1 x hash_dim sparse row (empty text -> zero vector)."""
    return featurize_texts(featurizer, [text])


def featurize_texts(featurizer: Featurizer, texts: list[str]) -> sparse.csr_array:
    """Stack of hashed n-gram rows; repeated n-grams accumulate weight."""
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for text in texts:
        idx = featurizer.token_indices(text)
        if idx:
            uniq, counts = np.unique(np.asarray(idx, dtype=np.int64),
                                     return_counts=True)
            values = counts / np.linalg.norm(counts)
            indices.extend(uniq.tolist())
            data.extend(values.tolist())
        indptr.append(len(indices))
    return sparse.csr_array(
        (np.asarray(data, dtype=np.float64),
         np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(texts), featurizer.hash_dim),
    )


def featurize_dataset(featurizer: Featurizer, dataset: Dataset) -> sparse.csr_array:
    return featurize_texts(featurizer, dataset.texts())


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one SGD training run.

    learning_rate warms up linearly over warmup_steps when that is positive.
    eval_every controls how often the validation set is scored for early
    stopping; patience counts evaluations without improvement. seed drives
    batch order; init_seed (defaulting to seed) drives parameter init and
    dropout, so two runs can share a batch schedule yet differ in weights.
    """

    steps: int = 600
    learning_rate: float = 0.5
    patience: int = 8
    warmup_steps: int = 0
    weight_decay: float = 1e-4
    drop_rate: float = 0.1
    batch_size: int = 32
    eval_every: int = 25
    seed: int = 0
    hidden_size: int = DEFAULT_HIDDEN
    init_seed: int | None = None

    def __post_init__(self):
        if self.steps <= 0 or self.patience < 1 or self.batch_size < 1 \
                or self.eval_every < 1 or self.hidden_size < 1:
            raise ValidationError("steps, patience, batch_size, eval_every and "
                                  "hidden_size must be positive")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValidationError("drop_rate must be in [0, 1)")
        if self.learning_rate <= 0 or self.warmup_steps < 0 or self.weight_decay < 0:
            raise ValidationError("bad learning_rate/warmup_steps/weight_decay")

    def effective_lr(self, step: int) -> float:
        if self.warmup_steps > 0:
            return self.learning_rate * min(1.0, step / self.warmup_steps)
        return self.learning_rate


@dataclass
class Head:
    weights: np.ndarray  # hidden x classes
    bias: np.ndarray     # classes

    def copy(self) -> "Head":
        return Head(self.weights.copy(), self.bias.copy())


@dataclass
class ModelParams:
    """Encoder matrix plus one weight/bias pair per softmax head."""

    encoder: np.ndarray  # hash_dim x hidden
    heads: list[Head]
    drop_rate: float = 0.0

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    @property
    def n_labels(self) -> int:
        return self.heads[0].bias.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.encoder.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.encoder.copy(), [h.copy() for h in self.heads],
                           self.drop_rate)

    def check_finite(self) -> None:
        arrays = [self.encoder] + [a for h in self.heads for a in (h.weights, h.bias)]
        if not all(np.isfinite(a).all() for a in arrays):
            raise DivergenceError("non-finite model parameters")


def init_params(
    featurizer: Featurizer,
    n_labels: int,
    hidden_size: int = DEFAULT_HIDDEN,
    n_heads: int = 1,
    drop_rate: float = 0.0,
    seed: int = 0,
    head_seeds: list[int] | None = None,
) -> ModelParams:
    """Seeded Gaussian init; head_seeds lets heads be seeded individually
    (pass identical seeds to get identical heads)."""
    if n_labels < 2 or n_heads < 1 or hidden_size < 1:
        raise ValidationError("need n_labels >= 2, n_heads >= 1, hidden_size >= 1")
    if not 0.0 <= drop_rate < 1.0:
        raise ValidationError("drop_rate must be in [0, 1)")
    if head_seeds is None:
        head_seeds = [seed + 1 + h for h in range(n_heads)]
    elif len(head_seeds) != n_heads:
        raise ValidationError("head_seeds length must equal n_heads")
    enc_rng = np.random.default_rng(np.random.SeedSequence([seed % 2**64, 0]))
    encoder = enc_rng.normal(0.0, 0.2, size=(featurizer.hash_dim, hidden_size))
    heads = []
    for hseed in head_seeds:
        rng = np.random.default_rng(np.random.SeedSequence([hseed % 2**64, 1]))
        heads.append(Head(rng.normal(0.0, 0.2, size=(hidden_size, n_labels)),
                          np.zeros(n_labels)))
    return ModelParams(encoder, heads, drop_rate)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _encode(params: ModelParams, x: sparse.csr_array, train_mode: bool,
            rng: np.random.Generator | None):
    """Hidden activations and the dropout scale actually applied."""
    pre = x @ params.encoder
    hidden = np.maximum(pre, 0.0)
    scale = None
    if train_mode and params.drop_rate > 0.0:
        if rng is None:
            raise ValidationError("train-mode forward with dropout needs an rng")
        keep = 1.0 - params.drop_rate
        scale = (rng.random(hidden.shape) < keep) / keep
        hidden = hidden * scale
    return pre, hidden, scale


def _head_logits(params: ModelParams, hidden: np.ndarray, head: int) -> np.ndarray:
    if not 0 <= head < params.n_heads:
        raise ValidationError(f"head index {head} out of range")
    h = params.heads[head]
    return hidden @ h.weights + h.bias


def forward(params: ModelParams, x: sparse.csr_array, head: int = 0,
            train_mode: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Class probabilities, one row per input row; rows sum to 1."""
    params.check_finite()
    _, hidden, _ = _encode(params, x, train_mode, rng)
    return _softmax(_head_logits(params, hidden, head))


def instance_losses(params: ModelParams, x: sparse.csr_array, y: np.ndarray,
                    head: int = 0) -> np.ndarray:
    """Per-row cross-entropy -log p(y), computed in evaluation mode."""
    _, hidden, _ = _encode(params, x, train_mode=False, rng=None)
    logp = _log_softmax(_head_logits(params, hidden, head))
    y = np.asarray(y, dtype=np.int64)
    return -logp[np.arange(x.shape[0]), y]


def instance_loss(params: ModelParams, x: sparse.csr_array, y: int,
                  head: int = 0) -> float:
    return float(instance_losses(params, x, np.array([y]), head)[0])


@dataclass
class Grads:
    encoder: np.ndarray
    heads: dict[int, tuple[np.ndarray, np.ndarray]]  # head -> (dW, db)


def backward_from_logit_grads(
    params: ModelParams,
    x: sparse.csr_array,
    pre: np.ndarray,
    scale: np.ndarray | None,
    logit_grads: dict[int, np.ndarray],
) -> Grads:
    """Map d(loss)/d(logits) per head back to parameter gradients.

    `pre` and `scale` must come from the _encode call that produced the
    logits, so dropout is treated consistently between loss and gradient.
    """
    hidden = np.maximum(pre, 0.0)
    if scale is not None:
        hidden = hidden * scale
    d_hidden = np.zeros_like(hidden)
    head_grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for head, g in logit_grads.items():
        h = params.heads[head]
        head_grads[head] = (hidden.T @ g, g.sum(axis=0))
        d_hidden += g @ h.weights.T
    if scale is not None:
        d_hidden = d_hidden * scale
    d_pre = d_hidden * (pre > 0.0)
    d_encoder = (x.T @ d_pre)
    if sparse.issparse(d_encoder):  # stays sparse when d_pre is all zeros
        d_encoder = d_encoder.toarray()
    return Grads(np.asarray(d_encoder), head_grads)


def mean_ce_and_grads(params: ModelParams, x: sparse.csr_array, y: np.ndarray,
                      heads: list[int], scale_rng: np.random.Generator | None = None,
                      train_mode: bool = False) -> tuple[float, Grads]:
    """Mean cross-entropy over the batch, summed across the given heads,
    with its exact gradient. Used by sgd_step and by gradient tests."""
    y = np.asarray(y, dtype=np.int64)
    b = x.shape[0]
    pre, hidden, scale = _encode(params, x, train_mode, scale_rng)
    onehot_rows = np.arange(b)
    total = 0.0
    logit_grads = {}
    for head in heads:
        logits = _head_logits(params, hidden, head)
        logp = _log_softmax(logits)
        total += float(-logp[onehot_rows, y].mean())
        g = np.exp(logp)
        g[onehot_rows, y] -= 1.0
        logit_grads[head] = g / b
    return total, backward_from_logit_grads(params, x, pre, scale, logit_grads)


def sgd_step(
    params: ModelParams,
    x: sparse.csr_array,
    y: np.ndarray,
    head: int | str = 0,
    lr_effective: float = 0.1,
    weight_decay: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ModelParams:
    """One in-place SGD step on mean batch cross-entropy plus L2 weight decay.

    head may be an index or "all". Weight decay shrinks the weight matrices
    that were updated (never biases). Raises DivergenceError on non-finite
    gradients.
    """
    if x.shape[0] == 0:
        raise ValidationError("sgd_step needs a non-empty batch")
    heads = list(range(params.n_heads)) if head == "all" else [int(head)]
    loss, grads = mean_ce_and_grads(params, x, y, heads, scale_rng=rng,
                                    train_mode=True)
    apply_grads(params, grads, lr_effective, weight_decay)
    return params


def apply_grads(params: ModelParams, grads: Grads, lr_effective: float,
                weight_decay: float) -> None:
    if not math.isfinite(float(grads.encoder.sum())):
        raise DivergenceError("non-finite gradients; reduce the learning rate")
    decay = 1.0 - lr_effective * weight_decay
    params.encoder -= lr_effective * grads.encoder
    if weight_decay:
        params.encoder *= decay
    for head, (dw, db) in grads.heads.items():
        if not (np.isfinite(dw).all() and np.isfinite(db).all()):
            raise DivergenceError("non-finite gradients; reduce the learning rate")
        h = params.heads[head]
        h.weights -= lr_effective * dw
        h.bias -= lr_effective * db
        if weight_decay:
            h.weights *= decay


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    accuracy: float
    probs: np.ndarray   # n x classes
    losses: np.ndarray  # n


def predict_probs(params: ModelParams, x: sparse.csr_array,
                  head: int | str = "averaged") -> np.ndarray:
    """Evaluation-mode probabilities; "averaged" means the head mean."""
    params.check_finite()
    _, hidden, _ = _encode(params, x, train_mode=False, rng=None)
    if head == "averaged":
        probs = [_softmax(_head_logits(params, hidden, h))
                 for h in range(params.n_heads)]
        return np.mean(probs, axis=0)
    return _softmax(_head_logits(params, hidden, int(head)))


def evaluate_features(params: ModelParams, x: sparse.csr_array, y: np.ndarray,
                      head: int | str = "averaged") -> EvalResult:
    if x.shape[0] == 0:
        raise ValidationError("cannot evaluate an empty dataset")
    y = np.asarray(y, dtype=np.int64)
    probs = predict_probs(params, x, head)
    predictions = probs.argmax(axis=1)  # argmax ties break to the lowest index
    accuracy = float(np.mean(predictions == y))
    losses = -np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300))
    return EvalResult(accuracy, probs, losses)


def evaluate(params: ModelParams, dataset: Dataset, featurizer: Featurizer,
             head: int | str = "averaged") -> EvalResult:
    """Accuracy of argmax predictions against observed labels, plus
    per-instance probabilities and cross-entropy losses."""
    x = featurize_dataset(featurizer, dataset)
    return evaluate_features(params, x, dataset.observed(), head)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_model(path: str | Path, featurizer: Featurizer, params: ModelParams) -> None:
    """Versioned JSON checkpoint; floats round-trip bit-exactly."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "featurizer": {
            "hash_dim": featurizer.hash_dim,
            "ngram_orders": list(featurizer.ngram_orders),
            "hash_seed": featurizer.hash_seed,
        },
        "drop_rate": params.drop_rate,
        "encoder": params.encoder.tolist(),
        "heads": [{"weights": h.weights.tolist(), "bias": h.bias.tolist()}
                  for h in params.heads],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path: str | Path) -> tuple[Featurizer, ModelParams]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {payload.get('version')}")
    feat = Featurizer(payload["featurizer"]["hash_dim"],
                      tuple(payload["featurizer"]["ngram_orders"]),
                      payload["featurizer"]["hash_seed"])
    heads = [Head(np.array(h["weights"], dtype=np.float64),
                  np.array(h["bias"], dtype=np.float64))
             for h in payload["heads"]]
    params = ModelParams(np.array(payload["encoder"], dtype=np.float64), heads,
                         payload["drop_rate"])
    params.check_finite()
    return feat, params
