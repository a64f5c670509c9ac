"""Mini-batch Adam training with best-epoch selection, and classifier evaluation."""

import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument, TrainingError
from ..nn import AdamState, adam_step, mse_loss, softmax, softmax_ce_loss
from .checkpoint import save_checkpoint
from .models import (
    ClassifierConfig,
    EncoderDecoderConfig,
    build_classifier,
    build_encoder_decoder,
    clf_backward,
    clf_logits,
    clf_logits_cached,
    copy_clf,
    copy_ed,
    ed_backward,
    ed_forward,
    ed_forward_cached,
)

VARIANTS = ("noisy", "clean", "retrieved")
_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    precision: str = "float32"
    checkpoint_dir: str = None
    eval_batch_size: int = 64

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise InvalidArgument("epochs and batch sizes must be positive")
        if not self.lr > 0:
            raise InvalidArgument(f"lr must be positive, got {self.lr}")
        if self.precision not in _DTYPES:
            raise InvalidArgument(f"precision must be one of {sorted(_DTYPES)}, got {self.precision!r}")

    @property
    def dtype(self):
        return _DTYPES[self.precision]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = None

    def __len__(self):
        return len(self.records)

    @property
    def val_losses(self):
        return [r.val_loss for r in self.records]

    @property
    def train_losses(self):
        return [r.train_loss for r in self.records]


def baseline_mse(x, y):
    """Do-nothing reconstruction error ``MSE(X, Y)``."""
    return float(np.mean((np.asarray(x, np.float64) - np.asarray(y, np.float64)) ** 2))


def _check_disjoint(train, val):
    if len(train) == 0:
        raise TrainingError("training set is empty")
    if val is not None:
        if len(val) == 0:
            raise TrainingError("validation set is empty")
        shared = set(train.replay_ids) & set(val.replay_ids)
        if shared:
            raise InvalidArgument(f"train and validation share replays: {sorted(shared)[:5]}")


def _batches(n, size, rng=None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, size):
        yield order[start:start + size]


def ed_predict(params, x, batch_size=64):
    """Encoder-decoder output for a large array, computed in batches."""
    out = np.empty(x.shape, dtype=params.dtype)
    for idx in _batches(len(x), batch_size):
        out[idx] = ed_forward(params, x[idx])
    return out


def ed_mse(params, x, y, batch_size=64):
    """Mean squared error of ``ed_forward(x)`` against ``y`` over all elements."""
    total = 0.0
    for idx in _batches(len(x), batch_size):
        pred = ed_forward(params, x[idx]).astype(np.float64)
        total += float(np.sum((pred - y[idx]) ** 2))
    return total / x.size


def _run_epochs(params, copy_fn, step_fn, val_fn, n_train, config, name):
    """Shared loop: shuffle per epoch with a seed derived from ``config.seed``,
    Adam over mini-batches, keep the parameters of the lowest validation loss."""
    state = AdamState()
    tensors = params.named_tensors()
    history = TrainHistory()
    best, best_loss = copy_fn(params), np.inf
    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, epoch])
        total, seen = 0.0, 0
        for b, idx in enumerate(_batches(n_train, config.batch_size, rng)):
            loss, grads = step_fn(idx)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite {name} loss at epoch {epoch}, batch {b}")
            adam_step(tensors, grads, state, config.lr)
            total += loss * len(idx)
            seen += len(idx)
        train_loss = total / seen
        val_loss = val_fn(params) if val_fn is not None else train_loss
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite {name} validation loss at epoch {epoch}")
        history.records.append(EpochRecord(epoch, train_loss, val_loss))
        if val_loss < best_loss:  # strict: ties keep the earliest epoch
            best, best_loss = copy_fn(params), val_loss
            history.best_epoch = epoch
            if config.checkpoint_dir:
                save_checkpoint(best, os.path.join(config.checkpoint_dir, f"{name}_best.fogc"))
    return best, history


def train_encoder_decoder(train, val, config=TrainConfig(), ed_config=EncoderDecoderConfig()):
    """Fit ``ed_forward(x) -> y`` by MSE. Returns ``(best_params, history)``.

    ``val`` may be None, in which case the training loss drives selection.
    """
    _check_disjoint(train, val)
    dtype = config.dtype
    params = build_encoder_decoder(ed_config, seed=config.seed, dtype=dtype)
    x, y = train.x, train.y

    def step(idx):
        xb = x[idx].astype(dtype, copy=False)
        out, cache = ed_forward_cached(params, xb)
        loss, g = mse_loss(out, y[idx].astype(dtype, copy=False))
        return loss, ed_backward(params, cache, g)

    val_fn = None
    if val is not None:
        def val_fn(p):
            return ed_mse(p, val.x, val.y, config.eval_batch_size)

    return _run_epochs(params, copy_ed, step, val_fn, len(train), config, "ed")


def variant_inputs(samples, variant, ed_params=None, batch_size=64):
    """Classifier inputs for one variant: fogged ``x``, clean ``y`` or ``ed_forward(x)``."""
    if variant not in VARIANTS:
        raise InvalidArgument(f"variant must be one of {VARIANTS}, got {variant!r}")
    if variant == "retrieved":
        if ed_params is None:
            raise InvalidArgument("variant 'retrieved' needs encoder-decoder parameters")
        return ed_predict(ed_params, samples.x, batch_size)
    return samples.x if variant == "noisy" else samples.y


def _ce_eval(params, inputs, labels, batch_size):
    logits = np.concatenate([clf_logits(params, inputs[idx]) for idx in _batches(len(inputs), batch_size)])
    loss, _ = softmax_ce_loss(logits.astype(np.float64), labels)
    return loss, logits


def train_classifier(train, val, variant, ed_params=None, config=TrainConfig(),
                     clf_config=ClassifierConfig(), inputs=None):
    """Fit the winner classifier on one input variant. Returns ``(best_params, history)``.

    The encoder-decoder is frozen, so ``retrieved`` inputs are computed once up
    front. ``inputs`` may pass precomputed ``(train_inputs, val_inputs)``.
    """
    if variant not in VARIANTS:
        raise InvalidArgument(f"variant must be one of {VARIANTS}, got {variant!r}")
    if variant == "retrieved" and ed_params is None:
        raise InvalidArgument("variant 'retrieved' needs encoder-decoder parameters")
    _check_disjoint(train, val)
    dtype = config.dtype
    if inputs is None:
        tr_in = variant_inputs(train, variant, ed_params, config.eval_batch_size)
        va_in = variant_inputs(val, variant, ed_params, config.eval_batch_size) if val is not None else None
    else:
        tr_in, va_in = inputs
    tr_labels = train.labels
    params = build_classifier(config.seed, clf_config, dtype=dtype)

    def step(idx):
        logits, cache = clf_logits_cached(params, tr_in[idx].astype(dtype, copy=False))
        loss, g = softmax_ce_loss(logits, tr_labels[idx])
        return loss, clf_backward(params, cache, g.astype(dtype, copy=False))

    val_fn = None
    if val is not None:
        val_labels = val.labels

        def val_fn(p):
            return _ce_eval(p, va_in, val_labels, config.eval_batch_size)[0]

    return _run_epochs(params, copy_clf, step, val_fn, len(train), config, f"clf_{variant}")


@dataclass
class EvalReport:
    accuracy: float
    f1_positive: float
    f1_macro: float
    tp: int
    fp: int
    fn: int
    tn: int
    loss: float

    def rows(self):
        return [("accuracy", self.accuracy), ("f1_positive", self.f1_positive),
                ("f1_macro", self.f1_macro), ("loss", self.loss),
                ("tp", self.tp), ("fp", self.fp), ("fn", self.fn), ("tn", self.tn)]


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def report_from_predictions(pred_a_wins, true_a_wins, loss=float("nan")):
    """Confusion counts and scores with "A wins" as the positive class."""
    pred = np.asarray(pred_a_wins, bool)
    true = np.asarray(true_a_wins, bool)
    if pred.size == 0:
        raise InvalidArgument("cannot evaluate an empty set")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    f1_pos = _f1(tp, fp, fn)
    f1_neg = _f1(tn, fn, fp)
    return EvalReport((tp + tn) / pred.size, f1_pos, (f1_pos + f1_neg) / 2, tp, fp, fn, tn, float(loss))


def evaluate_classifier(params, samples, variant, ed_params=None, batch_size=64, inputs=None):
    if len(samples) == 0:
        raise InvalidArgument("cannot evaluate an empty set")
    if inputs is None:
        inputs = variant_inputs(samples, variant, ed_params, batch_size)
    labels = samples.labels
    loss, logits = _ce_eval(params, inputs, labels, batch_size)
    probs = softmax(logits.astype(np.float64))
    return report_from_predictions(probs[:, 0] >= probs[:, 1], labels == 0, loss)
