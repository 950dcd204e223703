"""
Training: change-weighted cross-entropy, truncated BPTT, RMSProp and
early stopping on the test-set mean cross-entropy.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import Piece, epoch_batches, sample_batch
from .rnn import CellParams, RnnState, backward_batch, forward_batch, init_params

__all__ = [
    "ObjectiveConfig",
    "TrainConfig",
    "TrainReport",
    "cross_entropy",
    "frame_change",
    "transition_changes",
    "calibrate_epsilon",
    "transition_weights",
    "weighted_ce",
    "batch_loss",
    "bptt_gradients",
    "clip_gradients",
    "rmsprop_init",
    "rmsprop_step",
    "evaluate_mce",
    "train_model",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectiveConfig:
    """Change-weighting of the training loss.

    Transitions whose L1 frame change is at most ``epsilon`` get weight
    ``beta``; all others weight 1. ``epsilon=None`` means it is calibrated
    from the training data so that a ``quantile`` fraction of transitions
    fall at or below it.
    """

    beta: float = 1e-3
    epsilon: Optional[float] = None
    quantile: float = 0.505
    output_clamp: float = 1e-7

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must be in (0, 1)")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not 0 < self.output_clamp < 0.5:
            raise ValueError("output_clamp must be in (0, 0.5)")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    truncation: int = 100
    clip: float = 1.0
    clip_mode: str = "value"
    batch_size: int = 20
    seq_len: int = 100
    patience: int = 100
    max_epochs: int = 2000
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-6
    n_hidden: int = 75
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "clip", "rms_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("truncation", "batch_size", "seq_len", "max_epochs", "n_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0 < self.rms_decay < 1:
            raise ValueError("rms_decay must be in (0, 1)")
        if self.clip_mode not in ("value", "norm"):
            raise ValueError("clip_mode must be 'value' or 'norm'")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    test_mce: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_test_mce: float = math.inf
    stop_reason: str = ""
    epsilon: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


# -- objective ---------------------------------------------------------------

def cross_entropy(y, x_next, eta: float = 1e-7):
    """Summed per-bin Bernoulli cross-entropy (last axis) with ``y`` clamped to [eta, 1-eta]."""
    y = np.clip(np.asarray(y, dtype=np.float64), eta, 1.0 - eta)
    x = np.asarray(x_next, dtype=np.float64)
    if y.shape[-1] != x.shape[-1]:
        raise ValueError("prediction and target lengths differ")
    return -np.sum(x * np.log(y) + (1.0 - x) * np.log1p(-y), axis=-1)


def frame_change(x_t, x_next):
    return np.sum(np.abs(np.asarray(x_next, dtype=np.float64) - np.asarray(x_t, dtype=np.float64)),
                  axis=-1)


def transition_changes(pieces: Sequence[Piece]) -> np.ndarray:
    parts = [frame_change(p.values[:-1], p.values[1:]) for p in pieces if len(p) > 1]
    return np.concatenate(parts) if parts else np.empty(0)


def calibrate_epsilon(changes, quantile: float = 0.505) -> float:
    """Smallest observed change c with empirical P(change <= c) >= quantile."""
    s = np.sort(np.asarray(changes, dtype=np.float64).ravel())
    if s.size == 0:
        raise ValueError("cannot calibrate epsilon on an empty transition set")
    fractions = np.searchsorted(s, s, side="right") / s.size
    return float(s[np.argmax(fractions >= quantile)])


def transition_weights(x_t, x_next, cfg: ObjectiveConfig):
    if cfg.epsilon is None:
        raise ValueError("epsilon has not been calibrated")
    return np.where(frame_change(x_t, x_next) > cfg.epsilon, 1.0, cfg.beta)


def weighted_ce(y, x_t, x_next, cfg: ObjectiveConfig):
    return transition_weights(x_t, x_next, cfg) * cross_entropy(y, x_next, cfg.output_clamp)


# -- gradients ---------------------------------------------------------------

def batch_loss(params: CellParams, inputs, targets, cfg: ObjectiveConfig) -> float:
    """Mean weighted cross-entropy over every (sequence, step) of a batch."""
    y, _, _ = forward_batch(params, inputs, keep_cache=False)
    return float(np.mean(weighted_ce(y, inputs, targets, cfg)))


def bptt_gradients(params: CellParams, inputs, targets, cfg: ObjectiveConfig,
                   truncation: int = 100) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients of :func:`batch_loss`.

    Sequences longer than ``truncation`` are processed in consecutive
    chunks; the hidden state carries across chunks but gradients do not.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    B, T, _ = inputs.shape
    eta = cfg.output_clamp
    weights = transition_weights(inputs, targets, cfg)
    total = 0.0
    grads = None
    state = None
    for start in range(0, T, truncation):
        stop = min(start + truncation, T)
        x = inputs[:, start:stop]
        y, state, cache = forward_batch(params, x, state)
        tgt = targets[:, start:stop]
        w = weights[:, start:stop]
        total += float(np.sum(w * cross_entropy(y, tgt, eta)))
        inside = (y > eta) & (y < 1.0 - eta)
        d_logits = (w[..., None] / (B * T)) * (y - tgt) * inside
        g = backward_batch(params, cache, d_logits)
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
        state = RnnState(state.hidden.copy(), None if state.cell is None else state.cell.copy())
    return total / (B * T), grads


def clip_gradients(grads: dict[str, np.ndarray], limit: float = 1.0,
                   mode: str = "value") -> dict[str, np.ndarray]:
    if limit <= 0:
        raise ValueError("clip limit must be positive")
    if mode == "value":
        return {k: np.clip(g, -limit, limit) for k, g in grads.items()}
    if mode == "norm":
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        scale = min(1.0, limit / norm) if norm > 0 else 1.0
        return {k: g * scale for k, g in grads.items()}
    raise ValueError(f"unknown clip mode {mode!r}")


# -- optimizer ---------------------------------------------------------------

def rmsprop_init(params: CellParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays.items()}


def rmsprop_step(params: CellParams, grads: dict[str, np.ndarray], acc: dict[str, np.ndarray],
                 learning_rate: float = 1e-3, decay: float = 0.9, eps: float = 1e-6):
    """One RMSProp update; returns new ``(params, accumulators)``."""
    new_arrays, new_acc = {}, {}
    for k, p in params.arrays.items():
        g = grads[k]
        a = decay * acc[k] + (1.0 - decay) * g * g
        new_acc[k] = a
        new_arrays[k] = p - learning_rate * g / np.sqrt(a + eps)
    return CellParams(params.kind, params.n_in, params.n_hidden, new_arrays), new_acc


# -- evaluation --------------------------------------------------------------

def evaluate_mce(params: CellParams, pieces: Sequence[Piece], eta: float = 1e-7) -> float:
    """Unweighted cross-entropy averaged over every transition of every piece.

    Each piece runs from the zero state over its full length; pieces of
    equal length are evaluated together as one batch.
    """
    by_length: dict[int, list[np.ndarray]] = {}
    for p in pieces:
        if len(p) > 1:
            by_length.setdefault(len(p), []).append(p.values)
    if not by_length:
        raise ValueError("test set has no transitions")
    total, count = 0.0, 0
    for length in sorted(by_length):
        x = np.stack(by_length[length])
        y, _, _ = forward_batch(params, x[:, :-1], keep_cache=False)
        ce = cross_entropy(y, x[:, 1:], eta)
        total += float(ce.sum())
        count += ce.size
    return total / count


# -- training loop -----------------------------------------------------------

def train_model(kind: str, train_pieces: Sequence[Piece], test_pieces: Sequence[Piece],
                objective: ObjectiveConfig = ObjectiveConfig(),
                config: TrainConfig = TrainConfig(),
                params: Optional[CellParams] = None):
    """Train one network and return ``(best params, TrainReport)``.

    The best parameters are those with the lowest test MCE seen after any
    epoch; training stops after ``patience`` epochs without improvement or
    at ``max_epochs``.
    """
    if not train_pieces or not test_pieces:
        raise ValueError("training and test sets must be nonempty")
    if objective.epsilon is None:
        eps = calibrate_epsilon(transition_changes(train_pieces), objective.quantile)
        objective = ObjectiveConfig(objective.beta, eps, objective.quantile,
                                    objective.output_clamp)
    init_seq, batch_seq = np.random.SeedSequence(config.seed).spawn(2)
    if params is None:
        n_in = train_pieces[0].values.shape[1]
        params = init_params(kind, n_in, config.n_hidden,
                             seed=int(init_seq.generate_state(1)[0]))
    rng = np.random.default_rng(batch_seq)
    acc = rmsprop_init(params)
    n_batches = epoch_batches(train_pieces, config.batch_size, config.seq_len)
    report = TrainReport(epsilon=float(objective.epsilon))
    best = params
    for epoch in range(config.max_epochs):
        losses = []
        for _ in range(n_batches):
            batch = sample_batch(train_pieces, config.batch_size, config.seq_len, rng)
            loss, grads = bptt_gradients(params, batch.inputs, batch.targets, objective,
                                         config.truncation)
            grads = clip_gradients(grads, config.clip, config.clip_mode)
            params, acc = rmsprop_step(params, grads, acc, config.learning_rate,
                                       config.rms_decay, config.rms_epsilon)
            losses.append(loss)
        mce = evaluate_mce(params, test_pieces, objective.output_clamp)
        report.train_loss.append(float(np.mean(losses)))
        report.test_mce.append(mce)
        if mce < report.best_test_mce:
            report.best_test_mce = mce
            report.best_epoch = epoch
            best = params
        log.info("epoch %d: train %.5f test MCE %.5f (best %.5f @ %d)", epoch,
                 report.train_loss[-1], mce, report.best_test_mce, report.best_epoch)
        if epoch - report.best_epoch >= config.patience:
            report.stop_reason = "patience"
            break
    else:
        report.stop_reason = "max_epochs"
    return best, report
