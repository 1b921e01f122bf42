"""Masked-token auxiliary objective over the synthetic token corpus.

Token sequences are corrupted by masking, the query encoder embeds each
masked position (its lifted token plus the mean-pooled lifted context),
and a linear head predicts the original token. The task shares the query
encoder with contrastive training and is weighted by the ratio of the
two batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contrastive import MemoryQueue, PairBatch, contrastive_loss, ContrastiveBatch, KeyLookup
from .encoder import (
    EncoderPairState,
    GradSet,
    MlmHead,
    encode_backward,
    encode_batch,
    sgd_step,
)
from .errors import ConfigError, EmptyBatch, EmptyMask


@dataclass
class MaskedBatch:
    """Corrupted sequences plus the positions and originals to recover."""

    tokens: np.ndarray  # (n, L) with substitutions applied; mask id == vocab
    mask_rows: np.ndarray  # (m,)
    mask_cols: np.ndarray  # (m,)
    targets: np.ndarray  # (m,) original tokens at masked positions
    vocab: int


@dataclass
class TaskWeights:
    """Loss weighting proportional to the two dataloader batch sizes."""

    batch_pairs: int  # contrastive batch size
    batch_text: int  # masked-token batch size

    def __post_init__(self):
        if self.batch_pairs <= 0 or self.batch_text < 0:
            raise ConfigError("batch sizes must be positive (text may be zero)")

    @property
    def weight(self) -> float:
        return self.batch_text / self.batch_pairs


def mask_batch(
    sequences: np.ndarray,
    p_mask: float,
    p_replace: float,
    rng: np.random.Generator,
    vocab: int,
    scheme: str = "split",
) -> MaskedBatch:
    """Corrupt sequences for masked-token training.

    Every token is independently selected with probability ``p_mask``. In
    the default "split" scheme a selected token becomes a uniformly
    random different token with probability ``p_replace`` and the mask
    token otherwise. The "bert" scheme uses the classic 80/10/10
    mask/random/keep split instead (``p_replace`` ignored).
    """
    if not 0 < p_mask < 1:
        raise ConfigError(f"p_mask must be in (0, 1), got {p_mask}")
    if not 0 <= p_replace < 1:
        raise ConfigError(f"p_replace must be in [0, 1), got {p_replace}")
    if scheme not in ("split", "bert"):
        raise ConfigError(f"unknown masking scheme {scheme!r}")
    sequences = np.atleast_2d(sequences)
    if sequences.size == 0:
        raise EmptyBatch("no sequences to mask")

    shape = sequences.shape
    selected = rng.random(shape) < p_mask
    branch = rng.random(shape)
    # Uniform over the vocab minus the original token.
    repl = rng.integers(0, vocab - 1, size=shape)
    repl = repl + (repl >= sequences)

    corrupted = sequences.copy()
    if scheme == "split":
        to_replace = selected & (branch < p_replace)
        to_mask = selected & ~to_replace
    else:
        to_mask = selected & (branch < 0.8)
        to_replace = selected & (branch >= 0.8) & (branch < 0.9)
        # remaining selected positions keep their token
    corrupted[to_mask] = vocab
    corrupted[to_replace] = repl[to_replace]

    rows, cols = np.nonzero(selected)
    return MaskedBatch(
        tokens=corrupted,
        mask_rows=rows,
        mask_cols=cols,
        targets=sequences[rows, cols].copy(),
        vocab=vocab,
    )


@dataclass
class MlmGrads:
    encoder: GradSet
    head_w: np.ndarray
    head_b: np.ndarray


def _position_inputs(head: MlmHead, batch: MaskedBatch) -> np.ndarray:
    lifted = head.lift[batch.tokens]  # (n, L, d_in)
    context = lifted.mean(axis=1)  # (n, d_in)
    return lifted[batch.mask_rows, batch.mask_cols] + context[batch.mask_rows]


def mlm_loss(query_encoder, head: MlmHead, batch: MaskedBatch) -> tuple[float, MlmGrads]:
    """Mean cross-entropy over masked positions; grads for encoder and head."""
    m = batch.mask_rows.shape[0]
    if m == 0:
        raise EmptyMask("batch has no masked positions")
    inputs = _position_inputs(head, batch)
    emb, cache = encode_batch(query_encoder, inputs)
    logits = emb @ head.w + head.b  # (m, vocab)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    picked = shifted[np.arange(m), batch.targets] - np.log(exp.sum(axis=1))
    loss = float(-picked.mean())

    d_logits = probs.copy()
    d_logits[np.arange(m), batch.targets] -= 1.0
    d_logits /= m
    head_w_grad = emb.T @ d_logits
    head_b_grad = d_logits.sum(axis=0)
    d_emb = d_logits @ head.w.T
    enc_grads = encode_backward(query_encoder, cache, d_emb)
    return loss, MlmGrads(enc_grads, head_w_grad, head_b_grad)


def mlm_accuracy(query_encoder, head: MlmHead, batch: MaskedBatch) -> float:
    """Fraction of masked positions whose argmax logit hits the original token."""
    inputs = _position_inputs(head, batch)
    emb, _ = encode_batch(query_encoder, inputs)
    logits = emb @ head.w + head.b
    return float(np.mean(np.argmax(logits, axis=1) == batch.targets))


def combined_step(
    state: EncoderPairState,
    queue: MemoryQueue,
    pair_batch: PairBatch,
    text_batch: MaskedBatch | None,
    weights: TaskWeights,
    tau: float,
    lr: float,
    weight_decay: float = 0.0,
    key_lookup: KeyLookup | None = None,
) -> tuple[EncoderPairState, MemoryQueue, tuple[float, float]]:
    """One update combining the contrastive and masked-token objectives.

    The masked-token gradient enters scaled by batch_text/batch_pairs; at
    weight zero the update is exactly the contrastive-only step.
    """
    if key_lookup is not None:
        keys = key_lookup(pair_batch.ids)
    else:
        keys, _ = encode_batch(state.key_encoder, pair_batch.x_a)
    queries, cache = encode_batch(state.query_encoder, pair_batch.x_b)
    cbatch = ContrastiveBatch(queries=queries, positives=keys, ids=pair_batch.ids, cache=cache)
    loss_c, d_queries = contrastive_loss(cbatch, queue, tau)

    w = weights.weight
    loss_mlm = 0.0
    if w > 0 and text_batch is not None:
        loss_mlm, mlm_grads = mlm_loss(state.query_encoder, state.mlm, text_batch)
        if lr > 0:
            enc_grads = encode_backward(state.query_encoder, cache, d_queries)
            total = enc_grads.plus(mlm_grads.encoder, weight=w)
            state.query_encoder = sgd_step(state.query_encoder, total, lr, weight_decay)
            state.mlm = MlmHead(
                lift=state.mlm.lift,
                w=state.mlm.w - lr * (w * mlm_grads.head_w + weight_decay * state.mlm.w),
                b=state.mlm.b - lr * w * mlm_grads.head_b,
            )
    else:
        if lr > 0:
            enc_grads = encode_backward(state.query_encoder, cache, d_queries)
            state.query_encoder = sgd_step(state.query_encoder, enc_grads, lr, weight_decay)
    state.step += 1
    queue.push(keys, pair_batch.ids)
    return state, queue, (loss_c, loss_mlm)
