"""Memory-queue contrastive training with a frozen key encoder.

Negatives come from a FIFO queue of key embeddings. Because the key
encoder never updates, queue entries stay consistent with fresh
encodings at any capacity, and gradients flow only to the query tower.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .encoder import (
    BatchCache,
    EncoderPairState,
    encode_backward,
    encode_batch,
    sgd_step,
)
from .errors import DimMismatch, EmptyBatch, NoNegatives


class MemoryQueue:
    """Fixed-capacity FIFO of (key embedding, source id) entries."""

    def __init__(self, capacity: int, dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.dim = dim
        self._emb = np.empty((capacity, dim))
        self._ids = np.empty(capacity, dtype=np.int64)
        self._cursor = 0
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def push(self, keys: np.ndarray, ids: Sequence[int]) -> "MemoryQueue":
        """Append keys in order, evicting oldest entries past capacity."""
        keys = np.atleast_2d(keys)
        if keys.shape[0] == 0:
            return self
        if keys.shape[1] != self.dim:
            raise DimMismatch(f"key dim {keys.shape[1]}, queue dim {self.dim}")
        if keys.shape[0] != len(ids):
            raise DimMismatch("one id required per key")
        for row, rid in zip(keys, ids):
            self._emb[self._cursor] = row
            self._ids[self._cursor] = rid
            self._cursor = (self._cursor + 1) % self.capacity
            self._count = min(self._count + 1, self.capacity)
        return self

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """Current entries oldest-first: (embeddings, source ids)."""
        if self._count < self.capacity:
            return self._emb[: self._count].copy(), self._ids[: self._count].copy()
        order = np.r_[self._cursor : self.capacity, 0 : self._cursor]
        return self._emb[order].copy(), self._ids[order].copy()


@dataclass
class ContrastiveBatch:
    """Aligned query/positive embeddings for one step."""

    queries: np.ndarray  # (n, d_e), unit rows, from the trainable encoder
    positives: np.ndarray  # (n, d_e), unit rows, from the frozen encoder
    ids: np.ndarray  # (n,) source pair ids
    cache: BatchCache | None = None  # forward cache of the query encoder


@dataclass
class PairBatch:
    """Raw minibatch slice: inputs for both towers plus pair ids."""

    ids: np.ndarray
    x_a: np.ndarray
    x_b: np.ndarray


def contrastive_loss(
    batch: ContrastiveBatch, queue: MemoryQueue, tau: float
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy of each query against its positive.

    Negatives are the queue snapshot, excluding entries whose source id
    matches the query's own pair. On an empty queue the other in-batch
    positives serve as negatives (warm start). Returns the loss and
    d(loss)/d(queries); keys and queue entries are constants.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = batch.queries.shape[0]
    if n == 0:
        raise EmptyBatch("contrastive batch is empty")
    if batch.queries.shape != batch.positives.shape:
        raise DimMismatch("queries and positives must align")

    negs, neg_ids = queue.snapshot()
    in_batch = negs.shape[0] == 0
    if in_batch:
        if n == 1:
            raise NoNegatives("empty queue and batch of one leave nothing to contrast")
        negs, neg_ids = batch.positives, batch.ids

    pos_logit = np.sum(batch.queries * batch.positives, axis=1) / tau  # (n,)
    neg_logits = (batch.queries @ negs.T) / tau  # (n, m)
    exclude = neg_ids[None, :] == batch.ids[:, None]
    if in_batch:
        exclude = exclude | np.eye(n, dtype=bool)
    neg_logits = np.where(exclude, -np.inf, neg_logits)

    # Stabilized softmax over [positive, negatives...] per row.
    row_max = np.maximum(pos_logit, neg_logits.max(axis=1))
    pos_exp = np.exp(pos_logit - row_max)
    neg_exp = np.exp(neg_logits - row_max[:, None])
    total = pos_exp + neg_exp.sum(axis=1)
    loss = float(np.mean(-(pos_logit - row_max) + np.log(total)))

    p_pos = pos_exp / total
    p_neg = neg_exp / total[:, None]
    d_queries = ((p_pos - 1.0)[:, None] * batch.positives + p_neg @ negs) / (tau * n)
    return loss, d_queries


KeyLookup = Callable[[np.ndarray], np.ndarray]


def training_step(
    state: EncoderPairState,
    queue: MemoryQueue,
    batch: PairBatch,
    tau: float,
    lr: float,
    weight_decay: float = 0.0,
    key_lookup: KeyLookup | None = None,
) -> tuple[EncoderPairState, MemoryQueue, float]:
    """One contrastive update of the query encoder.

    Keys come from the frozen encoder (or a precomputed lookup holding
    the same bits); the batch's keys are pushed only after the loss, so
    a pair never serves as its own negative within the step.
    """
    if batch.ids.shape[0] == 0:
        raise EmptyBatch("training batch is empty")
    if key_lookup is not None:
        keys = key_lookup(batch.ids)
    else:
        keys, _ = encode_batch(state.key_encoder, batch.x_a)
    queries, cache = encode_batch(state.query_encoder, batch.x_b)
    cbatch = ContrastiveBatch(queries=queries, positives=keys, ids=batch.ids, cache=cache)
    loss, d_queries = contrastive_loss(cbatch, queue, tau)
    if lr > 0:
        grads = encode_backward(state.query_encoder, cache, d_queries)
        state.query_encoder = sgd_step(state.query_encoder, grads, lr, weight_decay)
    state.step += 1
    queue.push(keys, batch.ids)
    return state, queue, loss
