"""Teacher-to-student embedding distillation.

A frozen teacher encoder supervises a student through MSE between their
normalized outputs. Teacher and student see different views of the same
underlying content, so the student has to learn the teacher's embedding
geometry rather than copy weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import (
    EncoderParams,
    GradSet,
    cosine_warmup_lr,
    encode_backward,
    encode_batch,
    sgd_step,
)
from .errors import DimMismatch, EmptyBatch, NonFiniteLoss
from .rng import substream


@dataclass
class DistillJob:
    """Inputs and schedule for one distillation run."""

    teacher: EncoderParams  # frozen
    student: EncoderParams
    x_teacher: np.ndarray  # (n, teacher.d_in) teacher-view inputs
    x_student: np.ndarray  # (n, student.d_in) student-view inputs, row-aligned
    base_lr: float = 0.05
    batch_size: int = 256
    warmup_frac: float = 0.05
    target_mse: float = 0.05

    def __post_init__(self):
        if self.x_teacher.shape[0] != self.x_student.shape[0]:
            raise DimMismatch("teacher and student inputs must pair up row-wise")
        if self.teacher.embed_dim != self.student.embed_dim:
            raise DimMismatch("teacher and student must share the output dimension")


def distill_loss(
    teacher: EncoderParams,
    student: EncoderParams,
    x_teacher: np.ndarray,
    x_student: np.ndarray,
) -> tuple[float, GradSet]:
    """Mean squared embedding distance over the batch; grads for the student only."""
    x_teacher = np.atleast_2d(x_teacher)
    x_student = np.atleast_2d(x_student)
    if x_teacher.shape[0] == 0:
        raise EmptyBatch("distillation batch is empty")
    targets, _ = encode_batch(teacher, x_teacher)
    outputs, cache = encode_batch(student, x_student)
    diff = outputs - targets
    n = diff.shape[0]
    loss = float(np.sum(diff * diff) / n)
    grads = encode_backward(student, cache, (2.0 / n) * diff)
    return loss, grads


def distill_mse(
    teacher: EncoderParams,
    student: EncoderParams,
    x_teacher: np.ndarray,
    x_student: np.ndarray,
) -> float:
    """Loss-only evaluation, typically on held-out rows."""
    targets, _ = encode_batch(teacher, np.atleast_2d(x_teacher))
    outputs, _ = encode_batch(student, np.atleast_2d(x_student))
    return float(np.mean(np.sum((outputs - targets) ** 2, axis=1)))


def run_distillation(
    job: DistillJob, steps: int, seed: int = 0
) -> tuple[EncoderParams, list[float]]:
    """SGD on the distillation loss; returns the student and per-step losses."""
    if steps <= 0:
        raise ValueError("steps must be positive")
    n = job.x_teacher.shape[0]
    student = job.student
    warmup = int(round(job.warmup_frac * steps))
    losses: list[float] = []
    full_batch = job.batch_size >= n
    for step in range(steps):
        if full_batch:
            pick = np.arange(n)
        else:
            pick = substream(seed, "distill", step).integers(0, n, size=job.batch_size)
        loss, grads = distill_loss(
            job.teacher, student, job.x_teacher[pick], job.x_student[pick]
        )
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"distillation loss non-finite at step {step}")
        lr = cosine_warmup_lr(step, warmup, steps, job.base_lr)
        if lr > 0:
            student = sgd_step(student, grads, lr)
        losses.append(loss)
    return student, losses
