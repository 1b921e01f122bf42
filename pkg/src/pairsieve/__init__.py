"""Noisy-pair curation testbed: dual encoders, queue contrastive training,
score-based data filtering, distillation, and a masked-token auxiliary task,
all on synthetic datasets with planted quality labels."""

__version__ = "0.1.0"
