"""End-to-end pipeline: teacher pretraining, distillation, filtered
contrastive training with the masked-token task, evaluation, and sweeps.

Every run is a pure function of its RunConfig: all randomness flows from
the config seed through named substreams, and metric outputs are
byte-stable across reruns.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from math import ceil
from pathlib import Path

import numpy as np

from .config import RunConfig, save_config
from .contrastive import ContrastiveBatch, MemoryQueue, PairBatch, contrastive_loss, training_step
from .curation import (
    CurationState,
    ScoreLedger,
    ShadowModel,
    check_stop,
    filtering_ratio_report,
    rank_and_filter,
    score_pairs,
    update_shadow,
    update_total_scores,
    write_ledger_dump,
)
from .data import Dataset, GenConfig, Label, generate_dataset, split_validation, write_manifest
from .distill import DistillJob, distill_mse, run_distillation
from .encoder import (
    EncoderPairState,
    EncoderParams,
    clone_params,
    cosine_warmup_lr,
    encode_backward,
    encode_batch,
    init_mlm_head,
    init_params,
    save_params,
    sgd_step,
)
from .metrics import (
    export_distribution,
    f1_at_threshold,
    noise_composition,
    recall_at_k,
    select_threshold,
    write_distribution,
    write_metrics_csv,
)
from .mlm import TaskWeights, combined_step, mask_batch
from .rng import substream
from .store import open_store, write_store

# Stage tags for deriving per-component seeds from the master seed.
_STAGE = {
    "teacher_data": 1,
    "key_init": 2,
    "text_init": 3,
    "student_init": 4,
    "distill_data": 5,
    "head_init": 6,
    "eval_data": 7,
}


def stage_seed(master: int, tag: str) -> int:
    return master * 256 + _STAGE[tag]


def view_map(world_seed: int, dim: int) -> np.ndarray:
    """Fixed orthogonal map giving the teacher its own input view."""
    g = substream(world_seed, "view").standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


@dataclass
class TeacherBundle:
    """Clean-data encoder pair; ``view`` is the teacher-side input map."""

    key_encoder: EncoderParams
    text_encoder: EncoderParams
    view: np.ndarray


def train_teacher(cfg: RunConfig) -> TeacherBundle:
    """Contrastively pretrain both towers on a clean synthetic set.

    Stands in for an off-the-shelf pretrained pair: the key tower is
    frozen afterwards, the text tower becomes the distillation teacher.
    """
    seed = cfg.seed
    data_cfg = GenConfig(
        n_pairs=cfg.teacher.n_pairs,
        latent_dim=cfg.data.latent_dim,
        d_a=cfg.data.d_a,
        d_b=cfg.data.d_b,
        f_good=1.0,
        f_clean=0.0,
        f_noisy=0.0,
        sigma_good=cfg.data.sigma_good,
        sigma_clean=cfg.data.sigma_clean,
        vocab=cfg.data.vocab,
        seq_len=cfg.data.seq_len,
        seed=stage_seed(seed, "teacher_data"),
        world_seed=cfg.data.world_seed if cfg.data.world_seed is not None else cfg.data.seed,
    )
    ds = generate_dataset(data_cfg)
    view = view_map(data_cfg.world_seed, cfg.data.d_b)
    x_view = ds.x_b @ view.T

    enc_a = init_params(stage_seed(seed, "key_init"), cfg.data.d_a, cfg.encoder.hidden, cfg.encoder.embed_dim)
    enc_b = init_params(stage_seed(seed, "text_init"), cfg.data.d_b, cfg.encoder.hidden, cfg.encoder.embed_dim)
    queue_a = MemoryQueue(cfg.teacher.queue_capacity, cfg.encoder.embed_dim)
    queue_b = MemoryQueue(cfg.teacher.queue_capacity, cfg.encoder.embed_dim)
    tau, wd = cfg.train.tau, cfg.train.weight_decay
    steps = cfg.teacher.steps
    warmup = int(round(cfg.train.warmup_frac * steps))
    n = len(ds)
    for step in range(steps):
        pick = substream(seed, "teacher", step).integers(0, n, size=cfg.teacher.batch_size)
        ids = ds.ids[pick]
        lr = cosine_warmup_lr(step, warmup, steps, cfg.train.base_lr)
        emb_a, cache_a = encode_batch(enc_a, ds.x_a[pick])
        emb_b, cache_b = encode_batch(enc_b, x_view[pick])
        # Two one-sided losses train both towers symmetrically.
        _, d_b = contrastive_loss(ContrastiveBatch(emb_b, emb_a, ids, cache_b), queue_a, tau)
        _, d_a = contrastive_loss(ContrastiveBatch(emb_a, emb_b, ids, cache_a), queue_b, tau)
        if lr > 0:
            enc_b = sgd_step(enc_b, encode_backward(enc_b, cache_b, d_b), lr, wd)
            enc_a = sgd_step(enc_a, encode_backward(enc_a, cache_a, d_a), lr, wd)
        queue_a.push(emb_a, ids)
        queue_b.push(emb_b, ids)
    return TeacherBundle(key_encoder=enc_a, text_encoder=enc_b, view=view)


def distill_student(cfg: RunConfig, teacher: TeacherBundle) -> tuple[EncoderParams, float, list[float]]:
    """Distill the teacher text tower into a student on raw inputs.

    The teacher reads its own view of each vector, the student the raw
    vector, so matched outputs require learning the embedding, not the
    identity. Returns (student, held-out MSE, loss curve).
    """
    total = cfg.distill.corpus_size + cfg.distill.held_out
    data_cfg = GenConfig(
        n_pairs=total,
        latent_dim=cfg.data.latent_dim,
        d_a=cfg.data.d_a,
        d_b=cfg.data.d_b,
        f_good=1.0,
        f_clean=0.0,
        f_noisy=0.0,
        sigma_good=cfg.data.sigma_good,
        sigma_clean=cfg.data.sigma_clean,
        vocab=cfg.data.vocab,
        seq_len=cfg.data.seq_len,
        seed=stage_seed(cfg.seed, "distill_data"),
        world_seed=cfg.data.world_seed if cfg.data.world_seed is not None else cfg.data.seed,
    )
    ds = generate_dataset(data_cfg)
    x_student = ds.x_b
    x_teacher = x_student @ teacher.view.T
    split = cfg.distill.corpus_size
    student = init_params(
        stage_seed(cfg.seed, "student_init"), cfg.data.d_b, cfg.encoder.hidden, cfg.encoder.embed_dim
    )
    job = DistillJob(
        teacher=teacher.text_encoder,
        student=student,
        x_teacher=x_teacher[:split],
        x_student=x_student[:split],
        base_lr=cfg.distill.base_lr,
        batch_size=cfg.distill.batch_size,
        target_mse=cfg.distill.target_mse,
    )
    student, curve = run_distillation(job, cfg.distill.steps, seed=cfg.seed)
    held = distill_mse(teacher.text_encoder, student, x_teacher[split:], x_student[split:])
    return student, held, curve


def validation_metrics(state: EncoderPairState, val: Dataset) -> dict[str, float]:
    """Retrieval recalls plus match f1 on the validation pairs.

    The f1 threshold is tuned on the even-indexed pairs and scored on the
    odd-indexed ones.
    """
    keys, _ = encode_batch(state.key_encoder, val.x_a)
    queries, _ = encode_batch(state.query_encoder, val.x_b)
    n = len(val)
    truth = np.arange(n)
    b2a = recall_at_k(queries, keys, truth, ks=(1, 5, 10), direction="b_to_a")
    a2b = recall_at_k(keys, queries, truth, ks=(1, 5, 10), direction="a_to_b")
    true_scores = np.sum(keys * queries, axis=1)
    mismatch_scores = np.sum(keys * np.roll(queries, 1, axis=0), axis=1)
    if n >= 2:
        theta = select_threshold(true_scores[0::2], mismatch_scores[0::2])
        f1 = f1_at_threshold(true_scores[1::2], mismatch_scores[1::2], theta)
    else:
        theta = select_threshold(true_scores, mismatch_scores)
        f1 = f1_at_threshold(true_scores, mismatch_scores, theta)
    return {
        "val_f1": f1.f1,
        "val_precision": f1.precision,
        "val_recall": f1.recall,
        "val_r1_b2a": b2a.recalls[1],
        "val_r5_b2a": b2a.recalls[5],
        "val_r10_b2a": b2a.recalls[10],
        "val_r1_a2b": a2b.recalls[1],
        "val_r5_a2b": a2b.recalls[5],
        "val_r10_a2b": a2b.recalls[10],
    }


@dataclass
class RunReport:
    """Metrics, counters and artifacts of one pretraining run."""

    run_id: str
    rows: list[tuple[int, str, float]] = field(default_factory=list)
    timing_rows: list[tuple[int, str, float]] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    total_steps: int = 0
    final_retained_ids: list[int] = field(default_factory=list)
    out_dir: str | None = None
    checkpoints: dict[str, str] = field(default_factory=dict)

    def log(self, epoch: int, metric: str, value: float) -> None:
        self.rows.append((epoch, metric, float(value)))

    def metric(self, epoch: int, name: str) -> float:
        for e, m, v in self.rows:
            if e == epoch and m == name:
                return v
        raise KeyError(f"metric {name} at epoch {epoch} not recorded")

    def series(self, name: str) -> list[tuple[int, float]]:
        return [(e, v) for e, m, v in self.rows if m == name]


def _epoch_batches(ids: list[int], batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    order = substream(seed, "batch", epoch).permutation(np.array(sorted(ids), dtype=np.int64))
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def pretrain(cfg: RunConfig, out_dir: str | Path | None = None) -> RunReport:
    """Run the full pipeline and return its report.

    Per epoch: score the retained pairs with the frozen shadow, fold the
    scores into smoothed totals, keep the top fraction, train one pass
    (contrastive plus weighted masked-token loss while filtering),
    refresh the shadow, evaluate, and test the stop rule. Once filtering
    stops, training continues contrastive-only on the frozen subset.
    With ``filtering_on`` false the loop is the plain baseline over the
    full noisy set.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_config(out / "config.json", cfg)

    report = RunReport(run_id=cfg.run_id(), out_dir=str(out) if out else None)
    counters = {
        "pairs_scored": 0,
        "filter_events": 0,
        "contrastive_steps": 0,
        "mlm_steps": 0,
        "shadow_refreshes": 0,
    }
    seed = cfg.seed

    full = generate_dataset(cfg.data)
    train, val = split_validation(full, cfg.n_val, seed)
    labels = {int(i): Label(int(l)) for i, l in zip(train.ids, train.labels)}

    teacher = train_teacher(cfg)
    student, held_mse, _ = distill_student(cfg, teacher)
    report.log(0, "distill_held_mse", held_mse)

    state = EncoderPairState(
        key_encoder=teacher.key_encoder,
        query_encoder=student,
        mlm=init_mlm_head(
            stage_seed(seed, "head_init"), cfg.data.vocab, cfg.data.d_b, cfg.encoder.embed_dim
        ),
    )

    # Key embeddings are computed once with the frozen tower and reused all
    # run; the store file is their durable form and round-trips bit-exactly.
    key_matrix, _ = encode_batch(state.key_encoder, train.x_a)
    if out is not None:
        write_store(out / "keys.ecst", key_matrix)
    id_to_row = {int(i): r for r, i in enumerate(train.ids)}

    def key_lookup(ids: np.ndarray) -> np.ndarray:
        return key_matrix[[id_to_row[int(i)] for i in ids]]

    ledger = ScoreLedger.fresh(train.ids)
    cur = CurationState(
        alpha=cfg.train.alpha,
        keep_fraction=cfg.train.keep_fraction,
        shadow=ShadowModel.snapshot_of(state),
        retained_ids=[int(i) for i in train.ids],
        filtering_active=cfg.filtering_on,
    )
    queue = MemoryQueue(cfg.train.queue_capacity, cfg.encoder.embed_dim)
    weights = TaskWeights(cfg.train.batch_pairs, cfg.train.batch_text)

    budget = cfg.train.step_budget
    plan_steps = (
        budget
        if budget is not None
        else cfg.train.epochs * ceil(len(train) / cfg.train.batch_pairs)
    )
    warmup = int(round(cfg.train.warmup_frac * plan_steps))
    regular_term = 1.0

    for epoch in range(1, cfg.train.epochs + 1):
        if budget is not None and report.total_steps >= budget:
            break
        if (
            cfg.train.filter_epochs_max is not None
            and counters["filter_events"] >= cfg.train.filter_epochs_max
        ):
            cur.filtering_active = False
        if cfg.filtering_on and cur.filtering_active:
            scores = score_pairs(cur.shadow, train, cur.retained_ids)
            update_total_scores(ledger, scores, cfg.train.alpha)
            counters["pairs_scored"] += len(scores)
            before = cur.retained_ids
            cur.retained_ids = rank_and_filter(ledger, before, cfg.train.keep_fraction)
            counters["filter_events"] += 1
            ratio = filtering_ratio_report(before, cur.retained_ids, labels)
            defined = np.isfinite(ratio.good_retention) and np.isfinite(ratio.noisy_retention)
            if defined and ratio.good_retention > 0:
                regular_term *= ratio.noisy_retention / ratio.good_retention
            report.log(epoch, "retention_good", ratio.good_retention)
            report.log(epoch, "retention_noisy", ratio.noisy_retention)
            report.log(epoch, "regular_term", regular_term)
            if out is not None:
                write_ledger_dump(
                    out / f"ledger_epoch{epoch}.csv", ledger, train.ids, cur.retained_ids, labels
                )
                write_distribution(
                    out / f"distribution_epoch{epoch}.csv",
                    export_distribution(ledger, labels, epoch, cur.retained_ids),
                )
        cur.epoch = epoch

        comp = noise_composition(cur.retained_ids, labels)
        report.log(epoch, "retained_count", len(cur.retained_ids))
        for tag in ("good", "clean", "noisy"):
            report.log(epoch, f"frac_{tag}", comp[tag])

        loss_c_sum, loss_m_sum, mlm_steps = 0.0, 0.0, 0
        t_start = time.perf_counter()
        epoch_steps = 0
        for batch_ids in _epoch_batches(cur.retained_ids, cfg.train.batch_pairs, seed, epoch):
            if budget is not None and report.total_steps >= budget:
                break
            rows = train.rows_for_ids(batch_ids)
            pair_batch = PairBatch(ids=batch_ids, x_a=train.x_a[rows], x_b=train.x_b[rows])
            lr = cosine_warmup_lr(state.step, warmup, plan_steps, cfg.train.base_lr)
            use_mlm = cfg.mlm_on and cur.filtering_active and cfg.train.batch_text > 0
            if use_mlm:
                text_rng = substream(seed, "mask", state.step)
                pick = text_rng.integers(0, len(train), size=cfg.train.batch_text)
                masked = mask_batch(
                    train.tokens[pick],
                    cfg.train.p_mask,
                    cfg.train.p_replace,
                    text_rng,
                    cfg.data.vocab,
                )
                state, queue, (loss_c, loss_m) = combined_step(
                    state, queue, pair_batch, masked, weights,
                    cfg.train.tau, lr, cfg.train.weight_decay, key_lookup,
                )
                loss_m_sum += loss_m
                mlm_steps += 1
                counters["mlm_steps"] += 1
            else:
                state, queue, loss_c = training_step(
                    state, queue, pair_batch, cfg.train.tau, lr,
                    cfg.train.weight_decay, key_lookup,
                )
            loss_c_sum += loss_c
            counters["contrastive_steps"] += 1
            report.total_steps += 1
            epoch_steps += 1
        elapsed = time.perf_counter() - t_start

        if epoch_steps:
            report.log(epoch, "train_loss", loss_c_sum / epoch_steps)
            report.log(epoch, "mlm_loss", loss_m_sum / mlm_steps if mlm_steps else 0.0)
            report.timing_rows.append((epoch, "step_time_mean_s", elapsed / epoch_steps))
        report.log(epoch, "steps_cum", report.total_steps)

        if cfg.shadow_refresh_on:
            cur = update_shadow(cur, state)
            counters["shadow_refreshes"] += 1

        vm = validation_metrics(state, val)
        for name, value in vm.items():
            report.log(epoch, name, value)
        cur.validation_history.append(vm["val_f1"])

        if (
            cfg.filtering_on
            and cur.filtering_active
            and cfg.stop.enabled
            and check_stop(cur.validation_history, cfg.stop)
        ):
            cur.filtering_active = False
        report.log(epoch, "filtering_active", float(cur.filtering_active))

    report.counters = counters
    report.final_retained_ids = list(cur.retained_ids)

    if out is not None:
        ck = out / "checkpoints"
        ck.mkdir(exist_ok=True)
        save_params(ck / "key.ecpm", state.key_encoder)
        save_params(ck / "query.ecpm", state.query_encoder)
        write_store(ck / "mlm_head.ecst", np.vstack([state.mlm.w, state.mlm.b[None, :]]))
        write_store(ck / "token_lift.ecst", state.mlm.lift)
        report.checkpoints = {
            "key": str(ck / "key.ecpm"),
            "query": str(ck / "query.ecpm"),
            "mlm_head": str(ck / "mlm_head.ecst"),
            "token_lift": str(ck / "token_lift.ecst"),
        }
        write_metrics_csv(out / "metrics.csv", report.run_id, report.rows)
        with open(out / "timing.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["run_id", "epoch", "metric", "value"])
            for epoch, metric, value in report.timing_rows:
                w.writerow([report.run_id, epoch, metric, repr(value)])
    return report


def cmd_gen_data(cfg: RunConfig, out_dir: str | Path) -> dict[str, str]:
    """Write the dataset manifest and raw-vector stores."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = generate_dataset(cfg.data)
    write_manifest(out / "manifest.jsonl", ds)
    write_store(out / "x_a.ecst", ds.x_a)
    write_store(out / "x_b.ecst", ds.x_b)
    save_config(out / "config.json", cfg)
    return {
        "manifest": str(out / "manifest.jsonl"),
        "x_a": str(out / "x_a.ecst"),
        "x_b": str(out / "x_b.ecst"),
    }


def cmd_distill(cfg: RunConfig, out_dir: str | Path) -> float:
    """Teacher pretraining plus distillation; writes checkpoints and the curve."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.json", cfg)
    teacher = train_teacher(cfg)
    student, held, curve = distill_student(cfg, teacher)
    save_params(out / "teacher_key.ecpm", teacher.key_encoder)
    save_params(out / "teacher_text.ecpm", teacher.text_encoder)
    save_params(out / "student.ecpm", student)
    with open(out / "distill_curve.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss"])
        for i, loss in enumerate(curve):
            w.writerow([i, repr(loss)])
    with open(out / "distill_summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        w.writerow(["held_out_mse", repr(held)])
        w.writerow(["target_mse", repr(cfg.distill.target_mse)])
    return held


def cmd_eval(
    checkpoint_dir: str | Path,
    cfg: RunConfig,
    out_dir: str | Path,
    data_dir: str | Path | None = None,
) -> dict[str, float]:
    """Evaluate a saved encoder pair; writes one metrics CSV."""
    from .encoder import load_params

    ck = Path(checkpoint_dir)
    key_enc = load_params(ck / "key.ecpm")
    query_enc = load_params(ck / "query.ecpm")
    state = EncoderPairState(key_encoder=key_enc, query_encoder=query_enc)

    if data_dir is not None:
        ds = load_dataset_dir(data_dir, cfg.data)
    else:
        ds = generate_dataset(cfg.data)
    _, val = split_validation(ds, cfg.n_val, cfg.seed) if cfg.n_val else (ds, ds)
    metrics = validation_metrics(state, val)
    comp = noise_composition([int(i) for i in val.ids], {int(i): Label(int(l)) for i, l in zip(val.ids, val.labels)})
    for tag, v in comp.items():
        metrics[f"frac_{tag}"] = v
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "eval.csv", cfg.run_id(), [(0, k, v) for k, v in sorted(metrics.items())])
    return metrics


def load_dataset_dir(data_dir: str | Path, cfg: GenConfig) -> Dataset:
    """Rebuild a Dataset from a gen-data output directory."""
    from .data import read_manifest

    d = Path(data_dir)
    ids, labels, tokens = read_manifest(d / "manifest.jsonl")
    with open_store(d / "x_a.ecst") as sa:
        x_a = np.vstack([sa.read_at(i) for i in range(len(sa))]) if len(sa) else np.empty((0, cfg.d_a))
    with open_store(d / "x_b.ecst") as sb:
        x_b = np.vstack([sb.read_at(i) for i in range(len(sb))]) if len(sb) else np.empty((0, cfg.d_b))
    return Dataset(ids=ids, labels=labels, x_a=x_a, x_b=x_b, tokens=tokens, config=cfg, split="full")


SWEEP_AXES = {
    "lambda": ("train", "keep_fraction", float),
    "queue": ("train", "queue_capacity", int),
    "text_batch": ("train", "batch_text", int),
}

DEFAULT_GRIDS = {
    "lambda": [0.7, 0.8, 0.9, 0.99],
    "queue": [8, 64, 512, 4096],
    "text_batch": [30, 40, 50, 60],
}


def cmd_sweep(
    cfg: RunConfig,
    axis: str,
    values: list | None,
    seeds: list[int],
    out_dir: str | Path,
) -> list[dict]:
    """Run the pipeline per (value, seed) and emit a comparison CSV."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r} (choose from {sorted(SWEEP_AXES)})")
    section, fieldname, cast = SWEEP_AXES[axis]
    values = [cast(v) for v in (values if values else DEFAULT_GRIDS[axis])]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    results = []
    for value in values:
        for seed in seeds:
            variant = cfg.with_seed(seed)
            setattr(getattr(variant, section), fieldname, value)
            sub = out / f"{axis}_{value}_seed{seed}"
            report = pretrain(variant, out_dir=sub)
            last_epoch = max(e for e, _, _ in report.rows)
            row = {
                "axis": axis,
                "value": value,
                "seed": seed,
                "val_f1": report.metric(last_epoch, "val_f1"),
                "val_r1_b2a": report.metric(last_epoch, "val_r1_b2a"),
                "frac_noisy": report.metric(last_epoch, "frac_noisy"),
                "retained_count": report.metric(last_epoch, "retained_count"),
                "total_steps": report.total_steps,
            }
            if axis == "queue":
                row["step_time_s"] = benchmark_step_time(cfg, int(value))
            results.append(row)

    with open(out / f"sweep_{axis}.csv", "w", newline="") as f:
        names = list(results[0].keys())
        w = csv.DictWriter(f, fieldnames=names)
        w.writeheader()
        for row in results:
            w.writerow(row)
    return results


def benchmark_step_time(
    cfg: RunConfig, queue_capacity: int, steps: int = 60, reps: int = 5
) -> float:
    """Seconds per training step against a full queue of the given size.

    Runs ``reps`` timed blocks of ``steps`` identical steps and returns
    the per-step mean of the fastest block (minimum damps scheduler
    noise).
    """
    rng = substream(cfg.seed, "bench")
    d_e = cfg.encoder.embed_dim
    key_enc = init_params(stage_seed(cfg.seed, "key_init"), cfg.data.d_a, cfg.encoder.hidden, d_e)
    query_enc = init_params(stage_seed(cfg.seed, "text_init"), cfg.data.d_b, cfg.encoder.hidden, d_e)
    n = cfg.train.batch_pairs
    batch = PairBatch(
        ids=np.arange(n, dtype=np.int64),
        x_a=rng.standard_normal((n, cfg.data.d_a)),
        x_b=rng.standard_normal((n, cfg.data.d_b)),
    )
    fill = rng.standard_normal((queue_capacity, d_e))
    fill /= np.linalg.norm(fill, axis=1, keepdims=True)

    best = float("inf")
    for _ in range(reps):
        state = EncoderPairState(key_encoder=key_enc, query_encoder=clone_params(query_enc))
        queue = MemoryQueue(queue_capacity, d_e)
        queue.push(fill, np.arange(10**6, 10**6 + queue_capacity))
        t0 = time.perf_counter()
        for _ in range(steps):
            state, queue, _ = training_step(
                state, queue, batch, cfg.train.tau, cfg.train.base_lr, cfg.train.weight_decay
            )
        best = min(best, (time.perf_counter() - t0) / steps)
    return best
