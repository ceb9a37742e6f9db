"""Training loop, evaluation, checkpoints, logs, and diagnostics.

Everything a run emits is deterministic for a fixed seed and platform:
the training log, checkpoints, diagnostics, and metric reports. Wall
times go to a separate timing sidecar so the canonical outputs stay
bit-comparable across runs.

Run directory layout:

    config.txt                 canonical config echo
    train_log.txt              one `key=value ...` record per step
    timing.txt                 wall-clock sidecar (not deterministic)
    diagnostics.txt            per-epoch, per-stage dictionary distances
    diag_e{epoch}_s{stage}.dstn  stacked dictionaries (steps, B, N, C')
    checkpoints/last/, checkpoints/best/   one .dstn per parameter + config
    metrics_val.txt / .kv      final validation report
"""

from __future__ import annotations

import os
import time

import numpy as np

from .config import RunConfig, save_config
from .dictionary import dictionary_distance_stats
from .errors import DataError, NumericalError
from .losses import total_loss
from .metrics import ConfusionMatrix, MetricReport, accumulate, iou_f1
from .model import Model
from .optim import AdamW, clip_grad_norm, cosine_lr
from .pnm import colorize, default_palette, read_pgm, read_ppm, write_ppm
from .rng import Rng
from .synthetic import make_sample
from .tensor import Tensor, no_grad
from .tensorio import load_tensor, save_tensor
from .gradcheck import check_gradients


def _fmt(value: float) -> str:
    return f"{value:.17g}"


class SegmentationDataset:
    """All samples of one split, loaded eagerly (desk scale)."""

    def __init__(self, root: str, split: str):
        self.directory = os.path.join(root, split)
        if not os.path.isdir(self.directory):
            raise DataError(f"split directory missing: {self.directory}")
        stems = sorted(
            name[:-4]
            for name in os.listdir(self.directory)
            if name.endswith(".ppm")
        )
        if not stems:
            raise DataError(f"split {split!r} at {self.directory} is empty")
        self.images: list[np.ndarray] = []
        self.labels: list[np.ndarray] = []
        for stem in stems:
            ppm = os.path.join(self.directory, stem + ".ppm")
            pgm = os.path.join(self.directory, stem + ".pgm")
            if not os.path.exists(pgm):
                raise DataError(f"missing label map for {ppm}")
            self.images.append(read_ppm(ppm).data)
            self.labels.append(read_pgm(pgm))
        self.stems = stems

    def __len__(self) -> int:
        return len(self.images)

    def batch(self, indices) -> tuple[Tensor, np.ndarray]:
        images = Tensor(np.stack([self.images[i] for i in indices]))
        labels = np.stack([self.labels[i] for i in indices])
        return images, labels


def batch_indices(n: int, batch_size: int, rng: Rng, epoch: int) -> list[list[int]]:
    """Shuffled, drop-last batches for one epoch."""
    order = rng.derive(f"order.epoch{epoch}").permutation(n)
    full = n // batch_size
    return [
        [int(i) for i in order[b * batch_size : (b + 1) * batch_size]]
        for b in range(full)
    ]


def save_checkpoint(directory: str, model: Model, config: RunConfig) -> None:
    os.makedirs(directory, exist_ok=True)
    for name, param in model.params.items():
        save_tensor(os.path.join(directory, name + ".dstn"), param)
    save_config(config, os.path.join(directory, "config.txt"))


def load_checkpoint(directory: str, model: Model) -> None:
    for name, param in model.params.items():
        path = os.path.join(directory, name + ".dstn")
        if not os.path.exists(path):
            raise DataError(f"checkpoint misses parameter file {path}")
        values = load_tensor(path)
        if values.shape != param.shape:
            raise DataError(
                f"checkpoint {name} has shape {values.shape}, expected {param.shape}"
            )
        param.data[...] = values


def evaluate(
    model: Model,
    dataset: SegmentationDataset,
    config: RunConfig,
    dump_dir: str | None = None,
) -> MetricReport:
    """Dynamic-branch metrics over a split; never touches the static path."""
    static_calls_before = model.static_decode_calls
    cm = ConfusionMatrix(config.n_classes)
    palette = default_palette(config.n_classes)
    if dump_dir:
        os.makedirs(dump_dir, exist_ok=True)
    with no_grad():
        for start in range(0, len(dataset), config.batch_size):
            indices = list(range(start, min(start + config.batch_size, len(dataset))))
            images, labels = dataset.batch(indices)
            preds = model.predict(images)
            for row, index in enumerate(indices):
                accumulate(cm, preds[row], labels[row], config.ignore_label)
                if dump_dir:
                    write_ppm(
                        os.path.join(dump_dir, dataset.stems[index] + ".ppm"),
                        colorize(preds[row], palette, config.ignore_label),
                    )
    if model.static_decode_calls != static_calls_before:
        raise RuntimeError("static branch ran during evaluation")
    return iou_f1(cm)


def _stage_stats(traces) -> list:
    """Per-stage distance stats of a batch; stage count from the trace."""
    n_stages = len(traces[0].dictionaries)
    stats = []
    for stage_i in range(n_stages):
        stacked = np.stack([t.dictionaries[stage_i].data for t in traces])
        stats.append(dictionary_distance_stats(stacked))
    return stats


def _write_nan_dump(out_dir: str, step: int, breakdown) -> str:
    path = os.path.join(out_dir, "nan_dump.txt")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"step={step}\n")
        for name, value in breakdown.scalars().items():
            handle.write(f"{name}={_fmt(value)}\n")
    return path


def train(config: RunConfig, data_root: str | None = None, out_dir: str | None = None) -> dict:
    """Full training run; returns a summary of what was written where."""
    data_root = data_root or config.data_root
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    save_config(config, os.path.join(out_dir, "config.txt"))

    train_set = SegmentationDataset(data_root, "train")
    val_set = SegmentationDataset(data_root, "val")

    rng = Rng(config.seed)
    model = Model(config, rng)
    first_batch = next(iter(batch_indices(len(train_set), config.batch_size, rng, 0)))
    calib_images, calib_labels = train_set.batch(first_batch)
    model.calibrate(calib_images, calib_labels)
    optimizer = AdamW(
        model.parameters,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_epsilon,
        weight_decay=config.weight_decay,
    )
    weights = config.loss_weights()

    steps_per_epoch = len(train_set) // config.batch_size
    if steps_per_epoch == 0:
        raise DataError(
            f"train split has {len(train_set)} samples, "
            f"fewer than one batch of {config.batch_size}"
        )
    total_steps = steps_per_epoch * config.epochs
    if config.max_steps:
        total_steps = min(total_steps, config.max_steps)

    log_path = os.path.join(out_dir, "train_log.txt")
    timing_path = os.path.join(out_dir, "timing.txt")
    diag_path = os.path.join(out_dir, "diagnostics.txt")
    best_miou = -1.0
    step = 0
    summary: dict = {"out_dir": out_dir, "total_steps": total_steps}

    with open(log_path, "w", encoding="utf-8") as log, open(
        timing_path, "w", encoding="utf-8"
    ) as timing, open(diag_path, "w", encoding="utf-8") as diag:
        for epoch in range(config.epochs):
            if step >= total_steps:
                break
            epoch_stage_dicts: list[list[np.ndarray]] = []
            for indices in batch_indices(
                len(train_set), config.batch_size, rng, epoch
            ):
                if step >= total_steps:
                    break
                started = time.perf_counter()
                lr = cosine_lr(step, total_steps, config.lr)
                images, labels = train_set.batch(indices)
                result = model.forward(images, with_static=True)
                breakdown = total_loss(
                    result.static_logits,
                    result.dynamic_logits,
                    result.d_batch,
                    labels,
                    weights,
                )
                total = breakdown.total
                if not np.isfinite(total.data):
                    dump = _write_nan_dump(out_dir, step, breakdown)
                    raise NumericalError(
                        f"non-finite loss at step {step}; dump written to {dump}"
                    )
                model.zero_grad()
                total.backward()
                grad_norm = clip_grad_norm(model.parameters, config.clip_norm)
                optimizer.step(lr)

                stage_stats = _stage_stats(result.traces)
                epoch_stage_dicts.append(
                    [
                        np.stack([t.dictionaries[i].data for t in result.traces])
                        for i in range(len(result.traces[0].dictionaries))
                    ]
                )
                record = [
                    f"step={step}",
                    f"epoch={epoch}",
                    f"lr={_fmt(lr)}",
                    f"grad_norm={_fmt(grad_norm)}",
                ]
                record += [
                    f"{name}={_fmt(value)}"
                    for name, value in breakdown.scalars().items()
                ]
                record += [
                    f"intra_s{i}={_fmt(s.intra)} inter_s{i}={_fmt(s.inter)}"
                    for i, s in enumerate(stage_stats)
                ]
                log.write(" ".join(record) + "\n")
                timing.write(
                    f"step={step} wall_ms={(time.perf_counter() - started) * 1e3:.3f}\n"
                )
                total.free_graph()
                step += 1

            # Epoch diagnostics: stack the per-step dictionaries per stage
            # (steps, B, N, C'), snapshot them, and log the epoch series as
            # the mean over steps of the per-step distance stats.
            if epoch_stage_dicts:
                n_stages = len(epoch_stage_dicts[0])
                for stage_i in range(n_stages):
                    stacked = np.stack([d[stage_i] for d in epoch_stage_dicts])
                    save_tensor(
                        os.path.join(out_dir, f"diag_e{epoch:03d}_s{stage_i}.dstn"),
                        stacked,
                    )
                    per_step = [
                        dictionary_distance_stats(stacked[t])
                        for t in range(stacked.shape[0])
                    ]
                    intra = float(np.mean([s.intra for s in per_step]))
                    inter = float(np.mean([s.inter for s in per_step]))
                    diag.write(
                        f"epoch={epoch} stage={stage_i} "
                        f"intra={_fmt(intra)} inter={_fmt(inter)}\n"
                    )

            report = evaluate(model, val_set, config)
            with open(
                os.path.join(out_dir, "metrics_val.txt"), "w", encoding="utf-8"
            ) as handle:
                handle.write(report.render_table() + "\n")
            with open(
                os.path.join(out_dir, "metrics_val.kv"), "w", encoding="utf-8"
            ) as handle:
                handle.write(report.render_kv() + "\n")
            save_checkpoint(os.path.join(out_dir, "checkpoints", "last"), model, config)
            if report.miou > best_miou:
                best_miou = report.miou
                save_checkpoint(
                    os.path.join(out_dir, "checkpoints", "best"), model, config
                )
            summary[f"epoch{epoch}_val_miou"] = report.miou
            summary["final_val_miou"] = report.miou

    summary["best_val_miou"] = best_miou
    summary["steps_run"] = step
    return summary


def parse_log_line(line: str) -> dict[str, float]:
    out = {}
    for token in line.split():
        key, value = token.split("=", 1)
        out[key] = float(value)
    return out


def end_to_end_gradcheck(
    config: RunConfig,
    batch_size: int = 2,
    eps: float = 1e-5,
    max_entries_per_param: int | None = 8,
) -> float:
    """Finite-difference check through encoder, modulator, decoder, losses.

    Builds the model from `config`, synthesizes one in-memory batch, and
    compares analytic gradients of the full training loss for every
    parameter (subsampled entries) against central differences.
    """
    rng = Rng(config.seed)
    model = Model(config, rng)
    weights = config.loss_weights()
    synth = config.synthetic_config()
    samples = [make_sample(synth, "train", i) for i in range(batch_size)]
    images = Tensor(np.stack([s[0] for s in samples]))
    labels = np.stack([s[1] for s in samples])
    model.calibrate(images, labels)

    def loss_fn() -> Tensor:
        result = model.forward(images, with_static=True)
        return total_loss(
            result.static_logits,
            result.dynamic_logits,
            result.d_batch,
            labels,
            weights,
        ).total

    return check_gradients(
        loss_fn,
        model.parameters,
        eps=eps,
        max_entries_per_param=max_entries_per_param,
        rng=rng.derive("gradcheck"),
    )
