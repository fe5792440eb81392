"""Teacher-forced training loops: one subtask at a time or all six mixed.

A training example pairs a constraint input with its target layout sequence.
The loss is the mean negative log-likelihood of each target token given the
preceding target tokens and the input. Multi-task training draws each batch
element's task from a weighted mixing plan and relies on task prefix tokens
to disambiguate the input.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .model import ModelConfig, TransformerModel
from .vocab import TASK_ORDER, Task, TokenSequence, Vocabulary


class TrainingDiverged(RuntimeError):
    """The loss became non-finite."""


@dataclass(frozen=True)
class TrainingExample:
    """One (input, target) pair; the target always parses as a layout sequence."""

    input: TokenSequence
    target: TokenSequence
    task: Task


@dataclass(frozen=True)
class MixingPlan:
    """Per-task sampling weights for multi-task batches; normalized to sum 1."""

    weights: tuple[float, ...]

    def __init__(self, weights: Mapping[Task, float]):
        values = [float(weights.get(task, 0.0)) for task in TASK_ORDER]
        if any(v <= 0 for v in values):
            missing = [t.value for t, v in zip(TASK_ORDER, values) if v <= 0]
            raise ValueError(f"every task needs a positive weight; bad: {missing}")
        total = sum(values)
        object.__setattr__(self, "weights", tuple(v / total for v in values))

    @classmethod
    def default(cls) -> "MixingPlan":
        # Gen-TS and Refinement are upweighted to 1/3 each, the rest get 1/12.
        return cls(
            {
                Task.UGEN: 1 / 12,
                Task.GEN_T: 1 / 12,
                Task.GEN_TS: 1 / 3,
                Task.GEN_R: 1 / 12,
                Task.REFINEMENT: 1 / 3,
                Task.COMPLETION: 1 / 12,
            }
        )

    @classmethod
    def uniform(cls) -> "MixingPlan":
        return cls({task: 1.0 for task in TASK_ORDER})

    def weight(self, task: Task) -> float:
        return self.weights[TASK_ORDER.index(task)]

    def as_dict(self) -> dict[str, float]:
        return {task.value: w for task, w in zip(TASK_ORDER, self.weights)}

    def sample_tasks(self, rng: np.random.Generator, n: int) -> list[Task]:
        draws = rng.choice(len(TASK_ORDER), size=n, p=np.asarray(self.weights))
        return [TASK_ORDER[int(i)] for i in draws]


@dataclass
class TrainSchedule:
    """How long and how hard to train. ``max_steps`` caps the epoch loop and
    ``target_loss`` stops early once the running mean NLL drops below it."""

    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-4
    warmup_steps: int = 1000
    max_steps: int | None = None
    target_loss: float | None = None
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int | None = None
    out_dir: Path | None = None


@dataclass
class LossPoint:
    step: int
    task: str
    loss: float


def _pad_batch(seqs: Sequence[tuple[int, ...]], pad: int) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def make_batch(
    examples: Sequence[TrainingExample], vocab: Vocabulary
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Teacher-forcing arrays: encoder input, decoder input, and labels.

    The decoder consumes target[:-1] and the labels are target[1:], padded
    with PAD which the loss ignores.
    """
    inputs = _pad_batch([e.input.ids for e in examples], vocab.PAD)
    dec = _pad_batch([e.target.ids[:-1] for e in examples], vocab.PAD)
    labels = _pad_batch([e.target.ids[1:] for e in examples], vocab.PAD)
    return inputs, dec, labels


def save_loss_curve(path: Path, curve: Iterable[LossPoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "task", "loss"])
        for point in curve:
            writer.writerow([point.step, point.task, f"{point.loss:.10f}"])


def _checkpoint(model: TransformerModel, vocab: Vocabulary, out_dir: Path, extra: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    T.save_checkpoint(out_dir / "model.bin", model.params)
    sidecar = {
        "model": model.config.to_dict(),
        "vocab": {
            "categories": list(vocab.categories.names),
            "background": sorted(vocab.categories.background_labels),
            "bins": vocab.bins,
            "max_elements": vocab.max_elements,
        },
        **extra,
    }
    (out_dir / "model.json").write_text(json.dumps(sidecar, indent=2))


def load_checkpoint_dir(path: Path) -> tuple[TransformerModel, Vocabulary, dict]:
    """Rebuild a model and its vocabulary from a checkpoint directory."""
    from .core import CategorySet

    path = Path(path)
    sidecar = json.loads((path / "model.json").read_text())
    config = ModelConfig.from_dict(sidecar["model"])
    vocab_info = sidecar["vocab"]
    vocab = Vocabulary(
        CategorySet(vocab_info["categories"], vocab_info.get("background", ())),
        bins=vocab_info["bins"],
        max_elements=vocab_info["max_elements"],
    )
    model = TransformerModel(config, vocab.size, pad_id=vocab.PAD)
    model.load_arrays(T.load_checkpoint(path / "model.bin"))
    meta = {k: v for k, v in sidecar.items() if k not in ("model", "vocab")}
    return model, vocab, meta


def _run_steps(
    model: TransformerModel,
    vocab: Vocabulary,
    schedule: TrainSchedule,
    batches: Iterable[list[TrainingExample]],
    *,
    multi_task: bool,
) -> list[LossPoint]:
    optimizer = T.Adam(
        model.params, lr=schedule.lr, warmup_steps=schedule.warmup_steps
    )
    rng = np.random.default_rng(np.random.SeedSequence([schedule.seed, 0xD407]))
    curve: list[LossPoint] = []
    step = 0
    recent: list[float] = []
    for batch in batches:
        step += 1
        inputs, dec, labels = make_batch(batch, vocab)
        logits = model.forward(inputs, dec, training=True, rng=rng)
        loss = T.cross_entropy(logits, labels, ignore_index=vocab.PAD)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(
                f"loss became {value} at step {step} (lr={schedule.lr}, "
                f"batch={len(batch)}); try a lower learning rate"
            )
        T.backward(loss)
        optimizer.step()
        curve.append(LossPoint(step, "all", value))
        if multi_task:
            curve.extend(_per_task_losses(step, batch, logits.data, labels, vocab))
        if schedule.checkpoint_every and schedule.out_dir and step % schedule.checkpoint_every == 0:
            _checkpoint(model, vocab, schedule.out_dir, {"step": step, "multi_task": multi_task})
        recent.append(value)
        if len(recent) > 10:
            recent.pop(0)
        if schedule.target_loss is not None and sum(recent) / len(recent) < schedule.target_loss:
            break
        if schedule.max_steps is not None and step >= schedule.max_steps:
            break
    if schedule.out_dir:
        _checkpoint(model, vocab, schedule.out_dir, {"step": step, "multi_task": multi_task})
        save_loss_curve(schedule.out_dir / "loss.csv", curve)
    return curve


def _per_task_losses(step, batch, logits, labels, vocab) -> list[LossPoint]:
    """Mean NLL per task within one mixed batch, straight from the logits."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    points = []
    tasks = np.array([e.task.value for e in batch])
    for task in sorted(set(tasks)):
        rows = np.flatnonzero(tasks == task)
        total, count = 0.0, 0
        for r in rows:
            valid = labels[r] != vocab.PAD
            total -= log_probs[r, np.arange(labels.shape[1]), labels[r]][valid].sum()
            count += int(valid.sum())
        if count:
            points.append(LossPoint(step, task, total / count))
    return points


def _epoch_batches(
    examples: Sequence[TrainingExample], schedule: TrainSchedule
) -> Iterable[list[TrainingExample]]:
    rng = np.random.default_rng(np.random.SeedSequence([schedule.seed, 0xBA7C]))
    for _ in range(schedule.epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(examples), schedule.batch_size):
            yield [examples[int(i)] for i in order[start : start + schedule.batch_size]]


def train_single(
    model: TransformerModel,
    examples: Sequence[TrainingExample],
    schedule: TrainSchedule,
    vocab: Vocabulary,
) -> list[LossPoint]:
    """Minimize teacher-forced NLL on one subtask's examples. Mutates the model
    in place and returns the per-step loss curve."""
    if not examples:
        raise ValueError("training requires a non-empty dataset")
    return _run_steps(
        model, vocab, schedule, _epoch_batches(examples, schedule), multi_task=False
    )


def train_multi(
    model: TransformerModel,
    datasets: Mapping[Task, Sequence[TrainingExample]],
    plan: MixingPlan,
    schedule: TrainSchedule,
    vocab: Vocabulary,
) -> list[LossPoint]:
    """Train one model on all six subtasks with weighted task sampling.

    Every batch element draws its task from the plan and then an example from
    that task's dataset with replacement; an epoch is sized by the largest
    dataset. Inputs must carry task prefixes.
    """
    missing = [t.value for t in TASK_ORDER if not datasets.get(t)]
    if missing:
        raise ValueError(f"multi-task training needs data for every task; missing {missing}")
    rng = np.random.default_rng(np.random.SeedSequence([schedule.seed, 0x417]))
    largest = max(len(d) for d in datasets.values())
    steps_per_epoch = max(1, math.ceil(largest / schedule.batch_size))

    def batches() -> Iterable[list[TrainingExample]]:
        for _ in range(schedule.epochs):
            for _ in range(steps_per_epoch):
                tasks = plan.sample_tasks(rng, schedule.batch_size)
                yield [
                    datasets[task][int(rng.integers(len(datasets[task])))] for task in tasks
                ]

    return _run_steps(model, vocab, schedule, batches(), multi_task=True)
