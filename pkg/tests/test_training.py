from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from unilayout.data import ExampleOptions, build_examples, synthesize
from unilayout.model import ModelConfig, TransformerModel
from unilayout.training import (
    LossPoint,
    MixingPlan,
    TrainingDiverged,
    TrainSchedule,
    make_batch,
    save_loss_curve,
    train_multi,
    train_single,
)
from unilayout.vocab import TASK_ORDER, Task

FAST = ModelConfig(layers=1, heads=2, d_model=32, d_ff=64, dropout=0.0)


@pytest.fixture(scope="module")
def tiny_examples(vocab):
    layouts = synthesize(8, vocab.categories, style="freeform", seed=3)
    return build_examples(layouts, Task.UGEN, vocab, ExampleOptions(seed=0))


class TestMixingPlan:
    def test_default_matches_published_weights(self):
        plan = MixingPlan.default()
        expected = [1 / 12, 1 / 12, 1 / 3, 1 / 12, 1 / 3, 1 / 12]
        np.testing.assert_allclose(plan.weights, expected, atol=1e-15)
        assert abs(sum(plan.weights) - 1.0) <= 1e-12

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            MixingPlan({t: (0.0 if t is Task.UGEN else 1.0) for t in TASK_ORDER})

    def test_sampling_frequencies_match_weights(self):
        plan = MixingPlan.default()
        rng = np.random.default_rng(0)
        draws = plan.sample_tasks(rng, 100_000)
        counts = {t: 0 for t in TASK_ORDER}
        for t in draws:
            counts[t] += 1
        for task, weight in zip(TASK_ORDER, plan.weights):
            assert abs(counts[task] / 100_000 - weight) < 0.02

    def test_uniform_frequencies(self):
        plan = MixingPlan.uniform()
        rng = np.random.default_rng(1)
        draws = plan.sample_tasks(rng, 60_000)
        for task in TASK_ORDER:
            share = sum(1 for t in draws if t is task) / 60_000
            assert abs(share - 1 / 6) < 0.02


class TestBatching:
    def test_make_batch_shapes_and_shift(self, vocab, tiny_examples):
        inputs, dec, labels = make_batch(tiny_examples[:4], vocab)
        assert inputs.shape[0] == dec.shape[0] == labels.shape[0] == 4
        example = tiny_examples[0]
        width = dec.shape[1]
        assert list(dec[0, : len(example.target) - 1]) == list(example.target.ids[:-1])
        assert list(labels[0, : len(example.target) - 1]) == list(example.target.ids[1:])
        assert all(dec[0, len(example.target) - 1 :] == vocab.PAD)
        assert width == max(len(e.target) for e in tiny_examples[:4]) - 1


class TestTrainSingle:
    def test_initial_loss_near_log_vocab(self, vocab, tiny_examples):
        model = TransformerModel(FAST, vocab.size, seed=1)
        schedule = TrainSchedule(epochs=1, batch_size=8, lr=1e-3, warmup_steps=10, max_steps=1)
        curve = train_single(model, tiny_examples, schedule, vocab)
        assert abs(curve[0].loss - np.log(vocab.size)) < 0.1 * np.log(vocab.size)

    def test_identical_seeds_identical_curves(self, vocab, tiny_examples):
        def run():
            model = TransformerModel(FAST, vocab.size, seed=2)
            schedule = TrainSchedule(epochs=2, batch_size=4, lr=1e-3, warmup_steps=5, seed=7)
            return [p.loss for p in train_single(model, tiny_examples, schedule, vocab)]

        assert run() == run()

    def test_loss_decreases(self, vocab, tiny_examples):
        model = TransformerModel(FAST, vocab.size, seed=3)
        schedule = TrainSchedule(epochs=75, batch_size=8, lr=2e-3, warmup_steps=20, max_steps=150, seed=1)
        curve = train_single(model, tiny_examples, schedule, vocab)
        assert np.mean([p.loss for p in curve[-5:]]) < 0.5 * curve[0].loss

    def test_divergence_aborts_with_diagnostic(self, vocab, tiny_examples):
        model = TransformerModel(FAST, vocab.size, seed=4)
        model.params["out.w"].data[:] = np.inf
        schedule = TrainSchedule(epochs=1, batch_size=4, max_steps=2)
        with pytest.raises(TrainingDiverged, match="step 1"):
            train_single(model, tiny_examples, schedule, vocab)

    def test_empty_dataset_rejected(self, vocab):
        model = TransformerModel(FAST, vocab.size, seed=5)
        with pytest.raises(ValueError):
            train_single(model, [], TrainSchedule(), vocab)

    def test_checkpoint_written(self, vocab, tiny_examples, tmp_path):
        model = TransformerModel(FAST, vocab.size, seed=6)
        schedule = TrainSchedule(
            epochs=1, batch_size=8, max_steps=2, out_dir=tmp_path / "run"
        )
        curve = train_single(model, tiny_examples, schedule, vocab)
        assert (tmp_path / "run" / "model.bin").exists()
        assert (tmp_path / "run" / "model.json").exists()
        assert (tmp_path / "run" / "loss.csv").exists()
        text = (tmp_path / "run" / "loss.csv").read_text().splitlines()
        assert text[0] == "step,task,loss"
        assert len(text) == len(curve) + 1


@pytest.fixture(scope="module")
def datasets(vocab):
    layouts = synthesize(6, vocab.categories, style="freeform", seed=9)
    options = ExampleOptions(seed=2, with_prefix=True)
    return {task: build_examples(layouts, task, vocab, options) for task in TASK_ORDER}


class TestTrainMulti:
    def test_requires_all_tasks(self, vocab, datasets):
        model = TransformerModel(FAST, vocab.size, seed=7)
        partial = dict(datasets)
        partial.pop(Task.GEN_R)
        with pytest.raises(ValueError, match="gen-r"):
            train_multi(model, partial, MixingPlan.default(), TrainSchedule(), vocab)

    def test_runs_and_records_per_task_losses(self, vocab, datasets):
        model = TransformerModel(FAST, vocab.size, seed=8)
        schedule = TrainSchedule(epochs=1, batch_size=12, lr=1e-3, warmup_steps=5, max_steps=6, seed=3)
        curve = train_multi(model, datasets, MixingPlan.default(), schedule, vocab)
        tasks_seen = {p.task for p in curve}
        assert "all" in tasks_seen
        assert len(tasks_seen) > 2  # several subtask curves present

    def test_inputs_carry_prefixes(self, vocab, datasets):
        for task, examples in datasets.items():
            assert all(vocab.is_prefix(e.input.ids[0]) for e in examples)
            assert all(e.input.ids[1] == vocab.SOS for e in examples)


class TestTeacherForcing:
    def test_training_path_never_samples(self):
        # structural check: the training module must not touch the sampler
        import unilayout.training as training_module

        imported_from_sampler = [
            name
            for name, value in vars(training_module).items()
            if getattr(value, "__module__", None) == "unilayout.sampling"
        ]
        assert imported_from_sampler == []
        source = Path(training_module.__file__).read_text()
        assert "from .sampling" not in source
        assert "import sampling" not in source


class TestLossCurveCsv:
    def test_round_trippable_format(self, tmp_path):
        path = tmp_path / "loss.csv"
        save_loss_curve(path, [LossPoint(1, "all", 3.25), LossPoint(2, "ugen", 1.5)])
        lines = path.read_text().splitlines()
        assert lines[0] == "step,task,loss"
        assert lines[1].startswith("1,all,3.25")
