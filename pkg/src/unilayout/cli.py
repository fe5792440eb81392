"""Command-line entry point: datasets, training, evaluation, generation, serving.

Configuration is a JSON file of flat dotted keys (``{"model.layers": 2}``)
plus flag overrides; flags win. Every run logs its fully resolved
configuration so results are reproducible from the log alone. Exit codes:
0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .core import CategorySet, InvalidInputError
from .data import (
    DatasetManifest,
    ExampleOptions,
    build_examples,
    ingest,
    save_jsonl,
    split,
    synthesize,
)
from .metrics import MetricReport, alignment, fid, miou, overlap, train_feature_net, violation_rate
from .model import ModelConfig, TransformerModel, coord_embedding_similarity
from .sampling import SamplerConfig, generate, refine
from .training import (
    MixingPlan,
    TrainSchedule,
    load_checkpoint_dir,
    train_multi,
    train_single,
)
from .vocab import TASK_ORDER, ConstraintSpec, Task, Vocabulary, decode_input

log = logging.getLogger("unilayout")


class ConfigError(ValueError):
    """Bad configuration file or flag values."""


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": "runs/latest",
    "model.layers": 2,
    "model.heads": 4,
    "model.d_model": 64,
    "model.d_ff": 256,
    "model.max_input_len": 256,
    "model.max_output_len": 128,
    "model.arch": "encdec",
    "model.order": "alphabetic",
    "model.dropout": 0.1,
    "sampler.strategy": "top_k",
    "sampler.k": 10,
    "sampler.temperature": 0.5,
    "sampler.max_steps": 121,
    "sampler.use_fsm": True,
    "schedule.epochs": 100,
    "schedule.batch_size": 32,
    "schedule.warmup_steps": 1000,
    "schedule.lr": 1e-4,
    "schedule.max_steps": None,
    "schedule.checkpoint_every": None,
    "data.path": None,
    "data.n_max": 20,
    "data.bins": 128,
    "data.sample_rate": 0.10,
    "data.noise_std": 0.01,
    "data.completion_prefix": 1,
    "mixing.ugen": 1 / 12,
    "mixing.gen-t": 1 / 12,
    "mixing.gen-ts": 1 / 3,
    "mixing.gen-r": 1 / 12,
    "mixing.refinement": 1 / 3,
    "mixing.completion": 1 / 12,
    "service.port": 8080,
    "eval.n_specs": 50,
}

# Desk-scale schedule applied when the manifest marks the data synthetic and
# the user did not pin these keys explicitly.
SYNTHETIC_SCHEDULE = {"schedule.epochs": 20, "schedule.warmup_steps": 100}


@dataclass
class RunConfig:
    values: dict[str, Any]
    explicit: set[str]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @classmethod
    def resolve(cls, config_path: str | None, overrides: dict[str, Any]) -> "RunConfig":
        values = dict(DEFAULTS)
        explicit: set[str] = set()
        if config_path:
            try:
                loaded = json.loads(Path(config_path).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
            for key, value in loaded.items():
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown configuration key {key!r}")
                values[key] = value
                explicit.add(key)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in DEFAULTS:
                raise ConfigError(f"unknown configuration key {key!r}")
            values[key] = value
            explicit.add(key)
        cfg = cls(values, explicit)
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        v = self.values
        for key, kind in (
            ("model.layers", int),
            ("model.heads", int),
            ("model.d_model", int),
            ("model.d_ff", int),
            ("schedule.epochs", int),
            ("schedule.batch_size", int),
            ("schedule.warmup_steps", int),
            ("sampler.k", int),
            ("data.n_max", int),
            ("data.bins", int),
        ):
            if not isinstance(v[key], int) or isinstance(v[key], bool) or v[key] < 1:
                raise ConfigError(f"{key} must be a positive integer, got {v[key]!r}")
        if v["model.arch"] not in ("encdec", "dec"):
            raise ConfigError(f"model.arch must be 'encdec' or 'dec', got {v['model.arch']!r}")
        if v["model.order"] not in ("alphabetic", "position"):
            raise ConfigError(f"model.order must be 'alphabetic' or 'position'")
        if v["sampler.strategy"] not in ("greedy", "top_k"):
            raise ConfigError(f"sampler.strategy must be 'greedy' or 'top_k'")
        if not 0 < float(v["sampler.temperature"]):
            raise ConfigError("sampler.temperature must be > 0")

    def model_config(self) -> ModelConfig:
        v = self.values
        return ModelConfig(
            layers=v["model.layers"],
            heads=v["model.heads"],
            d_model=v["model.d_model"],
            d_ff=v["model.d_ff"],
            max_input_len=v["model.max_input_len"],
            max_output_len=v["model.max_output_len"],
            architecture=v["model.arch"],
            output_order=v["model.order"],
            dropout=v["model.dropout"],
        )

    def sampler_config(self, task: Task | None = None, seed: int | None = None) -> SamplerConfig:
        v = self.values
        strategy = "greedy" if task is Task.REFINEMENT else v["sampler.strategy"]
        return SamplerConfig(
            strategy=strategy,
            k=v["sampler.k"],
            temperature=v["sampler.temperature"],
            max_steps=v["sampler.max_steps"],
            use_fsm=v["sampler.use_fsm"],
            seed=self.values["seed"] if seed is None else seed,
        )

    def schedule(self, out_dir: Path, synthetic: bool) -> TrainSchedule:
        v = dict(self.values)
        if synthetic:
            for key, value in SYNTHETIC_SCHEDULE.items():
                if key not in self.explicit:
                    v[key] = value
        return TrainSchedule(
            epochs=v["schedule.epochs"],
            batch_size=v["schedule.batch_size"],
            lr=v["schedule.lr"],
            warmup_steps=v["schedule.warmup_steps"],
            max_steps=v["schedule.max_steps"],
            seed=v["seed"],
            checkpoint_every=v["schedule.checkpoint_every"],
            out_dir=out_dir,
        )

    def mixing_plan(self) -> MixingPlan:
        return MixingPlan({t: self.values[f"mixing.{t.value}"] for t in TASK_ORDER})

    def example_options(self, with_prefix: bool) -> ExampleOptions:
        v = self.values
        return ExampleOptions(
            sample_rate=v["data.sample_rate"],
            noise_std=v["data.noise_std"],
            completion_prefix=v["data.completion_prefix"],
            output_order=v["model.order"],
            with_prefix=with_prefix,
            seed=v["seed"],
        )


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_dataset(cfg: RunConfig, path_override: str | None = None):
    path = path_override or cfg["data.path"]
    if not path:
        raise ConfigError("data.path is required (or pass --data)")
    root = Path(path)
    manifest = DatasetManifest.load(root / "manifest.json")
    cats = manifest.category_set()
    result = ingest(root / "data.jsonl", categories=cats, n_max=manifest.n_max, bins=manifest.bins)
    parts = split(result.layouts, manifest.fractions, manifest.seed)
    return manifest, cats, parts


def _task_from_flag(value: str) -> Task:
    try:
        return Task(value)
    except ValueError:
        raise ConfigError(
            f"unknown task {value!r}; expected one of {[t.value for t in TASK_ORDER]}"
        ) from None


def _spec_payload(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read spec file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"spec file is not valid JSON: {exc}") from exc


def cmd_dataset(args, cfg: RunConfig) -> int:
    out = Path(args.out or cfg["out"])
    if args.dataset_cmd == "synth":
        names = args.categories.split(",") if args.categories else ["button", "icon", "image", "text"]
        cats = CategorySet(names, background_labels=args.background.split(",") if args.background else ())
        layouts = synthesize(args.n, cats, style=args.style, seed=cfg["seed"],
                             bins=cfg["data.bins"], n_max=cfg["data.n_max"])
        out.mkdir(parents=True, exist_ok=True)
        save_jsonl(layouts, cats, out / "data.jsonl", bins=cfg["data.bins"])
        parts = split(layouts, seed=cfg["seed"])
        manifest = DatasetManifest(
            name=f"synthetic-{args.style}",
            categories=cats.names,
            background=tuple(sorted(cats.background_labels)),
            bins=cfg["data.bins"],
            n_max=cfg["data.n_max"],
            seed=cfg["seed"],
            counts={"total": len(layouts), "train": len(parts[0]), "val": len(parts[1]), "test": len(parts[2])},
            source="synthesize",
            synthetic=True,
        )
        manifest.save(out / "manifest.json")
        log.info("wrote %d synthetic layouts to %s", len(layouts), out)
        return 0
    if args.dataset_cmd == "ingest":
        result = ingest(Path(args.input), schema=args.schema,
                        n_max=cfg["data.n_max"], bins=cfg["data.bins"])
        out.mkdir(parents=True, exist_ok=True)
        save_jsonl(result.layouts, result.categories, out / "data.jsonl", bins=cfg["data.bins"])
        parts = split(result.layouts, seed=cfg["seed"])
        manifest = DatasetManifest(
            name=Path(args.input).stem,
            categories=result.categories.names,
            bins=cfg["data.bins"],
            n_max=cfg["data.n_max"],
            seed=cfg["seed"],
            counts={
                "total": len(result.layouts),
                "skipped": result.skipped,
                "train": len(parts[0]),
                "val": len(parts[1]),
                "test": len(parts[2]),
            },
            source=str(args.input),
        )
        manifest.save(out / "manifest.json")
        log.info("ingested %d layouts (%d skipped) into %s", len(result.layouts), result.skipped, out)
        return 0
    # stats
    manifest, cats, (train, val, test) = _load_dataset(cfg, args.input)
    histogram: dict[str, int] = {name: 0 for name in cats.names}
    for layout in train + val + test:
        for e in layout.elements:
            histogram[cats.name(e.category)] += 1
    print(json.dumps({
        "name": manifest.name,
        "splits": {"train": len(train), "val": len(val), "test": len(test)},
        "categories": histogram,
        "synthetic": manifest.synthetic,
    }, indent=2))
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    manifest, cats, (train, _val, _test) = _load_dataset(cfg)
    vocab = Vocabulary(cats, bins=manifest.bins, max_elements=manifest.n_max)
    model = TransformerModel(cfg.model_config(), vocab.size, pad_id=vocab.PAD, seed=cfg["seed"])
    out_dir = Path(args.out or cfg["out"])
    schedule = cfg.schedule(out_dir, manifest.synthetic)
    if args.multi:
        options = cfg.example_options(with_prefix=True)
        datasets = {t: build_examples(train, t, vocab, options) for t in TASK_ORDER}
        train_multi(model, datasets, cfg.mixing_plan(), schedule, vocab)
    else:
        task = _task_from_flag(args.task)
        examples = build_examples(train, task, vocab, cfg.example_options(with_prefix=False))
        train_single(model, examples, schedule, vocab)
    sidecar = json.loads((out_dir / "model.json").read_text())
    sidecar["multi_task"] = bool(args.multi)
    sidecar["task"] = None if args.multi else args.task
    (out_dir / "model.json").write_text(json.dumps(sidecar, indent=2))
    log.info("checkpoint written to %s", out_dir)
    return 0


def _eval_specs(task, test, vocab, options) -> list[ConstraintSpec]:
    examples = build_examples(test, task, vocab, options)
    return [decode_input(e.input, vocab) for e in examples]


def _satisfaction(layouts, specs, task: Task, vocab: Vocabulary) -> float | None:
    """Share of samples matching the requested types (and sizes) exactly."""
    if task not in (Task.GEN_T, Task.GEN_TS, Task.REFINEMENT):
        return None
    satisfied = 0
    for layout, spec in zip(layouts, specs):
        if layout is None:
            continue
        canonical = spec.canonical(vocab.categories)
        if task is Task.REFINEMENT:
            want = sorted(e.category for e in canonical.draft.elements)
            got = sorted(e.category for e in layout.elements)
            satisfied += want == got
            continue
        names = tuple(vocab.categories.name(e.category) for e in layout.elements)
        if names != canonical.types:
            continue
        if task is Task.GEN_TS:
            sizes = tuple((e.box.w, e.box.h) for e in layout.elements)
            if sizes != canonical.sizes:
                continue
        satisfied += 1
    return satisfied / len(specs) if specs else None


def _metrics_table(task: Task, reports: dict[str, dict]) -> str:
    def cell(value, width: int, digits: int = 3) -> str:
        text = "-" if value is None else f"{value:.{digits}f}"
        return f"{text:>{width}}"

    header = f"{'mode':<8} {'mIoU':>7} {'Align.':>8} {'Overlap':>8} {'FID':>9} {'violation':>10} {'satisfied':>10}"
    rows = [f"task: {task.value}", header, "-" * len(header)]
    for mode, r in reports.items():
        rows.append(
            f"{mode:<8} {cell(r['miou'], 7)} {cell(r['alignment'], 8, 4)} "
            f"{cell(r['overlap'], 8, 4)} {cell(r['fid'], 9)} "
            f"{cell(r.get('violation_rate'), 10)} {cell(r.get('satisfaction'), 10)}"
        )
    return "\n".join(rows)


def cmd_eval(args, cfg: RunConfig) -> int:
    task = _task_from_flag(args.task)
    model, vocab, meta = load_checkpoint_dir(Path(args.checkpoint or cfg["out"]))
    manifest, cats, (train, _val, test) = _load_dataset(cfg)
    n = min(cfg["eval.n_specs"], len(test))
    options = cfg.example_options(with_prefix=meta.get("multi_task", False))
    specs = _eval_specs(task, test[:n], vocab, options)
    fsm_modes = args.fsm_modes or [True]
    reports: dict[str, dict] = {}
    rng = np.random.default_rng(cfg["seed"])
    for use_fsm in fsm_modes:
        layouts = []
        flags = []
        for i, spec in enumerate(specs):
            sampler = replace(cfg.sampler_config(task, seed=cfg["seed"] + i), use_fsm=use_fsm)
            result = generate(model, spec, sampler, 1, vocab,
                              with_prefix=meta.get("multi_task", False))[0]
            layouts.append(result.layout)
            flags.append(result.flagged)
        parsed = [l for l in layouts if l is not None]
        feature_net = (
            train_feature_net(train, vocab, rng)
            if len(train) >= 200 and len(parsed) > 32 and len(test) > 32
            else None
        )
        report = MetricReport(
            miou=miou(parsed, test, bins=vocab.bins) if parsed else float("nan"),
            alignment=(
                float(np.mean([alignment(l, bins=vocab.bins) for l in parsed]))
                if parsed
                else float("nan")
            ),
            overlap=(
                float(np.mean([overlap(l, cats, bins=vocab.bins) for l in parsed]))
                if parsed
                else float("nan")
            ),
            fid=(
                fid(feature_net.features(parsed), feature_net.features(test))
                if feature_net
                else float("nan")
            ),
            violation_rate=(
                violation_rate(layouts, specs) if task is Task.GEN_R else None
            ),
            n_generated=len(parsed),
            n_references=len(test),
        )
        mode_report = json.loads(report.to_json())
        mode_report["satisfaction"] = _satisfaction(layouts, specs, task, vocab)
        reports["fsm" if use_fsm else "no_fsm"] = mode_report
    payload = json.dumps({"task": task.value, "reports": reports}, indent=2)
    if args.out_file:
        Path(args.out_file).write_text(payload)
    print(_metrics_table(task, reports))
    print(payload)
    return 0


def _layout_to_wire(layout, cats) -> dict:
    return {
        "canvas": {"w": layout.canvas.width, "h": layout.canvas.height},
        "elements": [
            {
                "category": cats.name(e.category),
                "bbox": [e.box.x, e.box.y, e.box.w, e.box.h],
            }
            for e in layout.elements
        ],
    }


def cmd_generate(args, cfg: RunConfig) -> int:
    from .service import parse_spec  # shared wire-format parser

    task = _task_from_flag(args.task)
    model, vocab, meta = load_checkpoint_dir(Path(args.checkpoint or cfg["out"]))
    payload = _spec_payload(args.spec) if args.spec else {}
    spec = parse_spec(task, payload, vocab)
    sampler = cfg.sampler_config(task)
    if args.no_fsm:
        sampler = replace(sampler, use_fsm=False)
    results = generate(model, spec, sampler, args.n, vocab,
                       with_prefix=meta.get("multi_task", False))
    body = {
        "bins": vocab.bins,
        "layouts": [
            _layout_to_wire(r.layout, vocab.categories) if r.layout else None for r in results
        ],
        "flags": [
            {"flagged": r.flagged, "violations": list(r.violations), "error": r.error}
            for r in results
        ],
    }
    text = json.dumps(body, indent=2)
    if args.out_file:
        Path(args.out_file).write_text(text)
    else:
        print(text)
    return 0


def cmd_refine_or_complete(args, cfg: RunConfig, task: Task) -> int:
    from .service import parse_spec

    model, vocab, meta = load_checkpoint_dir(Path(args.checkpoint or cfg["out"]))
    payload = _spec_payload(args.spec)
    spec = parse_spec(task, payload, vocab)
    sampler = cfg.sampler_config(task)
    n = getattr(args, "n", 1)
    results = generate(model, spec, sampler, n, vocab,
                       with_prefix=meta.get("multi_task", False))
    body = {
        "bins": vocab.bins,
        "layouts": [
            _layout_to_wire(r.layout, vocab.categories) if r.layout else None for r in results
        ],
        "flags": [
            {"flagged": r.flagged, "violations": list(r.violations), "error": r.error}
            for r in results
        ],
    }
    text = json.dumps(body, indent=2)
    if args.out_file:
        Path(args.out_file).write_text(text)
    else:
        print(text)
    return 0


def cmd_coord_sim(args, cfg: RunConfig) -> int:
    model, vocab, _meta = load_checkpoint_dir(Path(args.checkpoint or cfg["out"]))
    sim = coord_embedding_similarity(model, vocab.coord_base, vocab.bins)
    out = Path(args.out_file or "coord_sim.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in sim:
            writer.writerow([f"{v:.8f}" for v in row])
    log.info("wrote %dx%d similarity matrix to %s", sim.shape[0], sim.shape[1], out)
    return 0


def cmd_serve(args, cfg: RunConfig) -> int:
    import uvicorn

    from .service import build_session, create_app

    session = build_session(Path(args.checkpoint or cfg["out"]), default_seed=cfg["seed"])
    app = create_app(session)
    port = args.port or cfg["service.port"]
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    # Shared flags work both before and after the subcommand; the
    # SUPPRESS defaults keep the subparser from clobbering earlier values.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON config file of flat dotted keys")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    parser = _Parser(prog="unilayout", description=__doc__)
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    dataset = sub.add_parser("dataset", help="create or inspect datasets", parents=[common])
    dataset_sub = dataset.add_subparsers(dest="dataset_cmd", required=True)
    synth = dataset_sub.add_parser("synth", parents=[common])
    synth.add_argument("-n", type=int, default=1000)
    synth.add_argument("--style", choices=["grid", "freeform"], default="grid")
    synth.add_argument("--categories", default=None, help="comma-separated names")
    synth.add_argument("--background", default=None, help="comma-separated background labels")
    ing = dataset_sub.add_parser("ingest", parents=[common])
    ing.add_argument("--in", dest="input", required=True)
    ing.add_argument("--schema", choices=["generic", "rico-like", "publaynet-like"], default="generic")
    stats = dataset_sub.add_parser("stats", parents=[common])
    stats.add_argument("--in", dest="input", default=None)

    train = sub.add_parser("train", help="train one subtask or all six", parents=[common])
    group = train.add_mutually_exclusive_group(required=True)
    group.add_argument("--task", help="subtask name, e.g. gen-ts")
    group.add_argument("--multi", action="store_true")
    train.add_argument("--data", dest="data_path", default=None)
    train.add_argument("--arch", choices=["encdec", "dec"], default=None)
    train.add_argument("--order", choices=["alphabetic", "position"], default=None)

    ev = sub.add_parser("eval", help="evaluate a checkpoint", parents=[common])
    ev.add_argument("--task", required=True)
    ev.add_argument("--checkpoint", default=None)
    ev.add_argument("--fsm", dest="fsm_modes", action="append_const", const=True)
    ev.add_argument("--no-fsm", dest="fsm_modes", action="append_const", const=False)
    ev.add_argument("--data", dest="data_path", default=None)
    ev.add_argument("--out-file", default=None)

    gen = sub.add_parser("generate", help="sample layouts for a constraint spec", parents=[common])
    gen.add_argument("--task", required=True)
    gen.add_argument("--checkpoint", default=None)
    gen.add_argument("--spec", default=None, help="constraint JSON file")
    gen.add_argument("-n", type=int, default=1)
    gen.add_argument("--no-fsm", action="store_true")
    gen.add_argument("--out-file", default=None)

    ref = sub.add_parser("refine", help="clean up a draft layout", parents=[common])
    ref.add_argument("--checkpoint", default=None)
    ref.add_argument("--spec", required=True, help="draft layout JSON file")
    ref.add_argument("--out-file", default=None)

    comp = sub.add_parser("complete", help="extend a partial layout", parents=[common])
    comp.add_argument("--checkpoint", default=None)
    comp.add_argument("--spec", required=True, help="partial layout JSON file")
    comp.add_argument("-n", type=int, default=1)
    comp.add_argument("--out-file", default=None)

    sim = sub.add_parser("coord-sim", help="coordinate-embedding similarity CSV", parents=[common])
    sim.add_argument("--checkpoint", default=None)
    sim.add_argument("--out-file", default=None)

    serve = sub.add_parser("serve", help="start the HTTP service", parents=[common])
    serve.add_argument("--checkpoint", default=None)
    serve.add_argument("--port", type=int, default=None)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("UNILAYOUT_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    overrides: dict[str, Any] = {"seed": args.seed, "out": args.out}
    if getattr(args, "data_path", None):
        overrides["data.path"] = args.data_path
    if getattr(args, "arch", None):
        overrides["model.arch"] = args.arch
    if getattr(args, "order", None):
        overrides["model.order"] = args.order
    try:
        cfg = RunConfig.resolve(args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    log.info("resolved config: %s", json.dumps(cfg.values, sort_keys=True))
    try:
        if args.command == "dataset":
            return cmd_dataset(args, cfg)
        if args.command == "train":
            return cmd_train(args, cfg)
        if args.command == "eval":
            return cmd_eval(args, cfg)
        if args.command == "generate":
            return cmd_generate(args, cfg)
        if args.command == "refine":
            return cmd_refine_or_complete(args, cfg, Task.REFINEMENT)
        if args.command == "complete":
            return cmd_refine_or_complete(args, cfg, Task.COMPLETION)
        if args.command == "coord-sim":
            return cmd_coord_sim(args, cfg)
        if args.command == "serve":
            return cmd_serve(args, cfg)
        parser.error(f"unknown command {args.command}")
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        log.error("run failed: %s", exc, exc_info=True)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
