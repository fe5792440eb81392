"""Dataset ingestion, filtering, splitting, synthesis and example building.

The canonical on-disk form is JSON Lines, one layout per line::

    {"canvas": {"w": 360, "h": 640},
     "elements": [{"category": "text", "bbox": [x, y, w, h]}]}   # pixels

Adapters normalize mobile-UI-style trees and COCO-style document annotations
into the same shape, keeping source quirks at the boundary. Records that fail
validation are skipped and counted, never fatal.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DEFAULT_BINS,
    DEFAULT_MAX_ELEMENTS,
    CategorySet,
    Element,
    EmptyLayoutError,
    InvalidInputError,
    Layout,
    QuantizedBox,
    dequantize,
    normalize_layout,
)
from .training import TrainingExample
from .vocab import (
    TASK_ORDER,
    ConstraintSpec,
    Task,
    Vocabulary,
    add_refinement_noise,
    encode_input,
    encode_layout,
    extract_relationships,
    order_elements,
)

SCHEMAS = ("generic", "rico-like", "publaynet-like")
DEFAULT_FRACTIONS = (0.90, 0.05, 0.05)


@dataclass
class DatasetManifest:
    """Everything needed to rebuild a dataset deterministically."""

    name: str
    categories: tuple[str, ...]
    background: tuple[str, ...] = ()
    bins: int = DEFAULT_BINS
    n_max: int = DEFAULT_MAX_ELEMENTS
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    seed: int = 0
    counts: dict = field(default_factory=dict)
    source: str = ""
    synthetic: bool = False

    def __post_init__(self) -> None:
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise InvalidInputError(f"split fractions must sum to 1, got {self.fractions}")

    def category_set(self) -> CategorySet:
        return CategorySet(self.categories, self.background)

    def save(self, path: Path) -> None:
        payload = {
            "name": self.name,
            "categories": list(self.categories),
            "background": list(self.background),
            "bins": self.bins,
            "n_max": self.n_max,
            "fractions": list(self.fractions),
            "seed": self.seed,
            "counts": self.counts,
            "source": self.source,
            "synthetic": self.synthetic,
        }
        Path(path).write_text(json.dumps(payload, indent=2))

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        obj = json.loads(Path(path).read_text())
        return cls(
            name=obj["name"],
            categories=tuple(obj["categories"]),
            background=tuple(obj.get("background", ())),
            bins=obj.get("bins", DEFAULT_BINS),
            n_max=obj.get("n_max", DEFAULT_MAX_ELEMENTS),
            fractions=tuple(obj.get("fractions", DEFAULT_FRACTIONS)),
            seed=obj.get("seed", 0),
            counts=obj.get("counts", {}),
            source=obj.get("source", ""),
            synthetic=obj.get("synthetic", False),
        )


@dataclass
class IngestResult:
    layouts: list[Layout]
    categories: CategorySet
    skipped: int
    reasons: list[str]


def _iter_generic(path: Path) -> Iterable[dict]:
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                yield {"__bad_line__": line_number}


def _walk_rico(node: dict, out: list) -> None:
    label = node.get("componentLabel")
    bounds = node.get("bounds")
    if label and bounds and len(bounds) == 4:
        x1, y1, x2, y2 = bounds
        out.append({"category": str(label), "bbox": [x1, y1, x2 - x1, y2 - y1]})
    for child in node.get("children", ()) or ():
        _walk_rico(child, out)


def _records_from(path: Path, schema: str) -> Iterable[dict]:
    """Yield generic-schema records from any supported source layout."""
    path = Path(path)
    if schema == "generic":
        yield from _iter_generic(path)
    elif schema == "rico-like":
        files = sorted(path.glob("*.json")) if path.is_dir() else [path]
        for file in files:
            try:
                tree = json.loads(file.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, OSError):
                yield {"__bad_line__": str(file)}
                continue
            root = tree.get("activity", {}).get("root", tree)
            bounds = root.get("bounds", [0, 0, 1440, 2560])
            elements: list = []
            for child in root.get("children", ()) or ():
                _walk_rico(child, elements)
            yield {
                "canvas": {"w": bounds[2] - bounds[0] or 1440, "h": bounds[3] - bounds[1] or 2560},
                "elements": elements,
            }
    elif schema == "publaynet-like":
        blob = json.loads(path.read_text(encoding="utf-8"))
        names = {c["id"]: c["name"] for c in blob.get("categories", ())}
        by_image: dict = {}
        for annotation in blob.get("annotations", ()):
            by_image.setdefault(annotation["image_id"], []).append(annotation)
        for image in blob.get("images", ()):
            annotations = by_image.get(image["id"], ())
            yield {
                "canvas": {"w": image["width"], "h": image["height"]},
                "elements": [
                    {"category": names.get(a["category_id"], str(a["category_id"])),
                     "bbox": list(a["bbox"])}
                    for a in annotations
                ],
            }
    else:
        raise InvalidInputError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")


def ingest(
    path: Path,
    schema: str = "generic",
    categories: CategorySet | None = None,
    n_max: int = DEFAULT_MAX_ELEMENTS,
    bins: int = DEFAULT_BINS,
) -> IngestResult:
    """Read a dataset file into normalized layouts.

    When no category set is given, one is built from the names seen, sorted
    alphabetically so token ids are stable across runs. Records with more
    than ``n_max`` elements, unknown categories or malformed geometry are
    skipped and counted.
    """
    records = list(_records_from(Path(path), schema))
    if categories is None:
        names = sorted(
            {
                str(e.get("category"))
                for r in records
                if "__bad_line__" not in r
                for e in r.get("elements", ())
                if e.get("category")
            }
        )
        if not names:
            raise EmptyLayoutError(f"no usable records in {path}")
        categories = CategorySet(names)
    layouts: list[Layout] = []
    skipped = 0
    reasons: list[str] = []

    def skip(reason: str) -> None:
        nonlocal skipped
        skipped += 1
        if len(reasons) < 50:
            reasons.append(reason)

    for i, record in enumerate(records):
        if "__bad_line__" in record:
            skip(f"record {record['__bad_line__']}: malformed JSON")
            continue
        elements = record.get("elements") or []
        if not elements:
            skip(f"record {i}: no elements")
            continue
        if len(elements) > n_max:
            skip(f"record {i}: {len(elements)} elements exceeds filter {n_max}")
            continue
        canvas = record.get("canvas") or {}
        try:
            raw = [
                (categories.index(str(e["category"])), tuple(float(v) for v in e["bbox"]))
                for e in elements
            ]
            layouts.append(
                normalize_layout(raw, float(canvas.get("w", 0)), float(canvas.get("h", 0)), bins)
            )
        except (InvalidInputError, KeyError, TypeError, ValueError) as exc:
            skip(f"record {i}: {exc}")
    if not layouts:
        raise EmptyLayoutError(f"no valid records in {path} ({skipped} skipped)")
    return IngestResult(layouts, categories, skipped, reasons)


def split(
    layouts: Sequence[Layout],
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> tuple[list[Layout], list[Layout], list[Layout]]:
    """Deterministic shuffle, then contiguous train/val/test partition."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInputError(f"fractions must sum to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(len(layouts))
    n_train = int(fractions[0] * len(layouts))
    n_val = int(fractions[1] * len(layouts))
    shuffled = [layouts[int(i)] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def synthesize(
    n: int,
    cats: CategorySet,
    style: str = "grid",
    seed: int = 0,
    bins: int = DEFAULT_BINS,
    n_max: int = DEFAULT_MAX_ELEMENTS,
) -> list[Layout]:
    """Generate a deterministic desk-scale corpus.

    ``grid`` layouts are aligned and pairwise disjoint by construction, so
    their alignment and overlap metrics are (near) zero. ``freeform`` layouts
    place boxes on a jittered coarse lattice, exercising the whole coordinate
    range while keeping nearby bins interchangeable.
    """
    if n < 1:
        raise InvalidInputError(f"need n >= 1, got {n}")
    if not 2 <= len(cats) <= 25:
        raise InvalidInputError(f"need between 2 and 25 categories, got {len(cats)}")
    if style not in ("grid", "freeform"):
        raise InvalidInputError(f"unknown style {style!r}")
    rng = np.random.default_rng(seed)
    layouts = []
    for _ in range(n):
        if style == "grid":
            layouts.append(_grid_layout(rng, cats, bins, n_max))
        else:
            layouts.append(_freeform_layout(rng, cats, bins, n_max))
    return layouts


def _grid_layout(rng, cats, bins, n_max) -> Layout:
    while True:
        rows = int(rng.integers(1, 5))
        cols = int(rng.integers(1, 4))
        if 2 <= rows * cols <= n_max:
            break
    margin = int(rng.integers(2, 9))
    gap = int(rng.integers(1, 5))
    cell_w = (bins - 2 * margin - (cols - 1) * gap) // cols
    cell_h = (bins - 2 * margin - (rows - 1) * gap) // rows
    elements = []
    for r in range(rows):
        for c in range(cols):
            elements.append(
                Element(
                    int(rng.integers(len(cats))),
                    QuantizedBox(
                        x=margin + c * (cell_w + gap),
                        y=margin + r * (cell_h + gap),
                        w=cell_w,
                        h=cell_h,
                    ),
                )
            )
    return Layout(elements)


def _freeform_layout(rng, cats, bins, n_max) -> Layout:
    count = int(rng.integers(2, min(8, n_max) + 1))
    lattice = 8
    elements = []
    for _ in range(count):
        x = int(rng.integers(0, bins // lattice)) * lattice + int(rng.integers(-2, 3))
        y = int(rng.integers(0, bins // lattice)) * lattice + int(rng.integers(-2, 3))
        x = min(max(x, 0), bins - 2)
        y = min(max(y, 0), bins - 2)
        w = int(rng.integers(1, max(2, (bins - x) // 2)))
        h = int(rng.integers(1, max(2, (bins - y) // 2)))
        elements.append(Element(int(rng.integers(len(cats))), QuantizedBox(x, y, w, h)))
    return Layout(elements)


def save_jsonl(layouts: Sequence[Layout], cats: CategorySet, path: Path, bins: int = DEFAULT_BINS) -> None:
    """Write layouts in the canonical pixel-space JSONL schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for layout in layouts:
            w_px, h_px = layout.canvas.width, layout.canvas.height
            record = {
                "canvas": {"w": w_px, "h": h_px},
                "elements": [
                    {
                        "category": cats.name(e.category),
                        "bbox": [
                            dequantize(e.box.x, bins) * w_px,
                            dequantize(e.box.y, bins) * h_px,
                            dequantize(e.box.w, bins) * w_px if e.box.w else 0.0,
                            dequantize(e.box.h, bins) * h_px if e.box.h else 0.0,
                        ],
                    }
                    for e in layout.elements
                ],
            }
            fh.write(json.dumps(record) + "\n")


@dataclass(frozen=True)
class ExampleOptions:
    """Knobs for turning layouts into per-task training pairs."""

    sample_rate: float = 0.10
    noise_std: float = 0.01
    completion_prefix: int = 1
    output_order: str = "alphabetic"
    with_prefix: bool = False
    seed: int = 0


def build_examples(
    layouts: Sequence[Layout],
    task: Task,
    vocab: Vocabulary,
    options: ExampleOptions = ExampleOptions(),
) -> list[TrainingExample]:
    """Construct (input, target) pairs for one subtask.

    The target is the layout in the configured output order; the input
    follows the task's grammar, with constraint lists in alphabetic order.
    """
    cats = vocab.categories
    rng = np.random.default_rng(np.random.SeedSequence([options.seed, TASK_ORDER.index(task)]))
    examples = []
    for layout in layouts:
        ordered = order_elements(layout, options.output_order, cats)
        target = encode_layout(ordered, vocab)
        if task is Task.UGEN:
            spec = ConstraintSpec(Task.UGEN)
        elif task is Task.GEN_T:
            # encode_input sorts canonically; starting from the target order
            # keeps ties stable with respect to it.
            spec = ConstraintSpec(
                task, types=tuple(cats.name(e.category) for e in ordered.elements)
            )
        elif task is Task.GEN_TS:
            spec = ConstraintSpec(
                task,
                types=tuple(cats.name(e.category) for e in ordered.elements),
                sizes=tuple((e.box.w, e.box.h) for e in ordered.elements),
            )
        elif task is Task.GEN_R:
            # Relationship indices refer to the canonical (alphabetic) element
            # order, which the FSM schedule also follows.
            alpha = order_elements(layout, "alphabetic", cats)
            relationships = extract_relationships(alpha, options.sample_rate, rng)
            spec = ConstraintSpec(
                task,
                types=tuple(cats.name(e.category) for e in alpha.elements),
                relationships=relationships,
            )
        elif task is Task.REFINEMENT:
            noisy = add_refinement_noise(ordered, options.noise_std, rng, vocab.bins)
            spec = ConstraintSpec(task, draft=noisy)
        elif task is Task.COMPLETION:
            if options.completion_prefix < 1:
                raise InvalidInputError("completion_prefix must be >= 1")
            p = min(options.completion_prefix, len(ordered))
            partial = Layout(ordered.elements[:p], canvas=ordered.canvas)
            spec = ConstraintSpec(task, partial=partial)
        else:  # pragma: no cover
            raise InvalidInputError(f"unsupported task {task}")
        examples.append(
            TrainingExample(
                input=encode_input(spec, vocab, with_prefix=options.with_prefix),
                target=target,
                task=task,
            )
        )
    return examples
