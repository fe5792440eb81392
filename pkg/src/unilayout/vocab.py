"""Token vocabulary and the codecs between layouts, task inputs and token ids.

The vocabulary is laid out in contiguous, non-overlapping groups::

    [specials | task prefixes | categories | coordinate bins | relations | indices]

A single shared group of coordinate tokens serves x, y, w and h. Output
sequences follow the grammar ``SOS (c x y w h) (SEP c x y w h)* EOS``; each
subtask has its own input grammar (see ``encode_input``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DEFAULT_BINS,
    DEFAULT_MAX_ELEMENTS,
    Canvas,
    CategorySet,
    Element,
    InvalidInputError,
    Layout,
    QuantizedBox,
    dequantize,
    quantize,
)
from .relations import RELATIONS, Relationship, relation_holds


class Task(str, Enum):
    UGEN = "ugen"
    GEN_T = "gen-t"
    GEN_TS = "gen-ts"
    GEN_R = "gen-r"
    REFINEMENT = "refinement"
    COMPLETION = "completion"


TASK_ORDER: tuple[Task, ...] = (
    Task.UGEN,
    Task.GEN_T,
    Task.GEN_TS,
    Task.GEN_R,
    Task.REFINEMENT,
    Task.COMPLETION,
)


class CapacityError(ValueError):
    """A layout or constraint exceeds the configured element capacity."""


class ParseError(ValueError):
    """A token sequence violates the expected grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class InvalidConstraintError(ValueError):
    """A ConstraintSpec is malformed for its task."""


@dataclass(frozen=True)
class Vocabulary:
    """Token-id layout over specials, prefixes, categories, bins, relations, indices."""

    categories: CategorySet
    bins: int = DEFAULT_BINS
    max_elements: int = DEFAULT_MAX_ELEMENTS

    PAD: int = field(init=False, default=0)
    SOS: int = field(init=False, default=1)
    EOS: int = field(init=False, default=2)
    SEP: int = field(init=False, default=3)
    SEP2: int = field(init=False, default=4)

    def __post_init__(self) -> None:
        if self.bins < 2:
            raise InvalidInputError(f"bins must be >= 2, got {self.bins}")
        if self.max_elements < 1:
            raise InvalidInputError(f"max_elements must be >= 1, got {self.max_elements}")

    @property
    def prefix_base(self) -> int:
        return 5

    @property
    def category_base(self) -> int:
        return self.prefix_base + len(TASK_ORDER)

    @property
    def coord_base(self) -> int:
        return self.category_base + len(self.categories)

    @property
    def relation_base(self) -> int:
        return self.coord_base + self.bins

    @property
    def index_base(self) -> int:
        return self.relation_base + len(RELATIONS)

    @property
    def size(self) -> int:
        return self.index_base + self.max_elements

    # --- group encoders -------------------------------------------------
    def task_prefix_id(self, task: Task) -> int:
        return self.prefix_base + TASK_ORDER.index(task)

    def category_id(self, category: int) -> int:
        if not 0 <= category < len(self.categories):
            raise InvalidInputError(f"category index {category} out of range")
        return self.category_base + category

    def coord_id(self, b: int) -> int:
        if not 0 <= b < self.bins:
            raise InvalidInputError(f"coordinate bin {b} out of range [0, {self.bins - 1}]")
        return self.coord_base + b

    def relation_id(self, relation: str) -> int:
        try:
            return self.relation_base + RELATIONS.index(relation)
        except ValueError:
            raise InvalidInputError(f"unknown relation {relation!r}") from None

    def index_id(self, k: int) -> int:
        if not 0 <= k < self.max_elements:
            raise InvalidInputError(f"element index {k} out of range [0, {self.max_elements - 1}]")
        return self.index_base + k

    # --- group decoders / membership ------------------------------------
    def is_category(self, t: int) -> bool:
        return self.category_base <= t < self.coord_base

    def is_coord(self, t: int) -> bool:
        return self.coord_base <= t < self.relation_base

    def is_relation(self, t: int) -> bool:
        return self.relation_base <= t < self.index_base

    def is_index(self, t: int) -> bool:
        return self.index_base <= t < self.size

    def is_prefix(self, t: int) -> bool:
        return self.prefix_base <= t < self.category_base

    def category_of(self, t: int) -> int:
        if not self.is_category(t):
            raise InvalidInputError(f"token {t} is not a category token")
        return t - self.category_base

    def coord_of(self, t: int) -> int:
        if not self.is_coord(t):
            raise InvalidInputError(f"token {t} is not a coordinate token")
        return t - self.coord_base

    def relation_of(self, t: int) -> str:
        if not self.is_relation(t):
            raise InvalidInputError(f"token {t} is not a relation token")
        return RELATIONS[t - self.relation_base]

    def index_of(self, t: int) -> int:
        if not self.is_index(t):
            raise InvalidInputError(f"token {t} is not an index token")
        return t - self.index_base

    def task_of_prefix(self, t: int) -> Task:
        if not self.is_prefix(t):
            raise InvalidInputError(f"token {t} is not a task prefix token")
        return TASK_ORDER[t - self.prefix_base]

    def category_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[self.category_base : self.coord_base] = True
        return mask

    def coord_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[self.coord_base : self.relation_base] = True
        return mask

    def token_repr(self, t: int) -> str:
        """Human-readable form of one token, for error messages and debugging."""
        if t == self.PAD:
            return "<pad>"
        if t == self.SOS:
            return "<sos>"
        if t == self.EOS:
            return "<eos>"
        if t == self.SEP:
            return "|"
        if t == self.SEP2:
            return "||"
        if self.is_prefix(t):
            return f"[{self.task_of_prefix(t).value}]"
        if self.is_category(t):
            return self.categories.name(self.category_of(t))
        if self.is_coord(t):
            return str(self.coord_of(t))
        if self.is_relation(t):
            return self.relation_of(t)
        if self.is_index(t):
            return f"#{self.index_of(t)}"
        raise InvalidInputError(f"token {t} outside vocabulary of size {self.size}")


@dataclass(frozen=True)
class TokenSequence:
    """An immutable run of token ids plus which side of the model it feeds."""

    ids: tuple[int, ...]
    role: str = "output"  # "input" | "output"
    task: Task | None = None

    def __init__(self, ids: Iterable[int], role: str = "output", task: Task | None = None):
        if role not in ("input", "output"):
            raise InvalidInputError(f"role must be 'input' or 'output', got {role!r}")
        object.__setattr__(self, "ids", tuple(int(i) for i in ids))
        object.__setattr__(self, "role", role)
        object.__setattr__(self, "task", task)

    def __len__(self) -> int:
        return len(self.ids)

    def to_json(self) -> str:
        return json.dumps({"task": self.task.value if self.task else None, "ids": list(self.ids)})

    @classmethod
    def from_json(cls, payload: str, role: str = "output") -> "TokenSequence":
        obj = json.loads(payload)
        task = Task(obj["task"]) if obj.get("task") else None
        return cls(obj["ids"], role=role, task=task)


@dataclass(frozen=True)
class ConstraintSpec:
    """Per-subtask user constraints. Only the fields the task needs are set."""

    task: Task
    types: tuple[str, ...] | None = None
    sizes: tuple[tuple[int, int], ...] | None = None
    relationships: tuple[Relationship, ...] | None = None
    draft: Layout | None = None
    partial: Layout | None = None

    def validate(self, vocab: Vocabulary) -> None:
        required = {
            Task.UGEN: (),
            Task.GEN_T: ("types",),
            Task.GEN_TS: ("types", "sizes"),
            Task.GEN_R: ("types", "relationships"),
            Task.REFINEMENT: ("draft",),
            Task.COMPLETION: ("partial",),
        }[self.task]
        for name in ("types", "sizes", "relationships", "draft", "partial"):
            value = getattr(self, name)
            if name in required and value is None:
                raise InvalidConstraintError(f"{self.task.value} requires field {name!r}")
            if name not in required and value is not None:
                raise InvalidConstraintError(f"{self.task.value} must not set field {name!r}")
        if self.types is not None:
            if not self.types:
                raise InvalidConstraintError("types must not be empty")
            if len(self.types) > vocab.max_elements:
                raise CapacityError(
                    f"{len(self.types)} types exceed capacity {vocab.max_elements}"
                )
            for t in self.types:
                vocab.categories.index(t)  # raises on unknown names
        if self.sizes is not None:
            if len(self.sizes) != len(self.types or ()):
                raise InvalidConstraintError("sizes must align one-to-one with types")
            for w, h in self.sizes:
                vocab.coord_id(w)
                vocab.coord_id(h)
        if self.relationships is not None:
            n = len(self.types or ())
            for rel in self.relationships:
                if rel.relation not in RELATIONS:
                    raise InvalidConstraintError(f"unknown relation {rel.relation!r}")
                if not (0 <= rel.a < n and 0 <= rel.b < n):
                    raise InvalidConstraintError(
                        f"relationship indices ({rel.a}, {rel.b}) out of range for {n} types"
                    )
                if rel.a == rel.b:
                    raise InvalidConstraintError("relationship endpoints must differ")
        for name in ("draft", "partial"):
            layout = getattr(self, name)
            if layout is not None:
                if len(layout) > vocab.max_elements:
                    raise CapacityError(
                        f"{name} has {len(layout)} elements, capacity {vocab.max_elements}"
                    )
                for e in layout.elements:
                    vocab.category_id(e.category)
                    if not e.box.within(vocab.bins):
                        raise InvalidConstraintError(f"{name} box {e.box} exceeds bin range")

    def canonical(self, cats: CategorySet) -> "ConstraintSpec":
        """Sort types alphabetically (stable) and remap relationship indices to match.

        Drafts and partial layouts keep their given element order.
        """
        if self.types is None:
            return self
        order = sorted(range(len(self.types)), key=lambda i: (self.types[i], i))
        if order == list(range(len(self.types))):
            return self
        remap = {old: new for new, old in enumerate(order)}
        types = tuple(self.types[i] for i in order)
        sizes = tuple(self.sizes[i] for i in order) if self.sizes is not None else None
        relationships = None
        if self.relationships is not None:
            relationships = tuple(
                Relationship(remap[r.a], remap[r.b], r.relation) for r in self.relationships
            )
        return replace(self, types=types, sizes=sizes, relationships=relationships)


def encode_layout(layout: Layout, vocab: Vocabulary) -> TokenSequence:
    """Serialize a layout to ``SOS (c x y w h) (SEP c x y w h)* EOS``."""
    if len(layout) > vocab.max_elements:
        raise CapacityError(f"layout has {len(layout)} elements, capacity {vocab.max_elements}")
    ids = [vocab.SOS]
    for i, e in enumerate(layout.elements):
        if i > 0:
            ids.append(vocab.SEP)
        ids.append(vocab.category_id(e.category))
        ids.extend(vocab.coord_id(b) for b in (e.box.x, e.box.y, e.box.w, e.box.h))
    ids.append(vocab.EOS)
    return TokenSequence(ids, role="output")


def decode_layout(
    seq: TokenSequence | Sequence[int], vocab: Vocabulary, canvas: Canvas = Canvas()
) -> Layout:
    """Strictly parse an output sequence back into a Layout.

    Raises ParseError with the offending position on any grammar violation.
    """
    ids = seq.ids if isinstance(seq, TokenSequence) else tuple(int(i) for i in seq)
    if not ids or ids[0] != vocab.SOS:
        raise ParseError("expected <sos>", 0)
    pos = 1
    elements: list[Element] = []
    while True:
        if pos >= len(ids):
            raise ParseError("missing <eos>", len(ids))
        if ids[pos] == vocab.EOS:
            if not elements:
                raise ParseError("no elements between <sos> and <eos>", pos)
            if pos != len(ids) - 1:
                raise ParseError("tokens after <eos>", pos + 1)
            return Layout(elements, canvas=canvas)
        if elements:
            if ids[pos] != vocab.SEP:
                raise ParseError(
                    f"expected separator or <eos>, got {vocab.token_repr(ids[pos])}", pos
                )
            pos += 1
            if pos >= len(ids) or ids[pos] == vocab.EOS:
                raise ParseError("dangling separator", pos - 1)
        if pos >= len(ids) or not vocab.is_category(ids[pos]):
            raise ParseError("expected a category token", pos)
        category = vocab.category_of(ids[pos])
        pos += 1
        coords = []
        for attr in ("x", "y", "w", "h"):
            if pos >= len(ids) or not vocab.is_coord(ids[pos]):
                raise ParseError(f"expected a coordinate token for {attr}", pos)
            coords.append(vocab.coord_of(ids[pos]))
            pos += 1
        elements.append(Element(category, QuantizedBox(*coords)))


def encode_input(spec: ConstraintSpec, vocab: Vocabulary, with_prefix: bool = False) -> TokenSequence:
    """Serialize a ConstraintSpec to its task's input grammar.

    Types (with any attached sizes and relationship indices) are emitted in
    alphabetic order of category name. With ``with_prefix`` the task indicator
    token precedes ``SOS`` so one multi-task model can route the request.
    """
    spec.validate(vocab)
    spec = spec.canonical(vocab.categories)
    ids: list[int] = [vocab.task_prefix_id(spec.task)] if with_prefix else []
    ids.append(vocab.SOS)
    if spec.task is Task.UGEN:
        pass
    elif spec.task is Task.GEN_T:
        for i, name in enumerate(spec.types):
            if i > 0:
                ids.append(vocab.SEP)
            ids.append(vocab.category_id(vocab.categories.index(name)))
    elif spec.task is Task.GEN_TS:
        for i, (name, (w, h)) in enumerate(zip(spec.types, spec.sizes)):
            if i > 0:
                ids.append(vocab.SEP)
            ids.append(vocab.category_id(vocab.categories.index(name)))
            ids.append(vocab.coord_id(w))
            ids.append(vocab.coord_id(h))
    elif spec.task is Task.GEN_R:
        for i, name in enumerate(spec.types):
            if i > 0:
                ids.append(vocab.SEP)
            ids.append(vocab.category_id(vocab.categories.index(name)))
        ids.append(vocab.SEP2)
        for i, rel in enumerate(spec.relationships):
            if i > 0:
                ids.append(vocab.SEP)
            ids.append(vocab.category_id(vocab.categories.index(spec.types[rel.a])))
            ids.append(vocab.index_id(rel.a))
            ids.append(vocab.relation_id(rel.relation))
            ids.append(vocab.category_id(vocab.categories.index(spec.types[rel.b])))
            ids.append(vocab.index_id(rel.b))
    elif spec.task in (Task.REFINEMENT, Task.COMPLETION):
        layout = spec.draft if spec.task is Task.REFINEMENT else spec.partial
        ids.extend(encode_layout(layout, vocab).ids[1:-1])
    else:  # pragma: no cover - exhaustive over Task
        raise InvalidConstraintError(f"unsupported task {spec.task}")
    ids.append(vocab.EOS)
    return TokenSequence(ids, role="input", task=spec.task)


def strip_prefix(seq: TokenSequence, vocab: Vocabulary) -> TokenSequence:
    """Drop a leading task prefix token, yielding the single-task input."""
    if seq.ids and vocab.is_prefix(seq.ids[0]):
        return TokenSequence(seq.ids[1:], role=seq.role, task=seq.task)
    return seq


def decode_input(seq: TokenSequence, vocab: Vocabulary) -> ConstraintSpec:
    """Parse a task input sequence back into its ConstraintSpec.

    The task is taken from the prefix token when present, else from
    ``seq.task``. Inverse of ``encode_input`` on canonical specs.
    """
    ids = list(seq.ids)
    task = seq.task
    if ids and vocab.is_prefix(ids[0]):
        task = vocab.task_of_prefix(ids[0])
        ids = ids[1:]
    if task is None:
        raise ParseError("input sequence carries no task", 0)
    if not ids or ids[0] != vocab.SOS:
        raise ParseError("expected <sos>", 0)
    if not ids or ids[-1] != vocab.EOS:
        raise ParseError("missing <eos>", len(ids))
    body = ids[1:-1]
    if task is Task.UGEN:
        if body:
            raise ParseError("unconstrained input must be empty", 1)
        return ConstraintSpec(Task.UGEN)
    if task in (Task.REFINEMENT, Task.COMPLETION):
        layout = decode_layout([vocab.SOS, *body, vocab.EOS], vocab)
        if task is Task.REFINEMENT:
            return ConstraintSpec(task, draft=layout)
        return ConstraintSpec(task, partial=layout)
    if task is Task.GEN_T:
        names = _parse_type_list(body, vocab, offset=1)
        return ConstraintSpec(task, types=tuple(names))
    if task is Task.GEN_TS:
        names: list[str] = []
        sizes: list[tuple[int, int]] = []
        pos = 0
        while pos < len(body):
            if names:
                if body[pos] != vocab.SEP:
                    raise ParseError("expected separator", pos + 1)
                pos += 1
            if pos >= len(body) or not vocab.is_category(body[pos]):
                raise ParseError("expected a category token", pos + 1)
            names.append(vocab.categories.name(vocab.category_of(body[pos])))
            if pos + 2 >= len(body) or not (
                vocab.is_coord(body[pos + 1]) and vocab.is_coord(body[pos + 2])
            ):
                raise ParseError("expected width and height tokens", pos + 2)
            sizes.append((vocab.coord_of(body[pos + 1]), vocab.coord_of(body[pos + 2])))
            pos += 3
        if not names:
            raise ParseError("no type constraints", 1)
        return ConstraintSpec(task, types=tuple(names), sizes=tuple(sizes))
    if task is Task.GEN_R:
        if vocab.SEP2 not in body:
            raise ParseError("missing type/relationship separator", len(body))
        cut = body.index(vocab.SEP2)
        names = _parse_type_list(body[:cut], vocab, offset=1)
        rel_ids = body[cut + 1 :]
        relationships: list[Relationship] = []
        pos = 0
        while pos < len(rel_ids):
            if relationships:
                if rel_ids[pos] != vocab.SEP:
                    raise ParseError("expected separator between relationships", cut + 2 + pos)
                pos += 1
            if len(rel_ids) - pos < 5:
                raise ParseError("truncated relationship clause", cut + 2 + pos)
            c_a, k_a, r, c_b, k_b = rel_ids[pos : pos + 5]
            a = vocab.index_of(k_a)
            b = vocab.index_of(k_b)
            for c, k in ((c_a, a), (c_b, b)):
                if k >= len(names) or vocab.category_of(c) != vocab.categories.index(names[k]):
                    raise ParseError("relationship category does not match its index", cut + 2 + pos)
            relationships.append(Relationship(a, b, vocab.relation_of(r)))
            pos += 5
        return ConstraintSpec(task, types=tuple(names), relationships=tuple(relationships))
    raise ParseError(f"unsupported task {task}", 0)  # pragma: no cover


def _parse_type_list(body: Sequence[int], vocab: Vocabulary, offset: int) -> list[str]:
    names: list[str] = []
    pos = 0
    while pos < len(body):
        if names:
            if body[pos] != vocab.SEP:
                raise ParseError("expected separator", offset + pos)
            pos += 1
        if pos >= len(body) or not vocab.is_category(body[pos]):
            raise ParseError("expected a category token", offset + pos)
        names.append(vocab.categories.name(vocab.category_of(body[pos])))
        pos += 1
    if not names:
        raise ParseError("no type constraints", offset)
    return names


def order_elements(layout: Layout, policy: str, cats: CategorySet) -> Layout:
    """Reorder elements for serialization: by category name or by (x, y).

    Both orders are stable, so ties keep the original relative order.
    """
    if policy == "alphabetic":
        key = lambda e: cats.name(e.category)
    elif policy == "position":
        key = lambda e: (e.box.x, e.box.y)
    else:
        raise InvalidInputError(f"unknown order policy {policy!r}")
    return Layout(sorted(layout.elements, key=key), canvas=layout.canvas)


def add_refinement_noise(
    layout: Layout, std: float, rng: np.random.Generator, bins: int = DEFAULT_BINS
) -> Layout:
    """Jitter every coordinate with Gaussian noise in normalized space.

    Each attribute is dequantized, perturbed by N(0, std), clamped to [0, 1]
    and re-quantized. Categories and element order are unchanged.
    """
    if std < 0:
        raise InvalidInputError(f"noise std must be >= 0, got {std}")
    elements = []
    for e in layout.elements:
        noise = rng.normal(0.0, std, size=4) if std > 0 else np.zeros(4)
        values = [
            quantize(dequantize(b, bins) + float(n), bins)
            for b, n in zip((e.box.x, e.box.y, e.box.w, e.box.h), noise)
        ]
        elements.append(Element(e.category, QuantizedBox(*values)))
    return Layout(elements, canvas=layout.canvas)


def extract_relationships(
    layout: Layout, sample_rate: float, rng: np.random.Generator
) -> tuple[Relationship, ...]:
    """Sample ground-truth pairwise relations from a layout.

    All relations holding between element pairs (i < j) are enumerated, then
    ceil(sample_rate * total) of them are drawn uniformly without replacement.
    Returned in enumeration order for determinism.
    """
    if not 0 <= sample_rate <= 1:
        raise InvalidInputError(f"sample_rate must be in [0, 1], got {sample_rate}")
    candidates: list[Relationship] = []
    for i in range(len(layout.elements)):
        for j in range(i + 1, len(layout.elements)):
            for relation in RELATIONS:
                if relation_holds(relation, layout.elements[i].box, layout.elements[j].box):
                    candidates.append(Relationship(i, j, relation))
    if not candidates:
        return ()
    n_sample = math.ceil(sample_rate * len(candidates))
    if n_sample == 0:
        return ()
    chosen = rng.choice(len(candidates), size=n_sample, replace=False)
    return tuple(candidates[i] for i in sorted(int(c) for c in chosen))
