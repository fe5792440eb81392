"""Domain types for graphic layouts and the continuous<->bin coordinate mapping.

Coordinates live in two spaces: normalized reals in [0, 1] and integer bins
(128 by default). ``quantize`` / ``dequantize`` convert between them. Every
other module works in bin space and only drops back to reals for metrics and
rendering. All types here are immutable and safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

DEFAULT_BINS = 128
DEFAULT_MAX_ELEMENTS = 20


class InvalidInputError(ValueError):
    """A value violates an operation's preconditions."""


class EmptyLayoutError(ValueError):
    """An operation requires at least one element."""


def quantize(v: float, bins: int = DEFAULT_BINS) -> int:
    """Map a normalized coordinate to its bin index: floor(clamp(v, 0, 1) * bins).

    Values outside [0, 1] are clamped first; v == 1.0 lands in the last bin.
    """
    if bins < 2:
        raise InvalidInputError(f"bins must be >= 2, got {bins}")
    if not math.isfinite(v):
        raise InvalidInputError(f"cannot quantize non-finite value {v!r}")
    clamped = min(max(v, 0.0), 1.0)
    return min(int(clamped * bins), bins - 1)


def dequantize(b: int, bins: int = DEFAULT_BINS) -> float:
    """Map a bin index back to the center of its bin, (b + 0.5) / bins.

    Using bin centers makes quantize(dequantize(b)) == b hold exactly.
    """
    if bins < 2:
        raise InvalidInputError(f"bins must be >= 2, got {bins}")
    if not 0 <= b < bins:
        raise InvalidInputError(f"bin index {b} out of range [0, {bins - 1}]")
    return (b + 0.5) / bins


@dataclass(frozen=True)
class CategorySet:
    """Ordered element categories. The ordering fixes the category token ids.

    ``background_labels`` marks categories the overlap metric ignores
    (full-screen scrims, list containers and the like).
    """

    names: tuple[str, ...]
    background_labels: frozenset[str] = field(default_factory=frozenset)

    def __init__(self, names: Iterable[str], background_labels: Iterable[str] = ()) -> None:
        names = tuple(names)
        background = frozenset(background_labels)
        if not names:
            raise InvalidInputError("category set must not be empty")
        if len(set(names)) != len(names):
            raise InvalidInputError("category names must be unique")
        if any(not n for n in names):
            raise InvalidInputError("category names must be non-empty")
        unknown = background - set(names)
        if unknown:
            raise InvalidInputError(f"background labels not in category set: {sorted(unknown)}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "background_labels", background)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidInputError(f"unknown category {name!r}") from None

    def name(self, index: int) -> str:
        if not 0 <= index < len(self.names):
            raise InvalidInputError(f"category index {index} out of range")
        return self.names[index]

    def is_background(self, index: int) -> bool:
        return self.name(index) in self.background_labels


@dataclass(frozen=True)
class QuantizedBox:
    """Element geometry in bin space: left, top, width, height."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        for attr in ("x", "y", "w", "h"):
            v = getattr(self, attr)
            if not isinstance(v, int) or isinstance(v, bool):
                raise InvalidInputError(f"box attribute {attr} must be an int, got {v!r}")
            if v < 0:
                raise InvalidInputError(f"box attribute {attr} must be >= 0, got {v}")

    def within(self, bins: int) -> bool:
        return all(v <= bins - 1 for v in (self.x, self.y, self.w, self.h))


@dataclass(frozen=True)
class Element:
    """One typed bounding box: a category index plus its quantized geometry."""

    category: int
    box: QuantizedBox

    def __post_init__(self) -> None:
        if self.category < 0:
            raise InvalidInputError(f"category index must be >= 0, got {self.category}")


@dataclass(frozen=True)
class Canvas:
    """Reference canvas size in pixels. Metadata only; bins are authoritative."""

    width: float = 1.0
    height: float = 1.0

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise InvalidInputError(f"canvas must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class Layout:
    """An ordered, non-empty collection of elements. Order is the serialization order."""

    elements: tuple[Element, ...]
    canvas: Canvas = Canvas()

    def __init__(self, elements: Iterable[Element], canvas: Canvas = Canvas()) -> None:
        elements = tuple(elements)
        if not elements:
            raise EmptyLayoutError("layout must contain at least one element")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "canvas", canvas)

    def __len__(self) -> int:
        return len(self.elements)

    def category_multiset(self) -> tuple[int, ...]:
        return tuple(sorted(e.category for e in self.elements))


RawElement = tuple[int, tuple[float, float, float, float]]


def normalize_layout(
    raw: Sequence[RawElement],
    canvas_width: float,
    canvas_height: float,
    bins: int = DEFAULT_BINS,
) -> Layout:
    """Quantize pixel-space elements onto the bin grid.

    Each raw element is (category_index, (x, y, w, h)) in pixels. x and w are
    normalized by the canvas width, y and h by the height, clamped to [0, 1]
    and quantized. Element order is preserved.
    """
    if not raw:
        raise EmptyLayoutError("cannot normalize an empty element list")
    if not (canvas_width > 0 and canvas_height > 0):
        raise InvalidInputError(
            f"canvas dimensions must be positive, got {canvas_width}x{canvas_height}"
        )
    elements = []
    for category, (x, y, w, h) in raw:
        if w < 0 or h < 0:
            raise InvalidInputError(f"element sizes must be >= 0, got w={w}, h={h}")
        box = QuantizedBox(
            x=quantize(x / canvas_width, bins),
            y=quantize(y / canvas_height, bins),
            w=quantize(w / canvas_width, bins),
            h=quantize(h / canvas_height, bins),
        )
        elements.append(Element(category=category, box=box))
    return Layout(elements, canvas=Canvas(float(canvas_width), float(canvas_height)))
