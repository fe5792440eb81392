"""Pairwise element relations in bin space.

This is the single source of truth for the eight relation predicates: the
same functions drive ground-truth extraction when building training inputs,
feasible-range computation during constrained decoding, and the violation
metric. Position relations compare box edges; size relations compare bin
areas (w * h), with "equal" tolerating max(1, 5% of the second box's area).
"""
from __future__ import annotations

from typing import Callable, NamedTuple

from .core import QuantizedBox

SIZE_RELATIONS = ("smaller", "larger", "equal")
POSITION_RELATIONS = ("above", "bottom", "left", "right", "overlap")
RELATIONS = SIZE_RELATIONS + POSITION_RELATIONS


class Relationship(NamedTuple):
    """A constraint between elements at positions ``a`` and ``b`` of a layout."""

    a: int
    b: int
    relation: str


def _area_equal(area_a: int, area_b: int) -> bool:
    return abs(area_a - area_b) <= max(1.0, 0.05 * area_b)


def _intersection_area(a: QuantizedBox, b: QuantizedBox) -> int:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    return max(iw, 0) * max(ih, 0)


_PREDICATES: dict[str, Callable[[QuantizedBox, QuantizedBox], bool]] = {
    "smaller": lambda a, b: a.w * a.h < b.w * b.h,
    "larger": lambda a, b: a.w * a.h > b.w * b.h,
    "equal": lambda a, b: _area_equal(a.w * a.h, b.w * b.h),
    "above": lambda a, b: a.y + a.h <= b.y,
    "bottom": lambda a, b: b.y + b.h <= a.y,
    "left": lambda a, b: a.x + a.w <= b.x,
    "right": lambda a, b: b.x + b.w <= a.x,
    "overlap": lambda a, b: _intersection_area(a, b) > 0,
}

# Attributes of each endpoint the predicate reads. Used to decide the earliest
# decoding slot at which a constraint becomes exactly checkable.
DEPENDS_ON: dict[str, tuple[frozenset[str], frozenset[str]]] = {
    "smaller": (frozenset("wh"), frozenset("wh")),
    "larger": (frozenset("wh"), frozenset("wh")),
    "equal": (frozenset("wh"), frozenset("wh")),
    "above": (frozenset("yh"), frozenset("y")),
    "bottom": (frozenset("y"), frozenset("yh")),
    "left": (frozenset("xw"), frozenset("x")),
    "right": (frozenset("x"), frozenset("xw")),
    "overlap": (frozenset("xywh"), frozenset("xywh")),
}


def relation_holds(relation: str, a: QuantizedBox, b: QuantizedBox) -> bool:
    """Evaluate one relation predicate on a pair of boxes."""
    try:
        predicate = _PREDICATES[relation]
    except KeyError:
        raise ValueError(f"unknown relation {relation!r}") from None
    return predicate(a, b)
