"""Finite-state machines that gate each decoding step.

The machine walks the output grammar ``category -> x -> y -> w -> h ->
(separator | eos)`` and, per task, narrows the feasible token set further:
scheduled category (and size) slots collapse to singletons, relationship
constraints carve bin intervals out of coordinate slots, and the separator
slot forces exactly the requested element count. Feasible sets are exposed
as vocabulary-length boolean masks so any sampler can apply them to logits.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import QuantizedBox
from .relations import DEPENDS_ON, relation_holds
from .vocab import ConstraintSpec, Task, Vocabulary


class FsmStateError(RuntimeError):
    """The FSM was queried or advanced after reaching its final state."""


class GrammarError(ValueError):
    """A token from the wrong vocabulary group was fed to the FSM."""


class Slot(Enum):
    CATEGORY = "category"
    X = "x"
    Y = "y"
    W = "w"
    H = "h"
    SEP_OR_EOS = "sep_or_eos"
    DONE = "done"


_NEXT_SLOT = {
    Slot.CATEGORY: Slot.X,
    Slot.X: Slot.Y,
    Slot.Y: Slot.W,
    Slot.W: Slot.H,
    Slot.H: Slot.SEP_OR_EOS,
}

_COORD_SLOTS = (Slot.X, Slot.Y, Slot.W, Slot.H)


@dataclass(frozen=True)
class FeasibleSet:
    """Boolean mask over the vocabulary; True marks a permitted token."""

    allowed: np.ndarray

    @property
    def empty(self) -> bool:
        return not bool(self.allowed.any())

    def tokens(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.allowed)]


def relation_bounds(
    decoded: Sequence[QuantizedBox | None],
    partial: dict[str, int],
    spec: ConstraintSpec,
    element_index: int,
    attr: str,
    bins: int,
) -> np.ndarray:
    """Bins permitted for one coordinate slot under the spec's relationships.

    A relationship is applied at the earliest slot where, given the already
    decoded values, its predicate depends on no other unknowns: all other
    attributes it reads from the current element are decoded and its other
    endpoint is complete. Anything not yet checkable passes through as the
    full range. An all-False result means the slot is unsatisfiable.
    """
    mask = np.ones(bins, dtype=bool)
    if not spec.relationships:
        return mask
    known = set(partial)
    for rel in spec.relationships:
        if element_index == rel.a:
            role, other_index = 0, rel.b
        elif element_index == rel.b:
            role, other_index = 1, rel.a
        else:
            continue
        other = decoded[other_index] if other_index < len(decoded) else None
        if other is None:
            continue
        deps = DEPENDS_ON[rel.relation][role]
        if attr not in deps or not (deps - {attr}) <= known:
            continue
        base = {"x": 0, "y": 0, "w": 0, "h": 0} | partial
        for v in range(bins):
            if not mask[v]:
                continue
            base[attr] = v
            candidate = QuantizedBox(base["x"], base["y"], base["w"], base["h"])
            pair = (candidate, other) if role == 0 else (other, candidate)
            if not relation_holds(rel.relation, *pair):
                mask[v] = False
    return mask


class Fsm:
    """One decoding automaton: owns its position in the grammar and the
    partially decoded layout, and answers which tokens may come next.

    Instances are cheap values; clone one to explore alternatives. When a
    caller bypasses the mask, ``advance`` still tracks the walk and records
    the discrepancy in ``violations`` instead of failing.
    """

    def __init__(self, spec: ConstraintSpec, vocab: Vocabulary):
        spec.validate(vocab)
        self.vocab = vocab
        self.spec = spec.canonical(vocab.categories)
        self.task = spec.task
        if self.task in (Task.GEN_T, Task.GEN_TS, Task.GEN_R):
            self.schedule: tuple[int, ...] | None = tuple(
                vocab.categories.index(t) for t in self.spec.types
            )
        elif self.task is Task.REFINEMENT:
            self.schedule = tuple(e.category for e in self.spec.draft.elements)
        else:
            self.schedule = None
        self.slot = Slot.CATEGORY
        self.element_index = 0
        self.decoded: list[QuantizedBox | None] = []
        self.partial: dict[str, int] = {}
        self.violations: list[str] = []
        if self.task is Task.COMPLETION:
            self._force_feed(self.spec.partial)

    def _force_feed(self, layout) -> None:
        for i, e in enumerate(layout.elements):
            if i > 0:
                self.advance(self.vocab.SEP)
            self.advance(self.vocab.category_id(e.category))
            for b in (e.box.x, e.box.y, e.box.w, e.box.h):
                self.advance(self.vocab.coord_id(b))

    @property
    def done(self) -> bool:
        return self.slot is Slot.DONE

    def clone(self) -> "Fsm":
        twin = object.__new__(Fsm)
        twin.vocab = self.vocab
        twin.spec = self.spec
        twin.task = self.task
        twin.schedule = self.schedule
        twin.slot = self.slot
        twin.element_index = self.element_index
        twin.decoded = list(self.decoded)
        twin.partial = dict(self.partial)
        twin.violations = list(self.violations)
        return twin

    # --- feasibility ------------------------------------------------------
    def feasible(self) -> FeasibleSet:
        """Tokens permitted next. May be empty only for unsatisfiable Gen-R slots."""
        if self.done:
            raise FsmStateError("FSM already reached its final state")
        vocab = self.vocab
        mask = np.zeros(vocab.size, dtype=bool)
        if self.slot is Slot.CATEGORY:
            if self.schedule is not None:
                mask[vocab.category_id(self.schedule[self.element_index])] = True
            else:
                mask |= vocab.category_mask()
        elif self.slot in _COORD_SLOTS:
            attr = self.slot.value
            if self.task is Task.GEN_TS and attr in ("w", "h"):
                w, h = self.spec.sizes[self.element_index]
                mask[vocab.coord_id(w if attr == "w" else h)] = True
            elif self.task is Task.GEN_R:
                bins_ok = relation_bounds(
                    self.decoded, self.partial, self.spec, self.element_index, attr, vocab.bins
                )
                mask[vocab.coord_base : vocab.relation_base] = bins_ok
            else:
                mask |= vocab.coord_mask()
        elif self.slot is Slot.SEP_OR_EOS:
            produced = self.element_index + 1
            if self.schedule is not None:
                if produced < len(self.schedule):
                    mask[vocab.SEP] = True
                else:
                    mask[vocab.EOS] = True
            else:
                mask[vocab.EOS] = True
                if produced < vocab.max_elements:
                    mask[vocab.SEP] = True
        return FeasibleSet(mask)

    def slot_group_mask(self) -> np.ndarray:
        """The unconstrained token group for the current slot (Gen-R fallback)."""
        if self.done:
            raise FsmStateError("FSM already reached its final state")
        vocab = self.vocab
        mask = np.zeros(vocab.size, dtype=bool)
        if self.slot is Slot.CATEGORY:
            mask |= vocab.category_mask()
        elif self.slot in _COORD_SLOTS:
            mask |= vocab.coord_mask()
        else:
            mask[vocab.SEP] = True
            mask[vocab.EOS] = True
        return mask

    def decoding_mask(self) -> np.ndarray:
        """Feasible mask with the documented fallback: an unsatisfiable slot
        falls back to its whole token group and records a violation."""
        feasible = self.feasible()
        if not feasible.empty:
            return feasible.allowed
        self.violations.append(
            f"unsatisfiable constraints at element {self.element_index} slot {self.slot.value}"
        )
        return self.slot_group_mask()

    # --- transitions --------------------------------------------------------
    def advance(self, token: int) -> None:
        """Consume one token and move to the next state.

        Tokens outside the slot's vocabulary group are hard grammar errors;
        tokens in the right group but outside the feasible set advance the
        machine and are recorded as violations.
        """
        if self.done:
            raise FsmStateError("cannot advance a finished FSM")
        vocab = self.vocab
        if self.slot is Slot.CATEGORY:
            if not vocab.is_category(token):
                raise GrammarError(
                    f"expected a category token, got {vocab.token_repr(token)}"
                )
            scheduled = (
                self.schedule[self.element_index] if self.schedule is not None else None
            )
            category = vocab.category_of(token)
            if scheduled is not None and category != scheduled:
                self.violations.append(
                    f"element {self.element_index}: category "
                    f"{vocab.categories.name(category)} violates scheduled "
                    f"{vocab.categories.name(scheduled)}"
                )
            self.partial = {}
            self.slot = Slot.X
            return
        if self.slot in _COORD_SLOTS:
            if not vocab.is_coord(token):
                raise GrammarError(
                    f"expected a coordinate token, got {vocab.token_repr(token)}"
                )
            attr = self.slot.value
            value = vocab.coord_of(token)
            feasible = self.feasible()
            # An empty set means decoding_mask already recorded the fallback.
            if not feasible.empty and not feasible.allowed[token]:
                self.violations.append(
                    f"element {self.element_index}: {attr}={value} violates constraints"
                )
            self.partial[attr] = value
            if self.slot is Slot.H:
                self.decoded.append(
                    QuantizedBox(
                        self.partial["x"], self.partial["y"], self.partial["w"], self.partial["h"]
                    )
                )
                self.slot = Slot.SEP_OR_EOS
            else:
                self.slot = _NEXT_SLOT[self.slot]
            return
        # separator slot
        if token not in (vocab.SEP, vocab.EOS):
            raise GrammarError(
                f"expected separator or <eos>, got {vocab.token_repr(token)}"
            )
        if not self.feasible().allowed[token]:
            self.violations.append(
                f"element count violation: "
                f"{'<eos>' if token == vocab.EOS else 'separator'} after "
                f"{self.element_index + 1} elements"
            )
        if token == vocab.EOS:
            self.slot = Slot.DONE
        else:
            self.element_index += 1
            self.partial = {}
            self.slot = Slot.CATEGORY
