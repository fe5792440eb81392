from __future__ import annotations

import math

import numpy as np
import pytest

from unilayout.core import Element, Layout, QuantizedBox
from unilayout.relations import RELATIONS, Relationship, relation_holds
from unilayout.vocab import (
    CapacityError,
    ConstraintSpec,
    InvalidConstraintError,
    ParseError,
    Task,
    TokenSequence,
    Vocabulary,
    add_refinement_noise,
    decode_input,
    decode_layout,
    encode_input,
    encode_layout,
    extract_relationships,
    order_elements,
    strip_prefix,
)

from conftest import random_layout


class TestVocabularyLayout:
    def test_groups_are_contiguous_and_disjoint(self, vocab):
        assert vocab.size == 5 + 6 + len(vocab.categories) + 128 + 8 + 20
        seen = set()
        for t in range(vocab.size):
            groups = [
                t in (vocab.PAD, vocab.SOS, vocab.EOS, vocab.SEP, vocab.SEP2),
                vocab.is_prefix(t),
                vocab.is_category(t),
                vocab.is_coord(t),
                vocab.is_relation(t),
                vocab.is_index(t),
            ]
            assert sum(groups) == 1
            seen.add(t)
        assert seen == set(range(vocab.size))

    def test_token_repr_covers_all(self, vocab):
        for t in range(vocab.size):
            assert vocab.token_repr(t)

    def test_shared_coord_group(self, vocab):
        assert vocab.coord_id(0) == vocab.coord_base
        assert vocab.coord_of(vocab.coord_id(99)) == 99


class TestLayoutCodec:
    def test_single_element_length(self, vocab):
        layout = Layout([Element(0, QuantizedBox(1, 2, 3, 4))])
        seq = encode_layout(layout, vocab)
        assert len(seq) == 7
        assert seq.ids[0] == vocab.SOS and seq.ids[-1] == vocab.EOS

    def test_two_element_length_and_sep(self, vocab):
        layout = Layout([Element(0, QuantizedBox(1, 2, 3, 4))] * 2)
        seq = encode_layout(layout, vocab)
        assert len(seq) == 13  # 2 + 6*2 - 1
        assert sum(1 for t in seq.ids if t == vocab.SEP) == 1

    def test_twenty_element_length(self, vocab):
        layout = Layout([Element(0, QuantizedBox(0, 0, 0, 0))] * 20)
        assert len(encode_layout(layout, vocab)) == 121  # 2 + 6*20 - 1

    def test_capacity_error(self, vocab):
        layout = Layout([Element(0, QuantizedBox(0, 0, 0, 0))] * 21)
        with pytest.raises(CapacityError):
            encode_layout(layout, vocab)

    def test_round_trip_random(self, vocab):
        rng = np.random.default_rng(7)
        for _ in range(200):
            layout = random_layout(rng, len(vocab.categories))
            assert decode_layout(encode_layout(layout, vocab), vocab) == layout

    def test_category_where_coordinate_expected(self, vocab):
        ids = [vocab.SOS, vocab.category_id(0), vocab.category_id(1)]
        with pytest.raises(ParseError) as err:
            decode_layout(ids, vocab)
        assert err.value.position == 2

    def test_empty_body_rejected(self, vocab):
        with pytest.raises(ParseError, match="no elements"):
            decode_layout([vocab.SOS, vocab.EOS], vocab)

    def test_dangling_separator(self, vocab):
        good = encode_layout(Layout([Element(0, QuantizedBox(1, 2, 3, 4))]), vocab)
        ids = list(good.ids[:-1]) + [vocab.SEP, vocab.EOS]
        with pytest.raises(ParseError, match="dangling"):
            decode_layout(ids, vocab)

    def test_missing_eos(self, vocab):
        good = encode_layout(Layout([Element(0, QuantizedBox(1, 2, 3, 4))]), vocab)
        with pytest.raises(ParseError):
            decode_layout(good.ids[:-1], vocab)

    def test_json_round_trip(self, vocab):
        seq = TokenSequence([1, 2, 3], role="input", task=Task.GEN_T)
        again = TokenSequence.from_json(seq.to_json(), role="input")
        assert again.ids == seq.ids and again.task is Task.GEN_T


class TestInputCodec:
    def test_ugen_is_sos_eos(self, vocab):
        seq = encode_input(ConstraintSpec(Task.UGEN), vocab)
        assert seq.ids == (vocab.SOS, vocab.EOS)

    def test_gen_t_alphabetic(self, vocab):
        spec = ConstraintSpec(Task.GEN_T, types=("text", "image"))
        seq = encode_input(spec, vocab)
        image, text = vocab.categories.index("image"), vocab.categories.index("text")
        assert seq.ids == (
            vocab.SOS,
            vocab.category_id(image),
            vocab.SEP,
            vocab.category_id(text),
            vocab.EOS,
        )

    def test_gen_ts_carries_sizes_with_types(self, vocab):
        spec = ConstraintSpec(
            Task.GEN_TS, types=("text", "image"), sizes=((10, 11), (20, 21))
        )
        seq = encode_input(spec, vocab)
        # image sorts first and keeps its own (20, 21) size
        assert seq.ids[1] == vocab.category_id(vocab.categories.index("image"))
        assert seq.ids[2] == vocab.coord_id(20) and seq.ids[3] == vocab.coord_id(21)

    def test_gen_r_template(self, vocab):
        spec = ConstraintSpec(
            Task.GEN_R,
            types=("image", "text"),
            relationships=(Relationship(0, 1, "above"),),
        )
        seq = encode_input(spec, vocab)
        image, text = vocab.categories.index("image"), vocab.categories.index("text")
        assert seq.ids == (
            vocab.SOS,
            vocab.category_id(image),
            vocab.SEP,
            vocab.category_id(text),
            vocab.SEP2,
            vocab.category_id(image),
            vocab.index_id(0),
            vocab.relation_id("above"),
            vocab.category_id(text),
            vocab.index_id(1),
            vocab.EOS,
        )

    def test_gen_r_reindexes_after_sorting(self, vocab):
        # "text" is given first but sorts after "image"; indices must follow.
        spec = ConstraintSpec(
            Task.GEN_R,
            types=("text", "image"),
            relationships=(Relationship(0, 1, "above"),),
        )
        canonical = spec.canonical(vocab.categories)
        assert canonical.types == ("image", "text")
        assert canonical.relationships == (Relationship(1, 0, "above"),)

    def test_refinement_and_completion_use_layout_format(self, vocab):
        layout = Layout([Element(2, QuantizedBox(5, 6, 7, 8))])
        body = encode_layout(layout, vocab).ids
        assert encode_input(ConstraintSpec(Task.REFINEMENT, draft=layout), vocab).ids == body
        assert encode_input(ConstraintSpec(Task.COMPLETION, partial=layout), vocab).ids == body

    def test_prefix_transparency(self, vocab):
        for task, spec in _specs_for_all_tasks(vocab).items():
            plain = encode_input(spec, vocab, with_prefix=False)
            prefixed = encode_input(spec, vocab, with_prefix=True)
            assert prefixed.ids[0] == vocab.task_prefix_id(task)
            assert strip_prefix(prefixed, vocab).ids == plain.ids

    def test_input_round_trip_all_tasks(self, vocab):
        for task, spec in _specs_for_all_tasks(vocab).items():
            seq = encode_input(spec, vocab, with_prefix=True)
            again = decode_input(seq, vocab)
            assert again == spec.canonical(vocab.categories)

    def test_malformed_specs_rejected(self, vocab):
        with pytest.raises(InvalidConstraintError):
            ConstraintSpec(Task.GEN_T).validate(vocab)  # missing types
        with pytest.raises(InvalidConstraintError):
            ConstraintSpec(Task.UGEN, types=("text",)).validate(vocab)  # extra field
        with pytest.raises(InvalidConstraintError):
            ConstraintSpec(
                Task.GEN_TS, types=("text",), sizes=((1, 2), (3, 4))
            ).validate(vocab)
        with pytest.raises(InvalidConstraintError):
            ConstraintSpec(
                Task.GEN_R,
                types=("text", "image"),
                relationships=(Relationship(0, 5, "above"),),
            ).validate(vocab)
        with pytest.raises(CapacityError):
            ConstraintSpec(Task.GEN_T, types=("text",) * 21).validate(vocab)


class TestOrdering:
    def test_alphabetic(self, vocab):
        text = Element(vocab.categories.index("text"), QuantizedBox(0, 0, 1, 1))
        image = Element(vocab.categories.index("image"), QuantizedBox(5, 5, 1, 1))
        layout = Layout([text, image])
        ordered = order_elements(layout, "alphabetic", vocab.categories)
        assert [e.category for e in ordered.elements] == [image.category, text.category]

    def test_position_sorts_by_x_then_y(self, vocab):
        a = Element(0, QuantizedBox(10, 0, 1, 1))
        b = Element(1, QuantizedBox(5, 9, 1, 1))
        c = Element(2, QuantizedBox(5, 2, 1, 1))
        ordered = order_elements(Layout([a, b, c]), "position", vocab.categories)
        assert [e.category for e in ordered.elements] == [2, 1, 0]

    def test_stability_on_ties(self, vocab):
        elements = [Element(0, QuantizedBox(3, 3, i, i)) for i in range(5)]
        layout = Layout(elements)
        for policy in ("alphabetic", "position"):
            ordered = order_elements(layout, policy, vocab.categories)
            assert list(ordered.elements) == elements

    def test_permutation_preserved(self, vocab):
        rng = np.random.default_rng(3)
        for _ in range(50):
            layout = random_layout(rng, len(vocab.categories))
            ordered = order_elements(layout, "alphabetic", vocab.categories)
            assert sorted(ordered.elements, key=str) == sorted(layout.elements, key=str)


class TestRefinementNoise:
    def test_zero_std_is_identity(self, vocab):
        rng = np.random.default_rng(0)
        layout = random_layout(rng, len(vocab.categories))
        assert add_refinement_noise(layout, 0.0, rng) == layout

    def test_seeded_determinism(self, vocab):
        layout = random_layout(np.random.default_rng(1), len(vocab.categories))
        a = add_refinement_noise(layout, 0.01, np.random.default_rng(42))
        b = add_refinement_noise(layout, 0.01, np.random.default_rng(42))
        assert a == b

    def test_mean_displacement_matches_half_normal(self, vocab):
        # E|N(0, s)| = s * sqrt(2/pi); in bins: 0.01 * 128 * 0.7979 ~= 1.021
        rng = np.random.default_rng(9)
        layout = Layout(
            [Element(0, QuantizedBox(40, 40, 30, 30)) for _ in range(10_000)]
        )
        noisy = add_refinement_noise(layout, 0.01, rng)
        displacement = [
            abs(a.box.x - b.box.x)
            for a, b in zip(layout.elements, noisy.elements)
        ]
        expected = 0.01 * 128 * math.sqrt(2 / math.pi)
        assert abs(np.mean(displacement) - expected) < 0.1 * expected

    def test_categories_unchanged(self, vocab):
        rng = np.random.default_rng(2)
        layout = random_layout(rng, len(vocab.categories))
        noisy = add_refinement_noise(layout, 0.05, rng)
        assert [e.category for e in noisy.elements] == [e.category for e in layout.elements]


class TestExtractRelationships:
    def test_single_element_yields_nothing(self, vocab):
        layout = Layout([Element(0, QuantizedBox(0, 0, 10, 10))])
        assert extract_relationships(layout, 1.0, np.random.default_rng(0)) == ()

    def test_full_sampling_gets_every_true_relation(self, vocab):
        a = Element(0, QuantizedBox(0, 0, 10, 10))
        b = Element(1, QuantizedBox(0, 50, 10, 10))
        layout = Layout([a, b])
        rels = extract_relationships(layout, 1.0, np.random.default_rng(0))
        expected = {
            Relationship(0, 1, r)
            for r in RELATIONS
            if relation_holds(r, a.box, b.box)
        }
        assert set(rels) == expected
        assert Relationship(0, 1, "above") in expected

    def test_fully_above_yields_above(self, vocab):
        a = Element(0, QuantizedBox(0, 0, 10, 10))  # bottom edge 10
        b = Element(1, QuantizedBox(0, 10, 10, 10))  # top edge 10
        rels = extract_relationships(Layout([a, b]), 1.0, np.random.default_rng(0))
        assert Relationship(0, 1, "above") in rels

    def test_sample_count_is_ceil(self, vocab):
        rng = np.random.default_rng(5)
        layout = random_layout(rng, len(vocab.categories), n_elements=6)
        full = extract_relationships(layout, 1.0, np.random.default_rng(1))
        partial = extract_relationships(layout, 0.1, np.random.default_rng(1))
        assert len(partial) == math.ceil(0.1 * len(full))
        assert set(partial) <= set(full)


def _specs_for_all_tasks(vocab) -> dict[Task, ConstraintSpec]:
    layout = Layout(
        [
            Element(vocab.categories.index("text"), QuantizedBox(4, 80, 40, 20)),
            Element(vocab.categories.index("image"), QuantizedBox(4, 10, 60, 60)),
        ]
    )
    return {
        Task.UGEN: ConstraintSpec(Task.UGEN),
        Task.GEN_T: ConstraintSpec(Task.GEN_T, types=("text", "image")),
        Task.GEN_TS: ConstraintSpec(
            Task.GEN_TS, types=("text", "image"), sizes=((40, 20), (60, 60))
        ),
        Task.GEN_R: ConstraintSpec(
            Task.GEN_R,
            types=("text", "image"),
            relationships=(Relationship(1, 0, "above"),),
        ),
        Task.REFINEMENT: ConstraintSpec(Task.REFINEMENT, draft=layout),
        Task.COMPLETION: ConstraintSpec(
            Task.COMPLETION, partial=Layout(layout.elements[:1])
        ),
    }
