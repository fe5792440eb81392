"""Layout quality metrics: mIoU, alignment, overlap, FID and violation rate.

Geometry is evaluated in normalized coordinates. Positions map to bin
centers; widths and heights map to ``bin / bins`` so that bin 0 means an
exactly empty extent and degenerate elements contribute zero area. Higher
mIoU is better; the other three improve downwards.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import tensor as T
from .core import CategorySet, InvalidInputError, Layout, dequantize
from .model import ModelConfig, TransformerModel
from .relations import relation_holds
from .vocab import ConstraintSpec, Vocabulary, add_refinement_noise, encode_layout


@dataclass(frozen=True)
class MetricReport:
    miou: float
    alignment: float
    overlap: float
    fid: float
    violation_rate: float | None
    n_generated: int
    n_references: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "miou": self.miou,
                "alignment": self.alignment,
                "overlap": self.overlap,
                "fid": self.fid,
                "violation_rate": self.violation_rate,
                "n_generated": self.n_generated,
                "n_references": self.n_references,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, payload: str) -> "MetricReport":
        return cls(**json.loads(payload))


def _rect(element, bins: int) -> tuple[float, float, float, float]:
    """(x0, y0, x1, y1) in normalized space; zero bins give zero extent."""
    b = element.box
    x0 = dequantize(b.x, bins)
    y0 = dequantize(b.y, bins)
    return (x0, y0, x0 + b.w / bins, y0 + b.h / bins)


def _rect_area(r: tuple[float, float, float, float]) -> float:
    return (r[2] - r[0]) * (r[3] - r[1])


def _intersection(a, b) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    return max(iw, 0.0) * max(ih, 0.0)


def _iou(a, b) -> float:
    if a == b:
        return 1.0  # a box matches itself even when its area is zero
    inter = _intersection(a, b)
    union = _rect_area(a) + _rect_area(b) - inter
    return inter / union if union > 0 else 0.0


def layout_similarity(a: Layout, b: Layout, bins: int = 128) -> float:
    """Mean IoU under the best category-respecting assignment of boxes.

    Boxes are matched per category with the Hungarian algorithm; unmatched
    boxes count as IoU 0 over max(|a|, |b|) slots.
    """
    by_cat_a: dict[int, list] = defaultdict(list)
    by_cat_b: dict[int, list] = defaultdict(list)
    for e in a.elements:
        by_cat_a[e.category].append(_rect(e, bins))
    for e in b.elements:
        by_cat_b[e.category].append(_rect(e, bins))
    total = 0.0
    for cat, rects_a in by_cat_a.items():
        rects_b = by_cat_b.get(cat)
        if not rects_b:
            continue
        scores = np.array([[_iou(ra, rb) for rb in rects_b] for ra in rects_a])
        rows, cols = linear_sum_assignment(-scores)
        total += float(scores[rows, cols].sum())
    return total / max(len(a), len(b))


def layout_similarity_bruteforce(a: Layout, b: Layout, bins: int = 128) -> float:
    """Exhaustive-permutation oracle for layout_similarity; N <= ~8 only."""
    by_cat_a: dict[int, list] = defaultdict(list)
    by_cat_b: dict[int, list] = defaultdict(list)
    for e in a.elements:
        by_cat_a[e.category].append(_rect(e, bins))
    for e in b.elements:
        by_cat_b[e.category].append(_rect(e, bins))
    total = 0.0
    for cat, rects_a in by_cat_a.items():
        rects_b = by_cat_b.get(cat)
        if not rects_b:
            continue
        if len(rects_a) <= len(rects_b):
            small, large, flip = rects_a, rects_b, False
        else:
            small, large, flip = rects_b, rects_a, True
        best = 0.0
        for perm in permutations(range(len(large)), len(small)):
            score = sum(
                _iou(small[i], large[j]) if not flip else _iou(large[j], small[i])
                for i, j in enumerate(perm)
            )
            best = max(best, score)
        total += best
    return total / max(len(a), len(b))


def miou(generated: Sequence[Layout], references: Sequence[Layout], bins: int = 128) -> float:
    """Mean, over generated layouts, of the best similarity to a reference.

    Candidates are restricted to references sharing the category multiset,
    falling back to the whole reference corpus when none match.
    """
    if not generated or not references:
        raise InvalidInputError("miou requires non-empty corpora")
    by_multiset: dict[tuple[int, ...], list[Layout]] = defaultdict(list)
    for ref in references:
        by_multiset[ref.category_multiset()].append(ref)
    total = 0.0
    for g in generated:
        candidates = by_multiset.get(g.category_multiset()) or references
        total += max(layout_similarity(g, ref, bins) for ref in candidates)
    return total / len(generated)


_ANCHORS = (
    lambda r: r[0],  # left
    lambda r: (r[0] + r[2]) / 2,  # x center
    lambda r: r[2],  # right
    lambda r: r[1],  # top
    lambda r: (r[1] + r[3]) / 2,  # y center
    lambda r: r[3],  # bottom
)


def alignment(layout: Layout, bins: int = 128) -> float:
    """Mean over elements of the distance to the nearest shared anchor line.

    For each element, take the minimum absolute difference to any other
    element over six anchors (left/center/right edges in x, top/center/bottom
    in y), then average over elements. A single element scores 0.
    """
    if len(layout) < 2:
        return 0.0
    rects = [_rect(e, bins) for e in layout.elements]
    total = 0.0
    for i, ri in enumerate(rects):
        best = math.inf
        for j, rj in enumerate(rects):
            if i == j:
                continue
            for anchor in _ANCHORS:
                best = min(best, abs(anchor(ri) - anchor(rj)))
        total += best
    return total / len(rects)


def overlap(layout: Layout, cats: CategorySet, bins: int = 128) -> float:
    """Mean covered-area ratio over ordered pairs of non-background elements.

    For each non-background element i, sums intersection(i, j) / area(i) over
    the other non-background elements j, then divides by the element count.
    Zero-area elements contribute 0.
    """
    rects = [
        _rect(e, bins) for e in layout.elements if not cats.is_background(e.category)
    ]
    if len(rects) <= 1:
        return 0.0
    total = 0.0
    for i, ri in enumerate(rects):
        area = _rect_area(ri)
        if area <= 0:
            continue
        for j, rj in enumerate(rects):
            if i != j:
                total += _intersection(ri, rj) / area
    return total / len(rects)


class FeatureNetTrainingError(RuntimeError):
    """The feature extractor failed to reach the required held-out accuracy."""


class FeatureNet:
    """Transformer-encoder features for FID: layouts in, pooled vectors out.

    Internally a binary classifier (real layouts vs noise-perturbed copies);
    the feature map is the mean-pooled penultimate activation.
    """

    def __init__(self, vocab: Vocabulary, dim: int = 32, seed: int = 0):
        self.vocab = vocab
        self.dim = dim
        config = ModelConfig(
            layers=1,
            heads=2,
            d_model=dim,
            d_ff=4 * dim,
            max_input_len=8 + 6 * vocab.max_elements,
            max_output_len=8,
            architecture="dec",
            dropout=0.0,
        )
        self.model = TransformerModel(config, vocab.size, pad_id=vocab.PAD, seed=seed)
        rng = np.random.default_rng(seed)
        self.head_w = T.Tensor(rng.normal(0.0, 0.02, size=(dim, 2)), requires_grad=True)
        self.head_b = T.Tensor(np.zeros(2), requires_grad=True)

    def _pooled(self, batch_ids: np.ndarray) -> T.Tensor:
        # Reuse the decoder-only stream as a bidirectional encoder by pooling.
        ids = np.asarray(batch_ids)
        x = self.model._embed(ids, "pos")
        mask = self.model._key_pad_mask(ids, self.vocab.PAD)
        for i in range(self.model.config.layers):
            normed = self.model._ln(f"dec.{i}.ln1", x)
            x = T.add(x, self.model._attend(f"dec.{i}.self", normed, normed, mask))
            x = T.add(x, self.model._ff(f"dec.{i}.ff", self.model._ln(f"dec.{i}.ln2", x)))
        x = self.model._ln("dec.ln", x)
        keep = (ids != self.vocab.PAD).astype(np.float64)
        weights = keep / keep.sum(axis=1, keepdims=True)
        pooled = T.matmul(T.transpose(x, (0, 2, 1)), T.Tensor(weights[:, :, None]))
        return T.reshape(pooled, (ids.shape[0], self.dim))

    def _logits(self, batch_ids: np.ndarray) -> T.Tensor:
        pooled = self._pooled(batch_ids)
        return T.add(T.matmul(pooled, self.head_w), self.head_b)

    def _encode_batch(self, layouts: Sequence[Layout]) -> np.ndarray:
        seqs = [encode_layout(l, self.vocab).ids for l in layouts]
        width = max(len(s) for s in seqs)
        out = np.full((len(seqs), width), self.vocab.PAD, dtype=np.int64)
        for i, s in enumerate(seqs):
            out[i, : len(s)] = s
        return out

    def features(self, layouts: Sequence[Layout]) -> np.ndarray:
        """Deterministic D-dimensional feature per layout."""
        return self._pooled(self._encode_batch(layouts)).data.copy()

    def parameters(self) -> dict[str, T.Tensor]:
        return {**self.model.params, "head.w": self.head_w, "head.b": self.head_b}


def train_feature_net(
    real: Sequence[Layout],
    vocab: Vocabulary,
    rng: np.random.Generator,
    dim: int = 32,
    noise_std: float = 0.05,
    target_accuracy: float = 0.9,
    max_epochs: int = 40,
) -> FeatureNet:
    """Fit the FID feature extractor on real-vs-noised discrimination.

    Raises FeatureNetTrainingError if held-out accuracy never reaches the
    target within the epoch budget.
    """
    if len(real) < 200:
        raise InvalidInputError(f"feature net needs >= 200 layouts, got {len(real)}")
    net = FeatureNet(vocab, dim=dim, seed=int(rng.integers(2**31)))
    noised = [add_refinement_noise(l, noise_std, rng, vocab.bins) for l in real]
    layouts = list(real) + noised
    labels = np.array([0] * len(real) + [1] * len(noised))
    order = rng.permutation(len(layouts))
    split = int(0.8 * len(layouts))
    train_idx, held_idx = order[:split], order[split:]
    params = net.parameters()
    optimizer = T.Adam(params, lr=1e-3)
    batch = 32
    accuracy = 0.0
    for _ in range(max_epochs):
        epoch_order = rng.permutation(train_idx)
        for start in range(0, len(epoch_order), batch):
            idx = epoch_order[start : start + batch]
            ids = net._encode_batch([layouts[int(i)] for i in idx])
            logits = net._logits(ids)
            loss = T.cross_entropy(logits, labels[idx])
            T.backward(loss)
            optimizer.step()
        held_ids = net._encode_batch([layouts[int(i)] for i in held_idx])
        predictions = net._logits(held_ids).data.argmax(axis=1)
        accuracy = float((predictions == labels[held_idx]).mean())
        if accuracy >= target_accuracy:
            return net
    raise FeatureNetTrainingError(
        f"held-out accuracy {accuracy:.3f} below {target_accuracy} after {max_epochs} epochs"
    )


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Fréchet distance between Gaussians fit to two feature sets.

    The trace of the cross term uses an eigendecomposition of the symmetrized
    product, with negative eigenvalues clamped to zero; the result is floored
    at zero.
    """
    features_a = np.asarray(features_a, dtype=np.float64)
    features_b = np.asarray(features_b, dtype=np.float64)
    d = features_a.shape[1]
    if features_b.shape[1] != d:
        raise InvalidInputError("feature dimensions differ")
    if features_a.shape[0] <= d or features_b.shape[0] <= d:
        raise InvalidInputError(
            f"need more than {d} samples per set for a usable covariance"
        )
    mu_a, mu_b = features_a.mean(axis=0), features_b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(features_a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(features_b, rowvar=False))
    return frechet_gaussian(mu_a, cov_a, mu_b, cov_b)


def frechet_gaussian(
    mu_a: np.ndarray, cov_a: np.ndarray, mu_b: np.ndarray, cov_b: np.ndarray
) -> float:
    """Fréchet distance between two Gaussians given their moments."""
    root_a = _psd_sqrt(cov_a)
    cross = _psd_sqrt(root_a @ cov_b @ root_a)
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return max(value, 0.0)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    sym = 0.5 * (matrix + matrix.T)
    eigenvalues, eigenvectors = np.linalg.eigh(sym)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T


def violation_rate(generated: Sequence[Layout | None], specs: Sequence[ConstraintSpec]) -> float:
    """Fraction of requested relationships the generated layouts break.

    Out-of-range indices (layout too short) and unparseable layouts count as
    violations; the predicates match the ones the FSM enforces.
    """
    if len(generated) != len(specs):
        raise InvalidInputError("generated layouts and specs must align")
    violated = 0
    total = 0
    for layout, spec in zip(generated, specs):
        for rel in spec.relationships or ():
            total += 1
            if layout is None or rel.a >= len(layout) or rel.b >= len(layout):
                violated += 1
                continue
            if not relation_holds(
                rel.relation, layout.elements[rel.a].box, layout.elements[rel.b].box
            ):
                violated += 1
    return violated / total if total else 0.0
