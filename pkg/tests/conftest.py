from __future__ import annotations

import numpy as np
import pytest

from unilayout.core import CategorySet, Element, Layout, QuantizedBox
from unilayout.vocab import Vocabulary


@pytest.fixture(scope="session")
def cats() -> CategorySet:
    return CategorySet(
        ["background", "button", "icon", "image", "text"],
        background_labels=["background"],
    )


@pytest.fixture(scope="session")
def vocab(cats) -> Vocabulary:
    return Vocabulary(cats)


def random_layout(
    rng: np.random.Generator,
    n_categories: int,
    bins: int = 128,
    max_elements: int = 20,
    n_elements: int | None = None,
) -> Layout:
    count = n_elements or int(rng.integers(1, max_elements + 1))
    elements = []
    for _ in range(count):
        x = int(rng.integers(0, bins))
        y = int(rng.integers(0, bins))
        elements.append(
            Element(
                int(rng.integers(0, n_categories)),
                QuantizedBox(
                    x,
                    y,
                    int(rng.integers(0, bins - x)) if bins - x > 0 else 0,
                    int(rng.integers(0, bins - y)) if bins - y > 0 else 0,
                ),
            )
        )
    return Layout(elements)
