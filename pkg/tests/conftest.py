from __future__ import annotations

import numpy as np
import pytest

import harness
from imagecore import BinaryImage


@pytest.fixture
def make_shape():
    """Asymmetric lines + circles shape, no speckle, inside the inscribed disc."""

    def factory(size: int = 128, seed: int = 1) -> BinaryImage:
        return harness.generate_shape("composite", size, size, seed, density=0.0)

    return factory


@pytest.fixture
def shape(make_shape) -> BinaryImage:
    return make_shape()


def relative_l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).sum() / np.abs(a).sum())
