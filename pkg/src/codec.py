"""Spike encoding of real-valued inputs and spike-count readout."""

import logging
from typing import List, Sequence

import numpy as np

from src.errors import EmptyCounts, ValueOutOfRange
from src.models import EncoderMode, EncoderSpec

logger = logging.getLogger(__name__)

# Fixed-point accumulator: 24 fractional bits
ACCUMULATOR_FRACTION_BITS = 24
_ONE = 1 << ACCUMULATOR_FRACTION_BITS


def _check_image(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ValueOutOfRange(f"image must be C x H x W, got shape {image.shape}")
    if not np.all(np.isfinite(image)) or image.min(initial=0.0) < 0.0 or image.max(initial=0.0) > 1.0:
        raise ValueOutOfRange("image values must lie in [0, 1]")
    return image


def encode(image, spec: EncoderSpec) -> List[np.ndarray]:
    """Turn a C x H x W image in [0, 1] into T binary spike frames."""
    image = _check_image(image)

    if spec.mode == EncoderMode.BERNOULLI:
        rng = np.random.default_rng(spec.seed)
        draws = rng.random((spec.T,) + image.shape)
        return [(draws[t] < image).astype(np.uint8) for t in range(spec.T)]

    # error diffusion; values round up so a pixel never falls below floor(T*v) spikes
    step = np.ceil(image * _ONE).astype(np.int64)
    acc = np.zeros(image.shape, dtype=np.int64)
    frames = []
    for _ in range(spec.T):
        acc += step
        fired = acc >= _ONE
        acc[fired] -= _ONE
        frames.append(fired.astype(np.uint8))
    return frames


def classify(counts: Sequence[int]) -> int:
    """Index of the largest count; ties go to the lowest index."""
    counts = np.asarray(counts)
    if counts.size == 0:
        raise EmptyCounts("cannot classify an empty count vector")
    return int(np.argmax(counts))


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    if len(predictions) != len(labels):
        raise ValueOutOfRange(f"{len(predictions)} predictions for {len(labels)} labels")
    if len(predictions) == 0:
        return 0.0
    hits = sum(int(p) == int(l) for p, l in zip(predictions, labels))
    return hits / len(predictions)
