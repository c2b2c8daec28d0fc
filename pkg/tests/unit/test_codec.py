"""
Unit Tests for src/codec.py
"""

import numpy as np
import pytest

from src.codec import accuracy, classify, encode
from src.errors import EmptyCounts, ValueOutOfRange
from src.models import EncoderMode, EncoderSpec

pytestmark = pytest.mark.unit


def deterministic(T):
    return EncoderSpec(mode=EncoderMode.DETERMINISTIC, T=T)


def pixel_counts(values, T):
    frames = encode(np.asarray(values, dtype=float).reshape(1, 1, -1), deterministic(T))
    return np.sum(frames, axis=0).reshape(-1)


class TestDeterministicEncoder:
    """Rate-preserving error diffusion."""

    def test_frames_are_binary(self, rng):
        """Test every frame is a uint8 0/1 tensor of the image shape."""
        frames = encode(rng.random((3, 4, 4)), deterministic(12))
        assert len(frames) == 12
        assert all(f.shape == (3, 4, 4) and f.dtype == np.uint8 for f in frames)
        assert all(set(np.unique(f)) <= {0, 1} for f in frames)

    def test_extremes(self):
        """Test 0 never fires and 1 fires every step."""
        image = np.array([0.0, 1.0]).reshape(2, 1, 1)
        counts = np.sum(encode(image, deterministic(25)), axis=0)
        assert counts.reshape(-1).tolist() == [0, 25]

    def test_three_tenths(self):
        """Test 0.3 over 10 steps gives 3 spikes."""
        frames = encode(np.full((1, 1, 1), 0.3), deterministic(10))
        assert int(np.sum(frames)) == 3

    @pytest.mark.parametrize("T", [1, 7, 37, 100])
    def test_count_within_one_of_rate(self, T):
        """Test each pixel count stays within one spike of T*v."""
        values = np.linspace(0.0, 1.0, 101)
        counts = pixel_counts(values, T)
        for v, n in zip(values, counts):
            assert T * v - 1 < n < T * v + 1

    @pytest.mark.parametrize("T", [1, 3, 10, 37, 212])
    def test_count_monotone_in_value(self, T):
        """Test brighter pixels never get fewer spikes."""
        values = np.linspace(0.0, 1.0, 257)
        counts = pixel_counts(values, T)
        assert np.all(np.diff(counts) >= 0)
        assert counts[0] == 0 and counts[-1] == T

    def test_zero_steps(self, rng):
        """Test T = 0 yields no frames."""
        assert encode(rng.random((1, 2, 2)), deterministic(0)) == []

    def test_out_of_range_values(self):
        """Test values outside [0, 1] and NaN are rejected."""
        with pytest.raises(ValueOutOfRange):
            encode(np.full((1, 2, 2), 1.5), deterministic(4))
        with pytest.raises(ValueOutOfRange):
            encode(np.full((1, 2, 2), np.nan), deterministic(4))

    def test_wrong_rank(self):
        """Test a 2-D image is rejected."""
        with pytest.raises(ValueOutOfRange):
            encode(np.zeros((4, 4)), deterministic(4))


class TestBernoulliEncoder:
    """Seeded independent draws."""

    def test_seed_reproducible(self, rng):
        """Test the same seed gives the same frames."""
        image = rng.random((2, 5, 5))
        spec = EncoderSpec(mode=EncoderMode.BERNOULLI, T=20, seed=7)
        first, second = encode(image, spec), encode(image, spec)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_seeds_differ(self):
        """Test different seeds give different frames."""
        image = np.full((1, 8, 8), 0.5)
        a = encode(image, EncoderSpec(mode=EncoderMode.BERNOULLI, T=10, seed=1))
        b = encode(image, EncoderSpec(mode=EncoderMode.BERNOULLI, T=10, seed=2))
        assert not all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_mean_rate(self):
        """Test the empirical rate approaches the pixel value."""
        frames = encode(np.full((1, 1, 1), 0.5), EncoderSpec(mode=EncoderMode.BERNOULLI, T=2000, seed=3))
        assert abs(int(np.sum(frames)) / 2000 - 0.5) < 0.05


class TestClassify:
    def test_argmax(self):
        """Test the class is the index of the largest count."""
        assert classify([1, 7, 3]) == 1

    def test_ties_go_to_lowest_index(self):
        """Test ties resolve to the lowest index."""
        assert classify([2, 5, 5, 1]) == 1
        assert classify(np.zeros(10, dtype=np.int64)) == 0

    @pytest.mark.parametrize("offset", [1, 17, 10**6])
    def test_shift_invariant(self, rng, offset):
        """Test adding a constant to every count keeps the class."""
        for _ in range(20):
            counts = rng.integers(0, 50, size=10)
            assert classify(counts + offset) == classify(counts)
        assert classify(np.array([3, 3]) + offset) == 0

    def test_empty(self):
        """Test empty counts are rejected."""
        with pytest.raises(EmptyCounts):
            classify([])


class TestAccuracy:
    def test_fraction_correct(self):
        """Test accuracy is the fraction of matching labels."""
        assert accuracy([1, 2, 3, 4], [1, 0, 3, 0]) == 0.5

    def test_length_mismatch(self):
        """Test mismatched lengths are rejected."""
        with pytest.raises(ValueOutOfRange):
            accuracy([1, 2], [1])
