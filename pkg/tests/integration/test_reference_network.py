"""
Integration Tests: the five-layer reference network

Shapes, area, and simulated latency at the three reference time-step
counts, checked against the closed-form model.
"""

import numpy as np
import pytest

from src.codec import encode
from src.costmodel import latency_model, network_area
from src.models import EncoderMode, EncoderSpec
from src.oracle import snn_forward_ref
from src.systolic import run_network

pytestmark = pytest.mark.integration

REFERENCE_CYCLES = {37: 9487, 90: 23055, 212: 54287}


def reference_frames(rng, T):
    image = rng.random((3, 16, 16))
    return encode(image, EncoderSpec(mode=EncoderMode.BERNOULLI, T=T, seed=11))


class TestReferenceNetwork:
    def test_layer_shapes(self, five_conv_graph):
        """Test the reference network's layer outputs."""
        assert [(l.shape.K, l.shape.X, l.shape.Y) for l in five_conv_graph.layers] == [
            (16, 14, 14),
            (16, 12, 12),
            (16, 10, 10),
            (16, 8, 8),
            (6, 6, 6),
        ]

    def test_area(self, five_conv_graph):
        """Test the reference network's total area."""
        report = network_area(five_conv_graph)
        assert report.total_um2 == 2080455
        assert report.total_mm2 == pytest.approx(2.080455)

    def test_latency_per_step(self, five_conv_graph, rng):
        """Test three steps take 3*256 + 15 cycles and first output lands at cycle 185."""
        result = run_network(five_conv_graph, reference_frames(rng, 3), accum_delay=1)
        assert result.stats.total_cycles == 3 * 256 + 15
        # final output (0, 0) waits on input pixel (10, 10), plus five layer depths
        assert result.stats.first_output_cycle == 10 * 16 + 10 + 15

    @pytest.mark.slow
    @pytest.mark.parametrize("T", sorted(REFERENCE_CYCLES))
    def test_reference_time_steps(self, five_conv_graph, rng, T):
        """Test simulated cycles at 37, 90 and 212 steps."""
        frames = reference_frames(rng, T)
        result = run_network(five_conv_graph, frames, accum_delay=1)
        expected = REFERENCE_CYCLES[T]
        assert abs(result.stats.total_cycles - expected) / expected <= 0.10
        assert result.stats.total_cycles == latency_model(five_conv_graph, T, accum_delay=1).cycles
        assert result.stats.input_fetches == T * 256
        assert np.array_equal(result.counts, snn_forward_ref(five_conv_graph, frames).counts)
