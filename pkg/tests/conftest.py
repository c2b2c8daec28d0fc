"""Shared fixtures and configuration for all tests."""

from pathlib import Path

import numpy as np
import pytest

from src.models import LayerKind, ResetMode
from src.netmodel import (
    Layer,
    LayerShape,
    NetworkGraph,
    NeuronParams,
    SkipEdge,
    infer_shapes,
    load_network,
    random_kernels,
)

ROOT = Path(__file__).resolve().parent.parent
NETWORKS_DIR = ROOT / "config" / "networks"
SWEEPS_DIR = ROOT / "config" / "sweeps"

KINDS = [LayerKind.CONV, LayerKind.DEPTHWISE, LayerKind.FC, LayerKind.AVGPOOL]


def make_random_graph(rng: np.random.Generator, with_skips: bool = True, max_layers: int = 4) -> NetworkGraph:
    """Random legal network: 1-4 layers of any kind, C,K <= 8, H,W <= 10, optional skips."""
    C = int(rng.integers(1, 5))
    H = int(rng.integers(1, 11))
    W = int(rng.integers(1, 11))
    reset_mode = ResetMode.SUBTRACTIVE if rng.random() < 0.5 else ResetMode.TO_ZERO

    streams = {-1: (C, H, W)}
    channels, h, w = C, H, W
    layers, skips = [], []
    for idx in range(int(rng.integers(1, max_layers + 1))):
        extra = []
        if with_skips and idx >= 1 and rng.random() < 0.5:
            candidates = [s for s in range(-1, idx - 1) if streams[s][1:] == (h, w)]
            if candidates:
                extra.append(int(candidates[int(rng.integers(len(candidates)))]))
        C_in = channels + sum(streams[s][0] for s in extra)
        if C_in > 8:
            extra, C_in = [], channels

        kind = KINDS[int(rng.integers(len(KINDS)))]
        if kind == LayerKind.FC:
            I = J = 1
        else:
            I = int(rng.integers(1, min(h, 3) + 1))
            J = int(rng.integers(1, min(w, 3) + 1))
        K = C_in if kind in (LayerKind.DEPTHWISE, LayerKind.AVGPOOL) else int(rng.integers(1, 9))

        if kind == LayerKind.AVGPOOL:
            threshold = I * J
        elif rng.random() < 0.3:
            threshold = tuple(int(v) for v in rng.integers(1, 5, size=K))
        else:
            threshold = int(rng.integers(1, 5))
        neuron = NeuronParams(
            threshold=threshold,
            bias=int(rng.integers(-1, 2)),
            initial_potential=int(rng.integers(-1, 2)),
            reset_mode=reset_mode,
        )
        layers.append(Layer(kind, LayerShape(C=C_in, H=h, W=w, I=I, J=J, K=K), neuron=neuron))
        skips.extend(SkipEdge(s, idx) for s in extra)

        h, w, channels = h - I + 1, w - J + 1, K
        streams[idx] = (K, h, w)

    graph = infer_shapes(NetworkGraph(layers=layers, skips=skips, name="random"))
    return random_kernels(graph, rng)


def random_frames(rng: np.random.Generator, graph: NetworkGraph, T: int, density: float = 0.5) -> np.ndarray:
    return (rng.random((T,) + graph.input_shape) < density).astype(np.uint8)


@pytest.fixture
def rng():
    """Seeded generator so every test run sees the same draws."""
    return np.random.default_rng(20240611)


@pytest.fixture
def networks_dir():
    return NETWORKS_DIR


@pytest.fixture
def sweeps_dir():
    return SWEEPS_DIR


@pytest.fixture
def five_conv_graph(rng):
    """The five-layer reference network with random kernels."""
    return random_kernels(load_network(NETWORKS_DIR / "five_conv.yaml"), rng)


@pytest.fixture
def random_graph_factory():
    return make_random_graph


@pytest.fixture
def frames_factory():
    return random_frames


def single_layer(kind=LayerKind.CONV, kernels=None, neuron=None, **dims) -> NetworkGraph:
    """One-layer graph from explicit dims; X, Y are inferred."""
    layer = Layer(kind, LayerShape(**dims), kernels=kernels, neuron=neuron or NeuronParams())
    graph = infer_shapes(NetworkGraph(layers=[layer]))
    return graph


@pytest.fixture
def single_layer_graph():
    return single_layer
