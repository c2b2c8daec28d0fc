"""Brute-force reference implementations of every layer and of time-stepped inference.

Deliberately naive: these are the ground truth the systolic simulator is
checked against, not a fast path.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from src.errors import DimensionMismatch, KindMismatch
from src.models import LayerKind
from src.netmodel import NETWORK_INPUT, BinaryKernelSet, Layer, LayerShape, NetworkGraph, require_valid
from src.neuron import check_word_width, if_update_bank

logger = logging.getLogger(__name__)


def _check_input(S: np.ndarray, shape: LayerShape) -> np.ndarray:
    S = np.asarray(S)
    if S.shape != (shape.C, shape.H, shape.W):
        raise DimensionMismatch(f"spike tensor {S.shape} does not match C,H,W={(shape.C, shape.H, shape.W)}")
    return S.astype(np.int64)


def conv2d_ref(S: np.ndarray, kernels: BinaryKernelSet, shape: LayerShape) -> np.ndarray:
    """O[k, x, y] = sum over c, i, j of W[k, c, i, j] * S[c, x+i, y+j].

    The six loops run with (i, j) outermost. For a fixed (i, j) the inner
    k, x, y, c loops are exactly
    ``O[k, x, y] += sum_c W[k, c, i, j] * S[c, x+i, y+j]``, which is the
    ``kc,cxy->kxy`` contraction on int64 operands: same terms, same integer
    sum, only the loop order differs.
    """
    S = _check_input(S, shape)
    if kernels.depthwise or kernels.values.shape != (shape.K, shape.C, shape.I, shape.J):
        raise DimensionMismatch(
            f"kernel set {kernels.values.shape} does not match K,C,I,J={(shape.K, shape.C, shape.I, shape.J)}"
        )
    W = kernels.values.astype(np.int64)
    X, Y = shape.X, shape.Y
    O = np.zeros((shape.K, X, Y), dtype=np.int64)
    for i in range(shape.I):
        for j in range(shape.J):
            O += np.einsum("kc,cxy->kxy", W[:, :, i, j], S[:, i : i + X, j : j + Y])
    return O


def depthwise_ref(S: np.ndarray, kernels: BinaryKernelSet, shape: LayerShape) -> np.ndarray:
    """O[k, x, y] = sum over i, j of W[k, k, i, j] * S[k, x+i, y+j]."""
    if shape.K != shape.C:
        raise KindMismatch(f"depthwise layer needs K == C, got K={shape.K}, C={shape.C}")
    if not kernels.depthwise:
        raise KindMismatch("depthwise layer needs a per-channel kernel set")
    S = _check_input(S, shape)
    if kernels.values.shape != (shape.K, 1, shape.I, shape.J):
        raise DimensionMismatch(f"kernel set {kernels.values.shape} does not match K,I,J")
    W = kernels.values[:, 0].astype(np.int64)
    X, Y = shape.X, shape.Y
    O = np.zeros((shape.K, X, Y), dtype=np.int64)
    for i in range(shape.I):
        for j in range(shape.J):
            O += W[:, i, j, None, None] * S[:, i : i + X, j : j + Y]
    return O


def fc_ref(S: np.ndarray, kernels: BinaryKernelSet, shape: LayerShape) -> np.ndarray:
    """Fully connected layer: a convolution with a 1x1 kernel."""
    if shape.I != 1 or shape.J != 1:
        raise KindMismatch(f"fc layer needs I == J == 1, got {shape.I}x{shape.J}")
    return conv2d_ref(S, kernels, shape)


def avgpool_ref(S: np.ndarray, kernels: Optional[BinaryKernelSet], shape: LayerShape) -> np.ndarray:
    """Sum pooling: depthwise with all-ones weights. The division lives in the neuron threshold."""
    if kernels is not None and np.any(kernels.values != 1):
        raise KindMismatch("avgpool weights must all be +1")
    ones = BinaryKernelSet.ones(shape.K, shape.C, shape.I, shape.J, depthwise=True)
    return depthwise_ref(S, ones, shape)


_REFERENCE_OPS = {
    LayerKind.CONV: conv2d_ref,
    LayerKind.DEPTHWISE: depthwise_ref,
    LayerKind.FC: fc_ref,
    LayerKind.AVGPOOL: avgpool_ref,
}


def layer_sums(layer: Layer, S: np.ndarray) -> np.ndarray:
    """Weighted sums of one layer via the kind-appropriate reference op."""
    return _REFERENCE_OPS[layer.kind](S, layer.kernels, layer.shape)


@dataclass
class ForwardResult:
    """Per-class counts and, when requested, trace[t][l] = (K, X, Y) spikes of layer l at step t."""

    counts: np.ndarray
    trace: Optional[List[List[np.ndarray]]] = None


class ReferenceNetwork:
    """Holds the membrane state of every layer across time steps."""

    def __init__(self, graph: NetworkGraph):
        require_valid(graph)
        self.graph = graph
        self.sources = [graph.sources(l) for l in range(len(graph))]
        self.potentials = [
            layer.neuron.potentials(layer.shape.K, layer.shape.X, layer.shape.Y)
            for layer in graph.layers
        ]
        self.thresholds = [layer.neuron.thresholds(layer.shape.K)[:, None, None] for layer in graph.layers]
        self.biases = [layer.neuron.biases(layer.shape.K)[:, None, None] for layer in graph.layers]

    def step(self, frame: np.ndarray) -> List[np.ndarray]:
        """Advance one time step; returns every layer's output spikes."""
        outputs = {NETWORK_INPUT: np.asarray(frame, dtype=np.uint8)}
        for idx, layer in enumerate(self.graph.layers):
            S = np.concatenate([outputs[s] for s in self.sources[idx]], axis=0)
            sums = layer_sums(layer, S)
            outputs[idx] = if_update_bank(
                self.potentials[idx],
                sums,
                self.thresholds[idx],
                self.biases[idx],
                layer.neuron.reset_mode,
            )
        return [outputs[idx] for idx in range(len(self.graph))]


def snn_forward_ref(
    graph: NetworkGraph,
    inputs: Sequence[np.ndarray],
    T: Optional[int] = None,
    record_trace: bool = False,
) -> ForwardResult:
    """Time-stepped reference inference.

    Membrane potentials persist across steps; skip and branch sources are
    concatenated channel-wise; final-layer spikes are summed over all
    positions into per-class counts.
    """
    net = ReferenceNetwork(graph)
    T = len(inputs) if T is None else T
    if T > len(inputs):
        raise DimensionMismatch(f"T={T} but only {len(inputs)} input frames were given")
    for idx, layer in enumerate(graph.layers):
        check_word_width(layer.shape, T, layer.neuron, idx)

    expected = graph.input_shape
    last = graph.layers[-1].shape
    counts = np.zeros(last.K, dtype=np.int64)
    trace: Optional[List[List[np.ndarray]]] = [] if record_trace else None

    for t in range(T):
        frame = np.asarray(inputs[t])
        if frame.shape != expected:
            raise DimensionMismatch(f"input frame {t} has shape {frame.shape}, expected {expected}")
        outputs = net.step(frame)
        counts += outputs[-1].sum(axis=(1, 2), dtype=np.int64)
        if trace is not None:
            trace.append(outputs)

    logger.debug(f"Reference inference done: T={T}, counts={counts.tolist()}")
    return ForwardResult(counts=counts, trace=trace)
