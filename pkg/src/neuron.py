"""Integrate-and-fire neuron dynamics shared by the oracle and the systolic simulator."""

import logging
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from src.errors import PotentialOverflow
from src.models import ResetMode
from src.netmodel import LayerShape, NeuronParams

logger = logging.getLogger(__name__)

# Neuron records in the local buffer are modeled as signed 64-bit words.
POTENTIAL_WORD_BITS = 64


@dataclass
class NeuronState:
    """Membrane potential of one neuron plus the parameters of its output channel."""

    potential: int
    params: NeuronParams
    channel: int = 0

    @property
    def threshold(self) -> int:
        return _channel_value(self.params.threshold, self.channel)

    @property
    def bias(self) -> int:
        return _channel_value(self.params.bias, self.channel)


def _channel_value(value, channel: int) -> int:
    # scalars broadcast to every channel
    flat = np.asarray(value).reshape(-1)
    return int(flat[channel] if flat.size > 1 else flat[0])


def if_update(state: NeuronState, u: int) -> int:
    """One time step: V += u + bias; fire when V >= threshold.

    At most one spike per step. Subtractive reset removes one threshold,
    ToZero clears the potential.
    """
    threshold = state.threshold
    state.potential += int(u) + state.bias
    if state.potential >= threshold:
        if state.params.reset_mode == ResetMode.SUBTRACTIVE:
            state.potential -= threshold
        else:
            state.potential = 0
        return 1
    return 0


def if_update_bank(
    potentials: np.ndarray,
    sums: np.ndarray,
    thresholds: np.ndarray,
    biases: np.ndarray,
    reset_mode: ResetMode,
) -> np.ndarray:
    """Vectorized if_update. `potentials` is updated in place; returns uint8 spikes.

    `thresholds` and `biases` must broadcast against `potentials`.
    """
    potentials += sums
    potentials += biases
    fired = potentials >= thresholds
    if reset_mode == ResetMode.SUBTRACTIVE:
        potentials -= np.where(fired, thresholds, 0)
    else:
        potentials[fired] = 0
    return fired.astype(np.uint8)


def spike_train(state: NeuronState, inputs: Iterable[int]) -> List[int]:
    """Drive one neuron with a sequence of weighted sums."""
    return [if_update(state, u) for u in inputs]


def potential_word_bits(
    shape: LayerShape, T: int, threshold: int, bias: int = 0, initial_potential: int = 0
) -> int:
    """Signed word width that holds every reachable membrane potential.

    Each step adds at most C*I*J + |bias| in magnitude, so after T steps
    |V| <= |V0| + T*(C*I*J + |bias|) + threshold.
    """
    bound = abs(initial_potential) + T * (shape.C * shape.I * shape.J + abs(bias)) + abs(threshold)
    return int(bound).bit_length() + 1


def check_word_width(
    shape: LayerShape,
    T: int,
    params: NeuronParams,
    layer_index: int = 0,
) -> int:
    """Raise PotentialOverflow when a layer could exceed the neuron record width."""
    K = shape.K
    bits = potential_word_bits(
        shape,
        T,
        int(np.max(np.abs(params.thresholds(K)))),
        int(np.max(np.abs(params.biases(K)))),
        int(np.max(np.abs(params.potentials(K, shape.X, shape.Y)))),
    )
    if bits > POTENTIAL_WORD_BITS:
        raise PotentialOverflow(
            f"layer {layer_index}: membrane potential needs {bits} bits, record holds {POTENTIAL_WORD_BITS}"
        )
    logger.debug(f"Layer {layer_index}: membrane word width {bits} bits for T={T}")
    return bits
