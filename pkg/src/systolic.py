"""Cycle-accurate simulation of layer modules and of the multi-layer pipeline.

A layer module is a buffer chain feeding a PE crossbar, followed by a
column accumulation pipeline, the neuron block and a hand-off register.
One input vector enters per cycle; outputs leave in the same row-major
order the inputs arrived in, so every output feeds the next module
directly. Skip and branch streams reach their concatenation point through
bypass delay lines sized by `compute_schedule`.
"""

import logging
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.errors import (
    DimensionMismatch,
    SimulationStalled,
    StreamOverrun,
    UnalignableStreams,
    ValueOutOfRange,
)
from src.models import LayerKind
from src.netmodel import (
    NETWORK_INPUT,
    BinaryKernelSet,
    Layer,
    LayerShape,
    NetworkGraph,
    NeuronParams,
    SkipEdge,
    map_kernels,
    require_valid,
)
from src.neuron import check_word_width, if_update_bank

logger = logging.getLogger(__name__)

NEURON_STAGES = 1
HANDOFF_STAGES = 1


def pe_product(s: int, w_bar: int) -> int:
    """PE output {w_bar & s, s} read as a two-bit two's complement number.

    `w_bar` is the inverted weight bit held in the PE flip-flop (weight -1
    is stored as 0, so w_bar = 1 means -1).
    """
    msb = w_bar & s
    return -2 * msb + s


class SpikeWord(NamedTuple):
    """One valid word on a stream: position (step, x, y) and its spike bits."""

    step: int
    x: int
    y: int
    spikes: np.ndarray


class BufferChain:
    """Shift register of (I-1)W + J cells, each one C-word spike vector.

    Cell positions count from the oldest vector; the tap feeding sub-array
    (j, i) is position i*W + j. The chain shifts only when a valid vector
    arrives.
    """

    def __init__(self, shape: LayerShape):
        self.length = shape.chain_cells
        self.words = shape.C
        self.cells = np.zeros((self.length, shape.C), dtype=np.uint8)
        self.filled = np.zeros(self.length, dtype=bool)
        self._head = 0  # oldest cell
        self.tap_positions = np.array(
            [i * shape.W + j for i in range(shape.I) for j in range(shape.J)], dtype=np.int64
        )

    def shift(self, vector: np.ndarray) -> None:
        self.cells[self._head] = vector
        self.filled[self._head] = True
        self._head = (self._head + 1) % self.length

    def cell(self, position: int) -> Optional[np.ndarray]:
        """Contents of chain position `position`, or None for a bubble."""
        idx = (self._head + position) % self.length
        return self.cells[idx].copy() if self.filled[idx] else None

    def taps(self) -> np.ndarray:
        """(I*J, C) tap vectors ordered by kernel row i, then column j."""
        return self.cells[(self._head + self.tap_positions) % self.length]


class PECrossbar:
    """J x I grid of C x K sub-arrays holding inverted weight bits.

    Each PE ANDs the broadcast spike with its w_bar bit; column adders
    reduce the CJ rows of every kernel-row group, then the I groups.
    """

    def __init__(self, shape: LayerShape, kernels: BinaryKernelSet):
        signed = map_kernels(shape, kernels)
        self.shape = shape
        self.C, self.K, self.I, self.J = shape.C, shape.K, shape.I, shape.J
        self.active = signed != 0
        self.w_bar = (signed < 0).astype(np.uint8)
        # product for s = 1, decoded once; s = 0 always yields 0
        decoded = np.where(self.active, -2 * self.w_bar.astype(np.int64) + 1, 0)
        self._weights = np.ascontiguousarray(
            decoded.reshape(self.J * self.C, self.I, self.K).transpose(1, 0, 2)
        )

    @property
    def rows(self) -> int:
        return self.shape.pe_rows

    @property
    def cols(self) -> int:
        return self.shape.pe_cols

    def product(self, row: int, col: int, s: int) -> int:
        if not self.active[row, col]:
            return 0
        return pe_product(int(s), int(self.w_bar[row, col]))

    def accumulate(self, taps: np.ndarray) -> np.ndarray:
        """K weighted sums for one window of tap vectors."""
        rows = taps.reshape(self.I, self.J * self.C).astype(np.int64)
        group_sums = np.einsum("ir,irk->ik", rows, self._weights)
        return group_sums.sum(axis=0)


class LayerModuleState:
    """Full simulated state of one layer module."""

    def __init__(
        self,
        layer: Layer,
        index: int = 0,
        accum_delay: Optional[int] = None,
        time_steps: int = 1,
    ):
        shape = layer.shape
        self.index = index
        self.layer = layer
        self.shape = shape
        self.accum_delay = settings.ACCUM_DELAY if accum_delay is None else accum_delay
        if self.accum_delay < 0:
            raise ValueOutOfRange(f"accumulation delay must be >= 0, got {self.accum_delay}")
        self.time_steps = time_steps

        self.chain = BufferChain(shape)
        self.crossbar = PECrossbar(shape, layer.kernels)

        # local buffer: one neuron record per (k, x, y)
        self.potentials = layer.neuron.potentials(shape.K, shape.X, shape.Y)
        self.thresholds = layer.neuron.thresholds(shape.K)
        self.biases = layer.neuron.biases(shape.K)
        self.reset_mode = layer.neuron.reset_mode

        self._stages = deque([None] * (self.accum_delay + NEURON_STAGES))
        self._handoff: Optional[SpikeWord] = None

        self.cycle = 0
        self.fetches = 0
        self.valid_outputs = 0
        self.local_reads = 0
        self.local_writes = 0

    @property
    def depth(self) -> int:
        """Cycles from this module's input port to the next module's input port."""
        return layer_depth(self.accum_delay)

    @property
    def local_buffer_capacity(self) -> int:
        return self.potentials.size

    @property
    def expected_outputs(self) -> int:
        return self.time_steps * self.shape.output_positions

    @property
    def drained(self) -> bool:
        return (
            self.valid_outputs >= self.expected_outputs
            and self._handoff is None
            and all(item is None for item in self._stages)
        )

    def step(self, vector: Optional[np.ndarray]) -> Optional[SpikeWord]:
        """Advance one cycle with an input vector (or None for a bubble)."""
        out = self._handoff
        done = self._stages.popleft()
        self._handoff = self._fire(done) if done is not None else None
        self._stages.append(self._accept(vector))
        self.cycle += 1
        if out is not None:
            self.valid_outputs += 1
        return out

    def _accept(self, vector: Optional[np.ndarray]):
        if vector is None:
            return None
        vector = np.asarray(vector, dtype=np.uint8)
        if vector.shape != (self.shape.C,):
            raise DimensionMismatch(
                f"layer {self.index}: input vector has shape {vector.shape}, expected ({self.shape.C},)"
            )
        frame = self.shape.input_positions
        if self.fetches >= self.time_steps * frame:
            raise StreamOverrun(
                f"layer {self.index}: more than {frame} vectors per time step over {self.time_steps} step(s)"
            )
        n = self.fetches
        self.fetches += 1
        self.chain.shift(vector)

        t, p = divmod(n, frame)
        r, c = divmod(p, self.shape.W)
        if r < self.shape.I - 1 or c < self.shape.J - 1:
            return None  # window not fully inside the frame
        sums = self.crossbar.accumulate(self.chain.taps())
        return (t, r - self.shape.I + 1, c - self.shape.J + 1, sums)

    def _fire(self, item) -> SpikeWord:
        t, x, y, sums = item
        record = self.potentials[:, x, y]
        self.local_reads += 1
        spikes = if_update_bank(record, sums, self.thresholds, self.biases, self.reset_mode)
        self.local_writes += 1
        return SpikeWord(t, x, y, spikes)


def layer_depth(accum_delay: Optional[int] = None) -> int:
    accum_delay = settings.ACCUM_DELAY if accum_delay is None else accum_delay
    return accum_delay + NEURON_STAGES + HANDOFF_STAGES


def build_layer_module(
    shape: LayerShape,
    kind: LayerKind,
    kernels: BinaryKernelSet,
    neuron_params: NeuronParams,
    accum_delay: Optional[int] = None,
    time_steps: int = 1,
    index: int = 0,
) -> LayerModuleState:
    """Build one layer module: chain sized (I-1)W+J, kernels mapped, neurons initialized."""
    layer = Layer(kind=kind, shape=shape, kernels=kernels, neuron=neuron_params)
    require_valid(NetworkGraph(layers=[layer]))
    module = LayerModuleState(layer, index=index, accum_delay=accum_delay, time_steps=time_steps)
    logger.debug(
        f"Layer {index}: chain {module.chain.length} cells x {shape.C} words, "
        f"PE array {module.crossbar.rows}x{module.crossbar.cols}"
    )
    return module


class DelayLine:
    """Bypass buffer of a fixed number of cells."""

    def __init__(self, cells: int):
        self.cells = cells
        self._line = deque([None] * cells)

    def push(self, word: Optional[SpikeWord]) -> Optional[SpikeWord]:
        if self.cells == 0:
            return word
        self._line.append(word)
        return self._line.popleft()

    @property
    def empty(self) -> bool:
        return all(word is None for word in self._line)


@dataclass
class PipelineSchedule:
    """Stream offsets relative to the fetch of the completing input vector.

    `in_offsets[l]` is the cycle layer l's concatenated input is complete,
    `out_offsets[l]` the cycle its output reaches the next input port, and
    `delays[(l, slot)]` the bypass cells on input slot `slot` of layer l.
    """

    depth: int
    in_offsets: List[int]
    out_offsets: List[int]
    delays: Dict[Tuple[int, int], int]

    @property
    def fill(self) -> int:
        return self.out_offsets[-1] if self.out_offsets else 0


def compute_schedule(graph: NetworkGraph, accum_delay: Optional[int] = None) -> PipelineSchedule:
    """Offsets and bypass delays shared by the simulator and the latency model."""
    depth = layer_depth(accum_delay)
    out = {NETWORK_INPUT: 0}
    in_offsets, out_offsets = [], []
    delays: Dict[Tuple[int, int], int] = {}
    for idx in range(len(graph.layers)):
        sources = graph.sources(idx)
        arrive = max(out[s] for s in sources)
        for slot, source in enumerate(sources):
            delays[(idx, slot)] = arrive - out[source]
        in_offsets.append(arrive)
        out[idx] = arrive + depth
        out_offsets.append(out[idx])
    return PipelineSchedule(depth=depth, in_offsets=in_offsets, out_offsets=out_offsets, delays=delays)


def compute_bypass_delay(
    graph: NetworkGraph, edge: SkipEdge, accum_delay: Optional[int] = None
) -> int:
    """Delay cells that align the bypassed stream with the computed stream at `edge.dest`.

    Each skipped layer contributes its depth (hand-off register included).
    """
    dest = graph.layers[edge.dest].shape
    source = graph.stream_shape(edge.source)
    if source[1:] != (dest.H, dest.W):
        raise UnalignableStreams(
            f"skip {edge.source}->{edge.dest}: {source[1]}x{source[2]} stream cannot join a {dest.H}x{dest.W} input"
        )
    if edge not in graph.skips:
        graph = replace(graph, skips=list(graph.skips) + [edge])
    schedule = compute_schedule(graph, accum_delay)
    out_source = 0 if edge.source == NETWORK_INPUT else schedule.out_offsets[edge.source]
    delay = schedule.in_offsets[edge.dest] - out_source
    logger.debug(f"Bypass delay for skip {edge.source}->{edge.dest}: {delay} cells")
    return delay


@dataclass
class CycleStats:
    """Cycle-level latency and utilization counters of one run."""

    total_cycles: int = 0
    time_steps: int = 0
    cycles_per_step: float = 0.0
    input_fetches: int = 0
    fill_depth: int = 0
    first_output_cycle: Optional[int] = None
    accum_delay: int = 0
    layer_depth: int = 0
    layer_fetches: List[int] = field(default_factory=list)
    layer_valid_outputs: List[int] = field(default_factory=list)
    layer_utilization: List[float] = field(default_factory=list)
    local_buffer_reads: List[int] = field(default_factory=list)
    local_buffer_writes: List[int] = field(default_factory=list)
    bypass_delays: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceEvent:
    cycle: int
    layer: int
    kind: str  # "fetch" or "fire"
    position: Tuple[int, int, int]  # (step, x, y)
    value: str  # spike bits, channel 0 first


@dataclass
class SimulationResult:
    counts: np.ndarray
    stats: CycleStats
    trace: Optional[List[List[np.ndarray]]] = None
    events: Optional[List[TraceEvent]] = None


class SystolicNetwork:
    """Layer modules chained with single-cycle hand-off and bypass delay lines."""

    def __init__(self, graph: NetworkGraph, accum_delay: Optional[int] = None, time_steps: int = 1):
        require_valid(graph)
        self.graph = graph
        self.schedule = compute_schedule(graph, accum_delay)
        self.modules = [
            LayerModuleState(layer, index=idx, accum_delay=accum_delay, time_steps=time_steps)
            for idx, layer in enumerate(graph.layers)
        ]
        self.sources = [graph.sources(idx) for idx in range(len(graph))]
        self.delay_lines = {key: DelayLine(cells) for key, cells in self.schedule.delays.items()}

    @property
    def drained(self) -> bool:
        return all(m.drained for m in self.modules) and all(d.empty for d in self.delay_lines.values())

    def step(self, word: Optional[SpikeWord]) -> List[Optional[SpikeWord]]:
        """One clock cycle; returns every module's output word."""
        outputs: Dict[int, Optional[SpikeWord]] = {NETWORK_INPUT: word}
        for idx, module in enumerate(self.modules):
            words = [
                self.delay_lines[(idx, slot)].push(outputs[source])
                for slot, source in enumerate(self.sources[idx])
            ]
            outputs[idx] = module.step(self._concatenate(idx, words))
        return [outputs[idx] for idx in range(len(self.modules))]

    @staticmethod
    def _concatenate(idx: int, words: Sequence[Optional[SpikeWord]]) -> Optional[np.ndarray]:
        present = [w for w in words if w is not None]
        if not present:
            return None
        head = present[0]
        if len(present) != len(words) or any((w.step, w.x, w.y) != (head.step, head.x, head.y) for w in present):
            positions = [None if w is None else (w.step, w.x, w.y) for w in words]
            raise UnalignableStreams(f"layer {idx}: concatenated streams out of step: {positions}")
        if len(words) == 1:
            return head.spikes
        return np.concatenate([w.spikes for w in words])


def _frames(graph: NetworkGraph, inputs: Sequence[np.ndarray], T: int) -> List[np.ndarray]:
    if T > len(inputs):
        raise DimensionMismatch(f"T={T} but only {len(inputs)} input frames were given")
    expected = graph.input_shape
    frames = []
    for t in range(T):
        frame = np.asarray(inputs[t])
        if frame.shape != expected:
            raise DimensionMismatch(f"input frame {t} has shape {frame.shape}, expected {expected}")
        if np.any((frame != 0) & (frame != 1)):
            raise ValueOutOfRange(f"input frame {t} is not a binary spike tensor")
        frames.append(frame.astype(np.uint8))
    return frames


def run_network(
    graph: NetworkGraph,
    inputs: Sequence[np.ndarray],
    T: Optional[int] = None,
    accum_delay: Optional[int] = None,
    record_trace: bool = False,
    record_events: bool = False,
) -> SimulationResult:
    """Stream T spike frames back to back through the pipeline and drain it once."""
    T = len(inputs) if T is None else T
    frames = _frames(graph, inputs, T)
    for idx, layer in enumerate(graph.layers):
        check_word_width(layer.shape, T, layer.neuron, idx)

    net = SystolicNetwork(graph, accum_delay=accum_delay, time_steps=T)
    schedule = net.schedule
    C, H, W = graph.input_shape
    frame_size = H * W
    N = T * frame_size
    limit = N + schedule.fill + sum(schedule.delays.values()) + len(graph) * schedule.depth + 1

    counts = np.zeros(graph.layers[-1].shape.K, dtype=np.int64)
    trace = (
        [[np.zeros((l.shape.K, l.shape.X, l.shape.Y), dtype=np.uint8) for l in graph.layers] for _ in range(T)]
        if record_trace
        else None
    )
    events: Optional[List[TraceEvent]] = [] if record_events else None

    logger.info(f"Simulating '{graph.name}': T={T}, {N} input vectors, {len(graph)} layer modules")
    cycle = 0
    fetched = 0
    first_output = None
    last_output = None
    while fetched < N or not net.drained:
        if cycle > limit:
            raise SimulationStalled(f"pipeline did not drain within {limit} cycles")
        word = None
        if fetched < N:
            t, p = divmod(fetched, frame_size)
            r, c = divmod(p, W)
            word = SpikeWord(t, r, c, frames[t][:, r, c])
            fetched += 1
            if events is not None:
                events.append(TraceEvent(cycle, 0, "fetch", (t, r, c), _bits(word.spikes)))

        outputs = net.step(word)
        for idx, out in enumerate(outputs):
            if out is None:
                continue
            if trace is not None:
                trace[out.step][idx][:, out.x, out.y] = out.spikes
            if events is not None:
                events.append(TraceEvent(cycle, idx, "fire", (out.step, out.x, out.y), _bits(out.spikes)))
        final = outputs[-1]
        if final is not None:
            counts += final.spikes
            last_output = cycle
            if first_output is None:
                first_output = cycle
        cycle += 1

    total = 0 if last_output is None else last_output + 1
    stats = CycleStats(
        total_cycles=total,
        time_steps=T,
        cycles_per_step=total / T if T else 0.0,
        input_fetches=fetched,
        fill_depth=schedule.fill,
        first_output_cycle=first_output,
        accum_delay=net.modules[0].accum_delay,
        layer_depth=schedule.depth,
        layer_fetches=[m.fetches for m in net.modules],
        layer_valid_outputs=[m.valid_outputs for m in net.modules],
        layer_utilization=[m.valid_outputs / total if total else 0.0 for m in net.modules],
        local_buffer_reads=[m.local_reads for m in net.modules],
        local_buffer_writes=[m.local_writes for m in net.modules],
        bypass_delays={f"{dest}:{slot}": cells for (dest, slot), cells in schedule.delays.items() if cells},
    )
    logger.info(f"Simulation done: {total} cycles ({stats.cycles_per_step:.1f} per step)")
    return SimulationResult(counts=counts, stats=stats, trace=trace, events=events)


def _bits(spikes: np.ndarray) -> str:
    return "".join(str(int(b)) for b in spikes)
