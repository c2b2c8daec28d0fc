"""Network graph representation, shape inference, legality checks and kernel mapping."""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import ValidationError

from src.config import settings
from src.errors import (
    ChannelMismatch,
    ConfigError,
    DimensionMismatch,
    IngestError,
    InvalidNetwork,
    InvalidWeights,
    ShapeUnderflow,
)
from src.models import LayerKind, NetworkConfig, ResetMode

logger = logging.getLogger(__name__)

NETWORK_INPUT = -1
SHAPE_FIELDS = ("C", "H", "W", "I", "J", "K", "X", "Y")
CHANNELWISE_KINDS = (LayerKind.DEPTHWISE, LayerKind.AVGPOOL)


@dataclass(frozen=True)
class LayerShape:
    """Convolution shape parameters of one layer module (stride 1, no padding)."""

    C: Optional[int] = None
    H: Optional[int] = None
    W: Optional[int] = None
    I: Optional[int] = None
    J: Optional[int] = None
    K: Optional[int] = None
    X: Optional[int] = None
    Y: Optional[int] = None
    stride: int = 1
    padding: int = 0

    @property
    def is_complete(self) -> bool:
        return all(getattr(self, name) is not None for name in SHAPE_FIELDS)

    @property
    def chain_cells(self) -> int:
        """Buffer chain length, (I-1)W + J cells of C words."""
        return (self.I - 1) * self.W + self.J

    @property
    def pe_rows(self) -> int:
        return self.C * self.J

    @property
    def pe_cols(self) -> int:
        return self.K * self.I

    @property
    def input_positions(self) -> int:
        return self.H * self.W

    @property
    def output_positions(self) -> int:
        return self.X * self.Y

    def with_outputs(self) -> "LayerShape":
        """Fill X, Y from H, W, I, J."""
        X = self.H - self.I + 1
        Y = self.W - self.J + 1
        if X < 1 or Y < 1:
            raise ShapeUnderflow(
                f"kernel {self.I}x{self.J} does not fit input {self.H}x{self.W}"
            )
        return replace(self, X=X, Y=Y)


@dataclass(frozen=True, eq=False)
class BinaryKernelSet:
    """K binary kernels, entries in {-1, +1}; weight -1 is stored as bit 0.

    Conv/FC sets have shape (K, C, I, J). Depthwise sets keep one I x J
    kernel per channel with shape (K, 1, I, J).
    """

    values: np.ndarray
    depthwise: bool = False

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 4:
            raise InvalidWeights(f"kernel set must be 4-D, got shape {values.shape}")
        if not np.all((values == 1) | (values == -1)):
            raise InvalidWeights("kernel entries must be exactly -1 or +1")
        if self.depthwise and values.shape[1] != 1:
            raise InvalidWeights(
                f"depthwise kernel set must have shape (K, 1, I, J), got {values.shape}"
            )
        values = values.astype(np.int8)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def I(self) -> int:
        return self.values.shape[2]

    @property
    def J(self) -> int:
        return self.values.shape[3]

    def to_bits(self) -> np.ndarray:
        """Stored-bit view: +1 -> 1, -1 -> 0."""
        return (self.values > 0).astype(np.uint8)

    @classmethod
    def from_bits(cls, bits: np.ndarray, depthwise: bool = False) -> "BinaryKernelSet":
        bits = np.asarray(bits)
        return cls(np.where(bits > 0, 1, -1).astype(np.int8), depthwise=depthwise)

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        K: int,
        C: int,
        I: int,
        J: int,
        depthwise: bool = False,
    ) -> "BinaryKernelSet":
        channels = 1 if depthwise else C
        bits = rng.integers(0, 2, size=(K, channels, I, J))
        return cls.from_bits(bits, depthwise=depthwise)

    @classmethod
    def ones(cls, K: int, C: int, I: int, J: int, depthwise: bool = False) -> "BinaryKernelSet":
        channels = 1 if depthwise else C
        return cls(np.ones((K, channels, I, J), dtype=np.int8), depthwise=depthwise)

    def dense(self, C: Optional[int] = None) -> np.ndarray:
        """Full (K, C, I, J) weights; depthwise kernels sit on the channel diagonal, zeros elsewhere."""
        if not self.depthwise:
            return self.values
        C = self.K if C is None else C
        if C != self.K:
            raise DimensionMismatch(f"depthwise kernel set has K={self.K} but C={C}")
        full = np.zeros((self.K, C, self.I, self.J), dtype=np.int8)
        idx = np.arange(self.K)
        full[idx, idx] = self.values[:, 0]
        return full

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryKernelSet):
            return NotImplemented
        return self.depthwise == other.depthwise and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NeuronParams:
    """IF neuron parameters; scalars broadcast over output channels / neurons."""

    threshold: Union[int, Tuple[int, ...]] = 1
    bias: Union[int, Tuple[int, ...]] = 0
    initial_potential: Union[int, np.ndarray] = 0
    reset_mode: ResetMode = ResetMode.SUBTRACTIVE

    @staticmethod
    def _per_channel(value, K: int, name: str) -> np.ndarray:
        arr = np.asarray(value, dtype=np.int64)
        if arr.ndim == 0:
            return np.full(K, int(arr), dtype=np.int64)
        if arr.shape != (K,):
            raise DimensionMismatch(f"{name} has {arr.size} entries, expected {K}")
        return arr.copy()

    def thresholds(self, K: int) -> np.ndarray:
        return self._per_channel(self.threshold, K, "threshold")

    def biases(self, K: int) -> np.ndarray:
        return self._per_channel(self.bias, K, "bias")

    def potentials(self, K: int, X: int, Y: int) -> np.ndarray:
        """Fresh (K, X, Y) membrane potentials."""
        arr = np.asarray(self.initial_potential, dtype=np.int64)
        if arr.ndim == 0:
            return np.full((K, X, Y), int(arr), dtype=np.int64)
        if arr.shape != (K, X, Y):
            raise DimensionMismatch(
                f"initial_potential has shape {arr.shape}, expected {(K, X, Y)}"
            )
        return arr.copy()


@dataclass
class Layer:
    """One layer module: kind, shape, weights and neuron parameters."""

    kind: LayerKind
    shape: LayerShape
    kernels: Optional[BinaryKernelSet] = None
    neuron: NeuronParams = field(default_factory=NeuronParams)
    name: str = ""

    def kernel_shape(self) -> Tuple[int, int, int, int]:
        """Expected (K, C or 1, I, J) of this layer's kernel set."""
        s = self.shape
        channels = 1 if self.kind in CHANNELWISE_KINDS else s.C
        return (s.K, channels, s.I, s.J)


@dataclass(frozen=True)
class SkipEdge:
    """Output of `source` (-1 = network input) concatenated into the input of `dest`."""

    source: int
    dest: int
    order: Optional[int] = None


@dataclass(frozen=True)
class BranchGroup:
    fanout: int
    chains: Tuple[Tuple[int, ...], ...]
    merge: int


@dataclass(frozen=True)
class Violation:
    """One legality violation; `layer` is None for graph-level problems."""

    layer: Optional[int]
    fields: Tuple[str, ...]
    message: str

    def __str__(self) -> str:
        where = "network" if self.layer is None else f"layer {self.layer}"
        return f"{where} [{', '.join(self.fields)}]: {self.message}"


@dataclass
class NetworkGraph:
    """Ordered layer modules plus skip edges and branch groups."""

    layers: List[Layer] = field(default_factory=list)
    skips: List[SkipEdge] = field(default_factory=list)
    branches: List[BranchGroup] = field(default_factory=list)
    name: str = "network"

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def output_index(self) -> int:
        return len(self.layers) - 1

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        s = self.layers[0].shape
        return (s.C, s.H, s.W)

    def sources(self, index: int) -> List[int]:
        """Ordered streams concatenated channel-wise into layer `index`."""
        base = [index - 1]
        for group in self.branches:
            if index == group.merge:
                base = [chain[-1] for chain in group.chains if chain]
            else:
                for chain in group.chains:
                    if chain and chain[0] == index:
                        base = [group.fanout]
        extras = sorted(
            (s for s in self.skips if s.dest == index),
            key=lambda s: (s.order is None, s.order or 0, s.source),
        )
        result = list(base)
        for skip in extras:
            pos = len(result) if skip.order is None else min(skip.order, len(result))
            result.insert(pos, skip.source)
        return result

    def consumers(self, index: int) -> List[int]:
        return [l for l in range(len(self.layers)) if index in self.sources(l)]

    def stream_shape(self, source: int) -> Tuple[Optional[int], Optional[int], Optional[int]]:
        """(channels, height, width) of a stream; -1 is the network input."""
        if source == NETWORK_INPUT:
            s = self.layers[0].shape
            return (s.C, s.H, s.W)
        s = self.layers[source].shape
        return (s.K, s.X, s.Y)


def infer_shapes(graph: NetworkGraph) -> NetworkGraph:
    """Fill X, Y for every layer and chain C, H, W from the producers.

    Layer 0 must carry C, H, W. Given values that disagree with the
    producers raise ChannelMismatch; kernels larger than the input raise
    ShapeUnderflow.
    """
    if not graph.layers:
        raise InvalidNetwork([Violation(None, ("layers",), "network has no layers")])

    inferred: List[Layer] = []
    for idx, layer in enumerate(graph.layers):
        shape = layer.shape
        if idx > 0:
            shape = _chain_from_producers(graph, inferred, idx, shape)
        elif None in (shape.C, shape.H, shape.W):
            raise ChannelMismatch("layer 0: C, H and W must be given")

        I, J, K = shape.I, shape.J, shape.K
        if layer.kind == LayerKind.FC:
            I = 1 if I is None else I
            J = 1 if J is None else J
        if J is None:
            J = I
        if K is None and layer.kind in CHANNELWISE_KINDS:
            K = shape.C
        if I is None or K is None:
            raise DimensionMismatch(f"layer {idx}: kernel height I and kernel count K are required")

        complete = replace(shape, I=I, J=J, K=K)
        try:
            with_xy = replace(complete, X=None, Y=None).with_outputs()
        except ShapeUnderflow as e:
            raise ShapeUnderflow(f"layer {idx}: {e}") from e
        for name in ("X", "Y"):
            given = getattr(shape, name)
            if given is not None and given != getattr(with_xy, name):
                raise DimensionMismatch(
                    f"layer {idx}: {name}={given} but the shape implies {getattr(with_xy, name)}"
                )
        inferred.append(replace(layer, shape=with_xy))

    return replace(graph, layers=inferred)


def _chain_from_producers(
    graph: NetworkGraph, inferred: Sequence[Layer], idx: int, shape: LayerShape
) -> LayerShape:
    partial = replace(graph, layers=list(inferred) + list(graph.layers[len(inferred):]))
    channels = 0
    spatial = None
    for source in graph.sources(idx):
        if not NETWORK_INPUT <= source < idx:
            raise ChannelMismatch(f"layer {idx}: source {source} is not upstream")
        C, H, W = partial.stream_shape(source)
        if spatial is not None and (H, W) != spatial:
            raise ChannelMismatch(
                f"layer {idx}: concatenated streams differ spatially ({H}x{W} vs {spatial[0]}x{spatial[1]})"
            )
        spatial = (H, W)
        channels += C

    expected = {"C": channels, "H": spatial[0], "W": spatial[1]}
    for name, value in expected.items():
        given = getattr(shape, name)
        if given is not None and given != value:
            raise ChannelMismatch(f"layer {idx}: {name}={given} but the producers give {value}")
    return replace(shape, **expected)


def validate(graph: NetworkGraph, check_kernels: bool = True) -> List[Violation]:
    """Return every legality violation of `graph`; an empty list means legal."""
    if not graph.layers:
        return [Violation(None, ("layers",), "network has no layers")]

    violations: List[Violation] = []
    n = len(graph.layers)
    shaped = set()

    for idx, layer in enumerate(graph.layers):
        found = _layer_violations(idx, layer, check_kernels)
        violations.extend(found)
        if layer.shape.is_complete and not any(v.fields == ("shape",) for v in found):
            shaped.add(idx)

    violations.extend(_edge_violations(graph))

    consumed = set()
    for idx in range(n):
        sources = graph.sources(idx)
        consumed.update(sources)
        upstream = [s for s in sources if NETWORK_INPUT <= s < idx]
        if len(upstream) != len(sources):
            violations.append(
                Violation(idx, ("sources",), f"sources {sources} are not all strictly upstream")
            )
            continue
        if idx not in shaped or any(s != NETWORK_INPUT and s not in shaped for s in upstream):
            continue
        s = graph.layers[idx].shape
        streams = [graph.stream_shape(src) for src in upstream]
        off = [src for src, shape in zip(upstream, streams) if shape[1:] != (s.H, s.W)]
        if off:
            violations.append(
                Violation(
                    idx,
                    ("H", "W"),
                    f"incoming streams {off} do not match the input plane {s.H}x{s.W}",
                )
            )
        total = sum(shape[0] for shape in streams)
        if total != s.C:
            violations.append(
                Violation(idx, ("C",), f"C={s.C} but incoming streams carry {total} channels")
            )

    for idx in range(n - 1):
        if idx not in consumed:
            violations.append(Violation(idx, ("edges",), "layer output is never consumed"))

    return violations


def _layer_violations(idx: int, layer: Layer, check_kernels: bool) -> List[Violation]:
    s = layer.shape
    missing = [name for name in SHAPE_FIELDS if getattr(s, name) is None]
    if missing:
        return [Violation(idx, ("shape",), f"shape fields {missing} not inferred")]
    small = tuple(name for name in SHAPE_FIELDS if getattr(s, name) < 1)
    if small:
        return [Violation(idx, ("shape",), f"fields {list(small)} must be >= 1")]

    found = []
    if s.X != s.H - s.I + 1 or s.Y != s.W - s.J + 1:
        found.append(Violation(idx, ("X", "Y"), "X, Y must equal H-I+1, W-J+1"))
    if s.stride != 1:
        found.append(Violation(idx, ("stride",), f"stride {s.stride} unsupported, only 1"))
    if s.padding != 0:
        found.append(Violation(idx, ("padding",), f"padding {s.padding} unsupported, only 0"))
    if layer.kind in CHANNELWISE_KINDS and s.K != s.C:
        found.append(Violation(idx, ("K", "C"), f"{layer.kind.value} layer needs K == C"))
    if layer.kind == LayerKind.FC and (s.I != 1 or s.J != 1):
        found.append(Violation(idx, ("I", "J"), "fc layer needs I == J == 1"))

    try:
        if np.any(layer.neuron.thresholds(s.K) <= 0):
            found.append(Violation(idx, ("threshold",), "thresholds must be > 0"))
        layer.neuron.biases(s.K)
        layer.neuron.potentials(s.K, s.X, s.Y)
    except DimensionMismatch as e:
        found.append(Violation(idx, ("neuron",), str(e)))

    if check_kernels:
        kernels = layer.kernels
        if kernels is None:
            found.append(Violation(idx, ("kernels",), "no kernel set attached"))
        elif kernels.values.shape != layer.kernel_shape():
            found.append(
                Violation(
                    idx,
                    ("kernels",),
                    f"kernel set shape {kernels.values.shape}, expected {layer.kernel_shape()}",
                )
            )
        elif kernels.depthwise != (layer.kind in CHANNELWISE_KINDS):
            found.append(Violation(idx, ("kernels",), "kernel set layout does not match layer kind"))
        elif layer.kind == LayerKind.AVGPOOL and np.any(kernels.values != 1):
            found.append(Violation(idx, ("kernels",), "avgpool weights must all be +1"))
    return found


def _edge_violations(graph: NetworkGraph) -> List[Violation]:
    n = len(graph.layers)
    found = []
    for skip in graph.skips:
        if not (NETWORK_INPUT <= skip.source < n and 0 <= skip.dest < n):
            found.append(
                Violation(skip.dest if 0 <= skip.dest < n else None, ("skips",), f"{skip} out of range")
            )
        elif skip.dest <= skip.source:
            found.append(Violation(skip.dest, ("skips",), f"{skip} does not go strictly forward"))

    members = set()
    for group in graph.branches:
        where = group.merge if 0 <= group.merge < n else None
        if not NETWORK_INPUT <= group.fanout < n:
            found.append(Violation(where, ("branches",), f"fan-out {group.fanout} out of range"))
        if len(group.chains) < 1 or any(not chain for chain in group.chains):
            found.append(Violation(where, ("branches",), "every branch chain needs at least one layer"))
            continue
        for chain in group.chains:
            if any(b != a + 1 for a, b in zip(chain, chain[1:])):
                found.append(Violation(where, ("branches",), f"chain {list(chain)} is not contiguous"))
            if chain[0] <= group.fanout or chain[-1] >= group.merge or group.merge >= n:
                found.append(
                    Violation(where, ("branches",), f"chain {list(chain)} must lie between fan-out and merge")
                )
            if members.intersection(chain):
                found.append(Violation(where, ("branches",), f"chain {list(chain)} overlaps another chain"))
            members.update(chain)
    return found


def map_kernels(shape: LayerShape, kernels: BinaryKernelSet) -> np.ndarray:
    """Map K kernels onto the CJ x KI PE array.

    W[k, c, i, j] lands in sub-array (j, i) at local row c, local column k,
    i.e. global row j*C + c and global column i*K + k. Depthwise kernels
    occupy the diagonal of every C x K sub-array; inert PEs hold 0.
    """
    if not shape.is_complete:
        raise DimensionMismatch("layer shape is not inferred")
    if (kernels.K, kernels.I, kernels.J) != (shape.K, shape.I, shape.J):
        raise DimensionMismatch(
            f"kernel set is {kernels.K}x{kernels.I}x{kernels.J}, layer needs {shape.K}x{shape.I}x{shape.J}"
        )
    if not kernels.depthwise and kernels.values.shape[1] != shape.C:
        raise DimensionMismatch(f"kernel set has {kernels.values.shape[1]} channels, layer has C={shape.C}")

    dense = kernels.dense(shape.C)
    # (K, C, I, J) -> (J, C, I, K): rows j*C + c, columns i*K + k
    matrix = dense.transpose(3, 1, 2, 0).reshape(shape.J * shape.C, shape.I * shape.K)
    return np.ascontiguousarray(matrix)


# Config files


def read_config_file(path: Union[str, Path], what: str) -> dict:
    """Raw mapping from a config file: `.json` via json, anything else via YAML."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            if path.suffix.lower() == ".json":
                data = json.load(f)
            else:
                data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise IngestError(f"{what} not found: {path}") from e
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse {path.name}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path.name} must hold a mapping at the top level")
    return data


def load_network_config(path: Union[str, Path]) -> NetworkConfig:
    """Parse a JSON or YAML network config; unknown keys are rejected."""
    path = Path(path)
    data = read_config_file(path, "network config")

    try:
        config = NetworkConfig(**data)
    except (ValidationError, TypeError) as e:
        raise ConfigError(f"schema error in {path.name}: {e}") from e

    logger.info(f"Loaded network config '{config.name}' ({len(config.layers)} layers) from {path}")
    return config


def build_graph(config: NetworkConfig, reset_mode: Optional[ResetMode] = None) -> NetworkGraph:
    """Turn a parsed config into a shape-inferred graph. Avg-pool layers get all-ones kernels."""
    mode = reset_mode or config.reset_mode or ResetMode(settings.DEFAULT_RESET_MODE)

    layers = []
    for idx, cfg in enumerate(config.layers):
        C, H, W = cfg.C, cfg.H, cfg.W
        if idx == 0:
            for name in ("C", "H", "W"):
                given, actual = getattr(cfg, name), getattr(config.input, name)
                if given is not None and given != actual:
                    raise ChannelMismatch(f"layer 0: {name}={given} but the input has {actual}")
            C, H, W = config.input.C, config.input.H, config.input.W

        threshold = cfg.threshold
        if threshold is None:
            window = (cfg.I or 1) * (cfg.J or cfg.I or 1)
            threshold = window if cfg.kind == LayerKind.AVGPOOL else 1
        neuron = NeuronParams(
            threshold=tuple(threshold) if isinstance(threshold, list) else threshold,
            bias=tuple(cfg.bias) if isinstance(cfg.bias, list) else cfg.bias,
            initial_potential=cfg.initial_potential,
            reset_mode=mode,
        )
        shape = LayerShape(
            C=C, H=H, W=W, I=cfg.I, J=cfg.J, K=cfg.K, stride=cfg.stride, padding=cfg.padding
        )
        layers.append(Layer(kind=cfg.kind, shape=shape, neuron=neuron, name=cfg.name or f"{cfg.kind.value}{idx + 1}"))

    graph = NetworkGraph(
        layers=layers,
        skips=[SkipEdge(s.source, s.dest, s.order) for s in config.skips],
        branches=[
            BranchGroup(b.fanout, tuple(tuple(chain) for chain in b.chains), b.merge)
            for b in config.branches
        ],
        name=config.name,
    )
    graph = infer_shapes(graph)
    return attach_kernels(graph, [None] * len(graph.layers))


def load_network(path: Union[str, Path], reset_mode: Optional[ResetMode] = None) -> NetworkGraph:
    return build_graph(load_network_config(path), reset_mode=reset_mode)


def attach_kernels(
    graph: NetworkGraph, kernel_sets: Sequence[Optional[BinaryKernelSet]]
) -> NetworkGraph:
    """Return a copy of `graph` with kernels attached; None keeps the current set (avg-pool: all ones)."""
    if len(kernel_sets) != len(graph.layers):
        raise DimensionMismatch(f"{len(kernel_sets)} kernel sets for {len(graph.layers)} layers")
    layers = []
    for layer, kernels in zip(graph.layers, kernel_sets):
        if kernels is None:
            kernels = layer.kernels
        if kernels is None and layer.kind == LayerKind.AVGPOOL and layer.shape.is_complete:
            s = layer.shape
            kernels = BinaryKernelSet.ones(s.K, s.C, s.I, s.J, depthwise=True)
        layers.append(replace(layer, kernels=kernels))
    return replace(graph, layers=layers)


def random_kernels(graph: NetworkGraph, rng: np.random.Generator) -> NetworkGraph:
    """Attach uniformly random +-1 kernels to every weighted layer."""
    sets = []
    for layer in graph.layers:
        s = layer.shape
        if layer.kind == LayerKind.AVGPOOL:
            sets.append(BinaryKernelSet.ones(s.K, s.C, s.I, s.J, depthwise=True))
        else:
            sets.append(
                BinaryKernelSet.random(
                    rng, s.K, s.C, s.I, s.J, depthwise=layer.kind == LayerKind.DEPTHWISE
                )
            )
    return attach_kernels(graph, sets)


def ones_kernels(graph: NetworkGraph) -> NetworkGraph:
    sets = [
        BinaryKernelSet.ones(
            l.shape.K, l.shape.C, l.shape.I, l.shape.J, depthwise=l.kind in CHANNELWISE_KINDS
        )
        for l in graph.layers
    ]
    return attach_kernels(graph, sets)


def require_valid(graph: NetworkGraph, check_kernels: bool = True) -> None:
    """Raise InvalidNetwork when `graph` has violations."""
    violations = validate(graph, check_kernels=check_kernels)
    if violations:
        raise InvalidNetwork(violations)
    logger.debug(f"Network '{graph.name}' validated ({len(graph.layers)} layers)")
