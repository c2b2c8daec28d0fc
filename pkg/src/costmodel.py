"""Closed-form area and latency estimates, and the design-space sweep driver."""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from pydantic import ValidationError

from src.config import settings
from src.errors import ConfigError, EmptyFamily, NetworkError
from src.models import LayerConfig, NetworkConfig, SweepFamily
from src.netmodel import CHANNELWISE_KINDS, LayerShape, NetworkGraph, build_graph, read_config_file, require_valid
from src.systolic import compute_schedule

logger = logging.getLogger(__name__)


@dataclass
class LayerArea:
    name: str
    pe_area_um2: float
    buffer_chain_area_um2: float
    local_buffer_area_um2: float

    @property
    def total_um2(self) -> float:
        return self.pe_area_um2 + self.buffer_chain_area_um2 + self.local_buffer_area_um2


@dataclass
class BypassArea:
    """Bypass delay line on input slot `slot` of layer `dest`."""

    source: int
    dest: int
    slot: int
    cells: int
    words: int
    area_um2: float


@dataclass
class CostReport:
    """Per-layer and bypass areas in um^2; totals are always sums of the entries.

    `energy_per_event_pj` is reserved for user-supplied constants; nothing
    in this package fills it.
    """

    name: str = "network"
    layers: List[LayerArea] = field(default_factory=list)
    bypasses: List[BypassArea] = field(default_factory=list)
    node_nm: Optional[float] = None
    scale: float = 1.0
    energy_per_event_pj: Optional[Dict[str, float]] = None

    @property
    def pe_area_um2(self) -> float:
        return sum(l.pe_area_um2 for l in self.layers)

    @property
    def buffer_chain_area_um2(self) -> float:
        return sum(l.buffer_chain_area_um2 for l in self.layers)

    @property
    def local_buffer_area_um2(self) -> float:
        return sum(l.local_buffer_area_um2 for l in self.layers)

    @property
    def bypass_area_um2(self) -> float:
        return sum(b.area_um2 for b in self.bypasses)

    @property
    def total_um2(self) -> float:
        return (
            self.pe_area_um2
            + self.buffer_chain_area_um2
            + self.local_buffer_area_um2
            + self.bypass_area_um2
        )

    @property
    def total_mm2(self) -> float:
        return self.total_um2 / 1e6

    def normalized(self, node_nm: Optional[float] = None, from_node_nm: Optional[float] = None) -> "CostReport":
        """Scale every area by (target / source node)^2."""
        target = settings.NORMALIZED_NODE_NM if node_nm is None else node_nm
        source = settings.REFERENCE_NODE_NM if from_node_nm is None else from_node_nm
        if target <= 0 or source <= 0:
            raise ConfigError("technology nodes must be positive")
        factor = (target / source) ** 2
        return replace(
            self,
            layers=[
                LayerArea(
                    l.name,
                    l.pe_area_um2 * factor,
                    l.buffer_chain_area_um2 * factor,
                    l.local_buffer_area_um2 * factor,
                )
                for l in self.layers
            ],
            bypasses=[replace(b, area_um2=b.area_um2 * factor) for b in self.bypasses],
            node_nm=target,
            scale=self.scale * factor,
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        for entry, layer in zip(data["layers"], self.layers):
            entry["total_um2"] = layer.total_um2
        data["totals"] = {
            "pe_area_um2": self.pe_area_um2,
            "buffer_chain_area_um2": self.buffer_chain_area_um2,
            "local_buffer_area_um2": self.local_buffer_area_um2,
            "bypass_area_um2": self.bypass_area_um2,
            "total_um2": self.total_um2,
            "total_mm2": self.total_mm2,
        }
        return data

    def csv_rows(self) -> List[dict]:
        """One row per layer and per bypass line, then a total row."""
        rows = [
            {
                "entry": l.name,
                "pe_area_um2": l.pe_area_um2,
                "buffer_chain_area_um2": l.buffer_chain_area_um2,
                "local_buffer_area_um2": l.local_buffer_area_um2,
                "bypass_area_um2": 0.0,
                "total_um2": l.total_um2,
            }
            for l in self.layers
        ]
        for b in self.bypasses:
            rows.append(
                {
                    "entry": f"bypass {b.source}->{b.dest}",
                    "pe_area_um2": 0.0,
                    "buffer_chain_area_um2": 0.0,
                    "local_buffer_area_um2": 0.0,
                    "bypass_area_um2": b.area_um2,
                    "total_um2": b.area_um2,
                }
            )
        rows.append(
            {
                "entry": "total",
                "pe_area_um2": self.pe_area_um2,
                "buffer_chain_area_um2": self.buffer_chain_area_um2,
                "local_buffer_area_um2": self.local_buffer_area_um2,
                "bypass_area_um2": self.bypass_area_um2,
                "total_um2": self.total_um2,
            }
        )
        return rows


def layer_area(shape: LayerShape) -> Tuple[float, float, float]:
    """(pe, chain, local) = 210*CKIJ, 15*C*((I-1)W+J), 40*KXY in um^2."""
    s = shape
    pe = settings.PE_AREA_UM2 * s.pe_rows * s.pe_cols
    chain = settings.CHAIN_AREA_UM2 * s.C * s.chain_cells
    local = settings.LOCAL_AREA_UM2 * s.K * s.X * s.Y
    return pe, chain, local


def network_area(graph: NetworkGraph, accum_delay: Optional[int] = None) -> CostReport:
    """Sum of layer areas plus bypass delay cells at the chain rate per word."""
    if not graph.layers:
        return CostReport(name=graph.name)
    require_valid(graph, check_kernels=False)

    layers = []
    for idx, layer in enumerate(graph.layers):
        pe, chain, local = layer_area(layer.shape)
        layers.append(LayerArea(layer.name or f"layer{idx + 1}", pe, chain, local))

    # skip-1 lines are costed in full even where the skipped chain could hold them
    schedule = compute_schedule(graph, accum_delay)
    bypasses = []
    for (dest, slot), cells in sorted(schedule.delays.items()):
        if cells == 0:
            continue
        source = graph.sources(dest)[slot]
        words = graph.stream_shape(source)[0]
        bypasses.append(
            BypassArea(source, dest, slot, cells, words, settings.CHAIN_AREA_UM2 * words * cells)
        )

    report = CostReport(name=graph.name, layers=layers, bypasses=bypasses)
    logger.debug(f"Area of '{graph.name}': {report.total_um2:,.0f} um^2")
    return report


@dataclass
class LatencyEstimate:
    T: int
    cycles: int
    fill: int
    seconds: float
    clock_hz: float
    accum_delay: int

    @property
    def milliseconds(self) -> float:
        return self.seconds * 1e3

    def to_dict(self) -> dict:
        data = asdict(self)
        data["milliseconds"] = self.milliseconds
        return data


def latency_model(
    graph: NetworkGraph,
    T: int,
    clock_hz: Optional[float] = None,
    accum_delay: Optional[int] = None,
) -> LatencyEstimate:
    """cycles = T*H*W + fill, with fill taken from the simulator's schedule."""
    clock_hz = settings.CLOCK_HZ if clock_hz is None else clock_hz
    accum_delay = settings.ACCUM_DELAY if accum_delay is None else accum_delay
    if T < 0:
        raise ConfigError(f"T must be >= 0, got {T}")
    if clock_hz <= 0:
        raise ConfigError(f"clock must be positive, got {clock_hz}")
    require_valid(graph, check_kernels=False)

    _, H, W = graph.input_shape
    fill = compute_schedule(graph, accum_delay).fill
    cycles = T * H * W + fill
    return LatencyEstimate(
        T=T, cycles=cycles, fill=fill, seconds=cycles / clock_hz, clock_hz=clock_hz, accum_delay=accum_delay
    )


# Sweeps


def load_sweep_family(path: Union[str, Path]) -> SweepFamily:
    path = Path(path)
    data = read_config_file(path, "sweep family")
    try:
        family = SweepFamily(**data)
    except (ValidationError, TypeError) as e:
        raise ConfigError(f"schema error in {path.name}: {e}") from e
    logger.info(f"Loaded sweep family '{family.name}' from {path}")
    return family


def _template_choices(template) -> List[List[LayerConfig]]:
    """Every concrete layer run one template can expand to."""
    Js = template.J if template.J is not None else (None,)
    if template.K is None and template.kind not in CHANNELWISE_KINDS:
        raise ConfigError(f"{template.kind.value} template needs K")
    Ks = template.K if template.K is not None else (None,)
    runs = []
    for I, J, K, repeat in itertools.product(template.I, Js, Ks, template.repeat):
        if repeat < 1:
            continue
        layer = LayerConfig(kind=template.kind, I=I, J=I if J is None else J, K=K, threshold=template.threshold)
        runs.append([layer] * repeat)
    return runs


def _candidate_name(layers: List[LayerConfig]) -> str:
    parts = []
    for layer in layers:
        tag = f"{layer.kind.value}{layer.I}x{layer.J}"
        if layer.K is not None:
            tag += f"k{layer.K}"
        parts.append(tag)
    return "-".join(parts)


def enumerate_family(family: SweepFamily) -> List[NetworkConfig]:
    """Cartesian product of every template's choices, in declaration order."""
    per_template = [_template_choices(t) for t in family.layers]
    total = 1
    for choices in per_template:
        total *= len(choices)
    if total > settings.MAX_SWEEP_CANDIDATES:
        raise ConfigError(
            f"family '{family.name}' expands to {total} candidates (limit {settings.MAX_SWEEP_CANDIDATES})"
        )

    configs = []
    for combo in itertools.product(*per_template):
        layers = [layer for run in combo for layer in run]
        configs.append(
            NetworkConfig(name=f"{family.name}:{_candidate_name(layers)}", input=family.input, layers=layers)
        )
    return configs


@dataclass
class SweepEntry:
    name: str
    config: NetworkConfig
    report: CostReport


def _evaluate(config: NetworkConfig) -> Optional[SweepEntry]:
    try:
        graph = build_graph(config)
        report = network_area(graph)
    except NetworkError as e:
        logger.debug(f"Skipping candidate {config.name}: {e}")
        return None
    return SweepEntry(config.name, config, report)


def sweep(
    family: SweepFamily,
    area_budget: Optional[float] = None,
    workers: Optional[int] = None,
) -> List[SweepEntry]:
    """Evaluate every legal candidate, keep those within budget, sort by (area, name)."""
    candidates = enumerate_family(family)
    budget = family.area_budget_um2 if area_budget is None else area_budget
    workers = settings.SWEEP_WORKERS if workers is None else workers

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        evaluated = list(pool.map(_evaluate, candidates))

    legal = [entry for entry in evaluated if entry is not None]
    if not legal:
        raise EmptyFamily(f"family '{family.name}' has no legal candidate topology")

    kept = [e for e in legal if budget is None or e.report.total_um2 <= budget]
    kept.sort(key=lambda e: (e.report.total_um2, e.name))
    logger.info(
        f"Sweep '{family.name}': {len(candidates)} candidates, {len(legal)} legal, {len(kept)} within budget"
    )
    return kept
