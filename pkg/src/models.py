"""Pydantic schemas for network configs, sweep families, encoder specs and run configs."""

import re
from enum import Enum
from pathlib import Path
from typing import Annotated, List, Optional, Tuple, Union

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field


class LayerKind(str, Enum):
    """Layer module flavours supported by one systolic array."""

    CONV = "conv"
    DEPTHWISE = "depthwise"
    FC = "fc"
    AVGPOOL = "avgpool"


class ResetMode(str, Enum):
    SUBTRACTIVE = "subtractive"
    TO_ZERO = "to_zero"


class EncoderMode(str, Enum):
    DETERMINISTIC = "deterministic"
    BERNOULLI = "bernoulli"


class StrictModel(BaseModel):
    """Base for file schemas: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


# Network configs


class InputShape(StrictModel):
    """Shape of the network input frame."""

    C: int = Field(ge=1)
    H: int = Field(ge=1)
    W: int = Field(ge=1)


class LayerConfig(StrictModel):
    """One layer module. Omitted C/H/W are chained from the producer."""

    name: Optional[str] = None
    kind: LayerKind = LayerKind.CONV
    C: Optional[int] = Field(default=None, ge=1)
    H: Optional[int] = Field(default=None, ge=1)
    W: Optional[int] = Field(default=None, ge=1)
    I: Optional[int] = Field(default=None, ge=1)
    J: Optional[int] = Field(default=None, ge=1)
    K: Optional[int] = Field(default=None, ge=1)
    stride: int = Field(default=1, ge=1)
    padding: int = Field(default=0, ge=0)
    threshold: Optional[Union[int, List[int]]] = None
    bias: Union[int, List[int]] = 0
    initial_potential: int = 0


class SkipConfig(StrictModel):
    """Skip edge: output of `source` (-1 = network input) joins the input of `dest`."""

    source: int = Field(ge=-1)
    dest: int = Field(ge=0)
    order: Optional[int] = Field(default=None, ge=0)


class BranchConfig(StrictModel):
    """Branch group: `fanout` feeds every chain, `merge` concatenates the chain outputs."""

    fanout: int = Field(ge=-1)
    chains: List[List[int]]
    merge: int = Field(ge=0)


class NetworkConfig(StrictModel):
    """Network topology file (JSON or YAML)."""

    version: str = "1"
    name: str = "network"
    input: InputShape
    reset_mode: Optional[ResetMode] = None
    layers: List[LayerConfig] = Field(default_factory=list)
    skips: List[SkipConfig] = Field(default_factory=list)
    branches: List[BranchConfig] = Field(default_factory=list)


# Sweep families

_RANGE_PATTERN = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*(?::\s*(\d+)\s*)?$")


def parse_int_range(value) -> Tuple[int, ...]:
    """Parse an int, a list of ints, or the range syntax "a..b" / "a..b:step" (inclusive)."""
    if isinstance(value, bool):
        raise ValueError("expected an integer or range, got a boolean")
    if isinstance(value, int):
        return (value,)
    if isinstance(value, (list, tuple)):
        if not value:
            raise ValueError("empty value list")
        return tuple(int(v) for v in value)
    if isinstance(value, str):
        if value.strip().lstrip("-").isdigit():
            return (int(value),)
        match = _RANGE_PATTERN.match(value)
        if not match:
            raise ValueError(f"bad range syntax {value!r}; expected 'a..b' or 'a..b:step'")
        start, stop = int(match.group(1)), int(match.group(2))
        step = int(match.group(3) or 1)
        if step < 1 or stop < start:
            raise ValueError(f"empty range {value!r}")
        return tuple(range(start, stop + 1, step))
    raise ValueError(f"cannot interpret {value!r} as an integer range")


IntRange = Annotated[Tuple[int, ...], BeforeValidator(parse_int_range)]


class LayerTemplate(StrictModel):
    """Layer template in a sweep family; any field may be a range."""

    kind: LayerKind = LayerKind.CONV
    I: IntRange = (1,)
    J: Optional[IntRange] = None
    K: Optional[IntRange] = None
    repeat: IntRange = (1,)
    threshold: Optional[int] = None


class SweepFamily(StrictModel):
    """Enumerable family of topologies for area sweeps."""

    name: str = "family"
    input: InputShape
    layers: List[LayerTemplate] = Field(min_length=1)
    area_budget_um2: Optional[float] = None


# Encoding and runs


class EncoderSpec(StrictModel):
    """Input spike encoder; `seed` is only used in Bernoulli mode."""

    mode: EncoderMode = EncoderMode.DETERMINISTIC
    T: int = Field(ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)


class RunConfig(StrictModel):
    """Everything one `simulate`/`check` invocation needs."""

    network: Path
    weights: Optional[Path] = None
    input: Optional[Path] = None
    labels: Optional[Path] = None
    input_index: int = Field(default=0, ge=0)
    count: int = Field(default=1, ge=1)
    T: int = Field(ge=0)
    encoder_mode: EncoderMode = EncoderMode.DETERMINISTIC
    seed: int = Field(default=0, ge=0, lt=2**64)
    reset_mode: Optional[ResetMode] = None
    accum_delay: Optional[int] = Field(default=None, ge=0)
    output: Optional[Path] = None
    trace_csv: Optional[Path] = None
    trace: bool = False
    check: bool = False

    def encoder_spec(self) -> EncoderSpec:
        return EncoderSpec(mode=self.encoder_mode, T=self.T, seed=self.seed)

    def missing_files(self) -> List[str]:
        """Referenced input files that do not exist."""
        missing = []
        for label, path in (
            ("network config", self.network),
            ("weight file", self.weights),
            ("input file", self.input),
            ("label file", self.labels),
        ):
            if path is not None and not Path(path).exists():
                missing.append(f"{label} not found: {path}")
        return missing
