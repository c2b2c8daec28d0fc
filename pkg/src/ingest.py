"""Weight and input file formats.

Weight file (little-endian)::

    magic   b"BWSN"
    version u16 (= 1)
    layers  u16
    per layer header: kind u8, pad u8, C u16, I u16, J u16, K u16
    payload: per layer, kernel bits in k, c, i, j order, MSB first,
             padded to a whole byte (+1 -> 1, -1 -> 0). Conv/FC carry
             K*C*I*J bits, depthwise K*I*J, avgpool none.
    trailer: CRC-32 of the payload, u32

Raw input file (little-endian)::

    magic b"BWIN", ndim u8, ndim x u32 dims, float32 data (C,H,W or N,C,H,W)

IDX files (big-endian, optionally gzipped) are read as images (N,H,W or
N,C,H,W; uint8 divided by 255) or as 1-D label vectors.
"""

import gzip
import logging
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from src.errors import BadMagic, ChecksumMismatch, DimMismatchWithConfig, IngestError, MalformedInput
from src.models import LayerKind
from src.netmodel import BinaryKernelSet, NetworkGraph
from src.reports import atomic_write_bytes

logger = logging.getLogger(__name__)

WEIGHT_MAGIC = b"BWSN"
WEIGHT_VERSION = 1
INPUT_MAGIC = b"BWIN"

_FILE_HEADER = struct.Struct("<4sHH")
_LAYER_HEADER = struct.Struct("<BxHHHH")
_CRC = struct.Struct("<I")

KIND_TAGS = {
    LayerKind.CONV: 0,
    LayerKind.DEPTHWISE: 1,
    LayerKind.FC: 2,
    LayerKind.AVGPOOL: 3,
}
_TAG_KINDS = {tag: kind for kind, tag in KIND_TAGS.items()}

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass
class WeightRecord:
    """One layer of a weight file."""

    kind: LayerKind
    C: int
    I: int
    J: int
    K: int
    kernels: BinaryKernelSet

    @property
    def payload_bits(self) -> int:
        return _payload_bits(self.kind, self.C, self.I, self.J, self.K)


def _payload_bits(kind: LayerKind, C: int, I: int, J: int, K: int) -> int:
    if kind == LayerKind.AVGPOOL:
        return 0
    if kind == LayerKind.DEPTHWISE:
        return K * I * J
    return K * C * I * J


def _read_bytes(path: Path) -> bytes:
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rb") as f:
                return f.read()
        return path.read_bytes()
    except FileNotFoundError as e:
        raise IngestError(f"file not found: {path}") from e
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}") from e


# Weights


def encode_weights(graph: NetworkGraph) -> bytes:
    headers = [_FILE_HEADER.pack(WEIGHT_MAGIC, WEIGHT_VERSION, len(graph.layers))]
    payload = bytearray()
    for idx, layer in enumerate(graph.layers):
        s = layer.shape
        headers.append(_LAYER_HEADER.pack(KIND_TAGS[layer.kind], s.C, s.I, s.J, s.K))
        if layer.kind == LayerKind.AVGPOOL:
            continue
        if layer.kernels is None:
            raise MalformedInput(f"layer {idx} has no kernels to export")
        payload += np.packbits(layer.kernels.to_bits().reshape(-1), bitorder="big").tobytes()
    return b"".join(headers) + bytes(payload) + _CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF)


def write_weights(path: Union[str, Path], graph: NetworkGraph) -> Path:
    """Export every layer's kernels of `graph`."""
    return atomic_write_bytes(path, encode_weights(graph))


def decode_weights(data: bytes) -> List[WeightRecord]:
    if len(data) < _FILE_HEADER.size + _CRC.size:
        raise MalformedInput("weight file is truncated")
    magic, version, count = _FILE_HEADER.unpack_from(data, 0)
    if magic != WEIGHT_MAGIC:
        raise BadMagic(f"not a weight file (magic {magic!r}, expected {WEIGHT_MAGIC!r})")
    if version != WEIGHT_VERSION:
        raise MalformedInput(f"unsupported weight file version {version}")

    offset = _FILE_HEADER.size
    headers = []
    for idx in range(count):
        if offset + _LAYER_HEADER.size > len(data):
            raise MalformedInput(f"weight file is truncated in the header of layer {idx}")
        tag, C, I, J, K = _LAYER_HEADER.unpack_from(data, offset)
        if tag not in _TAG_KINDS:
            raise MalformedInput(f"layer {idx}: unknown kind tag {tag}")
        if min(C, I, J, K) < 1:
            raise MalformedInput(f"layer {idx}: dimensions must be >= 1")
        headers.append((_TAG_KINDS[tag], C, I, J, K))
        offset += _LAYER_HEADER.size

    sizes = [(_payload_bits(*h) + 7) // 8 for h in headers]
    end = offset + sum(sizes)
    if end + _CRC.size != len(data):
        raise MalformedInput(f"weight file is {len(data)} bytes, headers imply {end + _CRC.size}")
    payload = data[offset:end]
    (stored,) = _CRC.unpack_from(data, end)
    actual = zlib.crc32(payload) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumMismatch(f"payload CRC-32 is {actual:08x}, file says {stored:08x}")

    records = []
    cursor = 0
    for (kind, C, I, J, K), size in zip(headers, sizes):
        block = np.frombuffer(payload, dtype=np.uint8, count=size, offset=cursor)
        cursor += size
        if kind == LayerKind.AVGPOOL:
            kernels = BinaryKernelSet.ones(K, C, I, J, depthwise=True)
        else:
            depthwise = kind == LayerKind.DEPTHWISE
            channels = 1 if depthwise else C
            bits = np.unpackbits(block, bitorder="big")[: K * channels * I * J]
            kernels = BinaryKernelSet.from_bits(bits.reshape(K, channels, I, J), depthwise=depthwise)
        records.append(WeightRecord(kind, C, I, J, K, kernels))
    return records


def read_weights(path: Union[str, Path]) -> List[WeightRecord]:
    path = Path(path)
    records = decode_weights(_read_bytes(path))
    logger.info(f"Read {len(records)} kernel sets from {path}")
    return records


def ingest_weights(path: Union[str, Path], graph: Optional[NetworkGraph] = None) -> List[BinaryKernelSet]:
    """Kernel sets from a weight file, checked against `graph` when given."""
    records = read_weights(path)
    if graph is not None:
        if len(records) != len(graph.layers):
            raise DimMismatchWithConfig(
                f"weight file has {len(records)} layers, network config has {len(graph.layers)}"
            )
        for idx, (record, layer) in enumerate(zip(records, graph.layers)):
            s = layer.shape
            found = (record.kind, record.C, record.I, record.J, record.K)
            expected = (layer.kind, s.C, s.I, s.J, s.K)
            if found != expected:
                raise DimMismatchWithConfig(
                    f"layer {idx} ({layer.name}): weight file has kind={record.kind.value} "
                    f"C,I,J,K={found[1:]}, network config has kind={layer.kind.value} C,I,J,K={expected[1:]}"
                )
    return [record.kernels for record in records]


# Inputs


def encode_input(tensor: np.ndarray) -> bytes:
    tensor = np.asarray(tensor, dtype="<f4")
    if tensor.ndim > 255:
        raise MalformedInput("too many dimensions")
    header = INPUT_MAGIC + struct.pack("<B", tensor.ndim) + struct.pack(f"<{tensor.ndim}I", *tensor.shape)
    return header + tensor.tobytes()


def write_input(path: Union[str, Path], tensor: np.ndarray) -> Path:
    return atomic_write_bytes(path, encode_input(tensor))


def decode_input(data: bytes) -> np.ndarray:
    if data[:4] != INPUT_MAGIC:
        raise BadMagic(f"not a raw input file (magic {data[:4]!r}, expected {INPUT_MAGIC!r})")
    if len(data) < 5:
        raise MalformedInput("input file is truncated")
    ndim = data[4]
    offset = 5 + 4 * ndim
    if len(data) < offset:
        raise MalformedInput("input file is truncated in its dims header")
    dims = struct.unpack_from(f"<{ndim}I", data, 5)
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    if len(data) - offset != expected:
        raise MalformedInput(f"input data is {len(data) - offset} bytes, dims {dims} need {expected}")
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims).astype(np.float64)


def decode_idx(data: bytes) -> np.ndarray:
    if len(data) < 4 or data[0] != 0 or data[1] != 0:
        raise BadMagic(f"not an IDX file (magic {data[:4]!r})")
    type_code, ndim = data[2], data[3]
    if type_code not in _IDX_TYPES:
        raise MalformedInput(f"unknown IDX type code 0x{type_code:02x}")
    offset = 4 + 4 * ndim
    if len(data) < offset:
        raise MalformedInput("IDX file is truncated in its dims header")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    dtype = _IDX_TYPES[type_code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(data) - offset != expected:
        raise MalformedInput(f"IDX data is {len(data) - offset} bytes, dims {dims} need {expected}")
    values = np.frombuffer(data, dtype=dtype, offset=offset).reshape(dims)
    if type_code == 0x08:
        return values.astype(np.float64) / 255.0
    return values.astype(np.float64)


def _select(batch: np.ndarray, start: int, count: Optional[int], what: str) -> np.ndarray:
    stop = len(batch) if count is None else start + count
    if start < 0 or stop > len(batch) or start >= stop:
        raise MalformedInput(f"{what} range [{start}, {stop}) outside the {len(batch)} available")
    return batch[start:stop]


def ingest_input(path: Union[str, Path], start: int = 0, count: Optional[int] = None) -> np.ndarray:
    """Real-valued images as an (N, C, H, W) array.

    Raw files hold one C x H x W tensor or an N x C x H x W batch; IDX
    image files are N x H x W (one channel) or N x C x H x W.
    """
    path = Path(path)
    data = _read_bytes(path)
    if data[:4] == INPUT_MAGIC:
        tensor = decode_input(data)
        if tensor.ndim == 3:
            tensor = tensor[None]
    else:
        tensor = decode_idx(data)
        if tensor.ndim == 3:
            tensor = tensor[:, None]
    if tensor.ndim != 4:
        raise MalformedInput(f"{path.name}: expected an image or image batch, got shape {tensor.shape}")
    batch = _select(tensor, start, count, "image")
    logger.info(f"Read {len(batch)} image(s) of shape {batch.shape[1:]} from {path}")
    return batch


def ingest_labels(path: Union[str, Path], start: int = 0, count: Optional[int] = None) -> np.ndarray:
    """Class labels from a 1-D IDX file."""
    path = Path(path)
    data = _read_bytes(path)
    if len(data) >= 3 and data[2] != 0x08:
        raise MalformedInput(f"{path.name}: labels must be unsigned bytes")
    raw = decode_idx(data)
    if raw.ndim != 1:
        raise MalformedInput(f"{path.name}: labels must be a 1-D IDX vector, got shape {raw.shape}")
    labels = np.rint(raw * 255.0).astype(np.int64)
    return _select(labels, start, count, "label")


def check_input_shape(images: np.ndarray, expected: Sequence[int]) -> None:
    """Inputs are never resized or cropped; they must match the first layer exactly."""
    if tuple(images.shape[1:]) != tuple(expected):
        raise DimMismatchWithConfig(
            f"input images are {tuple(images.shape[1:])}, network input is {tuple(expected)}"
        )
