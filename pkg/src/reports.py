"""Results, reports and traces on disk: JSON with a schema version, CSV mirrors.

Every write goes to a temp file in the target directory and is renamed
into place, so a failed run never leaves a partial file behind.
"""

import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from src.errors import IngestError

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = "1"
TRACE_COLUMNS = ("cycle", "layer", "event", "position", "value")


def _to_jsonable(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value") and isinstance(value.value, str):  # enums
        return value.value
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_json(data: Dict) -> str:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, default=_to_jsonable) + "\n"


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except OSError as e:
        Path(tmp).unlink(missing_ok=True)
        raise IngestError(f"failed to write {path}: {e}") from e
    logger.info(f"Wrote {path}")
    return path


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Union[str, Path], data: Dict) -> Path:
    return atomic_write_text(path, dumps_json(data))


def csv_text(rows: Sequence[Dict], fieldnames: Optional[Sequence[str]] = None) -> str:
    fieldnames = list(fieldnames or (rows[0].keys() if rows else []))
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def write_csv(path: Union[str, Path], rows: Sequence[Dict], fieldnames: Optional[Sequence[str]] = None) -> Path:
    return atomic_write_text(path, csv_text(rows, fieldnames))


def trace_rows(events: Iterable) -> List[Dict]:
    """Flatten simulator trace events into CSV rows; position is "step:x:y"."""
    return [
        {
            "cycle": e.cycle,
            "layer": e.layer,
            "event": e.kind,
            "position": ":".join(str(v) for v in e.position),
            "value": e.value,
        }
        for e in events
    ]


def write_trace_csv(path: Union[str, Path], events: Iterable) -> Path:
    return write_csv(path, trace_rows(events), TRACE_COLUMNS)


def results_document(kind: str, body: Dict) -> Dict:
    """Wrap a payload with the schema version and document kind."""
    return {"schema_version": RESULTS_SCHEMA_VERSION, "kind": kind, **body}
