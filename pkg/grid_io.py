"""
Grid files and report writers.

A grid file is a JSON header (box, shape, axis names, payload reference,
free-form metadata) next to a payload holding the values in row-major
order with axis 0 first: CSV text or a binary .npy array.
"""

import csv
import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import InvalidInputError
from verifier import GridField

logger = logging.getLogger(__name__)

GRID_FORMAT_VERSION = 1
PAYLOADS = ("csv", "npy")


def to_jsonable(obj: Any) -> Any:
    """Convert Fractions, numpy scalars/arrays and tuples for json.dump."""
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(data: Any) -> str:
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True)


def write_json(path: Path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(dumps(data) + "\n")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: Path) -> Dict:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"File not found: {path}")
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"Malformed JSON in {path}: {e}") from e


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    logger.debug(f"Wrote {path}")
    return path


def write_grid(field: GridField, path: Path, payload: str = "csv",
               axis_names: Optional[List[str]] = None, meta: Optional[Dict] = None) -> Path:
    """Write `<path>` (JSON header) and `<path stem>.csv|.npy` (values)."""
    if payload not in PAYLOADS:
        raise InvalidInputError(f"Grid payload must be one of {PAYLOADS}, got {payload!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data_path = path.with_suffix(f".{payload}")
    flat = field.values.reshape(-1)
    if payload == "csv":
        np.savetxt(data_path, flat, fmt="%.17g")
    else:
        np.save(data_path, flat)

    names = axis_names or ["t"] + [f"x{i}" for i in range(1, field.ndim)]
    header = {
        "format": "grid",
        "version": GRID_FORMAT_VERSION,
        "box": [list(b) for b in field.box],
        "shape": list(field.shape),
        "axis_names": names,
        "payload": payload,
        "data_file": data_path.name,
        "meta": meta or {},
    }
    write_json(path, header)
    logger.info(f"Grid {field.shape} written to {path} ({payload} payload)")
    return path


def read_grid(path: Path) -> Tuple[GridField, Dict]:
    """Load a grid file; returns the field and its header."""
    path = Path(path)
    header = read_json(path)
    if header.get("format") != "grid":
        raise InvalidInputError(f"{path} is not a grid file header")
    try:
        data_path = path.parent / header["data_file"]
        payload = header["payload"]
        box, shape = header["box"], header["shape"]
    except KeyError as e:
        raise InvalidInputError(f"Grid header {path} lacks {e}") from e
    if not data_path.exists():
        raise InvalidInputError(f"Grid payload not found: {data_path}")
    if payload == "csv":
        values = np.loadtxt(data_path, dtype=float, ndmin=1)
    elif payload == "npy":
        values = np.load(data_path, allow_pickle=False)
    else:
        raise InvalidInputError(f"Unknown grid payload {payload!r}")
    return GridField(box, shape, values), header
