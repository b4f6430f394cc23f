"""Serialization helpers: 17-digit JSON/CSV floats and run manifests."""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
import sys
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Optional

import numpy as np

from . import __version__
from .errors import ValidationError


def fmt_float(x: float) -> str:
    """17 significant digits; round-trips any 64-bit float."""
    return format(float(x), ".17g")


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits (non-finite become null)."""
    return _encode(obj, indent, 0) + "\n"


def write_text(path: Optional[str], text: str, stream=None) -> None:
    if path is None or path == "-":
        (stream or sys.stdout).write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def csv_text(rows: Iterable[Iterable[Any]]) -> str:
    lines = []
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt_float(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def read_m_csv(path: str, k: int) -> np.ndarray:
    """Block sums from a sampler CSV as ``(chains, n, k)``.

    Columns are ``chain,index,m_1..m_k`` optionally followed by ``m_hat_1..m_hat_k``.
    """
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read samples CSV {path}: {exc}") from None
    if data.shape[1] not in (k + 2, 2 * k + 2):
        raise ValidationError(f"samples CSV has {data.shape[1]} columns, expected {k + 2} or {2 * k + 2}")
    chains = data[:, 0].astype(int)
    n_chains = int(chains.max()) + 1
    per = np.bincount(chains, minlength=n_chains)
    if np.any(per != per[0]):
        raise ValidationError("samples CSV chains have unequal lengths")
    order = np.lexsort((data[:, 1], chains))
    return data[order, 2:k + 2].reshape(n_chains, int(per[0]), k)


@dataclass(frozen=True)
class RunManifest:
    command: str
    spec_digest: str
    seed: Optional[int]
    tool_version: str
    timestamp: str

    def to_dict(self) -> dict:
        return asdict(self)


def utc_timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for fully reproducible files
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        t = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        t = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return t.isoformat().replace("+00:00", "Z")


def make_manifest(command: str, spec_digest: str, seed: Optional[int]) -> RunManifest:
    return RunManifest(command, spec_digest, seed, __version__, utc_timestamp())
