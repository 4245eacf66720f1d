"""QPF1 binary snapshots of sampled fields, with a JSON sidecar for metadata.

Layout: the magic ``QPF1``, little-endian uint32 dim, component count and the
grid sizes, followed by float64 values with components outermost and the grid
axes in row-major order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .fields import SampledField

MAGIC = b"QPF1"


class QPFFormatError(ValueError):
    pass


def encode(field: SampledField) -> bytes:
    header = MAGIC + struct.pack(f"<II{field.dim}I", field.dim, field.components, *field.shape)
    return header + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def decode(blob: bytes, metadata: dict | None = None) -> SampledField:
    if blob[:4] != MAGIC:
        raise QPFFormatError("missing QPF1 magic")
    if len(blob) < 12:
        raise QPFFormatError("truncated header")
    dim, comps = struct.unpack_from("<II", blob, 4)
    if dim == 0 or comps == 0:
        raise QPFFormatError("dim and component count must be positive")
    head = 12 + 4 * dim
    if len(blob) < head:
        raise QPFFormatError("truncated grid sizes")
    shape = struct.unpack_from(f"<{dim}I", blob, 12)
    count = comps * int(np.prod(shape))
    if len(blob) != head + 8 * count:
        raise QPFFormatError(f"payload has {len(blob) - head} bytes, expected {8 * count}")
    values = np.frombuffer(blob, dtype="<f8", offset=head).reshape((comps, *shape))
    return SampledField(values.astype(float), metadata or {})


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write(path, field: SampledField) -> Path:
    path = Path(path)
    path.write_bytes(encode(field))
    meta = {"dim": field.dim, "components": field.components, "shape": list(field.shape)}
    meta.update(field.metadata)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=float) + "\n")
    return path


def read(path) -> SampledField:
    path = Path(path)
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return decode(path.read_bytes(), meta)
