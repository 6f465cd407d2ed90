"""Binary model files. Layout is documented in docs/model_format.md."""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ModelFormatError
from .ingest import DatasetStats, EntityIndex
from .kinds import EntityKind
from .pairs import CoocCounts
from .trainer import ModelParams

MAGIC = b"UNIWALK\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII3d6Q")


@dataclass
class SavedModel:
    model: ModelParams
    counts: CoocCounts
    index: EntityIndex
    stats: DatasetStats


def dumps_model(model: ModelParams, counts: CoocCounts, index: EntityIndex, stats: DatasetStats) -> bytes:
    n = len(index)
    if model.n_entities != n:
        raise ValueError(f"model has {model.n_entities} entities, index has {n}")
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, model.dim, model.mu, stats.min_r, stats.max_r, n,
                          len(counts), stats.count_ratings, stats.count_users, stats.count_items,
                          stats.count_social_edges)]
    for eid, (ext, kind) in enumerate(index.entries()):
        raw = ext.encode("utf-8")
        parts.append(struct.pack("<BI", int(kind), len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<d", float(model.bias[eid])))
    parts.append(np.ascontiguousarray(model.latent, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(counts.keys, dtype="<u8").tobytes())
    parts.append(np.ascontiguousarray(counts.counts, dtype="<i8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model: ModelParams, counts: CoocCounts, index: EntityIndex, stats: DatasetStats,
               path) -> None:
    data = dumps_model(model, counts, index, stats)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def loads_model(data: bytes) -> SavedModel:
    if len(data) < _HEADER.size + 4:
        raise ModelFormatError("model file truncated")
    magic, version, dim, mu, min_r, max_r, n, n_pairs, c_r, c_u, c_i, c_s = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("model file corrupt or truncated (checksum mismatch)")
    pos = _HEADER.size
    entries = []
    bias = np.empty(n, dtype=np.float64)
    try:
        for eid in range(n):
            kind, length = struct.unpack_from("<BI", body, pos)
            pos += 5
            entries.append((body[pos:pos + length].decode("utf-8"), EntityKind(kind)))
            pos += length
            (bias[eid],) = struct.unpack_from("<d", body, pos)
            pos += 8
        latent = np.frombuffer(body, dtype="<f8", count=n * dim, offset=pos).reshape(n, dim)
        pos += 8 * n * dim
        keys = np.frombuffer(body, dtype="<u8", count=n_pairs, offset=pos)
        pos += 8 * n_pairs
        counts = np.frombuffer(body, dtype="<i8", count=n_pairs, offset=pos)
        pos += 8 * n_pairs
    except (struct.error, ValueError) as exc:
        raise ModelFormatError(f"model file truncated: {exc}") from None
    if pos != len(body):
        raise ModelFormatError(f"{len(body) - pos} trailing bytes in model file")
    index = EntityIndex(entries)
    model = ModelParams(mu, bias, np.array(latent, dtype=np.float64))
    stats = DatasetStats(min_r, max_r, mu, c_r, c_u, c_i, c_s)
    return SavedModel(model, CoocCounts(n, keys.astype(np.uint64), counts.astype(np.int64)), index, stats)


def load_model(path) -> SavedModel:
    with open(path, "rb") as f:
        return loads_model(f.read())
