"""Chunked columnar partition files.

Rows are stored in chunks of 8192.  Each chunk carries a small zone-map
section (min/max for date and integer fields, a sorted distinct-value
dictionary for code and string fields whenever that is smaller than the raw
block) and one contiguous block per column guarded by its own crc32.  A
column whose chunk has a dictionary is stored as one or two index bytes per
row instead of the full value, so repetitive strings cost a fraction of
their raw width.  Readers seek past columns they do not need and past whole
chunks the zone maps rule out, so neither is checksummed or counted as read.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..tables import FieldType, TableSchema
from .rowfile import ChecksumError, FormatError

MAGIC = b"CQBC"
VERSION = 2
CHUNK_ROWS = 8192
NO_DICT = 0xFFFF

_HEADER = struct.Struct("<4sHQQII2x")  # magic, version, schema, rows, chunk_rows, n_chunks
assert _HEADER.size == 32
_PRELUDE = struct.Struct("<II")  # n_rows, zonemap nbytes


@dataclass
class ChunkInfo:
    """Parsed chunk metadata; column payloads stay on disk until asked for."""

    index: int
    n_rows: int
    minmax: dict[str, tuple[int, int]]
    code_dict: dict[str, np.ndarray | None]
    _block_offsets: dict[str, int]
    _block_sizes: dict[str, int]
    _end_offset: int


def _index_width(count: int) -> int:
    return 1 if count <= 256 else 2


def _zonemap(schema: TableSchema, chunk: np.ndarray):
    """Zone-map bytes plus the per-field dictionaries chosen for this chunk."""
    parts: list[bytes] = []
    dicts: dict[str, np.ndarray] = {}
    for f in schema.fields:
        if f.ftype in (FieldType.INT, FieldType.DATE):
            col = chunk[f.name]
            parts.append(struct.pack("<qq", int(col.min()), int(col.max())))
        else:
            distinct = np.unique(chunk[f.name])
            # a chunk holds at most 8192 rows, so indices always fit u16;
            # keep the dictionary only when it beats the raw block
            width = f.dtype.itemsize
            idx_width = _index_width(len(distinct))
            if len(distinct) * width + len(chunk) * idx_width < len(chunk) * width:
                parts.append(struct.pack("<H", len(distinct)))
                parts.append(distinct.tobytes())
                dicts[f.name] = distinct
            else:
                parts.append(struct.pack("<H", NO_DICT))
    return b"".join(parts), dicts


def write_col_file(
    path, schema: TableSchema, rows: np.ndarray, chunk_rows: int = CHUNK_ROWS
) -> None:
    """Write a structured array as a columnar file in chunks."""
    n_rows = len(rows)
    n_chunks = (n_rows + chunk_rows - 1) // chunk_rows
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, schema.schema_hash(), n_rows, chunk_rows, n_chunks))
        for c in range(n_chunks):
            chunk = rows[c * chunk_rows:(c + 1) * chunk_rows]
            zone, dicts = _zonemap(schema, chunk)
            fh.write(_PRELUDE.pack(len(chunk), len(zone)))
            fh.write(zone)
            for f in schema.fields:
                col = np.ascontiguousarray(chunk[f.name])
                if f.name in dicts:
                    idx = np.searchsorted(dicts[f.name], col)
                    dt = "u1" if _index_width(len(dicts[f.name])) == 1 else "<u2"
                    block = idx.astype(dt).tobytes()
                else:
                    block = col.tobytes()
                fh.write(struct.pack("<I", zlib.crc32(block)))
                fh.write(block)


class ColumnFileReader:
    """Seek-based reader: metadata up front, column blocks on demand."""

    def __init__(self, path, schema: TableSchema):
        self.path = path
        self.schema = schema
        self._fh = open(path, "rb")
        raw = self._fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, schema_hash, n_rows, chunk_rows, n_chunks = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"{path}: not a columnar file")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if schema_hash != schema.schema_hash():
            raise FormatError(f"{path}: schema mismatch for table {schema.name!r}")
        self.n_rows = n_rows
        self.chunk_rows = chunk_rows
        self.n_chunks = n_chunks

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _parse_zonemap(self, raw: bytes, n_rows: int):
        minmax: dict[str, tuple[int, int]] = {}
        code_dict: dict[str, np.ndarray | None] = {}
        pos = 0
        for f in self.schema.fields:
            if f.ftype in (FieldType.INT, FieldType.DATE):
                lo, hi = struct.unpack_from("<qq", raw, pos)
                pos += 16
                minmax[f.name] = (lo, hi)
            else:
                (count,) = struct.unpack_from("<H", raw, pos)
                pos += 2
                if count == NO_DICT:
                    code_dict[f.name] = None
                else:
                    nbytes = count * f.dtype.itemsize
                    code_dict[f.name] = np.frombuffer(
                        raw[pos:pos + nbytes], dtype=f.dtype
                    )
                    pos += nbytes
        if pos != len(raw):
            raise FormatError(f"{self.path}: zone map length mismatch")
        return minmax, code_dict

    def iter_chunks(self):
        """Yield ChunkInfo for every chunk, reading only metadata."""
        self._fh.seek(_HEADER.size)
        for index in range(self.n_chunks):
            start = self._fh.tell()
            raw = self._fh.read(_PRELUDE.size)
            if len(raw) < _PRELUDE.size:
                raise FormatError(f"{self.path}: truncated chunk {index}")
            n_rows, zone_len = _PRELUDE.unpack(raw)
            zone_raw = self._fh.read(zone_len)
            minmax, code_dict = self._parse_zonemap(zone_raw, n_rows)
            offsets: dict[str, int] = {}
            sizes: dict[str, int] = {}
            pos = start + _PRELUDE.size + zone_len
            for f in self.schema.fields:
                dictionary = code_dict.get(f.name)
                if dictionary is not None:
                    size = n_rows * _index_width(len(dictionary))
                else:
                    size = n_rows * f.dtype.itemsize
                offsets[f.name] = pos
                sizes[f.name] = size
                pos += 4 + size
            info = ChunkInfo(index, n_rows, minmax, code_dict, offsets, sizes, pos)
            yield info
            self._fh.seek(pos)

    def read_columns(self, info: ChunkInfo, names) -> dict[str, np.ndarray]:
        """Materialize the named columns of one chunk, verifying each crc."""
        out: dict[str, np.ndarray] = {}
        for name in names:
            f = self.schema.field(name)
            self._fh.seek(info._block_offsets[name])
            (crc,) = struct.unpack("<I", self._fh.read(4))
            block = self._fh.read(info._block_sizes[name])
            if len(block) != info._block_sizes[name]:
                raise FormatError(f"{self.path}: truncated column {name} in chunk {info.index}")
            if zlib.crc32(block) != crc:
                raise ChecksumError(
                    f"{self.path}: checksum mismatch in column {name}, chunk {info.index}"
                )
            dictionary = info.code_dict.get(name)
            if dictionary is not None:
                dt = "u1" if _index_width(len(dictionary)) == 1 else "<u2"
                idx = np.frombuffer(block, dtype=dt)
                if idx.size and int(idx.max()) >= len(dictionary):
                    raise FormatError(
                        f"{self.path}: dictionary index out of range in column {name}, "
                        f"chunk {info.index}"
                    )
                out[name] = dictionary[idx]
            else:
                out[name] = np.frombuffer(block, dtype=f.dtype)
        return out


def read_col_file(path, schema: TableSchema, names=None) -> np.ndarray:
    """Read a whole columnar file into a structured array (test helper)."""
    wanted = tuple(names) if names is not None else schema.field_names()
    with ColumnFileReader(path, schema) as reader:
        out = np.empty(reader.n_rows, dtype=schema.numpy_dtype(wanted))
        at = 0
        for info in reader.iter_chunks():
            cols = reader.read_columns(info, wanted)
            for name in wanted:
                out[name][at:at + info.n_rows] = cols[name]
            at += info.n_rows
    return out
