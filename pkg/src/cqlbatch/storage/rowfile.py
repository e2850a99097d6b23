"""Row-oriented partition files.

Layout: a 32-byte header {magic, version, schema hash, row count, payload
crc32}, then one record per row as a u16 length prefix followed by the fixed
width payload for the table schema.  The whole payload region is decoded with
a single structured-dtype frombuffer, so reads stay vectorized.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from ..tables import TableSchema

MAGIC = b"CQBR"
VERSION = 1
_HEADER = struct.Struct("<4sHQQI6x")  # magic, version, schema, rows, crc
assert _HEADER.size == 32


class FormatError(Exception):
    pass


class ChecksumError(FormatError):
    pass


def _record_dtype(schema: TableSchema) -> np.dtype:
    fields = [("_len", "<u2")]
    fields += [(f.name, f.dtype) for f in schema.fields]
    return np.dtype(fields)


def write_row_file(path, schema: TableSchema, rows: np.ndarray) -> None:
    """Write a structured array (schema.numpy_dtype()) as a row file."""
    payload_dtype = _record_dtype(schema)
    rec = np.zeros(len(rows), dtype=payload_dtype)
    rec["_len"] = schema.numpy_dtype().itemsize
    for f in schema.fields:
        rec[f.name] = rows[f.name]
    payload = rec.tobytes()
    header = _HEADER.pack(
        MAGIC, VERSION, schema.schema_hash(), len(rows), zlib.crc32(payload)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _decode(path, schema: TableSchema) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, schema_hash, n_rows, crc = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a row file")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if schema_hash != schema.schema_hash():
        raise FormatError(f"{path}: schema mismatch for table {schema.name!r}")
    # memoryview keeps the checksum pass from copying the payload
    if zlib.crc32(memoryview(raw)[_HEADER.size:]) != crc:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    payload_dtype = _record_dtype(schema)
    if len(raw) - _HEADER.size != n_rows * payload_dtype.itemsize:
        raise FormatError(f"{path}: payload length disagrees with row count")
    rec = np.frombuffer(raw, dtype=payload_dtype, offset=_HEADER.size)
    width = schema.numpy_dtype().itemsize
    if n_rows and not (rec["_len"] == width).all():
        raise FormatError(f"{path}: bad record length prefix")
    return rec


def read_row_file(path, schema: TableSchema) -> np.ndarray:
    """Decode a row file back into a structured array, verifying the crc."""
    rec = _decode(path, schema)
    out = np.empty(len(rec), dtype=schema.numpy_dtype())
    for f in schema.fields:
        out[f.name] = rec[f.name]
    return out


def read_row_columns(path, schema: TableSchema, fields=None) -> tuple[int, dict]:
    """Decode a row file into contiguous per-field arrays.

    Only the requested fields are materialized; the record bytes are still
    read and checksummed in full, which is the point of a row layout.
    """
    rec = _decode(path, schema)
    if fields is None:
        fields = tuple(f.name for f in schema.fields)
    return len(rec), {name: np.ascontiguousarray(rec[name]) for name in fields}
