"""On-disk index formats and dataset handles.

Two native layouts exist for every table partition: a length-prefixed row
format decoded in one shot, and a chunked columnar format with per-chunk zone
maps that lets scans read only referenced columns and skip chunks that cannot
match.
"""

from .rowfile import ChecksumError, FormatError, read_row_columns, read_row_file, write_row_file
from .colfile import (
    CHUNK_ROWS,
    ChunkInfo,
    ColumnFileReader,
    write_col_file,
)
from .dataset import (
    DatasetHandle,
    MissingTableError,
    open_dataset,
    partition_filename,
)

__all__ = [
    "CHUNK_ROWS",
    "ChecksumError",
    "ChunkInfo",
    "ColumnFileReader",
    "DatasetHandle",
    "FormatError",
    "MissingTableError",
    "open_dataset",
    "partition_filename",
    "read_row_columns",
    "read_row_file",
    "write_col_file",
    "write_row_file",
]
