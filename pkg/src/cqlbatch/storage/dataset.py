"""Dataset directory layout: manifest plus per-table partition files.

A dataset is a directory with a manifest.json and one file per (table,
partition) pair, named `{table}.p{NNNN}.{ext}`.  All seven tables share the
same partition count and the same patient-id partitioner, which is what lets
the engine evaluate each partition independently.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from ..tables import ALL_TABLES, TableSchema

EXTENSIONS = {"row": "cqbr", "col": "cqbc"}


class MissingTableError(Exception):
    def __init__(self, path: str):
        super().__init__(f"missing table file: {path}")
        self.path = path


def partition_filename(table: str, partition: int, fmt: str) -> str:
    return f"{table}.p{partition:04d}.{EXTENSIONS[fmt]}"


@dataclass(frozen=True)
class DatasetHandle:
    directory: str
    fmt: str
    n_partitions: int
    n_patients: int
    table_rows: dict[str, int]

    def schema(self, table: str) -> TableSchema:
        return ALL_TABLES[table]

    def partition_path(self, table: str, partition: int) -> str:
        path = os.path.join(self.directory, partition_filename(table, partition, self.fmt))
        if not os.path.exists(path):
            raise MissingTableError(path)
        return path

    def total_rows(self) -> int:
        return sum(self.table_rows.values())


def write_manifest(
    directory: str,
    fmt: str,
    n_partitions: int,
    n_patients: int,
    table_rows: dict[str, int],
    extra: dict | None = None,
) -> None:
    doc = {
        "format": fmt,
        "format_version": 1,
        "n_partitions": n_partitions,
        "n_patients": n_patients,
        "tables": {name: {"rows": int(rows)} for name, rows in sorted(table_rows.items())},
    }
    if extra:
        doc.update(extra)
    tmp = os.path.join(directory, "manifest.json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(directory, "manifest.json"))


def open_dataset(directory: str) -> DatasetHandle:
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.exists(manifest_path):
        raise MissingTableError(manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    fmt = doc["format"]
    if fmt not in EXTENSIONS:
        raise ValueError(f"unknown dataset format {fmt!r}")
    tables = doc["tables"]
    expected = set(ALL_TABLES)
    if set(tables) != expected:
        missing = sorted(expected - set(tables))
        raise ValueError(f"manifest is missing tables: {missing}")
    return DatasetHandle(
        directory=directory,
        fmt=fmt,
        n_partitions=int(doc["n_partitions"]),
        n_patients=int(doc["n_patients"]),
        table_rows={name: int(info["rows"]) for name, info in tables.items()},
    )
