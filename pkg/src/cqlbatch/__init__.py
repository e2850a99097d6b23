"""Compiler and batch execution engine for a subset of Clinical Quality Language.

The package compiles a quality measure written in a small CQL subset into a
logical plan, optimizes it (predicate pushdown, shared-scan fusion, broadcast
valueset binding), and executes it over partitioned on-disk datasets with a
configurable worker/slot pool.  It also ships a selectivity-controlled
synthetic data generator, a naive reference interpreter used as ground truth,
and a cloud cost model for benchmark reporting.
"""

__version__ = "0.1.0"
