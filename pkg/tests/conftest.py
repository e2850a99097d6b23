"""Shared fixtures: the bundled measure compiled once, plus one small
generated dataset per storage format.  Everything here is session scoped
because compilation and generation are pure functions of their inputs.
"""

from importlib import resources as ir

import pytest

from cqlbatch import catalog
from cqlbatch.datagen import generate_workload
from cqlbatch.engine import ClusterConfig, build_job, execute
from cqlbatch.frontend import load_params, parse_library, resolve
from cqlbatch.planner import index_schema, lower, optimize
from cqlbatch.storage import open_dataset

SEED = 42
RATE = 0.2
SMALL_N = 1000


@pytest.fixture(scope="session")
def measure():
    """(source library, resolved ast, valueset definitions)."""
    res = ir.files("cqlbatch") / "resources"
    lib = parse_library((res / "bcs.cql").read_text(), name="bcs.cql")
    params = load_params((res / "params.json").read_text())
    defs = catalog.load_valuesets((res / "valuesets.json").read_text())
    ast = resolve(lib, params, set(defs))
    return lib, ast, defs


@pytest.fixture(scope="session")
def naive_plan(measure):
    _, ast, _ = measure
    return lower(ast)


@pytest.fixture(scope="session")
def opt_plan(measure):
    _, ast, defs = measure
    return optimize(lower(ast), defs, True)


@pytest.fixture(scope="session")
def small_row(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "small-row"
    manifest = generate_workload(SMALL_N, RATE, SEED, str(out), fmt="row")
    return str(out), manifest


@pytest.fixture(scope="session")
def small_col(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "small-col"
    manifest = generate_workload(SMALL_N, RATE, SEED, str(out), fmt="col")
    return str(out), manifest


@pytest.fixture(scope="session")
def run_measure(measure):
    """Callable that executes a plan against a dataset directory."""
    _, _, defs = measure

    def run(plan, data_dir, cfg=None, with_flags=True):
        data = open_dataset(data_dir)
        cfg = cfg or ClusterConfig(1, 2, 4.0, 2)
        bundle = catalog.broadcast_handles(defs, plan)
        job = build_job(plan, index_schema(plan), cfg, data.n_partitions, bundle)
        return execute(job, data, with_flags=with_flags)

    return run
