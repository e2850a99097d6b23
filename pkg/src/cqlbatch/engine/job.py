"""Job construction: map a plan and a partitioned dataset onto slots."""

from __future__ import annotations

from dataclasses import dataclass

from ..catalog import ValueSetBundle
from ..planner import IndexSchema, LogicalPlan
from .cluster import ClusterConfig


@dataclass(frozen=True)
class SlotPlan:
    slot: int
    taskmanager: int
    partitions: tuple[int, ...]


@dataclass(frozen=True)
class JobGraph:
    """Everything a run needs: the plan, the topology, and the shared bundle.

    Every plan node is instantiated per partition at execution time; the
    single merge point is the report.  The bundle is read-only and attached
    to every worker.
    """

    plan: LogicalPlan
    schema: IndexSchema
    cfg: ClusterConfig
    n_partitions: int
    slots: tuple[SlotPlan, ...]
    bundle: ValueSetBundle

    def partitions_of_slot(self, slot: int) -> tuple[int, ...]:
        return self.slots[slot].partitions


def build_job(
    plan: LogicalPlan,
    schema: IndexSchema,
    cfg: ClusterConfig,
    n_partitions: int,
    bundle: ValueSetBundle,
) -> JobGraph:
    """Assign partitions to slots round-robin."""
    if cfg.n_slots < 1:
        raise ValueError("cluster has no slots")
    if n_partitions < 1:
        raise ValueError("dataset has no partitions")
    owned: list[list[int]] = [[] for _ in range(cfg.n_slots)]
    for p in range(n_partitions):
        owned[p % cfg.n_slots].append(p)
    slots = tuple(
        SlotPlan(slot=s, taskmanager=cfg.taskmanager_of(s), partitions=tuple(parts))
        for s, parts in enumerate(owned)
    )
    return JobGraph(
        plan=plan,
        schema=schema,
        cfg=cfg,
        n_partitions=n_partitions,
        slots=slots,
        bundle=bundle,
    )
