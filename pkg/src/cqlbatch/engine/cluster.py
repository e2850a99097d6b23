"""Cluster shape: taskmanagers, slots, and the resources behind them."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ClusterConfig:
    """Worker topology; slots are the unit of partition assignment.

    Resources are modeled, not enforced: cores and RAM feed the cost model
    and the memory-budget check, while parallelism is purely logical.
    """

    taskmanagers: int
    cores_per_tm: int
    ram_per_tm: float  # gigabytes
    parallelism: int

    def __post_init__(self):
        for name in ("taskmanagers", "cores_per_tm", "parallelism"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.ram_per_tm <= 0:
            raise ValueError(f"ram_per_tm must be positive, got {self.ram_per_tm!r}")

    @property
    def n_slots(self) -> int:
        return self.taskmanagers * self.parallelism

    @property
    def total_cores(self) -> int:
        return self.taskmanagers * self.cores_per_tm

    @property
    def total_ram(self) -> float:
        return self.taskmanagers * self.ram_per_tm

    @property
    def toc(self) -> float:
        """Taskmanagers over total cores; small values mean few fat workers."""
        return self.taskmanagers / self.total_cores

    def taskmanager_of(self, slot: int) -> int:
        if not 0 <= slot < self.n_slots:
            raise ValueError(f"slot {slot} out of range")
        return slot // self.parallelism
