"""Bounded per-client sample caches with deterministic update rules.

Rules see only arrival metadata (insertion round, global index); features and
labels ride along as opaque payload, which keeps every rule data-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .model import Example

__all__ = ["MemoryRule", "MemoryState", "StoredExample", "new_memory", "update", "index_set"]

_RULES = ("fifo", "replace_all", "keep_all")


@dataclass(frozen=True)
class MemoryRule:
    """One of "fifo" (oldest insertion out, ties by ascending global index),
    "replace_all" (contents become the incoming batch), or "keep_all"
    (append only; overflowing capacity is a hard error)."""

    kind: str

    def __post_init__(self) -> None:
        if self.kind not in _RULES:
            raise ValueError(f"unknown memory rule: {self.kind!r}")


@dataclass(frozen=True)
class StoredExample:
    example: Example
    insertion_round: int
    residence: int  # consecutive rounds present, counting the current one


@dataclass(frozen=True)
class MemoryState:
    capacity: int
    contents: tuple[StoredExample, ...]

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if len(self.contents) > self.capacity:
            raise ValueError("contents exceed capacity")
        idx = [s.example.global_index for s in self.contents]
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate global_index in memory")

    def __len__(self) -> int:
        return len(self.contents)


def new_memory(capacity: int) -> MemoryState:
    return MemoryState(capacity=capacity, contents=())


def update(state: MemoryState, rule: MemoryRule, batch: list[Example], t: int) -> MemoryState:
    """Apply one round's batch, returning the new state.

    Retained examples get their residence incremented; new ones start at 1.
    """
    if len(batch) > state.capacity:
        raise ValueError(
            f"batch of {len(batch)} exceeds memory capacity {state.capacity}"
        )
    incoming = tuple(
        StoredExample(example=z, insertion_round=t, residence=1) for z in batch
    )
    if rule.kind == "replace_all":
        # contents become the incoming batch exactly, even when it is empty
        return MemoryState(capacity=state.capacity, contents=incoming)
    kept = tuple(replace(s, residence=s.residence + 1) for s in state.contents)
    merged = kept + incoming
    if len(merged) <= state.capacity:
        return MemoryState(capacity=state.capacity, contents=merged)
    if rule.kind == "keep_all":
        raise ValueError("keep_all memory overflow; size the capacity to the pulse")
    # fifo: evict oldest insertion rounds first, ties by ascending global index
    order = sorted(
        range(len(merged)),
        key=lambda i: (merged[i].insertion_round, merged[i].example.global_index),
    )
    survivors = sorted(order[len(merged) - state.capacity :])
    return MemoryState(
        capacity=state.capacity, contents=tuple(merged[i] for i in survivors)
    )


def index_set(state: MemoryState) -> set[int]:
    """Global indices of the samples currently held."""
    return {s.example.global_index for s in state.contents}
