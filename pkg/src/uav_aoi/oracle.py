"""Exact finite-horizon solver: backward induction over the reachable state
graph, usable as ground truth on instances small enough to enumerate.

States compress to (cell, ages, hover count) per slot; energy is an affine
function of the hover count, so the continuous slack dimension collapses to
at most one integer per step. Transitions reuse the environment's own step
function, so the table is exact by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .env import (
    Action,
    EpisodeConfig,
    EpisodeRecord,
    SystemState,
    reset,
    rollout,
    step,
    valid_actions,
)
from .model import Cell


class StateSpaceTooLargeError(ValueError):
    """The instance exceeds the configured enumeration budget."""


class MissingStateError(KeyError):
    """A rollout reached a state absent from the value table (config mismatch)."""


CompactKey = tuple[Cell, tuple[int, ...], int]  # (cell, ages, hovers)


def compact_key(state: SystemState) -> CompactKey:
    return (state.cell, state.ages.ages, state.hovers)


@dataclass(frozen=True)
class SolveLimits:
    max_states: int = 50_000_000


@dataclass
class ValueTable:
    """Optimal remaining return and argmax action for every reachable state.

    ``layers[t]`` maps the compact key of a slot-t state to
    (optimal value, best action index); slots run 1..T-1.
    """

    horizon: int
    n_sensors: int
    root_value: float
    layers: dict[int, dict[CompactKey, tuple[float, int]]] = field(default_factory=dict)

    def lookup(self, state: SystemState) -> tuple[float, int]:
        try:
            return self.layers[state.slot][compact_key(state)]
        except KeyError as exc:
            raise MissingStateError(
                f"state at slot {state.slot} with key {compact_key(state)} "
                f"not in table (config mismatch?)") from exc


def estimate_state_count(config: EpisodeConfig) -> int:
    """Loose upper bound on enumerable states, used as the size guard."""
    cells = config.grid.width * config.grid.height
    age_levels = min(config.age_cap, config.horizon)
    return cells * age_levels ** config.n_sensors * config.horizon * config.horizon


def solve(config: EpisodeConfig, limits: SolveLimits | None = None) -> ValueTable:
    """Backward induction from the last decision slot to the first.

    The value of a state is the max over legal actions of the step reward
    plus the successor value (zero for terminal successors); ties go to the
    lowest action index, matching the learner's tie-break.
    """
    limits = limits or SolveLimits()
    estimate = estimate_state_count(config)
    if estimate > limits.max_states:
        raise StateSpaceTooLargeError(
            f"estimated {estimate} states exceeds the limit of {limits.max_states}")

    root = reset(config)
    table = ValueTable(horizon=config.horizon, n_sensors=config.n_sensors, root_value=0.0)
    if config.horizon == 1:
        return table  # no decisions; the start cell is already the stop cell

    # Forward pass: reachable non-terminal states per slot.
    frontier: dict[CompactKey, SystemState] = {compact_key(root): root}
    reachable: dict[int, dict[CompactKey, SystemState]] = {1: frontier}
    total = 1
    for t in range(1, config.horizon - 1):
        nxt: dict[CompactKey, SystemState] = {}
        for state in reachable[t].values():
            for action in valid_actions(state, config):
                outcome = step(state, action, config)
                if not outcome.terminal:
                    nxt[compact_key(outcome.next)] = outcome.next
        total += len(nxt)
        if total > limits.max_states:
            raise StateSpaceTooLargeError(
                f"reached {total} states during enumeration, over the limit "
                f"of {limits.max_states}")
        reachable[t + 1] = nxt

    # Backward pass; valid_actions iterates in action-index order, so the
    # first strict improvement realizes the lowest-index tie-break.
    next_values: dict[CompactKey, tuple[float, int]] = {}
    for t in range(config.horizon - 1, 0, -1):
        values: dict[CompactKey, tuple[float, int]] = {}
        for key, state in reachable[t].items():
            best = -float("inf")
            best_idx = -1
            for action in valid_actions(state, config):
                outcome = step(state, action, config)
                v = outcome.reward
                if not outcome.terminal:
                    v += next_values[compact_key(outcome.next)][0]
                if v > best:
                    best = v
                    best_idx = config.action_index(action)
            values[key] = (best, best_idx)
        table.layers[t] = values
        next_values = values

    table.root_value = table.layers[1][compact_key(root)][0]
    return table


def optimal_policy(table: ValueTable, config: EpisodeConfig) -> Callable[[SystemState], Action]:
    def policy(state: SystemState) -> Action:
        _, action_idx = table.lookup(state)
        return config.index_action(action_idx)
    return policy


def optimal_rollout(table: ValueTable, config: EpisodeConfig) -> EpisodeRecord:
    """Greedy rollout through the table; its return equals the root value."""
    return rollout(optimal_policy(table, config), config)


def policy_value(policy: Callable[[SystemState], Action],
                 config: EpisodeConfig) -> tuple[float, float]:
    """Exact return and weighted-average age of a policy (the environment is
    deterministic, so one rollout is the exact expectation)."""
    record = rollout(policy, config)
    return record.total_return, record.avg_age


TABLE_MAGIC = b"UAVVTAB1"


def save_table(table: ValueTable, path: str | Path) -> None:
    """Write the table; see the README for the exact byte layout.

    Layout: 8-byte magic, uint32 sensor count N, uint32 horizon, float64
    root value, uint32 entry count, then per entry: uint32 slot, col, row,
    hovers, N uint32 ages, float64 value, int32 action index. Entries are
    sorted, so identical tables serialize identically.
    """
    entries = []
    for slot in sorted(table.layers):
        for (cell, ages, hovers), (value, action_idx) in sorted(table.layers[slot].items()):
            entries.append((slot, cell[0], cell[1], hovers, ages, value, action_idx))
    parts = [
        TABLE_MAGIC,
        struct.pack("<II", table.n_sensors, table.horizon),
        struct.pack("<d", table.root_value),
        struct.pack("<I", len(entries)),
    ]
    for slot, col, row, hovers, ages, value, action_idx in entries:
        parts.append(struct.pack(f"<IIII{table.n_sensors}Idi",
                                 slot, col, row, hovers, *ages, value, action_idx))
    Path(path).write_bytes(b"".join(parts))


def load_table(path: str | Path) -> ValueTable:
    raw = Path(path).read_bytes()
    if raw[:8] != TABLE_MAGIC:
        raise ValueError(f"not a value table: bad magic {raw[:8]!r}")
    off = 8
    n_sensors, horizon = struct.unpack_from("<II", raw, off)
    off += 8
    (root_value,) = struct.unpack_from("<d", raw, off)
    off += 8
    (n_entries,) = struct.unpack_from("<I", raw, off)
    off += 4
    table = ValueTable(horizon=horizon, n_sensors=n_sensors, root_value=root_value)
    fmt = f"<IIII{n_sensors}Idi"
    size = struct.calcsize(fmt)
    for _ in range(n_entries):
        fields = struct.unpack_from(fmt, raw, off)
        off += size
        slot, col, row, hovers = fields[:4]
        ages = tuple(fields[4:4 + n_sensors])
        value, action_idx = fields[4 + n_sensors], fields[5 + n_sensors]
        table.layers.setdefault(slot, {})[((col, row), ages, hovers)] = (value, action_idx)
    if off != len(raw):
        raise ValueError(f"value table has {len(raw) - off} trailing bytes")
    return table
