"""Comparison policies: oldest-data chasing, nearest-unvisited round trips,
and a uniform-random walker, all sharing one return-home safety layer.

Every policy schedules opportunistically (largest-age sensor covered from
the current cell) and routes with deterministic column-first steps, so a
given state always maps to the same action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import Action, EpisodeConfig, SystemState, valid_actions
from .model import (
    Cell,
    Move,
    SensorNode,
    energy_slack_value,
    in_coverage,
    manhattan_cells,
)


@dataclass(frozen=True)
class BaselineConfig:
    """Safety thresholds for heading home early.

    ``return_energy_margin`` of None means one hover surcharge, the tightest
    reserve that still leaves room for the single parity hover a return leg
    may need.
    """

    variant: str = "aoi_greedy"
    return_time_margin: int = 0
    return_energy_margin: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in ("aoi_greedy", "distance_round", "random"):
            raise ValueError(f"unknown baseline variant {self.variant!r}")
        if self.return_time_margin < 0:
            raise ValueError("return_time_margin must be >= 0")
        if self.return_energy_margin is not None and self.return_energy_margin < 0:
            raise ValueError("return_energy_margin must be >= 0")

    def energy_margin(self, config: EpisodeConfig) -> float:
        if self.return_energy_margin is not None:
            return self.return_energy_margin
        return config.surcharge


def toward_step(cur: Cell, target: Cell, config: EpisodeConfig) -> Move:
    """Column-first Manhattan step toward ``target``; Hover once there."""
    if cur[0] < target[0]:
        return Move.EAST
    if cur[0] > target[0]:
        return Move.WEST
    if cur[1] < target[1]:
        return Move.NORTH
    if cur[1] > target[1]:
        return Move.SOUTH
    return Move.HOVER


def nearest_covering_cell(sn: SensorNode, from_cell: Cell, config: EpisodeConfig) -> Cell:
    """Closest cell whose center collects from ``sn``, ties by (col, row).

    Falls back to the cell center closest to the sensor when the coverage
    radius reaches no cell center at all.
    """
    grid = config.grid
    best: Cell | None = None
    best_key: tuple[int, int, int] | None = None
    for c in range(grid.width):
        for r in range(grid.height):
            cell = (c, r)
            if in_coverage(grid.cell_center(cell), sn.position, config.radius):
                key = (manhattan_cells(cell, from_cell), c, r)
                if best_key is None or key < best_key:
                    best, best_key = cell, key
    if best is not None:
        return best
    # No reachable collection point; aim at the cell nearest the sensor.
    col = min(max(round(sn.position[0] / grid.cell_length), 0), grid.width - 1)
    row = min(max(round(sn.position[1] / grid.cell_length), 0), grid.height - 1)
    return (int(col), int(row))


def covered_sensor_ids(state: SystemState, config: EpisodeConfig) -> list[int]:
    """Ids of sensors whose coverage contains the current cell center."""
    pos = config.grid.cell_center(state.cell)
    return [sn.id for sn in config.sensors
            if in_coverage(pos, sn.position, config.radius)]


def opportunistic_schedule(state: SystemState, config: EpisodeConfig) -> int:
    """Collect from the covered sensor with the largest age; 0 when none."""
    best_id = 0
    best_age = -1
    for sn_id in covered_sensor_ids(state, config):
        age = state.ages.ages[sn_id - 1]
        if age > best_age:
            best_id, best_age = sn_id, age
    return best_id


def _orbit_step(cell: Cell, config: EpisodeConfig) -> Move:
    """First legal one-cell excursion, used to burn even time slack in place."""
    for mv in (Move.NORTH, Move.SOUTH, Move.EAST, Move.WEST):
        c, r = cell
        if mv is Move.NORTH and r + 1 < config.grid.height:
            return mv
        if mv is Move.SOUTH and r - 1 >= 0:
            return mv
        if mv is Move.EAST and c + 1 < config.grid.width:
            return mv
        if mv is Move.WEST and c - 1 >= 0:
            return mv
    return Move.HOVER  # 1x1 grid: nowhere to go


def return_step(state: SystemState, config: EpisodeConfig) -> Move:
    """Movement of the return leg: close in on the stop cell, then loiter.

    Loitering alternates one-cell excursions (which burn two slack slots at
    zero extra energy) with at most one final hover, so an early arrival
    still touches down exactly at the horizon.
    """
    if state.cell != config.grid.stop_cell:
        return toward_step(state.cell, config.grid.stop_cell, config)
    if state.time_slack >= 2:
        return _orbit_step(state.cell, config)
    return Move.HOVER


def movement_is_safe(movement: Move, state: SystemState, config: EpisodeConfig) -> bool:
    """Whether a movement keeps on-time arrival affordable.

    After the move the time slack must stay non-negative and the energy
    slack must still cover the one hover that an odd remaining slack forces
    (slack can otherwise be burned two slots at a time by excursions).
    """
    if movement is Move.HOVER:
        phi_after = state.time_slack - 1
        hovers_after = state.hovers + 1
    else:
        dc, dr = (0, 1) if movement is Move.NORTH else (0, -1) if movement is Move.SOUTH \
            else (1, 0) if movement is Move.EAST else (-1, 0)
        nxt = (state.cell[0] + dc, state.cell[1] + dr)
        d_now = manhattan_cells(state.cell, config.grid.stop_cell)
        d_next = manhattan_cells(nxt, config.grid.stop_cell)
        phi_after = state.time_slack - (0 if d_next < d_now else 2)
        hovers_after = state.hovers
    if phi_after < 0:
        return False
    reserve = phi_after % 2
    committed = energy_slack_value(
        config.initial_energy_slack, hovers_after + reserve, config.surcharge)
    return committed >= 0.0


def safety_override(state: SystemState, proposed: Action, config: EpisodeConfig,
                    bcfg: BaselineConfig) -> Action:
    """Replace the proposed movement with a return-leg step when slack runs
    low or the movement itself would make on-time arrival unaffordable.
    Scheduling is never touched; collection stays opportunistic."""
    engaged = (state.time_slack <= bcfg.return_time_margin
               or state.energy_slack <= bcfg.energy_margin(config))
    movement = return_step(state, config) if engaged else proposed.movement
    if not movement_is_safe(movement, state, config):
        movement = return_step(state, config)
    return Action(movement, proposed.schedule)


def aoi_greedy_action(state: SystemState, config: EpisodeConfig,
                      bcfg: BaselineConfig) -> Action:
    """Head for the sensor with the oldest data (ties to the lowest id),
    collecting from whatever is in range along the way."""
    ages = state.ages.ages
    target_id = max(range(1, config.n_sensors + 1), key=lambda i: (ages[i - 1], -i))
    target_cell = nearest_covering_cell(config.sensors[target_id - 1], state.cell, config)
    proposed = Action(
        toward_step(state.cell, target_cell, config),
        opportunistic_schedule(state, config),
    )
    return safety_override(state, proposed, config, bcfg)


def distance_round_action(state: SystemState, visited: frozenset[int],
                          config: EpisodeConfig, bcfg: BaselineConfig
                          ) -> tuple[Action, frozenset[int]]:
    """One decision of the round-trip policy plus the updated visited set.

    Rounds visit every sensor once, nearest-first by straight-line distance
    from the current cell; a sensor counts as visited the moment its update
    is collected. A full set starts a fresh round.
    """
    if len(visited) >= config.n_sensors:
        visited = frozenset()
    pos = config.grid.cell_center(state.cell)
    candidates = [sn for sn in config.sensors if sn.id not in visited]
    target = min(candidates, key=lambda sn: (
        (sn.position[0] - pos[0]) ** 2 + (sn.position[1] - pos[1]) ** 2, sn.id))
    target_cell = nearest_covering_cell(target, state.cell, config)
    schedule = opportunistic_schedule(state, config)
    if schedule != 0:
        visited = visited | {schedule}  # collection is certain inside coverage
    proposed = Action(toward_step(state.cell, target_cell, config), schedule)
    return safety_override(state, proposed, config, bcfg), visited


class AoiGreedyPolicy:
    """Stateless callable wrapper for env rollouts."""

    def __init__(self, config: EpisodeConfig, bcfg: BaselineConfig | None = None):
        self.config = config
        self.bcfg = bcfg or BaselineConfig(variant="aoi_greedy")

    def __call__(self, state: SystemState) -> Action:
        return aoi_greedy_action(state, self.config, self.bcfg)


class DistanceRoundPolicy:
    """Carries the round memory; use a fresh instance per episode."""

    def __init__(self, config: EpisodeConfig, bcfg: BaselineConfig | None = None):
        self.config = config
        self.bcfg = bcfg or BaselineConfig(variant="distance_round")
        self.visited: frozenset[int] = frozenset()

    def __call__(self, state: SystemState) -> Action:
        action, self.visited = distance_round_action(
            state, self.visited, self.config, self.bcfg)
        return action


class RandomPolicy:
    """Uniform over legal actions, kept honest by the same safety layer."""

    def __init__(self, config: EpisodeConfig, seed: int,
                 bcfg: BaselineConfig | None = None):
        self.config = config
        self.bcfg = bcfg or BaselineConfig(variant="random")
        self.rng = np.random.default_rng(seed)

    def __call__(self, state: SystemState) -> Action:
        options = valid_actions(state, self.config)
        proposed = options[self.rng.integers(len(options))]
        return safety_override(state, proposed, self.config, self.bcfg)


def make_policy(name: str, config: EpisodeConfig, seed: int = 0,
                bcfg: BaselineConfig | None = None):
    """Instantiate a baseline policy by name (one instance per episode)."""
    if name == "aoi_greedy":
        return AoiGreedyPolicy(config, bcfg)
    if name == "distance_round":
        return DistanceRoundPolicy(config, bcfg)
    if name == "random":
        return RandomPolicy(config, seed, bcfg)
    raise ValueError(f"unknown baseline {name!r}")
