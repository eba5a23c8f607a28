"""Finite-horizon episode mechanics: state assembly, legal-action masking,
the deterministic transition, and terminal classification.

Episodes run over decision slots t = 1..T-1; the UAV occupies the start cell
at t = 1 and must sit on the stop cell at t = T with non-negative energy
slack. Ages, time slack, and energy slack are all updated in closed form so
that repeated stepping never drifts from the invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .model import (
    AoIVector,
    Cell,
    ConfigError,
    EnergyParams,
    GridSpec,
    LinkParams,
    Move,
    RewardParams,
    SensorNode,
    TerminalKind,
    aoi_step,
    coverage_radius,
    energy_slack_value,
    hover_surcharge,
    in_coverage,
    manhattan_cells,
    move,
    propulsion_power,
    step_reward,
    time_slack,
)


class InvalidActionError(ValueError):
    """An action outside the legal set was submitted to ``step``."""


@dataclass(frozen=True)
class Action:
    """Joint per-slot decision: one movement and one scheduled sensor id (0 = none)."""

    movement: Move
    schedule: int


@dataclass(frozen=True)
class EpisodeConfig:
    """Fully resolved parameters of one episode.

    ``age_cap`` defaults to the horizon; ages can never exceed the episode
    length anyway when they start at 1.
    """

    grid: GridSpec
    sensors: tuple[SensorNode, ...]
    energy: EnergyParams = field(default_factory=EnergyParams)
    link: LinkParams = field(default_factory=LinkParams)
    reward: RewardParams = field(default_factory=RewardParams)
    horizon: int = 70
    age_cap: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.age_cap is None:
            object.__setattr__(self, "age_cap", self.horizon)
        if len(self.sensors) < 1:
            raise ConfigError("invariant N >= 1 violated: no sensors configured")
        ids = tuple(sn.id for sn in self.sensors)
        if ids != tuple(range(1, len(self.sensors) + 1)):
            raise ConfigError(f"sensor ids must be 1..N in order, got {ids}")
        min_t = 1 + manhattan_cells(self.grid.start_cell, self.grid.stop_cell)
        if self.horizon < min_t:
            raise ConfigError(
                f"invariant T >= 1 + manhattan(start, stop) violated: "
                f"horizon {self.horizon} < {min_t}")
        if self.age_cap < 1:
            raise ConfigError(f"age_cap must be >= 1, got {self.age_cap}")
        step_span = self.energy.cruise_speed * self.energy.slot_len
        if abs(step_span - self.grid.cell_length) > 1e-9 * self.grid.cell_length:
            raise ConfigError(
                f"invariant cruise_speed*slot_len == cell_length violated: "
                f"{step_span} != {self.grid.cell_length}")
        half = 0.5 * self.grid.cell_length
        x_max = (self.grid.width - 1) * self.grid.cell_length + half
        y_max = (self.grid.height - 1) * self.grid.cell_length + half
        for sn in self.sensors:
            x, y = sn.position
            if not (-half <= x <= x_max and -half <= y <= y_max):
                raise ConfigError(
                    f"sensor {sn.id} at {sn.position} outside the covered region")

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def n_actions(self) -> int:
        return len(Move) * (self.n_sensors + 1)

    @cached_property
    def radius(self) -> float:
        return coverage_radius(self.link, self.energy.slot_len)

    @cached_property
    def surcharge(self) -> float:
        return hover_surcharge(self.energy)

    @cached_property
    def initial_energy_slack(self) -> float:
        cruise_power = propulsion_power(self.energy.cruise_speed, self.energy)
        return self.energy.e_max - (self.horizon - 1) * cruise_power * self.energy.slot_len

    def action_index(self, action: Action) -> int:
        return int(action.movement) * (self.n_sensors + 1) + action.schedule

    def index_action(self, index: int) -> Action:
        per_move = self.n_sensors + 1
        return Action(Move(index // per_move), index % per_move)


@dataclass(frozen=True)
class SystemState:
    """Snapshot at the start of a slot.

    ``hovers`` counts hovering slots so far; energy slack is an affine
    function of it, which is how the stored value stays exactly equal to
    the closed form after any number of steps.
    """

    cell: Cell
    ages: AoIVector
    time_slack: int
    energy_slack: float
    slot: int
    hovers: int = 0


@dataclass(frozen=True)
class StepOutcome:
    next: SystemState
    reward: float
    terminal: bool
    kind: TerminalKind
    per_sn_ages: tuple[int, ...]


@dataclass(frozen=True)
class EpisodeRecord:
    """Full trajectory of one episode plus its summary metrics."""

    states: tuple[SystemState, ...]
    actions: tuple[Action, ...]
    rewards: tuple[float, ...]
    kind: TerminalKind
    total_return: float
    avg_age: float

    @property
    def length(self) -> int:
        return len(self.actions)


def reset(config: EpisodeConfig) -> SystemState:
    """Initial state: start cell, all ages fresh, full time and energy slack."""
    n = config.n_sensors
    phi = (config.horizon - 1) - manhattan_cells(config.grid.start_cell, config.grid.stop_cell)
    return SystemState(
        cell=config.grid.start_cell,
        ages=AoIVector(ages=(1,) * n, cap=config.age_cap),
        time_slack=phi,
        energy_slack=config.initial_energy_slack,
        slot=1,
        hovers=0,
    )


def legal_moves(cell: Cell, grid: GridSpec) -> list[Move]:
    """Movements that keep the UAV on the grid, in action-index order."""
    c, r = cell
    out = []
    if r + 1 < grid.height:
        out.append(Move.NORTH)
    if r - 1 >= 0:
        out.append(Move.SOUTH)
    if c + 1 < grid.width:
        out.append(Move.EAST)
    if c - 1 >= 0:
        out.append(Move.WEST)
    out.append(Move.HOVER)
    return out


def valid_actions(state: SystemState, config: EpisodeConfig) -> list[Action]:
    """All legal joint actions at a state, ordered by action index."""
    return [
        Action(mv, b)
        for mv in legal_moves(state.cell, config.grid)
        for b in range(config.n_sensors + 1)
    ]


def action_mask(state: SystemState, config: EpisodeConfig) -> np.ndarray:
    """Boolean mask over the flat action space; True marks a legal action."""
    per_move = config.n_sensors + 1
    mask = np.zeros(config.n_actions, dtype=bool)
    for mv in legal_moves(state.cell, config.grid):
        base = int(mv) * per_move
        mask[base:base + per_move] = True
    return mask


def step(state: SystemState, action: Action, config: EpisodeConfig) -> StepOutcome:
    """Apply one joint action; deterministic.

    Scheduling is resolved against the slot's own (pre-move) position: the
    scheduled sensor resets to age 1 only if the UAV currently covers it.
    Terminal classification checks the deadline first, then energy, then
    on-time arrival.
    """
    if state.slot > config.horizon - 1:
        raise InvalidActionError(f"episode already ended at slot {state.slot}")
    if not 0 <= action.schedule <= config.n_sensors:
        raise InvalidActionError(
            f"schedule {action.schedule} outside 0..{config.n_sensors}")
    try:
        new_cell = move(state.cell, action.movement, config.grid)
    except Exception as exc:
        raise InvalidActionError(str(exc)) from exc

    uav_pos = config.grid.cell_center(state.cell)
    new_ages = aoi_step(state.ages, action.schedule, uav_pos, config.sensors, config.radius)
    new_slot = state.slot + 1
    new_hovers = state.hovers + (1 if action.movement is Move.HOVER else 0)
    new_phi = (config.horizon - new_slot) - manhattan_cells(new_cell, config.grid.stop_cell)
    new_delta = energy_slack_value(config.initial_energy_slack, new_hovers, config.surcharge)

    if new_phi < 0:
        kind = TerminalKind.TIME_VIOLATION
    elif new_delta < 0:
        kind = TerminalKind.ENERGY_VIOLATION
    elif new_slot == config.horizon and new_cell == config.grid.stop_cell:
        kind = TerminalKind.SUCCESS
    else:
        kind = TerminalKind.RUNNING

    reward = step_reward(new_ages, config.sensors, config.horizon, kind, config.reward)
    nxt = SystemState(
        cell=new_cell,
        ages=new_ages,
        time_slack=new_phi,
        energy_slack=new_delta,
        slot=new_slot,
        hovers=new_hovers,
    )
    return StepOutcome(
        next=nxt,
        reward=reward,
        terminal=kind is not TerminalKind.RUNNING,
        kind=kind,
        per_sn_ages=new_ages.ages,
    )


def encode_observation(state: SystemState, config: EpisodeConfig) -> np.ndarray:
    """Normalized network input: position, ages, then both slack terms."""
    w = max(config.grid.width - 1, 1)
    h = max(config.grid.height - 1, 1)
    obs = np.empty(config.n_sensors + 4, dtype=np.float64)
    obs[0] = state.cell[0] / w
    obs[1] = state.cell[1] / h
    obs[2:2 + config.n_sensors] = [a / config.age_cap for a in state.ages.ages]
    obs[-2] = state.time_slack / config.horizon
    obs[-1] = state.energy_slack / config.energy.e_max
    return obs


def weighted_age_cost(ages: AoIVector, config: EpisodeConfig) -> float:
    """Importance-weighted sum of the current ages, scaled by the horizon."""
    return sum(sn.weight * a for sn, a in zip(config.sensors, ages.ages)) / config.horizon


def rollout(policy: Callable[[SystemState], Action], config: EpisodeConfig) -> EpisodeRecord:
    """Run one full episode under ``policy`` and report return and average age.

    The age metric sums the weighted per-slot cost over every observed state
    (episodes cut short by a violation contribute only the slots they lived).
    """
    state = reset(config)
    states = [state]
    actions: list[Action] = []
    rewards: list[float] = []
    kind = TerminalKind.SUCCESS if config.horizon == 1 else TerminalKind.RUNNING
    while state.slot < config.horizon:
        action = policy(state)
        outcome = step(state, action, config)
        actions.append(action)
        rewards.append(outcome.reward)
        state = outcome.next
        states.append(state)
        if outcome.terminal:
            kind = outcome.kind
            break
    avg_age = sum(weighted_age_cost(s.ages, config) for s in states)
    return EpisodeRecord(
        states=tuple(states),
        actions=tuple(actions),
        rewards=tuple(rewards),
        kind=kind,
        total_return=sum(rewards),
        avg_age=avg_age,
    )
