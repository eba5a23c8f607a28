"""Physical world model: grid geometry, rotary-wing power, LoS link budget,
and per-sensor information-age bookkeeping.

Everything in this module is a pure function over immutable value types.
Positions are metric (x, y) ground coordinates; grid cells are (col, row)
indices with the lower-left cell center at the origin.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence


class ConfigError(ValueError):
    """A domain object violates one of its invariants."""


class InfeasibleLinkError(ValueError):
    """SN transmit power too low to close the link at the given altitude."""


class OutOfBoundsError(ValueError):
    """A movement would leave the grid (callers should mask these)."""


class Move(enum.IntEnum):
    """UAV movement per slot: one cell along an axis, or hold position.

    The integer values fix the action ordering used everywhere (argmax
    tie-breaks, replay indices, oracle tables), so do not reorder.
    """

    NORTH = 0
    SOUTH = 1
    EAST = 2
    WEST = 3
    HOVER = 4


# (dcol, drow) per movement; NORTH increases the row index.
_MOVE_DELTAS = {
    Move.NORTH: (0, 1),
    Move.SOUTH: (0, -1),
    Move.EAST: (1, 0),
    Move.WEST: (-1, 0),
    Move.HOVER: (0, 0),
}


class TerminalKind(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    TIME_VIOLATION = "time_violation"
    ENERGY_VIOLATION = "energy_violation"


Cell = tuple[int, int]


@dataclass(frozen=True)
class GridSpec:
    """Square-cell flight grid with pinned start and stop cells."""

    width: int
    height: int
    cell_length: float
    start_cell: Cell
    stop_cell: Cell

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.cell_length <= 0:
            raise ConfigError(f"cell_length must be positive, got {self.cell_length}")
        for name, cell in (("start_cell", self.start_cell), ("stop_cell", self.stop_cell)):
            if not self.contains(cell):
                raise ConfigError(f"{name} {cell} outside {self.width}x{self.height} grid")

    def contains(self, cell: Cell) -> bool:
        c, r = cell
        return 0 <= c < self.width and 0 <= r < self.height

    def cell_center(self, cell: Cell) -> tuple[float, float]:
        """Ground coordinates of a cell center, origin at cell (0, 0)."""
        return (cell[0] * self.cell_length, cell[1] * self.cell_length)


@dataclass(frozen=True)
class SensorNode:
    """A ground sensor with a fixed position and an importance weight."""

    id: int
    position: tuple[float, float]
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.id < 1:
            raise ConfigError(f"sensor ids are 1-based, got {self.id}")
        if self.weight <= 0:
            raise ConfigError(f"sensor {self.id} weight must be positive, got {self.weight}")


@dataclass(frozen=True)
class EnergyParams:
    """Rotary-wing propulsion model constants plus the energy/time budget."""

    p0: float = 99.66        # blade profile power at hover, W
    p1: float = 120.16       # induced power at hover, W
    u_tip: float = 120.0     # rotor blade tip speed, m/s
    v0: float = 0.002        # mean rotor induced velocity at hover, m/s
    d0: float = 0.48         # fuselage drag ratio
    rho: float = 1.225       # air density, kg/m^3
    s0: float = 0.0001       # rotor solidity
    rotor_area: float = 0.5  # rotor disk area, m^2
    e_max: float = 22000.0   # onboard energy, J
    slot_len: float = 1.0    # slot duration, s
    cruise_speed: float = 25.0  # cell-crossing speed, m/s

    def __post_init__(self) -> None:
        for name in ("p0", "p1", "u_tip", "v0", "d0", "rho", "s0",
                     "rotor_area", "e_max", "slot_len", "cruise_speed"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"EnergyParams.{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class LinkParams:
    """Sensor-to-UAV uplink budget for one status update per slot."""

    bandwidth: float = 1e6        # Hz
    update_size: float = 5e6      # bits per status update
    tx_power: float = 7.564e-2    # SN transmit power, W
    noise_power: float = 1e-13    # W (-100 dBm)
    ref_gain: float = 1e-6        # channel gain at 1 m (-60 dB), linear
    altitude: float = 120.0       # UAV flight altitude, m
    radius_override: float | None = None  # fixed coverage radius, m

    def __post_init__(self) -> None:
        for name in ("bandwidth", "update_size", "tx_power", "noise_power",
                     "ref_gain", "altitude"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"LinkParams.{name} must be positive, got {getattr(self, name)}")
        if self.radius_override is not None and self.radius_override < 0:
            raise ConfigError(f"radius_override must be >= 0, got {self.radius_override}")


@dataclass(frozen=True)
class AoIVector:
    """Per-sensor ages in slots, saturating at ``cap``."""

    ages: tuple[int, ...]
    cap: int

    def __post_init__(self) -> None:
        if self.cap < 1:
            raise ConfigError(f"age cap must be >= 1, got {self.cap}")
        for n, age in enumerate(self.ages, start=1):
            if not 1 <= age <= self.cap:
                raise ConfigError(f"age of sensor {n} is {age}, outside [1, {self.cap}]")


@dataclass(frozen=True)
class RewardParams:
    """Penalty/bonus constants; sized to dominate any single-step age cost."""

    k1: float = 100.0  # deadline violation penalty
    k2: float = 100.0  # energy violation penalty
    k3: float = 100.0  # on-time arrival bonus

    def __post_init__(self) -> None:
        if self.k1 <= 0 or self.k2 <= 0 or self.k3 <= 0:
            raise ConfigError("reward constants must all be positive")


def propulsion_power(speed: float, energy: EnergyParams) -> float:
    """Rotary-wing propulsion power at the given horizontal speed, in watts.

    Sum of the blade-profile, induced, and parasite terms. At speed 0 this
    is exactly p0 + p1.
    """
    if speed < 0:
        raise ValueError(f"speed must be >= 0, got {speed}")
    v2 = speed * speed
    blade = energy.p0 * (1.0 + 3.0 * v2 / (energy.u_tip * energy.u_tip))
    # Induced term is sqrt(sqrt(1 + x^2) - x) with x = v^2 / (2 v0^2).
    # For x >> 1 the direct difference cancels to 0 in float64, so use
    # sqrt(1 + x^2) - x = 1 / (sqrt(1 + x^2) + x).
    x = v2 / (2.0 * energy.v0 * energy.v0)
    induced = energy.p1 * math.sqrt(1.0 / (math.hypot(1.0, x) + x))
    parasite = 0.5 * energy.d0 * energy.rho * energy.s0 * energy.rotor_area * v2 * speed
    return blade + induced + parasite


def hover_surcharge(energy: EnergyParams) -> float:
    """Extra energy one hovering slot costs over one cruising slot, in joules."""
    return (propulsion_power(0.0, energy) - propulsion_power(energy.cruise_speed, energy)) * energy.slot_len


def channel_gain(uav_ground_pos: tuple[float, float], sn_pos: tuple[float, float],
                 link: LinkParams) -> float:
    """LoS channel power gain (linear) between a sensor and the UAV overhead."""
    dx = uav_ground_pos[0] - sn_pos[0]
    dy = uav_ground_pos[1] - sn_pos[1]
    return link.ref_gain / (dx * dx + dy * dy + link.altitude * link.altitude)


def coverage_radius(link: LinkParams, slot_len: float) -> float:
    """Max horizontal distance at which one update fits in one slot, in meters.

    Inverts the Shannon rate condition B * log2(1 + P*g/sigma^2) * slot >= M
    for the horizontal distance. ``radius_override`` short-circuits the
    computation when set.
    """
    if link.radius_override is not None:
        return link.radius_override
    snr_required = 2.0 ** (link.update_size / (link.bandwidth * slot_len)) - 1.0
    h2 = link.altitude * link.altitude
    arg = link.ref_gain * link.tx_power / (snr_required * link.noise_power) - h2
    if arg < 0.0:
        # Tolerate float rounding right at the feasibility boundary.
        if arg > -1e-9 * h2:
            return 0.0
        raise InfeasibleLinkError(
            f"tx_power {link.tx_power} W cannot close the link at altitude "
            f"{link.altitude} m (deficit {-arg:.6g} m^2)")
    return math.sqrt(arg)


def in_coverage(uav_ground_pos: tuple[float, float], sn_pos: tuple[float, float],
                radius: float) -> bool:
    """True when the horizontal distance is at most ``radius`` (inclusive)."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    return math.dist(uav_ground_pos, sn_pos) <= radius


def aoi_step(ages: AoIVector, scheduled_sn: int, uav_ground_pos: tuple[float, float],
             sensors: Sequence[SensorNode], radius: float) -> AoIVector:
    """Advance all ages by one slot; reset the scheduled sensor if it is in range.

    ``scheduled_sn`` is a 1-based sensor id, or 0 for no transmission. All
    unscheduled (or out-of-range) sensors age by one, saturating at the cap.
    """
    if not 0 <= scheduled_sn <= len(sensors):
        raise ValueError(f"scheduled_sn must be in 0..{len(sensors)}, got {scheduled_sn}")
    new_ages = []
    for sn, age in zip(sensors, ages.ages):
        if sn.id == scheduled_sn and in_coverage(uav_ground_pos, sn.position, radius):
            new_ages.append(1)
        else:
            new_ages.append(min(age + 1, ages.cap))
    return AoIVector(ages=tuple(new_ages), cap=ages.cap)


def move(cell: Cell, direction: Move, grid: GridSpec) -> Cell:
    """Apply one movement to a cell; raises if the result leaves the grid."""
    dc, dr = _MOVE_DELTAS[direction]
    nxt = (cell[0] + dc, cell[1] + dr)
    if not grid.contains(nxt):
        raise OutOfBoundsError(f"{direction.name} from {cell} leaves the {grid.width}x{grid.height} grid")
    return nxt


def manhattan_cells(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def time_slack(cell: Cell, slot: int, horizon: int, grid: GridSpec) -> int:
    """Slots remaining minus the minimum slots needed to reach the stop cell.

    Under unit axis-aligned moves this closed form reproduces the recursive
    update (unchanged when closing in, -1 on hover, -2 when retreating).
    """
    if not 1 <= slot <= horizon:
        raise ValueError(f"slot must be in 1..{horizon}, got {slot}")
    return (horizon - slot) - manhattan_cells(cell, grid.stop_cell)


def energy_slack_step(slack: float, direction: Move, energy: EnergyParams) -> float:
    """One-slot energy-slack update: hovering pays the hover surcharge, moving is free.

    The slack already budgets cruising for every remaining slot, so a moving
    slot spends exactly what was budgeted.
    """
    if direction is Move.HOVER:
        return slack - hover_surcharge(energy)
    return slack


def energy_slack_value(initial_slack: float, hovers: int, surcharge: float) -> float:
    """Closed-form energy slack after ``hovers`` hovering slots.

    Every consumer (environment, baselines, exact solver) computes slack
    through this one expression so comparisons agree bit for bit.
    """
    return initial_slack - hovers * surcharge


def step_reward(post_ages: AoIVector, sensors: Sequence[SensorNode], horizon: int,
                outcome: TerminalKind, rp: RewardParams) -> float:
    """Per-slot reward: negative weighted age cost plus the terminal adjustment.

    The cost term uses the post-transition ages; summed over an episode it
    telescopes to the weighted-average-age objective up to the constant
    initial-age term.
    """
    cost = sum(sn.weight * age for sn, age in zip(sensors, post_ages.ages)) / horizon
    if outcome is TerminalKind.TIME_VIOLATION:
        return -cost - rp.k1
    if outcome is TerminalKind.ENERGY_VIOLATION:
        return -cost - rp.k2
    if outcome is TerminalKind.SUCCESS:
        return -cost + rp.k3
    return -cost
