"""Episode mechanics: reset values, masking, transitions, terminal
classification, and the slack closed forms."""

import math

import numpy as np
import pytest

from uav_aoi.env import (
    Action,
    EpisodeConfig,
    InvalidActionError,
    SystemState,
    action_mask,
    encode_observation,
    reset,
    rollout,
    step,
    valid_actions,
)
from uav_aoi.model import (
    AoIVector,
    ConfigError,
    EnergyParams,
    GridSpec,
    LinkParams,
    Move,
    SensorNode,
    TerminalKind,
    energy_slack_step,
    manhattan_cells,
)

from _fixtures import corridor_config, table_scale_config


class TestReset:
    def test_table_scale_time_slack(self):
        s = reset(table_scale_config())
        assert s.time_slack == 50
        assert s.slot == 1
        assert s.cell == (10, 0)

    def test_table_scale_energy_slack(self):
        s = reset(table_scale_config())
        assert s.energy_slack == pytest.approx(14211.5654668, rel=1e-9)

    def test_all_ages_fresh(self):
        s = reset(table_scale_config(n_sensors=5))
        assert s.ages.ages == (1, 1, 1, 1, 1)

    def test_invalid_config_names_invariant(self):
        grid = GridSpec(4, 4, 25.0, (0, 0), (3, 3))
        with pytest.raises(ConfigError, match="manhattan"):
            EpisodeConfig(grid=grid, sensors=(SensorNode(1, (0.0, 0.0)),), horizon=5)
        with pytest.raises(ConfigError, match="N >= 1"):
            EpisodeConfig(grid=grid, sensors=(), horizon=10)
        with pytest.raises(ConfigError, match="cruise_speed"):
            EpisodeConfig(grid=grid, sensors=(SensorNode(1, (0.0, 0.0)),),
                          energy=EnergyParams(cruise_speed=10.0), horizon=10)


class TestValidActions:
    def test_corner_masks_movements(self):
        cfg = table_scale_config()
        state = SystemState((0, 0), AoIVector((1, 1, 1), 70), 30, 1e4, 5)
        moves = {a.movement for a in valid_actions(state, cfg)}
        assert moves == {Move.NORTH, Move.EAST, Move.HOVER}

    def test_opposite_corner(self):
        cfg = table_scale_config()
        state = SystemState((19, 19), AoIVector((1, 1, 1), 70), 30, 1e4, 5)
        moves = {a.movement for a in valid_actions(state, cfg)}
        assert moves == {Move.SOUTH, Move.WEST, Move.HOVER}

    def test_interior_full_joint_space(self):
        cfg = table_scale_config()
        state = SystemState((10, 10), AoIVector((1, 1, 1), 70), 30, 1e4, 5)
        acts = valid_actions(state, cfg)
        assert len(acts) == 5 * (cfg.n_sensors + 1)
        assert len(set(acts)) == len(acts)

    def test_mask_agrees_with_list(self):
        cfg = table_scale_config()
        state = SystemState((0, 7), AoIVector((1, 1, 1), 70), 30, 1e4, 5)
        mask = action_mask(state, cfg)
        listed = {cfg.action_index(a) for a in valid_actions(state, cfg)}
        assert set(np.flatnonzero(mask)) == listed

    def test_index_round_trip(self):
        cfg = table_scale_config()
        for idx in range(cfg.n_actions):
            assert cfg.action_index(cfg.index_action(idx)) == idx


class TestStep:
    def test_final_approach_success(self):
        cfg = table_scale_config()
        state = SystemState((10, 18), AoIVector((5, 9, 2), 70), 0,
                            cfg.initial_energy_slack, 69)
        out = step(state, Action(Move.NORTH, 0), cfg)
        assert out.kind is TerminalKind.SUCCESS
        assert out.terminal
        expected_cost = (6 + 10 + 3) / 70
        assert out.reward == pytest.approx(100.0 - expected_cost, rel=1e-12)

    def test_hover_at_zero_slack_is_time_violation(self):
        cfg = table_scale_config()
        # (10, 5) is 14 cells from the stop, so slack hits 0 at slot 56.
        state = SystemState((10, 5), AoIVector((1, 1, 1), 70), 0,
                            cfg.initial_energy_slack, 56)
        out = step(state, Action(Move.HOVER, 0), cfg)
        assert out.next.time_slack == -1
        assert out.kind is TerminalKind.TIME_VIOLATION
        assert out.reward < -100.0

    def test_scheduling_covered_sensor_resets_age(self):
        cfg = table_scale_config()  # sensor 1 at cell (4, 5), R = 100 m
        state = SystemState((4, 7), AoIVector((9, 9, 9), 70), 20,
                            cfg.initial_energy_slack, 10)
        out = step(state, Action(Move.EAST, 1), cfg)
        assert out.next.ages.ages == (1, 10, 10)

    def test_coverage_checked_before_moving(self):
        cfg = table_scale_config()
        # (4, 9) is 100 m from sensor 1 (in range); moving north leaves range.
        state = SystemState((4, 9), AoIVector((5, 5, 5), 70), 20,
                            cfg.initial_energy_slack, 10)
        out = step(state, Action(Move.NORTH, 1), cfg)
        assert out.next.ages.ages[0] == 1

    def test_energy_violation_on_over_hovering(self):
        cfg = table_scale_config(e_max=9000.0)
        state = reset(cfg)
        budget = math.floor(state.energy_slack / cfg.surcharge)
        assert budget == 11
        for i in range(budget + 1):
            out = step(state, Action(Move.HOVER, 0), cfg)
            state = out.next
        assert out.kind is TerminalKind.ENERGY_VIOLATION
        assert state.energy_slack < 0
        cost = sum(a for a in state.ages.ages) / cfg.horizon
        assert out.reward == pytest.approx(-cost - cfg.reward.k2, rel=1e-12)

    def test_masked_action_rejected(self):
        cfg = table_scale_config()
        state = reset(cfg)  # at (10, 0): SOUTH leaves the grid
        with pytest.raises(InvalidActionError):
            step(state, Action(Move.SOUTH, 0), cfg)
        with pytest.raises(InvalidActionError):
            step(state, Action(Move.NORTH, 4), cfg)

    def test_step_after_end_rejected(self):
        cfg = corridor_config(length=3)
        state = SystemState((0, 2), AoIVector((3,), 3), 0, 100.0, 3)
        with pytest.raises(InvalidActionError):
            step(state, Action(Move.HOVER, 0), cfg)


class TestEncodeObservation:
    def test_reset_encoding(self):
        cfg = table_scale_config()
        obs = encode_observation(reset(cfg), cfg)
        expect = [10 / 19, 0.0, 1 / 70, 1 / 70, 1 / 70, 50 / 70,
                  cfg.initial_energy_slack / 22000.0]
        assert obs == pytest.approx(expect, rel=1e-12)
        assert len(obs) == cfg.n_sensors + 4

    def test_position_extremes(self):
        cfg = table_scale_config()
        state = SystemState((19, 19), AoIVector((1, 1, 1), 70), 30, 1e4, 5)
        obs = encode_observation(state, cfg)
        assert obs[0] == 1.0 and obs[1] == 1.0

    def test_age_cap_normalizes_to_one(self):
        cfg = table_scale_config()
        state = SystemState((5, 5), AoIVector((70, 1, 1), 70), 30, 1e4, 5)
        assert encode_observation(state, cfg)[2] == 1.0

    def test_components_bounded(self):
        cfg = table_scale_config()
        state = reset(cfg)
        for _ in range(15):
            out = step(state, Action(Move.NORTH, 1), cfg)
            obs = encode_observation(out.next, cfg)
            assert np.all(obs >= -1.0) and np.all(obs <= 1.0)
            state = out.next
            if out.terminal:
                break


def _run_fixed(cfg, movements, schedule=0):
    seq = iter(movements)
    return rollout(lambda s: Action(next(seq), schedule), cfg)


class TestRollout:
    def test_straight_line_age_sum(self):
        # Unique corridor path, nothing collected: age at slot t is t.
        cfg = corridor_config(length=4)
        rec = _run_fixed(cfg, [Move.NORTH] * 3)
        T = cfg.horizon
        assert rec.kind is TerminalKind.SUCCESS
        assert rec.avg_age == pytest.approx(sum(range(1, T + 1)) / T, rel=1e-12)

    def test_telescoping_identity(self):
        # Horizon 8 keeps every cost dyadic, so the identity is float-exact:
        # G = k3 + (sum of weights)/T - J on a successful episode.
        grid = GridSpec(3, 3, 25.0, (0, 0), (2, 2))
        sensors = (SensorNode(1, grid.cell_center((1, 1))),)
        cfg = EpisodeConfig(grid=grid, sensors=sensors, horizon=8,
                            link=LinkParams(radius_override=25.0))
        moves = [Move.NORTH, Move.HOVER, Move.EAST, Move.HOVER, Move.NORTH,
                 Move.HOVER, Move.EAST]
        rec = _run_fixed(cfg, moves, schedule=1)
        assert rec.kind is TerminalKind.SUCCESS
        assert rec.total_return == cfg.reward.k3 + 1 / 8 - rec.avg_age

    def test_violation_ends_early(self):
        cfg = corridor_config(length=4, horizon=6)
        rec = _run_fixed(cfg, [Move.HOVER] * 5)
        assert rec.kind is TerminalKind.TIME_VIOLATION
        assert rec.length < cfg.horizon - 1

    def test_deterministic(self):
        cfg = table_scale_config()
        pattern = [Move.NORTH, Move.EAST, Move.HOVER, Move.NORTH]

        def policy(state):
            mv = pattern[state.slot % 4]
            if mv not in {a.movement for a in valid_actions(state, cfg)}:
                mv = Move.HOVER
            return Action(mv, 2)

        a = rollout(policy, cfg)
        b = rollout(policy, cfg)
        assert a == b
        assert a.rewards == b.rewards


class TestSlackClosedForms:
    def test_random_walks_match_recursions(self):
        # Independent recursions: the drop rule for time slack (0 closer,
        # 1 hover, 2 farther by straight-line distance) and an independent
        # hover tally driving the affine energy form, against stored state.
        cfg = table_scale_config()
        from uav_aoi.model import hover_surcharge, propulsion_power
        surcharge = hover_surcharge(cfg.energy)
        delta1 = cfg.energy.e_max - (cfg.horizon - 1) * propulsion_power(
            cfg.energy.cruise_speed, cfg.energy) * cfg.energy.slot_len
        rng = np.random.default_rng(42)
        for _ in range(200):
            state = reset(cfg)
            phi = state.time_slack
            hovers = 0
            assert state.energy_slack == delta1
            while state.slot < cfg.horizon:
                acts = valid_actions(state, cfg)
                action = acts[rng.integers(len(acts))]
                out = step(state, action, cfg)
                d0 = math.dist(cfg.grid.cell_center(state.cell),
                               cfg.grid.cell_center(cfg.grid.stop_cell))
                d1 = math.dist(cfg.grid.cell_center(out.next.cell),
                               cfg.grid.cell_center(cfg.grid.stop_cell))
                phi = phi - (0 if d1 < d0 else 1 if d1 == d0 else 2)
                if action.movement is Move.HOVER:
                    hovers += 1
                assert out.next.time_slack == phi
                assert out.next.energy_slack == delta1 - hovers * surcharge
                state = out.next
                if out.terminal:
                    break

    def test_single_step_energy_recursion(self):
        # One application of the per-slot update is a single exact
        # subtraction of the surcharge.
        cfg = table_scale_config()
        s1 = reset(cfg)
        out = step(s1, Action(Move.HOVER, 0), cfg)
        assert out.next.energy_slack == energy_slack_step(
            s1.energy_slack, Move.HOVER, cfg.energy)
        out2 = step(s1, Action(Move.NORTH, 0), cfg)
        assert out2.next.energy_slack == s1.energy_slack

    def test_every_episode_ends_within_horizon(self):
        cfg = table_scale_config()
        rng = np.random.default_rng(3)
        for _ in range(50):
            state = reset(cfg)
            steps = 0
            while state.slot < cfg.horizon:
                acts = valid_actions(state, cfg)
                out = step(state, acts[rng.integers(len(acts))], cfg)
                state = out.next
                steps += 1
                if out.terminal:
                    break
            assert steps <= cfg.horizon - 1
            assert state.slot <= cfg.horizon
