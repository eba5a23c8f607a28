"""Config ingestion, seeded placement, sweep determinism, aggregation, and
the CLI surface."""

import json

import pytest

import numpy as np

from uav_aoi.agent import TrainConfig
from uav_aoi.cli import main
from uav_aoi.experiments import (
    METRICS_HEADER,
    ConfigParseError,
    EmptyMetricsError,
    ExperimentSpec,
    MalformedRowError,
    load_manifest_spec,
    load_spec,
    place_sensors,
    read_metrics,
    run,
    spec_from_dict,
    spec_to_dict,
    summarize,
)
from uav_aoi.model import GridSpec


class TestDefaultsMatchPaperSetup:
    def test_grid_and_horizon(self):
        spec = ExperimentSpec()
        assert spec.grid == GridSpec(20, 20, 25.0, (10, 0), (10, 19))
        assert spec.horizon == 70

    def test_energy_values(self):
        e = ExperimentSpec().energy
        assert (e.p0, e.p1, e.u_tip, e.v0) == (99.66, 120.16, 120.0, 0.002)
        assert (e.d0, e.rho, e.s0, e.rotor_area) == (0.48, 1.225, 0.0001, 0.5)
        assert (e.e_max, e.slot_len, e.cruise_speed) == (22000.0, 1.0, 25.0)

    def test_link_values(self):
        l = ExperimentSpec().link
        assert (l.bandwidth, l.update_size) == (1e6, 5e6)
        assert (l.noise_power, l.ref_gain, l.altitude) == (1e-13, 1e-6, 120.0)

    def test_train_values(self):
        t = TrainConfig()
        assert t.episodes == 20000
        assert t.replay_capacity == 40000
        assert t.batch_size == 200
        assert (t.eps_init, t.eps_decrement, t.eps_min) == (0.9, 0.0001, 0.0)
        assert t.target_sync_period == 300
        assert (t.learning_rate, t.lr_decay_rate, t.lr_decay_every) == (0.002, 0.95, 10000)
        assert t.hidden_sizes == (200, 256)
        assert t.updates_per_step == 1

    def test_empty_config_is_default_spec(self, tmp_path):
        p = tmp_path / "empty.json"
        p.write_text("{}")
        assert load_spec(p) == ExperimentSpec()


class TestConfigParsing:
    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigParseError, match="unknown config fields"):
            spec_from_dict({"grdi": {}})

    def test_unknown_subfield_rejected(self):
        with pytest.raises(ConfigParseError, match="train"):
            spec_from_dict({"train": {"episodess": 5}})

    def test_bad_json_reports_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "seed": 1,\n  oops\n}')
        with pytest.raises(ConfigParseError, match="line 3"):
            load_spec(p)

    def test_unknown_policy_rejected(self):
        with pytest.raises(ConfigParseError, match="unknown policy"):
            spec_from_dict({"policies": ["dqn", "sarsa"]})

    def test_sweep_requires_values(self):
        with pytest.raises(ConfigParseError, match="values"):
            spec_from_dict({"sweep": {"axis": "radius", "values": []}})

    def test_round_trip(self):
        spec = spec_from_dict({
            "name": "t", "seed": 3,
            "grid": {"width": 6, "height": 6, "cell_length": 25.0,
                     "start_cell": [0, 0], "stop_cell": [5, 5]},
            "horizon": 20, "sensor_count": 2, "radius_cells": 2,
            "train": {"episodes": 10, "hidden_sizes": [8, 8]},
            "policies": ["aoi_greedy"],
            "sweep": {"axis": "radius", "values": [1, 2]},
            "repetitions": 2,
        })
        assert spec_from_dict(spec_to_dict(spec)) == spec


class TestPlacement:
    def test_excludes_start_and_stop(self):
        spec = ExperimentSpec()
        rng = np.random.default_rng(0)
        for _ in range(20):
            sensors = place_sensors(spec, 5, rng)
            cells = {(round(sn.position[0] / 25), round(sn.position[1] / 25))
                     for sn in sensors}
            assert (10, 0) not in cells and (10, 19) not in cells
            assert len(cells) == 5

    def test_equal_weights(self):
        sensors = place_sensors(ExperimentSpec(), 4, np.random.default_rng(1))
        assert all(sn.weight == 1.0 for sn in sensors)

    def test_reproducible(self):
        a = place_sensors(ExperimentSpec(), 3, np.random.default_rng(9))
        b = place_sensors(ExperimentSpec(), 3, np.random.default_rng(9))
        assert a == b


def _tiny_spec(**over):
    base = {
        "name": "tiny",
        "seed": 11,
        "grid": {"width": 5, "height": 5, "cell_length": 25.0,
                 "start_cell": [2, 0], "stop_cell": [2, 4]},
        "horizon": 12,
        "sensor_count": 2,
        "radius_cells": 1,
        "policies": ["aoi_greedy", "random"],
        "sweep": {"axis": "radius", "values": [1, 2]},
        "repetitions": 2,
    }
    base.update(over)
    return spec_from_dict(base)


class TestRun:
    def test_artifacts_and_shape(self, tmp_path):
        spec = _tiny_spec()
        metrics = run(spec, tmp_path)
        assert metrics.exists()
        assert (tmp_path / "manifest.json").exists()
        rows = read_metrics(metrics)
        assert len(rows) == 2 * 2 * 2  # points x reps x policies
        assert {r["policy"] for r in rows} == {"aoi_greedy", "random"}
        assert {r["R_cells"] for r in rows} == {1.0, 2.0}

    def test_byte_identical_reruns(self, tmp_path):
        spec = _tiny_spec()
        m1 = run(spec, tmp_path / "a")
        m2 = run(spec, tmp_path / "b")
        assert m1.read_bytes() == m2.read_bytes()

    def test_manifest_rerun_reproduces(self, tmp_path):
        spec = _tiny_spec()
        m1 = run(spec, tmp_path / "a")
        again = load_manifest_spec(tmp_path / "a" / "manifest.json")
        m2 = run(again, tmp_path / "b")
        assert m1.read_bytes() == m2.read_bytes()

    def test_header_exact(self, tmp_path):
        metrics = run(_tiny_spec(), tmp_path)
        header = metrics.read_text().splitlines()[0]
        assert header == ",".join(METRICS_HEADER)
        assert header == ("experiment_id,seed,policy,R_cells,N,episode,"
                          "return,avg_aoi,terminal_kind,wall_ms")

    def test_sensor_count_sweep(self, tmp_path):
        spec = _tiny_spec(sweep={"axis": "sensor_count", "values": [1, 2]},
                          repetitions=1)
        rows = read_metrics(run(spec, tmp_path))
        assert {r["N"] for r in rows} == {1, 2}

    def test_dqn_checkpoint_written(self, tmp_path):
        spec = _tiny_spec(
            policies=["dqn"],
            sweep={"axis": "none", "values": []},
            repetitions=1,
            train={"episodes": 3, "batch_size": 8, "hidden_sizes": [8, 8]},
        )
        run(spec, tmp_path)
        assert (tmp_path / "checkpoint_p0_r0.qnet").exists()


class TestSummarize:
    def _write(self, path, rows):
        lines = [",".join(METRICS_HEADER)]
        lines += [",".join(str(v) for v in r) for r in rows]
        path.write_text("\n".join(lines) + "\n")

    def test_single_row_mean_is_value(self, tmp_path):
        p = tmp_path / "m.csv"
        self._write(p, [["e/p0/r0", 1, "aoi_greedy", 2.0, 3, 0, 95.5, 4.25, "success", 9000]])
        out = summarize(p)
        assert len(out) == 1
        assert out[0].mean_avg_aoi == 4.25
        assert out[0].mean_return == 95.5

    def test_three_row_fixture(self, tmp_path):
        p = tmp_path / "m.csv"
        self._write(p, [
            ["e/p0/r0", 1, "aoi_greedy", 1.0, 3, 0, 90.0, 6.0, "success", 9000],
            ["e/p0/r1", 2, "aoi_greedy", 1.0, 3, 0, 92.0, 5.0, "success", 9000],
            ["e/p1/r0", 3, "aoi_greedy", 2.0, 3, 0, 94.0, 4.0, "success", 9000],
        ])
        out = {(s.policy, s.sweep_value): s for s in summarize(p)}
        assert out[("aoi_greedy", 1.0)].mean_avg_aoi == pytest.approx(5.5)
        assert out[("aoi_greedy", 1.0)].mean_return == pytest.approx(91.0)
        assert out[("aoi_greedy", 2.0)].mean_avg_aoi == pytest.approx(4.0)

    def test_empty_is_error(self, tmp_path):
        p = tmp_path / "m.csv"
        self._write(p, [])
        with pytest.raises(EmptyMetricsError):
            summarize(p)

    def test_malformed_row_reports_number(self, tmp_path):
        p = tmp_path / "m.csv"
        lines = [",".join(METRICS_HEADER),
                 "e/p0/r0,1,aoi_greedy,1.0,3,0,90.0,6.0,success,9000",
                 "e/p0/r1,1,aoi_greedy,not_a_number,3,0,90.0,6.0,success,9000"]
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(MalformedRowError, match="row 3"):
            summarize(p)

    def test_series_files(self, tmp_path):
        p = tmp_path / "m.csv"
        self._write(p, [
            ["e/p0/r0", 1, "random", 1.0, 3, 0, 90.0, 6.0, "success", 9000],
            ["e/p1/r0", 2, "random", 2.0, 3, 0, 94.0, 4.0, "success", 9000],
        ])
        summarize(p, tmp_path)
        series = (tmp_path / "series_random.csv").read_text().splitlines()
        assert series[0] == "sweep_value,mean_avg_aoi"
        assert series[1] == "1.0,6.0"
        assert series[2] == "2.0,4.0"


class TestCli:
    def test_eval_baseline(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "grid": {"width": 5, "height": 5, "cell_length": 25.0,
                     "start_cell": [2, 0], "stop_cell": [2, 4]},
            "horizon": 12, "sensor_count": 2, "radius_cells": 1,
        }))
        assert main(["eval", "--config", str(cfg), "--policy", "aoi_greedy"]) == 0
        out = capsys.readouterr().out
        assert "aoi_greedy" in out and "kind=success" in out

    def test_train_and_eval_checkpoint(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "grid": {"width": 4, "height": 4, "cell_length": 25.0,
                     "start_cell": [0, 0], "stop_cell": [3, 3]},
            "horizon": 10, "sensor_count": 1, "radius_cells": 1,
            "train": {"episodes": 5, "batch_size": 8, "hidden_sizes": [8, 8]},
        }))
        out_dir = tmp_path / "out"
        assert main(["train", "--config", str(cfg), "--out", str(out_dir)]) == 0
        assert (out_dir / "dqn.qnet").exists()
        assert (out_dir / "train_log.csv").exists()
        assert main(["eval", "--config", str(cfg), "--policy", "dqn",
                     "--checkpoint", str(out_dir / "dqn.qnet")]) == 0

    def test_sweep_and_summarize(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "name": "s",
            "grid": {"width": 5, "height": 5, "cell_length": 25.0,
                     "start_cell": [2, 0], "stop_cell": [2, 4]},
            "horizon": 12, "sensor_count": 2,
            "policies": ["aoi_greedy"],
            "sweep": {"axis": "radius", "values": [1, 2]},
            "repetitions": 1,
        }))
        out_dir = tmp_path / "out"
        assert main(["sweep", "--config", str(cfg), "--out", str(out_dir)]) == 0
        assert (out_dir / "series_aoi_greedy.csv").exists()
        assert main(["summarize", "--metrics", str(out_dir / "metrics.csv")]) == 0

    def test_oracle_compare(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "grid": {"width": 4, "height": 4, "cell_length": 25.0,
                     "start_cell": [0, 0], "stop_cell": [3, 3]},
            "horizon": 9, "sensor_count": 2, "radius_cells": 1,
        }))
        assert main(["oracle-compare", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 0
        out = capsys.readouterr().out
        assert "oracle root value" in out
        assert (tmp_path / "o" / "value_table.bin").exists()
