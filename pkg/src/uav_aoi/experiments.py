"""Experiment orchestration: config ingestion with paper-default values,
seeded sensor placement, train/evaluate/sweep runs, CSV metrics, and
aggregation into plot-ready series.

Everything a run produces is a pure function of the resolved config plus
the master seed; re-running a manifest reproduces the outputs byte for
byte. The wall_ms column therefore records simulated mission time, not
host time.
"""

from __future__ import annotations

import csv
import json
import subprocess
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .agent import TrainConfig, greedy_rollout, train
from .baselines import BaselineConfig, make_policy
from .env import EpisodeConfig, EpisodeRecord, rollout
from .model import (
    ConfigError,
    EnergyParams,
    GridSpec,
    LinkParams,
    RewardParams,
    SensorNode,
)
from .network import save_network
from .oracle import optimal_rollout, solve

METRICS_HEADER = [
    "experiment_id", "seed", "policy", "R_cells", "N", "episode",
    "return", "avg_aoi", "terminal_kind", "wall_ms",
]

KNOWN_POLICIES = ("dqn", "aoi_greedy", "distance_round", "random", "oracle")
SWEEP_AXES = ("none", "radius", "sensor_count")


class ConfigParseError(ValueError):
    """A config file failed structural validation."""


class MalformedRowError(ValueError):
    """A metrics row could not be parsed."""


class EmptyMetricsError(ValueError):
    """A metrics file contains a header but no data rows."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved experiment description (defaults reproduce the paper
    setup: 20x20 grid of 25 m cells, 70 slots, Table-consistent link,
    energy, and training parameters)."""

    name: str = "experiment"
    seed: int = 0
    grid: GridSpec = GridSpec(20, 20, 25.0, (10, 0), (10, 19))
    horizon: int = 70
    age_cap: int | None = None
    energy: EnergyParams = EnergyParams()
    link: LinkParams = LinkParams()
    reward: RewardParams = RewardParams()
    sensor_count: int = 3
    sensors: tuple[SensorNode, ...] | None = None  # explicit placement wins
    radius_cells: float | None = None
    train: TrainConfig = TrainConfig()
    policies: tuple[str, ...] = ("dqn", "aoi_greedy", "distance_round")
    sweep_axis: str = "none"
    sweep_values: tuple[float, ...] = ()
    repetitions: int = 5
    eval_episodes: int = 1
    baseline: BaselineConfig = BaselineConfig()

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ConfigParseError("repetitions must be >= 1")
        if self.eval_episodes < 1:
            raise ConfigParseError("eval_episodes must be >= 1")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigParseError(f"sweep.axis must be one of {SWEEP_AXES}")
        if self.sweep_axis != "none" and not self.sweep_values:
            raise ConfigParseError("sweep.values must be non-empty")
        for p in self.policies:
            if p not in KNOWN_POLICIES:
                raise ConfigParseError(f"unknown policy {p!r}, expected one of {KNOWN_POLICIES}")


def _build(cls, section: dict, where: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigParseError(f"bad field in {where!r}: {exc}") from exc
    except ConfigError as exc:
        raise ConfigParseError(f"invalid {where!r}: {exc}") from exc


def spec_from_dict(raw: dict) -> ExperimentSpec:
    """Build a spec from a parsed config mapping; unknown keys are errors."""
    known = {
        "name", "seed", "grid", "horizon", "age_cap", "energy", "link",
        "reward", "sensor_count", "sensors", "radius_cells", "train",
        "policies", "sweep", "repetitions", "eval_episodes", "baseline",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigParseError(f"unknown config fields: {sorted(unknown)}")

    kwargs: dict = {}
    for key in ("name", "seed", "horizon", "age_cap", "sensor_count",
                "radius_cells", "repetitions", "eval_episodes"):
        if key in raw:
            kwargs[key] = raw[key]
    if "grid" in raw:
        g = dict(raw["grid"])
        for cell_key in ("start_cell", "stop_cell"):
            if cell_key in g:
                g[cell_key] = tuple(g[cell_key])
        kwargs["grid"] = _build(GridSpec, g, "grid")
    if "energy" in raw:
        kwargs["energy"] = _build(EnergyParams, raw["energy"], "energy")
    if "link" in raw:
        kwargs["link"] = _build(LinkParams, raw["link"], "link")
    if "reward" in raw:
        kwargs["reward"] = _build(RewardParams, raw["reward"], "reward")
    if "train" in raw:
        t = dict(raw["train"])
        if "hidden_sizes" in t:
            t["hidden_sizes"] = tuple(t["hidden_sizes"])
        kwargs["train"] = _build(TrainConfig, t, "train")
    if "baseline" in raw:
        kwargs["baseline"] = _build(BaselineConfig, raw["baseline"], "baseline")
    if raw.get("sensors") is not None:
        kwargs["sensors"] = tuple(
            _build(SensorNode, {**sn, "position": tuple(sn["position"])}, "sensors")
            for sn in raw["sensors"])
    if "policies" in raw:
        kwargs["policies"] = tuple(raw["policies"])
    if "sweep" in raw:
        sweep = raw["sweep"]
        kwargs["sweep_axis"] = sweep.get("axis", "none")
        kwargs["sweep_values"] = tuple(sweep.get("values", ()))
    try:
        return ExperimentSpec(**kwargs)
    except TypeError as exc:
        raise ConfigParseError(str(exc)) from exc


def load_spec(path: str | Path) -> ExperimentSpec:
    text = Path(path).read_text()
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{path}: top level must be a JSON object")
    return spec_from_dict(raw)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    """Plain mapping that round-trips through ``spec_from_dict``."""
    return {
        "name": spec.name,
        "seed": spec.seed,
        "grid": asdict(spec.grid),
        "horizon": spec.horizon,
        "age_cap": spec.age_cap,
        "energy": asdict(spec.energy),
        "link": asdict(spec.link),
        "reward": asdict(spec.reward),
        "sensor_count": spec.sensor_count,
        "sensors": [asdict(sn) for sn in spec.sensors] if spec.sensors else None,
        "radius_cells": spec.radius_cells,
        "train": asdict(spec.train),
        "policies": list(spec.policies),
        "sweep": {"axis": spec.sweep_axis, "values": list(spec.sweep_values)},
        "repetitions": spec.repetitions,
        "eval_episodes": spec.eval_episodes,
        "baseline": asdict(spec.baseline),
    }


def _git_describe() -> str | None:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
            cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or None
    except OSError:
        return None


def place_sensors(spec: ExperimentSpec, n: int, rng: np.random.Generator
                  ) -> tuple[SensorNode, ...]:
    """Drop ``n`` sensors uniformly on distinct cell centers, keeping the
    start and stop cells free."""
    grid = spec.grid
    eligible = [
        (c, r)
        for c in range(grid.width)
        for r in range(grid.height)
        if (c, r) != grid.start_cell and (c, r) != grid.stop_cell
    ]
    if n > len(eligible):
        raise ConfigError(f"cannot place {n} sensors on {len(eligible)} free cells")
    picks = rng.choice(len(eligible), size=n, replace=False)
    return tuple(
        SensorNode(id=i + 1, position=grid.cell_center(eligible[int(k)]), weight=1.0)
        for i, k in enumerate(picks))


def _sweep_points(spec: ExperimentSpec) -> list[tuple[float | None, int]]:
    """(radius_cells, sensor_count) per sweep point."""
    if spec.sweep_axis == "radius":
        return [(float(v), spec.sensor_count) for v in spec.sweep_values]
    if spec.sweep_axis == "sensor_count":
        return [(spec.radius_cells, int(v)) for v in spec.sweep_values]
    return [(spec.radius_cells, spec.sensor_count)]


def build_episode_config(spec: ExperimentSpec, radius_cells: float | None,
                         n_sensors: int, placement_rng: np.random.Generator,
                         seed: int) -> EpisodeConfig:
    link = spec.link
    if radius_cells is not None:
        link = replace(link, radius_override=radius_cells * spec.grid.cell_length)
    if spec.sensors is not None:
        sensors = spec.sensors
    else:
        sensors = place_sensors(spec, n_sensors, placement_rng)
    return EpisodeConfig(
        grid=spec.grid,
        sensors=sensors,
        energy=spec.energy,
        link=link,
        reward=spec.reward,
        horizon=spec.horizon,
        age_cap=spec.age_cap,
        seed=seed,
    )


def _derive_int(seq: np.random.SeedSequence) -> int:
    return int(np.random.default_rng(seq).integers(0, 2 ** 63))


def _evaluate(policy_name: str, config: EpisodeConfig, spec: ExperimentSpec,
              policy_seed: int, checkpoint_path: Path | None
              ) -> list[EpisodeRecord]:
    records = []
    if policy_name == "dqn":
        net, _ = train(config, replace(spec.train, seed=policy_seed))
        if checkpoint_path is not None:
            save_network(net, checkpoint_path)
        for _ in range(spec.eval_episodes):
            records.append(greedy_rollout(net, config))
    elif policy_name == "oracle":
        table = solve(config)
        for _ in range(spec.eval_episodes):
            records.append(optimal_rollout(table, config))
    else:
        for ep in range(spec.eval_episodes):
            policy = make_policy(policy_name, config, seed=policy_seed + ep,
                                 bcfg=spec.baseline)
            records.append(rollout(policy, config))
    return records


def run(spec: ExperimentSpec, out_dir: str | Path) -> Path:
    """Execute the experiment and write metrics.csv, manifest.json, and any
    DQN checkpoints under ``out_dir``. Returns the metrics path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = _sweep_points(spec)
    master = np.random.SeedSequence(spec.seed)
    point_seqs = master.spawn(len(points))

    rows: list[list] = []
    for p_idx, (radius_cells, n_sensors) in enumerate(points):
        rep_seqs = point_seqs[p_idx].spawn(spec.repetitions)
        for r_idx in range(spec.repetitions):
            streams = rep_seqs[r_idx].spawn(1 + len(spec.policies))
            placement_ss, seed_ss = streams[0].spawn(2)
            placement_rng = np.random.default_rng(placement_ss)
            rep_seed = _derive_int(seed_ss)
            config = build_episode_config(
                spec, radius_cells, n_sensors, placement_rng, rep_seed)
            r_cells_out = (radius_cells if radius_cells is not None
                           else config.radius / spec.grid.cell_length)
            for q_idx, policy_name in enumerate(spec.policies):
                policy_seed = _derive_int(streams[1 + q_idx])
                ckpt = None
                if policy_name == "dqn":
                    ckpt = out / f"checkpoint_p{p_idx}_r{r_idx}.qnet"
                records = _evaluate(policy_name, config, spec, policy_seed, ckpt)
                for ep_idx, record in enumerate(records):
                    sim_ms = round(record.length * spec.energy.slot_len * 1000)
                    rows.append([
                        f"{spec.name}/p{p_idx}/r{r_idx}",
                        rep_seed,
                        policy_name,
                        r_cells_out,
                        n_sensors,
                        ep_idx,
                        record.total_return,
                        record.avg_age,
                        record.kind.value,
                        sim_ms,
                    ])

    metrics_path = out / "metrics.csv"
    with metrics_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        writer.writerows(rows)

    manifest = {
        "spec": spec_to_dict(spec),
        "version": __version__,
        "git": _git_describe(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return metrics_path


def load_manifest_spec(path: str | Path) -> ExperimentSpec:
    raw = json.loads(Path(path).read_text())
    if "spec" not in raw:
        raise ConfigParseError(f"{path}: manifest has no 'spec' section")
    return spec_from_dict(raw["spec"])


@dataclass(frozen=True)
class SummaryRow:
    policy: str
    sweep_value: float
    episodes: int
    mean_return: float
    mean_avg_aoi: float


def read_metrics(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRICS_HEADER:
            raise MalformedRowError(f"unexpected header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(METRICS_HEADER):
                raise MalformedRowError(
                    f"row {line_no}: expected {len(METRICS_HEADER)} fields, got {len(row)}")
            try:
                rows.append({
                    "experiment_id": row[0],
                    "seed": int(row[1]),
                    "policy": row[2],
                    "R_cells": float(row[3]),
                    "N": int(row[4]),
                    "episode": int(row[5]),
                    "return": float(row[6]),
                    "avg_aoi": float(row[7]),
                    "terminal_kind": row[8],
                    "wall_ms": int(row[9]),
                })
            except ValueError as exc:
                raise MalformedRowError(f"row {line_no}: {exc}") from exc
    if not rows:
        raise EmptyMetricsError(f"{path} has no data rows")
    return rows


def summarize(metrics_path: str | Path, out_dir: str | Path | None = None
              ) -> list[SummaryRow]:
    """Aggregate mean return and mean age per policy per sweep point, and
    write one plot-ready series file per policy when ``out_dir`` is given.

    The sweep axis is inferred: R when it varies, otherwise N.
    """
    rows = read_metrics(metrics_path)
    r_values = {row["R_cells"] for row in rows}
    axis = "R_cells" if len(r_values) > 1 else ("N" if len({r["N"] for r in rows}) > 1 else "R_cells")

    grouped: dict[tuple[str, float], list[dict]] = {}
    for row in rows:
        grouped.setdefault((row["policy"], float(row[axis])), []).append(row)

    summary = [
        SummaryRow(
            policy=policy,
            sweep_value=value,
            episodes=len(members),
            mean_return=sum(m["return"] for m in members) / len(members),
            mean_avg_aoi=sum(m["avg_aoi"] for m in members) / len(members),
        )
        for (policy, value), members in sorted(grouped.items())
    ]

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for policy in sorted({s.policy for s in summary}):
            series = [s for s in summary if s.policy == policy]
            with (out / f"series_{policy}.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["sweep_value", "mean_avg_aoi"])
                for s in sorted(series, key=lambda s: s.sweep_value):
                    writer.writerow([s.sweep_value, s.mean_avg_aoi])
    return summary
