"""Command-line front end: simulate, run, sweep, allocate.

Exit codes: 0 success, 2 configuration error, 3 runtime precondition
failure. All commands are deterministic under fixed seeds; `--seed`
overrides the seed in the config file.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import control, pipeline, simulator
from .errors import InvalidConfig
from .mobile import WindowConfig

SCHEMA_VERSION = 1
RUN_COLUMNS = [
    "schema_version", "frame", "timestamp", "orientation_error_deg",
    "position_error_m", "setup_accuracy", "cost_before", "cost_after",
    "iterations", "wall_time_ms", "carried_forward",
]
REQUIRED_SCENARIO_FIELDS = ("num_nodes", "room_size", "duration_s")


class ConfigError(Exception):
    pass


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")


def _scenario_config(data: dict) -> simulator.ScenarioConfig:
    for field in REQUIRED_SCENARIO_FIELDS:
        if field not in data:
            raise ConfigError(f"missing required field \"{field}\"")
    kwargs = {k: v for k, v in data.items() if k not in ("seed", "noise")}
    if "room_size" in kwargs:
        kwargs["room_size"] = tuple(kwargs["room_size"])
    if "turn_range_s" in kwargs:
        kwargs["turn_range_s"] = tuple(kwargs["turn_range_s"])
    try:
        noise = simulator.NoiseModel(**data.get("noise", {}))
        cfg = simulator.ScenarioConfig(noise=noise, **kwargs)
        cfg.validate()
    except (TypeError, InvalidConfig) as exc:
        raise ConfigError(str(exc))
    return cfg


def _truth_dict(scenario: simulator.Scenario) -> dict:
    frames = []
    for f in range(scenario.num_frames):
        frames.append({
            "frame": f,
            "time_s": scenario.frame_time(f),
            "snapshots": [
                {"node_id": int(s.node_id),
                 "x": float(s.position[0]), "y": float(s.position[1]),
                 "orientation_rad": float(s.orientation)}
                for s in scenario.true_snapshots(f)
            ],
            "active_speakers": list(scenario.active_speakers(f)),
        })
    return {"schema_version": SCHEMA_VERSION, "frames": frames}


def cmd_simulate(args) -> int:
    data = _load_json(args.config)
    cfg = _scenario_config(data)
    seed = args.seed if args.seed is not None else data.get("seed", 0)
    scenario = simulator.generate_scenario(cfg, int(seed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(scenario.to_json())
    truth_path = out.with_suffix(".truth.json")
    truth_path.write_text(json.dumps(_truth_dict(scenario), sort_keys=True))
    print(f"wrote {out} and {truth_path}")
    return 0


def _write_run_csv(rows, path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_COLUMNS)
        for r in rows:
            writer.writerow([
                SCHEMA_VERSION, r.frame, f"{r.timestamp:.6g}",
                f"{r.orientation_error_deg:.9g}", f"{r.position_error_m:.9g}",
                f"{r.setup_accuracy:.9g}", f"{r.cost_before:.9g}",
                f"{r.cost_after:.9g}", r.iterations,
                f"{r.wall_time_ms:.6g}", int(r.carried_forward),
            ])


def cmd_run(args) -> int:
    scenario = simulator.Scenario.from_json(Path(args.scenario).read_text())
    window_cfg = WindowConfig(window_length=args.window)
    result = pipeline.run_pipeline(scenario, window_cfg, stride=args.stride)
    if result.final_window is None:
        print("calibration preconditions never satisfied", file=sys.stderr)
        return 3
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_run_csv(result.rows, out)
    from . import report
    fig_path = out.with_suffix(".png")
    report.plot_run(result.rows, fig_path)
    print(f"wrote {out} and {fig_path}")
    return 0


def _final_metrics(cfg, seed, window, stride):
    scenario = simulator.generate_scenario(cfg, seed)
    window_cfg = WindowConfig(window_length=max(window, 2))
    result = pipeline.run_pipeline(scenario, window_cfg, stride=stride)
    usable = [r for r in result.rows if not math.isnan(r.setup_accuracy)]
    if not usable:
        return None
    last = usable[-1]
    return {
        "orientation_error_deg": last.orientation_error_deg,
        "position_error_m": last.position_error_m,
        "setup_accuracy": last.setup_accuracy,
    }


def _apply_axis(base: dict, axis: str, value):
    data = dict(base)
    data["noise"] = dict(base.get("noise", {}))
    if axis == "doa_sigma_deg":
        data["noise"]["doa_sigma_deg"] = value
    elif axis == "num_batches":
        data["duration_s"] = value * data.get("frame_s", 0.1)
    elif axis in ("num_nodes", "room_size", "speed"):
        data[axis] = value
    else:
        raise ConfigError(f"unknown sweep axis \"{axis}\"")
    return data


def _aggregate(values: dict) -> dict:
    out = {}
    for metric, vals in values.items():
        arr = np.asarray(vals, dtype=float)
        out[f"{metric}_median"] = float(np.median(arr))
        out[f"{metric}_q25"] = float(np.percentile(arr, 25))
        out[f"{metric}_q75"] = float(np.percentile(arr, 75))
    return out


def cmd_sweep(args) -> int:
    exp = _load_json(args.experiment)
    for field in ("base", "seeds", "axes"):
        if field not in exp:
            raise ConfigError(f"missing required field \"{field}\"")
    base = exp["base"]
    seeds = sorted(int(s) for s in exp["seeds"])
    if not seeds:
        raise ConfigError("field \"seeds\" must be a nonempty list")
    window = int(exp.get("window", 50))
    stride = int(exp.get("stride", 5))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from . import report

    for axis, axis_values in exp["axes"].items():
        records = []
        for value in axis_values:
            if axis == "budget":
                per_seed = {"utility": [], "equal_split": [], "waterfall": []}
                for seed in seeds:
                    cfg = _scenario_config(base)
                    scenario = simulator.generate_scenario(cfg, seed)
                    streams = pipeline.conversation_streams(scenario)
                    per_seed["utility"].append(
                        control.allocate_bandwidth(streams, int(value)).utility)
                    per_seed["equal_split"].append(
                        control.equal_split_allocation(streams, int(value)).utility)
                    per_seed["waterfall"].append(
                        control.waterfall_allocation(streams, int(value)).utility)
            else:
                cfg = _scenario_config(_apply_axis(base, axis, value))
                per_seed = {"orientation_error_deg": [],
                            "position_error_m": [], "setup_accuracy": []}
                for seed in seeds:
                    metrics = _final_metrics(cfg, seed, window, stride)
                    if metrics is None:
                        continue
                    for key in per_seed:
                        per_seed[key].append(metrics[key])
                if not any(per_seed.values()):
                    raise ConfigError(
                        f"axis \"{axis}\" value {value!r}: no seed produced "
                        "a calibrated estimate")
            record = {"schema_version": SCHEMA_VERSION, "axis": axis,
                      "value": value}
            record.update(_aggregate(per_seed))
            records.append(record)
        csv_path = out_dir / f"sweep_{axis}.csv"
        columns = sorted({k for rec in records for k in rec})
        front = ["schema_version", "axis", "value"]
        columns = front + [c for c in columns if c not in front]
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            writer.writerows(records)
        report.plot_sweep(axis, records, out_dir / f"sweep_{axis}.png")
        print(f"wrote {csv_path}")
    return 0


def cmd_allocate(args) -> int:
    data = _load_json(args.streams)
    if not isinstance(data, list):
        raise ConfigError("streams file must hold a JSON list")
    streams = []
    for i, entry in enumerate(data):
        if "stream_id" not in entry:
            raise ConfigError(f"stream #{i}: missing required field \"stream_id\"")
        if "distance_m" not in entry:
            raise ConfigError(f"stream #{i}: missing required field \"distance_m\"")
        delay = entry.get("measured_delay_ms")
        mode = (control.select_mode(delay, args.threshold_ms)
                if delay is not None else control.FeatureMode.TIME_VARIANT)
        try:
            streams.append(control.StreamDescriptor(
                stream_id=int(entry["stream_id"]),
                distance_m=float(entry["distance_m"]),
                measured_delay_ms=delay,
                mode=mode,
            ))
        except ValueError as exc:
            raise ConfigError(f"stream #{i}: {exc}")
    plan = control.allocate_bandwidth(streams, args.budget)
    result = {
        "schema_version": SCHEMA_VERSION,
        "budget": args.budget,
        "levels": {str(k): v for k, v in plan.levels.items()},
        "utility": plan.utility,
        "baselines": {
            "equal_split": control.equal_split_allocation(
                streams, args.budget).utility,
            "waterfall": control.waterfall_allocation(
                streams, args.budget).utility,
        },
    }
    text = json.dumps(result, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wasncal",
        description="Mobile acoustic-network calibration experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a scenario + ground truth")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="run the pipeline on a scenario")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--window", type=int, default=50)
    p_run.add_argument("--stride", type=int, default=1)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="aggregate metrics along sweep axes")
    p_sweep.add_argument("--experiment", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_alloc = sub.add_parser("allocate", help="bandwidth allocation for streams")
    p_alloc.add_argument("--streams", required=True)
    p_alloc.add_argument("--budget", type=int, required=True)
    p_alloc.add_argument("--threshold-ms", type=float,
                         default=control.DELAY_THRESHOLD_MS)
    p_alloc.add_argument("--out", default=None)
    p_alloc.set_defaults(func=cmd_allocate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
