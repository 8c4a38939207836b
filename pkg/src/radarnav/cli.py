"""Command-line interface.

Verbs:
    simulate    scenario YAML -> native dataset on disk
    odometry    dataset -> trajectory, map, timing (+ metrics if truth exists)
    slam        odometry plus loop closure and a corrected global map
    evaluate    estimated vs reference trajectory -> metrics file
    export-map  saved map points -> x y z text file

Exit codes: 0 success, 1 config error, 2 data error, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import dataset as dataset_io
from .config import PipelineConfig, dump_config, load_config
from .errors import (ConfigError, DataFormatError, EstimationError,
                     RadarNavError)
from .metrics import evaluate
from .pipeline import run_odometry, run_slam
from .sim import load_scenario, simulate_dataset

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_ESTIMATION = 3

log = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="pipeline/scenario YAML file")
    parser.add_argument("--dataset", help="dataset directory")
    parser.add_argument("--output", help="output file or directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed (simulate only)")
    parser.add_argument("--format", default="native",
                        choices=("native", "coloradar"),
                        help="dataset format for readers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarnav",
        description="4D radar-inertial odometry and mapping toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scenario into a dataset")
    _add_common(p)

    p = sub.add_parser("odometry", help="run radar-inertial odometry")
    _add_common(p)

    p = sub.add_parser("slam", help="run odometry with loop closure")
    _add_common(p)

    p = sub.add_parser("evaluate", help="compare trajectories")
    _add_common(p)
    p.add_argument("--est", help="estimated trajectory file")
    p.add_argument("--ref", help="reference trajectory file")
    p.add_argument("--closed-loop", action="store_true",
                   help="mark the closure error as valid")

    p = sub.add_parser("export-map", help="convert saved map points to text")
    _add_common(p)
    p.add_argument("--input", help="map .npz (or run output dir)")
    return parser


def _require(value, name: str):
    if not value:
        raise ConfigError(f"--{name} is required for this command")
    return value


def _load_pipeline_config(args) -> PipelineConfig:
    if args.config:
        return load_config(args.config)
    return PipelineConfig().validate()


def _write_run_outputs(out_dir: Path, config, trajectory, map_points,
                       timings, dataset, stats):
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_config(config, out_dir / "config.yaml")
    dataset_io.write_trajectory(trajectory, out_dir / "trajectory.txt")
    np.savez(out_dir / "map_points.npz", points=map_points.astype(np.float32))
    dataset_io.export_map(map_points, out_dir / "map.xyz")
    with open(out_dir / "timing.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(timings.summary(), fh, sort_keys=True)
    print(timings.format_table())

    if dataset.ground_truth is not None and len(trajectory) > 0:
        result = evaluate(trajectory, dataset.ground_truth,
                          closed_loop=dataset.closed_loop)
        with open(out_dir / "metrics.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(result.to_dict(), fh, sort_keys=True)
        print(f"APE trans RMSE: {result.ape_trans_rmse_m:.4f} m, "
              f"rot RMSE: {result.ape_rot_rmse_deg:.4f} deg")
    print(f"processed {stats.scans_processed}/{stats.scans_total} scans, "
          f"{stats.keyframes} keyframes, {stats.loops_accepted} loops")


def _cmd_simulate(args) -> int:
    scenario = load_scenario(_require(args.config, "config"))
    if args.seed is not None:
        scenario.seed = int(args.seed)
    out_dir = Path(_require(args.output, "output"))
    sim = simulate_dataset(scenario)
    truth = dataset_io.Trajectory(sim.truth_times, sim.truth_poses)
    ds = dataset_io.Dataset(sim.imu, sim.scans, sim.extrinsics,
                            sim.closed_loop, truth, scenario.name)
    dataset_io.write_dataset(ds, out_dir)
    print(f"wrote {len(sim.scans)} scans / {len(sim.imu)} IMU samples "
          f"to {out_dir}")
    return EXIT_OK


def _cmd_odometry(args) -> int:
    config = _load_pipeline_config(args)
    ds = dataset_io.read_dataset(_require(args.dataset, "dataset"), args.format)
    result = run_odometry(ds, config)
    _write_run_outputs(Path(_require(args.output, "output")), config,
                       result.trajectory, result.submap.positions,
                       result.timings, ds, result.stats)
    return EXIT_OK


def _cmd_slam(args) -> int:
    config = _load_pipeline_config(args)
    config.mode.use_loop_closure = True
    ds = dataset_io.read_dataset(_require(args.dataset, "dataset"), args.format)
    result = run_slam(ds, config)
    _write_run_outputs(Path(_require(args.output, "output")), config,
                       result.trajectory, result.global_map,
                       result.timings, ds, result.stats)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    est = dataset_io.read_trajectory(_require(args.est, "est"))
    ref = dataset_io.read_trajectory(_require(args.ref, "ref"))
    result = evaluate(est, ref, closed_loop=bool(args.closed_loop))
    text = yaml.safe_dump(result.to_dict(), sort_keys=True)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def _cmd_export_map(args) -> int:
    src = Path(_require(args.input, "input"))
    if src.is_dir():
        src = src / "map_points.npz"
    if not src.exists():
        raise DataFormatError("map input does not exist", path=str(src))
    if src.suffix == ".npz":
        with np.load(src) as data:
            points = data["points"]
    else:
        points = dataset_io.read_map(src)
    dataset_io.export_map(points, _require(args.output, "output"))
    print(f"exported {len(points)} points to {args.output}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "odometry": _cmd_odometry,
    "slam": _cmd_slam,
    "evaluate": _cmd_evaluate,
    "export-map": _cmd_export_map,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, RadarNavError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
