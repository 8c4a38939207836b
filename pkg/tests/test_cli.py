import numpy as np
import pytest
import yaml

from radarnav.cli import main
from radarnav.dataset import read_map, read_trajectory

from conftest import scenario_path

SMALL_SCENARIO = """
name: cli_test
duration: 8.0
imu_rate: 200.0
radar_rate: 10.0
closed_loop: true
seed: 4
trajectory:
  kind: circle
  params: {radius: 5.0, laps: 1.0}
  hold_seconds: 1.5
world:
  extent: 20.0
  cluster_count: 18
  cluster_points: 20
  wall_count: 4
  ground_extent: 0.0
"""


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scenario = root / "scenario.yaml"
    scenario.write_text(SMALL_SCENARIO)
    out = root / "dataset"
    assert main(["simulate", "--config", str(scenario),
                 "--output", str(out)]) == 0
    return out


class TestSimulateVerb:
    def test_writes_dataset(self, cli_dataset):
        assert (cli_dataset / "imu.txt").exists()
        assert (cli_dataset / "index.txt").exists()
        assert (cli_dataset / "groundtruth.txt").exists()

    def test_seed_override_changes_output(self, cli_dataset, tmp_path):
        scenario = tmp_path / "scenario.yaml"
        scenario.write_text(SMALL_SCENARIO)
        out = tmp_path / "ds2"
        assert main(["simulate", "--config", str(scenario),
                     "--output", str(out), "--seed", "99"]) == 0
        a = (cli_dataset / "scans" / "scan_000010.bin").read_bytes()
        b = (out / "scans" / "scan_000010.bin").read_bytes()
        assert a != b

    def test_missing_config_is_config_error(self, tmp_path):
        assert main(["simulate", "--output", str(tmp_path / "x")]) == 1


class TestOdometryVerb:
    def test_runs_and_writes_outputs(self, cli_dataset, tmp_path):
        out = tmp_path / "run"
        assert main(["odometry", "--dataset", str(cli_dataset),
                     "--output", str(out)]) == 0
        assert (out / "trajectory.txt").exists()
        assert (out / "map.xyz").exists()
        assert (out / "map_points.npz").exists()
        assert (out / "config.yaml").exists()
        assert (out / "timing.yaml").exists()
        metrics = yaml.safe_load((out / "metrics.yaml").read_text())
        assert metrics["ape_trans_rmse_m"] < 0.05
        timing = yaml.safe_load((out / "timing.yaml").read_text())
        assert set(timing) == {"predict", "egovel", "scan_update", "total"}

    def test_determinism_byte_identical(self, cli_dataset, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["odometry", "--dataset", str(cli_dataset),
                         "--output", str(out)]) == 0
        assert (out_a / "trajectory.txt").read_bytes() == \
            (out_b / "trajectory.txt").read_bytes()
        assert (out_a / "metrics.yaml").read_bytes() == \
            (out_b / "metrics.yaml").read_bytes()

    def test_missing_dataset_is_data_error(self, tmp_path):
        assert main(["odometry", "--dataset", str(tmp_path / "nope"),
                     "--output", str(tmp_path / "out")]) == 2

    def test_bad_config_is_config_error(self, cli_dataset, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("mode: {use_velocity_update: false, "
                       "use_scan_update: false}\n")
        assert main(["odometry", "--config", str(bad),
                     "--dataset", str(cli_dataset),
                     "--output", str(tmp_path / "out")]) == 1


class TestSlamVerb:
    def test_runs(self, cli_dataset, tmp_path):
        out = tmp_path / "slam"
        assert main(["slam", "--dataset", str(cli_dataset),
                     "--output", str(out)]) == 0
        assert (out / "trajectory.txt").exists()


class TestEvaluateVerb:
    def test_self_evaluation_zero(self, cli_dataset, tmp_path):
        ref = cli_dataset / "groundtruth.txt"
        out = tmp_path / "metrics.yaml"
        assert main(["evaluate", "--est", str(ref), "--ref", str(ref),
                     "--output", str(out), "--closed-loop"]) == 0
        metrics = yaml.safe_load(out.read_text())
        assert metrics["ape_trans_rmse_m"] == pytest.approx(0.0, abs=1e-12)
        assert metrics["closure_valid"] is True

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["evaluate", "--est", str(tmp_path / "a.txt"),
                     "--ref", str(tmp_path / "b.txt")]) == 2


class TestExportMapVerb:
    def test_round_trip(self, cli_dataset, tmp_path):
        run = tmp_path / "run"
        assert main(["odometry", "--dataset", str(cli_dataset),
                     "--output", str(run)]) == 0
        out = tmp_path / "exported.xyz"
        assert main(["export-map", "--input", str(run),
                     "--output", str(out)]) == 0
        exported = read_map(out)
        with np.load(run / "map_points.npz") as data:
            np.testing.assert_array_equal(exported, data["points"])

    def test_missing_input_is_data_error(self, tmp_path):
        assert main(["export-map", "--input", str(tmp_path / "nope.npz"),
                     "--output", str(tmp_path / "o.xyz")]) == 2


def test_fixture_scenarios_parse():
    for name in ("figure8_noiseless.yaml", "loop_noisy.yaml",
                 "ablation_small.yaml"):
        assert scenario_path(name).exists()
