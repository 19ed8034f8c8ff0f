"""Command-line tests: full pipelines on a small scene, manifests, exit codes."""

import hashlib
import json
import math

import numpy as np
import pytest

from rollslam.core import InvalidInputError
from rollslam.cli.io import (
    RunConfig,
    read_imu_csv,
    read_map_csv,
    read_trajectory_csv,
    read_truth_csv,
    write_map_csv,
)
from rollslam.cli.main import _parse_seeds, main
from rollslam.cli.run import alignment_split, pose_at, run_wheel_ins

# Small closed circuit: two laps so the second lap revisits mapped ground,
# short enough that a full pipeline run stays around a second.
CONFIG_TEXT = (
    "waypoints = 0,0; 60,0; 60,40; 0,40\n"
    "laps = 2\n"
    "n_bumps = 12\n"
    "seed = 4\n"
)


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    cfg = out / "run.cfg"
    cfg.write_text(CONFIG_TEXT)
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    return {
        "dir": out,
        "cfg": str(cfg),
        "imu": str(out / "imu.csv"),
        "truth": str(out / "truth.csv"),
    }


@pytest.fixture(scope="module")
def slam_out(scene, tmp_path_factory):
    out = tmp_path_factory.mktemp("slam")
    rc = main(
        [
            "run-slam",
            "--config", scene["cfg"],
            "--imu", scene["imu"],
            "--truth", scene["truth"],
            "--out", str(out),
        ]
    )
    assert rc == 0
    return out


# --------------------------------------------------------------------------
# simulate


class TestSimulate:
    def test_outputs_exist_and_parse(self, scene):
        truth = read_truth_csv(scene["truth"])
        stream = read_imu_csv(scene["imu"])
        assert truth.t.size == len(stream)
        assert truth.speed[0] == 0.0  # standstill for alignment
        assert truth.speed.max() == pytest.approx(5.0)

    def test_manifest_records_run(self, scene):
        manifest = json.loads((scene["dir"] / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 4
        assert manifest["outputs"] == ["imu.csv", "truth.csv"]
        assert manifest["resolved"]["trajectory"]["laps"] == 2
        assert manifest["resolved"]["wheel_slam"]["n_particles"] == 100
        assert set(manifest["versions"]) == {"rollslam", "numpy", "python"}

    def test_seed_flag_overrides_config(self, scene, tmp_path):
        rc = main(
            [
                "simulate",
                "--config", scene["cfg"],
                "--seed", "11",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 11
        # Different sensor-noise seed, same truth.
        assert (tmp_path / "truth.csv").read_bytes() == (
            scene["dir"] / "truth.csv"
        ).read_bytes()
        assert (tmp_path / "imu.csv").read_bytes() != (
            scene["dir"] / "imu.csv"
        ).read_bytes()


# --------------------------------------------------------------------------
# run-ins / run-slam / export-map


class TestRunCommands:
    def test_run_ins_writes_trajectory(self, scene, tmp_path):
        rc = main(
            [
                "run-ins",
                "--config", scene["cfg"],
                "--imu", scene["imu"],
                "--truth", scene["truth"],
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        traj = read_trajectory_csv(tmp_path / "ins_trajectory.csv")
        truth = read_truth_csv(scene["truth"])
        assert traj.t.size > 100
        assert traj.t[0] > truth.t[0]
        assert traj.t[-1] <= truth.t[-1]

    def test_run_slam_outputs(self, scene, slam_out):
        slam = read_trajectory_csv(slam_out / "slam_trajectory.csv")
        ins = read_trajectory_csv(slam_out / "ins_trajectory.csv")
        assert np.array_equal(slam.t, ins.t)  # same emission epochs
        manifest = json.loads((slam_out / "manifest.json").read_text())
        assert manifest["command"] == "run-slam"
        imu_hash = hashlib.sha256(open(scene["imu"], "rb").read()).hexdigest()
        assert manifest["inputs"]["imu"]["sha256"] == imu_hash
        assert sorted(manifest["inputs"]) == ["imu", "truth"]

    def test_rerun_is_byte_identical(self, scene, slam_out, tmp_path):
        rc = main(
            [
                "run-slam",
                "--config", scene["cfg"],
                "--imu", scene["imu"],
                "--truth", scene["truth"],
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        for name in ("slam_trajectory.csv", "ins_trajectory.csv", "manifest.json"):
            assert (tmp_path / name).read_bytes() == (slam_out / name).read_bytes()

    def test_export_map_round_trips(self, scene, tmp_path):
        rc = main(
            [
                "export-map",
                "--config", scene["cfg"],
                "--imu", scene["imu"],
                "--truth", scene["truth"],
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        grid = read_map_csv(tmp_path / "map.csv")
        assert grid.cell_size == 1.5
        assert len(grid.cells) > 100
        # every loaded bank is a plausible road bank
        assert all(abs(c.bank) < math.pi / 2 for c in grid.cells.values())
        write_map_csv(tmp_path / "map2.csv", grid)
        assert read_map_csv(tmp_path / "map2.csv").cells.keys() == grid.cells.keys()

    def test_particle_and_loop_closure_flags_reach_the_filter(
        self, scene, tmp_path
    ):
        rc = main(
            [
                "run-slam",
                "--config", scene["cfg"],
                "--imu", scene["imu"],
                "--truth", scene["truth"],
                "--particles", "10",
                "--no-loop-closure",
                "--out", str(tmp_path),
            ]
        )
        assert rc == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["resolved"]["wheel_slam"]["n_particles"] == 10
        assert manifest["resolved"]["wheel_slam"]["loop_closure"] is False


# --------------------------------------------------------------------------
# evaluate


class TestEvaluate:
    def test_metrics_json_on_stdout_and_disk(self, scene, slam_out, tmp_path, capsys):
        out_file = tmp_path / "metrics.json"
        rc = main(
            [
                "evaluate",
                "--estimate", str(slam_out / "slam_trajectory.csv"),
                "--truth", scene["truth"],
                "--baseline", str(slam_out / "ins_trajectory.csv"),
                "--out", str(out_file),
            ]
        )
        assert rc == 0
        printed = capsys.readouterr().out
        result = json.loads(printed)
        assert result["rmse_pos_m"] > 0.0
        assert result["baseline"]["rmse_pos_m"] > 0.0
        assert "improvement_pos_pct" in result
        assert out_file.read_text() == printed

    def test_disjoint_time_ranges_fail_cleanly(self, scene, tmp_path, capsys):
        bad = tmp_path / "late.csv"
        bad.write_text("t_s,x_m,y_m,heading_deg\n99990.0,0.0,0.0,0.0\n")
        rc = main(
            ["evaluate", "--estimate", str(bad), "--truth", scene["truth"]]
        )
        assert rc == 2
        assert "outside" in capsys.readouterr().err

    def test_schema_mismatch_fails_cleanly(self, scene, capsys):
        # feeding the IMU log where a trajectory is expected
        rc = main(
            ["evaluate", "--estimate", scene["imu"], "--truth", scene["truth"]]
        )
        assert rc == 2
        assert "expected header" in capsys.readouterr().err


# --------------------------------------------------------------------------
# compare


class TestCompare:
    def test_two_seeds_and_worker_independence(self, scene, tmp_path):
        args = [
            "compare",
            "--config", scene["cfg"],
            "--seeds", "1,2",
            "--out",
        ]
        out1, out2 = tmp_path / "w1", tmp_path / "w2"
        assert main(args + [str(out1), "--workers", "1"]) == 0
        assert main(args + [str(out2), "--workers", "2"]) == 0
        assert (out1 / "compare.json").read_bytes() == (
            out2 / "compare.json"
        ).read_bytes()
        report = json.loads((out1 / "compare.json").read_text())
        assert [r["seed"] for r in report["runs"]] == [1, 2]
        assert report["summary"]["n_seeds"] == 2
        assert "median" in report["summary"]["improvement_pos_pct"]
        for row in report["runs"]:
            assert row["ins"]["rmse_pos_m"] > 0.0
            assert row["slam"]["rmse_pos_m"] > 0.0

    @pytest.mark.parametrize(
        "spec,expected",
        [
            ("1-4", [1, 2, 3, 4]),
            ("7", [7]),
            ("1,5,9", [1, 5, 9]),
            ("1-3,8", [1, 2, 3, 8]),
        ],
    )
    def test_seed_spec_parsing(self, spec, expected):
        assert _parse_seeds(spec) == expected

    @pytest.mark.parametrize("bad", ["", "4-1", "a", "1,1"])
    def test_bad_seed_specs_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            _parse_seeds(bad)


# --------------------------------------------------------------------------
# error handling and helpers


class TestErrorPaths:
    def test_unknown_config_key_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("particles = 10\n")  # the key is n_particles
        rc = main(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
        assert rc == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_missing_input_file_exit_code(self, scene, tmp_path, capsys):
        rc = main(
            [
                "run-ins",
                "--imu", str(tmp_path / "absent.csv"),
                "--truth", scene["truth"],
                "--out", str(tmp_path),
            ]
        )
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_no_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestRunHelpers:
    def test_alignment_split_matches_standstill(self, scene):
        truth = read_truth_csv(scene["truth"])
        stream = read_imu_csv(scene["imu"])
        n = alignment_split(stream.t, truth)
        moving = np.flatnonzero(truth.speed > 0.0)
        assert stream.t[n - 1] <= truth.t[moving[0] - 1]
        assert stream.t[n] > truth.t[moving[0] - 1]

    def test_alignment_split_requires_standstill(self):
        from rollslam.cli.io import TruthTrack

        t = np.arange(5.0)
        always_moving = TruthTrack(
            t=t, x=t, y=0 * t, heading=0 * t, bank=0 * t, speed=t + 1.0
        )
        with pytest.raises(InvalidInputError, match="standstill"):
            alignment_split(t, always_moving)
        never_moving = TruthTrack(
            t=t, x=0 * t, y=0 * t, heading=0 * t, bank=0 * t, speed=0 * t
        )
        with pytest.raises(InvalidInputError, match="never moves"):
            alignment_split(t, never_moving)

    def test_pose_at_interpolates_wrapped_heading(self):
        from rollslam.cli.io import TruthTrack

        track = TruthTrack(
            t=np.array([0.0, 1.0]),
            x=np.array([0.0, 2.0]),
            y=np.array([0.0, 0.0]),
            heading=np.radians([179.0, -179.0]),
            bank=np.zeros(2),
            speed=np.ones(2),
        )
        pose = pose_at(track, 0.5)
        assert pose.x == pytest.approx(1.0)
        assert abs(pose.heading) == pytest.approx(math.pi, abs=1e-12)

    def test_ins_run_starts_at_reference_pose(self, scene):
        truth = read_truth_csv(scene["truth"])
        stream = read_imu_csv(scene["imu"])
        result = run_wheel_ins(stream, truth)
        assert result.start_pose.x == pytest.approx(truth.x[0], abs=1e-9)
        assert result.start_pose.y == pytest.approx(truth.y[0], abs=1e-9)
        assert result.aligned_samples > 100
        assert len(result.increments) == result.trajectory.t.size
