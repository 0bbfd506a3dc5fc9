"""End-to-end checks of the ``blurforge`` command line.

Output shapes are compared against key-structure goldens in ``tests/golden``;
set ``BLURFORGE_UPDATE_GOLDEN=1`` to rewrite them after an intentional change.
"""

import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from blurforge.camera_geom import AxisAngleRotation, CameraIntrinsics, rotation_map
from blurforge.cli import main
from blurforge.images import save_image
from blurforge.imu_ingest import parse_gyro_log

from conftest import make_dataset_inputs, natural_gray

GOLDEN = Path(__file__).parent / "golden"


def schema(obj):
    """Key structure of a JSON value: dict keys recursively, list element shape, leaf types."""
    if isinstance(obj, dict):
        return {k: schema(v) for k, v in sorted(obj.items())}
    if isinstance(obj, list):
        return [schema(obj[0])] if obj else []
    if isinstance(obj, bool):
        return "bool"
    if isinstance(obj, (int, float)):
        return "number"
    if obj is None:
        return "null"
    return type(obj).__name__


def check_golden(name, out):
    path = GOLDEN / f"{name}.json"
    got = schema(out)
    if os.environ.get("BLURFORGE_UPDATE_GOLDEN"):
        path.write_text(json.dumps(got, indent=2, sort_keys=True) + "\n")
    assert got == json.loads(path.read_text())


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def run_json(capsys, *argv):
    rc, out, err = run(capsys, *argv)
    assert rc == 0, err
    return json.loads(out)


@pytest.fixture
def gray_png(tmp_path):
    path = tmp_path / "a.png"
    save_image(path, natural_gray("camera", (48, 64)), linear=False)
    return path


def test_metrics_same_image(capsys, gray_png):
    out = run_json(capsys, "metrics", gray_png, gray_png)
    assert out["psnr"] == 99.0 and out["ssim"] == 1.0
    check_golden("metrics", out)


def test_trace_constant_yaw(capsys):
    out = run_json(capsys, "trace", "--point", "320,240", "--point", "10,20", "--yaw-rate", "0.2",
                   "--focal", "600", "--cx", "320", "--cy", "240")
    traj = out["trajectories"][0]
    assert len(traj["nodes"]) == 7 and len(traj["stage_lengths"]) == 6
    k = CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)
    expected = rotation_map((320.0, 240.0), AxisAngleRotation.about("yaw", 0.2 * 0.03), k)
    np.testing.assert_allclose(traj["nodes"][-1], expected, atol=1e-9)
    assert out["trajectories"][1]["nodes"][0] == [10.0, 20.0]
    check_golden("trace", out)


def test_trace_floats_round_trip(capsys, tmp_path):
    # a gyro log with awkward decimals; JSON values must reproduce in-process results bit for bit
    log = tmp_path / "g.csv"
    log.write_text("t,wx,wy,wz\n0,0.1234567890123,-0.3,0.7\n0.01,0.2,0.333333333333333,0.1\n"
                   "0.02,-0.05,0.1,0.0\n0.03,0.3,0.2,0.1\n")
    out = run_json(capsys, "trace", "--point", "100.125,33.3", "--gyro-log", log, "--focal", "517.3")
    from blurforge.imu_ingest import ExposureWindow, integrate_window
    from blurforge.trajectory import trace_point

    with open(log, "rb") as fh:
        deltas = integrate_window(parse_gyro_log(fh), ExposureWindow(0.0, 0.03))
    k = CameraIntrinsics.centered(517.3, 640, 480)
    ref = trace_point((100.125, 33.3), deltas, k)
    assert out["trajectories"][0]["nodes"] == ref.nodes.tolist()


def test_synth_and_heatmap(capsys, tmp_path, gray_png):
    blurred, mask = tmp_path / "b.png", tmp_path / "m.png"
    out = run_json(capsys, "synth", "--image", gray_png, "--out", blurred, "--mask-out", mask,
                   "--focal", "80", "--roll-rate", "3")
    assert blurred.is_file() and mask.is_file() and out["contaminated_pixels"] > 0
    check_golden("synth", out)
    out = run_json(capsys, "heatmap", "--out", tmp_path / "h", "--viz", tmp_path / "v.png",
                   "--focal", "80", "--width", "32", "--height", "24", "--pitch-rate", "1")
    for f in out["files"].values():
        assert Path(f).is_file()
    assert out["fit"]["n_failed"] == 0
    check_golden("heatmap", out)


def test_dataset_and_validate(capsys, tmp_path):
    bg, log = make_dataset_inputs(tmp_path / "in", n=3)
    out = run_json(capsys, "dataset", "--backgrounds", bg, "--gyro-log", log, "--output",
                   tmp_path / "out", "--focal", "100", "--width", "96", "--height", "72", "--seed", "3")
    assert out["entries"] == 3 and out["failed"] == 0
    check_golden("dataset", out)
    manifest = Path(out["manifest"])
    check_golden("manifest", json.loads(manifest.read_text()))
    ok = run_json(capsys, "dataset", "--validate", manifest)
    assert ok["issues"] == []
    (manifest.parent / "00002_mask.png").unlink()
    rc, text, _ = run(capsys, "dataset", "--validate", manifest)
    assert rc == 1
    assert [i["kind"] for i in json.loads(text)["issues"]] == ["MissingFile"]


def test_simulate_gyro_and_eval(capsys, tmp_path):
    rc, csv_text, _ = run(capsys, "simulate-gyro", "--constant", "0,0.5,0", "--duration", "0.1")
    assert rc == 0
    samples = parse_gyro_log(csv_text)
    assert len(samples) == 21 and samples[-1].omega == (0.0, 0.5, 0.0)
    log = tmp_path / "g.csv"
    out = run_json(capsys, "simulate-gyro", "--random-seed", "4", "--out", log)
    assert out["samples"] == 201 and log.is_file()
    check_golden("simulate_gyro", out)

    ann = tmp_path / "a.csv"
    ann.write_text("record_id,u_start,v_start,u_end,v_end,t_start,tau\nr1,320,240,320,240,0.1,0.03\n")
    out = run_json(capsys, "eval-endpoints", "--annotations", ann, "--gyro-log", log, "--focal", "600")
    assert out["records"][0]["record_id"] == "r1" and out["mean_error"] > 0
    check_golden("eval_endpoints", out)


def test_usage_errors_exit_1(capsys):
    assert run(capsys, "trace", "--point", "1,2")[0] == 1  # no intrinsics
    assert run(capsys, "trace", "--point", "nope", "--focal", "600")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    rc, out, err = run(capsys, "trace", "--point", "1,2", "--focal", "600", "--tau", "-1")
    assert rc == 1 and out == "" and err


def test_io_errors_exit_2(capsys, tmp_path):
    rc, _, err = run(capsys, "metrics", tmp_path / "missing.png", tmp_path / "missing.png")
    assert rc == 2 and "missing.png" in err
    rc, _, _ = run(capsys, "trace", "--point", "1,2", "--focal", "600", "--gyro-log", tmp_path / "no.csv")
    assert rc == 2


def test_malformed_gyro_log_exit_1(capsys, tmp_path):
    log = tmp_path / "g.csv"
    log.write_text("0,1,2\n")
    assert run(capsys, "trace", "--point", "1,2", "--focal", "600", "--gyro-log", log)[0] == 1


@pytest.mark.skipif(shutil.which("blurforge") is None, reason="console script not installed")
def test_console_script(gray_png):
    proc = subprocess.run(["blurforge", "metrics", str(gray_png), str(gray_png)], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["psnr"] == 99.0
    proc = subprocess.run([sys.executable, "-m", "blurforge.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "blurforge" in proc.stdout


def test_simulate_gyro_motion_file_reproduces_log(capsys, tmp_path):
    out = run_json(capsys, "simulate-gyro", "--random-seed", "9", "--out", tmp_path / "a.csv")
    motion = tmp_path / "motion.json"
    motion.write_text(json.dumps(out["motion"]))
    run_json(capsys, "simulate-gyro", "--motion", motion, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
