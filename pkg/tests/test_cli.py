from __future__ import annotations

import json
import subprocess
import sys

import pytest

from dqcforge import cli


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def realtime_cfg(tmp_path):
    return write(tmp_path / "rt.yaml", "experiment: realtime\nparams:\n  n: 6\n  shots: 3\n")


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_realtime_run_writes_outputs(tmp_path, realtime_cfg):
    out = tmp_path / "out"
    assert cli.main(["realtime", "--config", str(realtime_cfg), "--seed", "1", "--out",
                     str(out)]) == cli.EXIT_OK
    m = manifest(out)
    assert m["status"] == "ok" and m["seed"] == 1 and m["command"] == "realtime"
    assert set(m["files"]) == {"results.csv", "manifest.json", "sessions.txt"}
    assert (out / "sessions.txt").read_text().count("outcome:") == 3
    assert not (out / ".staging").exists()


@pytest.mark.parametrize("text", ["experiment: [", "experiment: realtime\nparams: {n: x}\n",
                                  "experiment: compare\n", "target: {class: nope}\n"])
def test_config_errors_exit_2(tmp_path, text):
    path = write(tmp_path / "c.yaml", text)
    assert cli.main(["realtime", "--config", str(path), "--seed", "0", "--out",
                     str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_missing_config_and_bad_jobs_exit_2(tmp_path, realtime_cfg):
    assert cli.main(["realtime", "--config", str(tmp_path / "none.yaml"), "--seed", "0",
                     "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert cli.main(["realtime", "--config", str(realtime_cfg), "--seed", "0", "--out",
                     str(tmp_path / "o"), "--jobs", "0"]) == cli.EXIT_CONFIG


def test_nonconvergence_exit_3(tmp_path):
    path = write(tmp_path / "c.yaml", "experiment: realtime\nparams:\n  n: 6\n  shots: 4\n"
                                      "  max_sweeps: 0\n  restart: none\n")
    out = tmp_path / "o"
    assert cli.main(["realtime", "--config", str(path), "--seed", "0", "--out",
                     str(out)]) == cli.EXIT_NONCONVERGED
    assert manifest(out)["status"] == "nonconverged"
    assert (out / "results.csv").stat().st_size > 0


def test_rerun_is_byte_identical_except_timestamp(tmp_path, realtime_cfg):
    outs = []
    for i, jobs in enumerate((1, 1, 2)):
        out = tmp_path / f"o{i}"
        assert cli.main(["realtime", "--config", str(realtime_cfg), "--seed", "4", "--out",
                         str(out), "--jobs", str(jobs)]) == 0
        outs.append(out)
    for name in ("results.csv", "sessions.txt"):
        texts = {(o / name).read_bytes() for o in outs}
        assert len(texts) == 1
    m = [manifest(o) for o in outs]
    for x in m:
        x.pop("timestamp")
    assert m[0] == m[1]
    m[2].pop("jobs"), m[0].pop("jobs")
    assert m[0] == m[2]


def test_nn_train_outputs_are_reproducible(tmp_path):
    path = write(tmp_path / "nn.yaml", "experiment: nn-train\nparams:\n  n: 4\n  widths: [4]\n"
                                       "  epochs: 3\n  batch_size: 4\n")
    outs = []
    for i in range(2):
        out = tmp_path / f"o{i}"
        assert cli.main(["nn-train", "--config", str(path), "--seed", "2", "--out",
                         str(out)]) == 0
        outs.append(out)
    for name in ("results.csv", "decoder_w4_s2.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_modified_config_appends_without_overwriting(tmp_path, realtime_cfg):
    out = tmp_path / "o"
    cli.main(["realtime", "--config", str(realtime_cfg), "--seed", "0", "--out", str(out)])
    first = (out / "results.csv").read_text()
    cli.main(["realtime", "--config", str(realtime_cfg), "--seed", "0", "--out", str(out)])
    assert (out / "results.csv").read_text() == first
    other = write(tmp_path / "rt2.yaml", "experiment: realtime\nparams:\n  n: 8\n  shots: 1\n")
    cli.main(["realtime", "--config", str(other), "--seed", "0", "--out", str(out)])
    after = (out / "results.csv").read_text()
    assert after.startswith(first) and len(after) > len(first)


def test_module_entry_point(tmp_path, realtime_cfg):
    proc = subprocess.run([sys.executable, "-m", "dqcforge.cli", "realtime", "--config",
                           str(realtime_cfg), "--seed", "0", "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "dqcforge.cli", "bogus"], capture_output=True)
    assert proc.returncode == 2
