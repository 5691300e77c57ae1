import json

import pytest

from zmerge.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_train_eval_report_cycle(tmp_path, capsys):
    small = ["--set", "episode_len=3", "--set", "warmup=16", "--set", "hidden=[8]"]
    code, out, _ = run(capsys, "train", "--episodes", "1", "--seed", "3", "--out", str(tmp_path / "t"), *small)
    assert code == 0
    ckpt = json.loads(out)["checkpoint"]
    code, out, _ = run(capsys, "eval", "--policy", "zmerge", "--checkpoint", ckpt, "--episodes", "1",
                       "--out", str(tmp_path / "e"), "--set", "episode_len=3", "--latency",
                       "--set", "latency_iterations=10")
    assert code == 0
    assert (tmp_path / "e" / "metrics.json").is_file()
    lat = (tmp_path / "e" / "latency_cdf.csv").read_text().splitlines()
    assert len(lat) == 11
    code, _, _ = run(capsys, "report", "--in", str(tmp_path / "e"), "--out", str(tmp_path / "r"))
    assert code == 0
    assert (tmp_path / "r" / "summary.csv").read_bytes() == (tmp_path / "e" / "summary.csv").read_bytes()


def test_sweep(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--policy", "random,baseline2", "--episodes", "1",
                       "--out", str(tmp_path / "s"), "--set", "episode_len=2", "--set", "pr_sweep=[0.2,0.4]")
    assert code == 0 and json.loads(out)["runs"] == 4
    rows = (tmp_path / "s" / "queue_vs_pr.csv").read_text().splitlines()
    assert len(rows) == 5


@pytest.mark.parametrize("argv,kind,code", [
    (["eval", "--policy", "zmerge"], "missing_file", 1),
    (["eval", "--policy", "ppo"], "config", 2),
    (["eval", "--set", "nonsense=1"], "config", 2),
    (["frobnicate"], "usage", 2),
    (["report", "--in", "/nonexistent/dir"], "missing_file", 1),
])
def test_errors_are_json_on_stderr(tmp_path, capsys, argv, kind, code):
    got, out, err = run(capsys, *argv, *([] if argv[0] in ("frobnicate", "report") else ["--out", str(tmp_path)]))
    assert got == code
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == kind


def test_env_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ZMERGE_PENETRATION_RATE", "7")
    code, _, err = run(capsys, "eval", "--policy", "random", "--out", str(tmp_path))
    assert code == 2 and "penetration_rate" in json.loads(err)["message"]
