import csv
import json

import numpy as np
import pytest

from geigertree.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from geigertree.experiment import csv_columns


def _simulate(tmp_path, name, *extra):
    out = tmp_path / f"{name}.csv"
    code = main(["simulate", "--out-csv", str(out), *extra])
    return code, out


def test_same_seed_gives_identical_csv(tmp_path, capsys):
    args = ("--law", "geometric", "--n", "60", "--reps", "300", "--seed", "9")
    _, a = _simulate(tmp_path, "a", *args)
    _, b = _simulate(tmp_path, "b", *args)
    assert a.read_bytes() == b.read_bytes()
    _, c = _simulate(tmp_path, "c", *args[:-1], "10")
    assert a.read_bytes() != c.read_bytes()


def test_parallel_jobs_match_serial(tmp_path, capsys):
    args = ("--law", "binary", "--n", "80", "--reps", "2500", "--seed", "4")
    _, a = _simulate(tmp_path, "serial", *args)
    _, b = _simulate(tmp_path, "parallel", *args, "--jobs", "2")
    assert a.read_bytes() == b.read_bytes()


def test_csv_header_and_binary_n2(tmp_path, capsys):
    code, out = _simulate(tmp_path, "n2", "--law", "binary", "--n", "2", "--reps", "50",
                          "--seed", "1")
    assert code == EXIT_OK
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == csv_columns(4)
    data = np.array(rows[1:], dtype=int)
    assert data.shape == (50, 21)
    assert np.all(data[:, 3] == 2)
    assert np.array_equal(data[:, 0], np.arange(50))


def test_small_run_reports_insufficient(capsys):
    assert main(["simulate", "--n", "30", "--reps", "1"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["tests"] == "insufficient for tests"
    assert summary["nt"] == 15


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"law": "geometric", "n": 40, "replicates": 20,
                               "master_seed": 3}))
    assert main(["simulate", "--config", str(cfg), "--n", "50"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["config"]["n"] == 50
    assert summary["config"]["law"] == "geometric"
    assert summary["config"]["replicates"] == 20


def test_summary_json_file(tmp_path, capsys):
    out = tmp_path / "s.json"
    main(["simulate", "--n", "40", "--reps", "10", "--out-json", str(out)])
    summary = json.loads(out.read_text())
    assert {"config", "version", "nt", "means", "tests", "wall_time_s"} <= set(summary)


@pytest.mark.parametrize("argv", [
    ["simulate", "--t", "1.5"],
    ["simulate", "--n", "20", "--mode", "full-tree-oracle"],
    ["simulate", "--law", "custom", "--param", "0.5"],
    ["simulate", "--config", "/nonexistent/cfg.json"],
    ["simulate", "--reps", "0"],
    ["bogus"],
    ["limits", "split-left", "--x", "0.9", "--t", "0.5"],
    ["verify", "--budget", "quick", "--only", "A99"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"nn": 3}))
    assert main(["simulate", "--config", str(cfg)]) == EXIT_USAGE
    assert "unknown config keys" in capsys.readouterr().err


def test_full_tree_oracle_mode(tmp_path, capsys):
    code, out = _simulate(tmp_path, "oracle", "--law", "binary", "--n", "4", "--reps", "200",
                          "--mode", "full-tree-oracle", "--seed", "2")
    assert code == EXIT_OK
    data = np.loadtxt(out, delimiter=",", skiprows=1, dtype=int)
    assert data.shape == (200, 21)
    assert np.all(data[:, 3] >= 1)


def test_limits_csv(tmp_path, capsys):
    out = tmp_path / "lim.csv"
    assert main(["limits", "mrca", "--t", "0.5", "--x", "0", "0.25", "0.5",
                 "--out-csv", str(out)]) == EXIT_OK
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["x", "mrca"]
    vals = [float(r[1]) for r in rows[1:]]
    assert vals == pytest.approx([0.0, 2 / 3, 1.0])


def test_limits_grid_stdout(capsys):
    assert main(["limits", "sum", "--grid", "5"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6 and lines[0] == "x,sum"


def test_limits_joint_is_product(capsys):
    main(["limits", "joint", "--x", "0.2", "--y", "0.3", "--k", "1", "--k-right", "2"])
    value = float(capsys.readouterr().out.splitlines()[1].split(",")[1])
    from geigertree.limits import split_limit_cdf
    assert value == pytest.approx(split_limit_cdf("left", 1, 0.5, 0.2)
                                  * split_limit_cdf("right", 2, 0.5, 0.3))


def test_moments_json(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["moments", "--law", "geometric", "--n", "1000",
                 "--out-json", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert json.loads(capsys.readouterr().out) == rep
    assert rep["n"] == 1000


def test_verify_subset(tmp_path, capsys):
    out = tmp_path / "v.json"
    code = main(["verify", "--budget", "quick", "--only", "A9", "A12", "--out-json", str(out)])
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split(":")[0] for ln in lines] == ["A9", "A12"]
    rep = json.loads(out.read_text())
    assert code == (EXIT_OK if rep["passed"] else EXIT_FAIL)
    assert code == EXIT_OK


def test_help_exits_ok(capsys):
    assert main(["--help"]) == EXIT_OK


def test_failed_summary_test_exits_1(capsys):
    # 400 replicates cannot meet a 0.02 KS tolerance
    assert main(["simulate", "--law", "binary", "--n", "200", "--reps", "400",
                 "--seed", "5"]) == EXIT_FAIL
    tests = json.loads(capsys.readouterr().out)["tests"]
    assert not all(v["pass"] for v in tests.values())
