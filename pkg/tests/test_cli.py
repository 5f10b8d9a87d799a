import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from ranksel import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = {
    "strategy_map": {
        "pool": {"values": [1, 0, 0, 0], "free_probs": [0.2, 0.5, 0.5, 0.5]},
        "model": {"kind": "plackett_luce", "gamma_grid": [1.0, 2.0, 6.0],
                  "beta_grid": [3.0, 1.0, 0.3]},
    },
    "welfare_sweep": {
        "pool": {"values": [1, 0, 0, 0], "free_probs": [0.1, 0.4, 0.4, 0.4]},
        "model": {"kind": "plackett_luce", "gamma_grid": [10.0, 1.6], "beta_grid": [2.0, 0.5]},
    },
    "regret_curve": {
        "pool": {"values": [1, 0.5, 0.2], "free_probs": [0.2, 0.4, 0.6],
                 "busy_penalties": [2, 2, 2]},
        "model": {"kind": "plackett_luce", "beta_grid": [2.0, 0.5]},
    },
    "monotone_check": {
        "pool": {"values": [1, 0.6, 0.2], "free_probs": [0.2, 0.4, 0.6]},
        "model": {"kind": "gaussian_rum", "sigma_grid": [0.5]},
        "samples": 20000, "rng": {"seed": 4},
    },
    "market_sim": {
        "pool": {"values": [5, 0, 0, 0], "free_probs": [0.5] * 4,
                 "busy_penalties": [1.5] * 4},
        "model": {"kind": "plackett_luce", "beta_grid": [3.0]},
        "sim": {"steps": 60, "replicates": 8, "refresh_prob": 0.4, "background": "kfree:4",
                "strategies": ["follow", "kfree:2", "kbusy:2"]},
        "rng": {"seed": 1},
    },
    "oracle_dump": {
        "pool": {"values": [1, 0.3, 0.3], "free_probs": [0.1, 0.5, 0.5],
                 "busy_penalties": [2, 2, 2]},
        "model": {"kind": "plackett_luce", "beta_grid": [1.0]},
    },
}


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def run_main(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_csv(path):
    return list(csv.DictReader(io.StringIO(Path(path).read_text())))


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_every_kind_runs(kind, tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL[kind])
    out = tmp_path / f"{kind}.csv"
    code, stdout, _ = run_main(capsys, kind, "--config", cfg, "--out", str(out))
    assert code == 0
    summary = json.loads(stdout)
    assert summary["experiment"] == kind
    assert summary["rows"] == len(read_csv(out)) > 0
    assert summary["violations"]["probability_range"] == 0
    assert summary["violations"]["negative_regret"] == 0


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_byte_identical_reruns(kind, tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL[kind])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_main(capsys, kind, "--config", cfg, "--out", str(a), "--seed", "7")
    run_main(capsys, kind, "--config", cfg, "--out", str(b), "--seed", "7")
    assert a.read_bytes() == b.read_bytes()


def test_json_round_trip(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL["welfare_sweep"])
    js, cs = tmp_path / "w.json", tmp_path / "w.csv"
    run_main(capsys, "welfare_sweep", "--config", cfg, "--out", str(js), "--format", "json")
    run_main(capsys, "welfare_sweep", "--config", cfg, "--out", str(cs))
    doc = json.loads(js.read_text())
    assert doc["metadata"]["experiment"] == "welfare_sweep"
    assert doc["metadata"]["seed"] == 0
    assert "version" in doc["metadata"]
    assert doc["metadata"]["config"] == SMALL["welfare_sweep"]
    rows = read_csv(cs)
    assert len(rows) == len(doc["rows"])
    for jr, cr in zip(doc["rows"], rows):
        assert list(jr) == list(cr)
        for k, v in jr.items():
            if isinstance(v, float):
                assert float(cr[k]) == pytest.approx(v, rel=1e-11, abs=1e-300)
            else:
                assert cli._fmt(v) == cr[k]


def test_csv_header_snake_case(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL["oracle_dump"])
    out = tmp_path / "o.csv"
    run_main(capsys, "oracle_dump", "--config", cfg, "--out", str(out))
    header = out.read_text().splitlines()[0].split(",")
    assert all(h == h.lower() and " " not in h for h in header)


def test_probabilities_and_regret_in_range(tmp_path, capsys):
    for kind in ("welfare_sweep", "regret_curve", "market_sim", "oracle_dump"):
        cfg = write_cfg(tmp_path, SMALL[kind])
        out = tmp_path / f"{kind}.csv"
        run_main(capsys, kind, "--config", cfg, "--out", str(out))
        for row in read_csv(out):
            for k, v in row.items():
                if k.startswith("p_") or k == "status_prob" or row.get("record", "").startswith("free_prob") and k == "value":
                    assert 0.0 <= float(v) <= 1.0, (kind, k, v)
                if k == "regret_vs_oracle":
                    assert float(v) >= -1e-9


def test_stdout_carries_data_without_out(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL["oracle_dump"])
    code, stdout, _ = run_main(capsys, "oracle_dump", "--config", cfg)
    assert code == 0
    summary = json.loads(stdout)
    assert summary["data"].startswith("status,status_prob,best_index")


def test_strategy_map_phase_structure(tmp_path, capsys):
    # r = 4 with v2 = 0: first-busy while gamma < 4, first-free above
    cfg = write_cfg(tmp_path, SMALL["strategy_map"])
    out = tmp_path / "m.csv"
    run_main(capsys, "strategy_map", "--config", cfg, "--out", str(out))
    rows = read_csv(out)
    for row in rows:
        gamma = float(row["gamma"])
        assert row["direction"] == ("first_busy" if gamma < 4 else "first_free")
    for gamma in ("1", "2", "6"):
        windows = [int(r["window_jstar"]) for r in rows if r["gamma"] == gamma]
        assert windows == sorted(windows, reverse=True)


def test_market_rows(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL["market_sim"])
    out = tmp_path / "m.csv"
    code, stdout, _ = run_main(capsys, "market_sim", "--config", cfg, "--out", str(out))
    rows = read_csv(out)
    names = [r["name"] for r in rows if r["record"] == "strategy"]
    assert names == ["follow_ranking", "kfree_2", "kbusy_2"]
    assert sum(r["in_best_band"] == "true" for r in rows) >= 1
    assert json.loads(stdout)["violations"]["best_band"]


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"pool": {"values": [1, 0]}})
    code, _, err = run_main(capsys, "welfare_sweep", "--config", cfg)
    assert code == 2
    assert json.loads(err)["error"]


def test_missing_config_file_exit_2(tmp_path, capsys):
    code, _, _ = run_main(capsys, "oracle_dump", "--config", str(tmp_path / "nope.yaml"))
    assert code == 2


def test_mismatched_kind_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {**SMALL["oracle_dump"], "experiment": "welfare_sweep"})
    assert run_main(capsys, "oracle_dump", "--config", cfg)[0] == 2


def test_stochastic_without_seed_exit_2(tmp_path, capsys):
    cfg = {k: v for k, v in SMALL["market_sim"].items() if k != "rng"}
    assert run_main(capsys, "market_sim", "--config", write_cfg(tmp_path, cfg))[0] == 2


def test_unknown_kind_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus", "--config", write_cfg(tmp_path, {})])
    assert exc.value.code == 2


def test_capacity_exit_3(tmp_path, capsys):
    cfg = {"pool": {"values": [1, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2],
                    "free_probs": [0.5] * 9},
           "model": {"kind": "plackett_luce", "beta_grid": [1.0]}}
    code, _, err = run_main(capsys, "oracle_dump", "--config", write_cfg(tmp_path, cfg))
    assert code == 3
    assert json.loads(err)["error"] == "CapacityError"


def test_seed_flag_overrides_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL["market_sim"])
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run_main(capsys, "market_sim", "--config", cfg, "--out", str(a), "--format", "json", "--seed", "3")
    run_main(capsys, "market_sim", "--config", cfg, "--out", str(b), "--format", "json")
    assert json.loads(a.read_text())["metadata"]["seed"] == 3
    assert json.loads(b.read_text())["metadata"]["seed"] == 1


def test_console_script(tmp_path):
    cfg = write_cfg(tmp_path, SMALL["oracle_dump"])
    proc = subprocess.run([sys.executable, "-m", "ranksel.cli", "oracle_dump", "--config", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["rows"] > 0


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_parse(name):
    cfg = cli.load_config(CONFIGS / name)
    assert cfg["experiment"] in cli.KINDS
