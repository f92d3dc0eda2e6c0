import csv
import json

import numpy as np
import pytest

from privamp.cli import build_config, build_parser, main, resolve_run_settings


def test_run_synthetic(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code = main(["run", "--synthetic", "300,3,3", "--k", "3", "--T", "2", "--m", "40", "--B", "1",
                 "--reps", "2", "--families", "full,unif", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert {r["family"] for r in rows} == {"full", "unif"}
    assert "wrote" in capsys.readouterr().out


def test_config_file_and_override(tmp_path):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text("synthetic: 200,2,2\nk: 4\nreps: 7\nB: [0.5, 2]\n")
    args = build_parser().parse_args(["run", "--config", str(cfg_path), "--reps", "3"])
    cfg = build_config(resolve_run_settings(args))
    assert cfg.k == 4 and cfg.repetitions == 3 and cfg.B_list == (0.5, 2.0)


def test_json_config(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"synthetic": "200,2,2", "lambda": 0.25}))
    args = build_parser().parse_args(["run", "--config", str(cfg_path)])
    assert build_config(resolve_run_settings(args)).lam == 0.25


def test_unknown_config_key(tmp_path, capsys):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text("synthetic: 200,2,2\nbogus: 1\n")
    assert main(["run", "--config", str(cfg_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_input_file(tmp_path):
    data = tmp_path / "d.csv"
    np.savetxt(data, np.random.default_rng(0).normal(size=(120, 2)), delimiter=",")
    out = tmp_path / "o.csv"
    assert main(["run", "--input", str(data), "--k", "2", "--T", "2", "--m", "30", "--B", "1", "--reps", "1",
                 "--families", "full,core", "--out", str(out)]) == 0
    assert out.exists()


def test_bad_input_reports_location(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("1,2\n3\n")
    assert main(["run", "--input", str(data), "--out", str(tmp_path / "o.csv")]) == 2
    assert "row 2" in capsys.readouterr().err


def test_weights(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["weights", "--synthetic", "100,3,2", "--k", "3", "--B", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 98  # floor(0.025 * 100) = 2 trimmed
    for r in rows:
        assert 0 < float(r["q"]) <= 1 and float(r["weight"]) >= 1


def test_audit_quick(capsys):
    assert main(["audit", "--quick"]) == 0
    assert "audits as expected" in capsys.readouterr().out


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])


def test_rho_setting(tmp_path):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text("synthetic: 200,2,2\nrho: 0.3\n")
    args = build_parser().parse_args(["run", "--config", str(cfg_path)])
    assert build_config(resolve_run_settings(args)).rho == 0.3
    args = build_parser().parse_args(["run", "--synthetic", "200,2,2", "--rho", "0.1"])
    assert build_config(resolve_run_settings(args)).rho == 0.1
