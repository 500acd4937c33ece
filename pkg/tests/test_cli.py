import json
import math
import subprocess
import sys

import numpy as np
import pytest

from ptf_prg.cli import build_parser, main, run_tasks
from ptf_prg.poly import HERMITE, STANDARD, Poly, dumps, eval_many, loads

SUBCOMMANDS = ["fool", "slow-growth", "restriction-fixing", "hypervariance", "anticoncentration",
               "hybrid-step", "restrict", "convert", "corpus", "moments"]


@pytest.fixture
def poly_file(tmp_path):
    p = Poly.from_dict(2, 2, STANDARD, {(0, 0): -0.2, (1, 1): 1.0, (2, 0): 0.5})
    path = tmp_path / "p.json"
    path.write_text(dumps(p))
    return p, path


def test_moments_audit(capsys):
    assert main(["moments", "--k", "6", "--audit"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("nodes=4 k=6 mode=independent")
    worst = float(out.strip().splitlines()[-1].split(",")[1])
    assert worst <= 1e-9


def test_moments_seed_accounting(capsys):
    assert main(["moments", "--k", "12", "--n", "10", "--mode", "kwise", "--prime", "65521", "--L", "16"]) == 0
    out = capsys.readouterr().out
    assert "bits_per_Yi,208" in out and "total_bits,3328" in out and "seed_optimal,1" in out


def test_fool_writes_one_row_per_instance(tmp_path):
    out = tmp_path / "r.csv"
    rc = main(["fool", "--n", "4", "--d", "3", "--L", "16", "--R", "4", "--trials", "10000",
               "--mc-trials", "10000", "--count", "3", "--seed", "7", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("experiment,n,d,lambda")
    assert all(line.startswith("fooling_error,4,3,") for line in lines[1:])


def test_sweeps_expand_to_combinations(tmp_path, poly_file):
    _, path = poly_file
    out = tmp_path / "r.csv"
    rc = main(["restriction-fixing", "--poly", str(path), "--lambda", "0.1,0.01", "--eps", "0.05,0.1",
               "--outer", "20", "--inner", "100", "--out", str(out)])
    assert rc == 0
    rows = out.read_text().splitlines()[1:]
    assert [tuple(r.split(",")[3:5]) for r in rows] == [
        ("0.10000000000000001", "0.050000000000000003"), ("0.10000000000000001", "0.10000000000000001"),
        ("0.01", "0.050000000000000003"), ("0.01", "0.10000000000000001")]


@pytest.mark.parametrize("argv", [
    ["slow-growth", "--count", "2", "--delta", "0.1,0.5", "--trials", "200"],
    ["hypervariance", "--count", "2", "--trials", "200"],
    ["anticoncentration", "--count", "2", "--eps", "0.1", "--trials", "200"],
    ["hybrid-step", "--count", "2", "--trials", "200", "--R", "2"],
])
def test_experiment_subcommands_run(argv, capsys):
    assert main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("experiment,") and len(lines) >= 3


def test_restrict_json(tmp_path, poly_file):
    p, path = poly_file
    out = tmp_path / "q.json"
    assert main(["restrict", "--poly", str(path), "--lambda", "0.01", "--x", "0.3,-1.2", "--out", str(out)]) == 0
    q = loads(out.read_text())
    assert q.basis == HERMITE
    Y = np.random.default_rng(0).standard_normal((10, 2))
    x = np.array([0.3, -1.2])
    np.testing.assert_allclose(eval_many(q, Y), eval_many(p, math.sqrt(0.99) * x + 0.1 * Y), rtol=1e-10)
    assert main(["restrict", "--poly", str(path), "--lambda", "0.01", "--x-seed", "3", "--out", str(out)]) == 0


def test_convert_round_trip(tmp_path, poly_file, capsys):
    p, path = poly_file
    h = tmp_path / "h.json"
    assert main(["convert", "--poly", str(path), "--to", "hermite", "--out", str(h)]) == 0
    assert main(["convert", "--poly", str(h), "--to", "standard"]) == 0
    back = loads(capsys.readouterr().out)
    assert back.basis == STANDARD
    for a, v in p.coeffs.items():
        assert back.coeff(a) == pytest.approx(v, abs=1e-12)


def test_corpus_json(capsys):
    assert main(["corpus", "--count", "4", "--seed", "1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert [e["label"] for e in payload] == ["random_hermite", "random_standard", "sparse", "monomial_power"]
    assert main(["corpus", "--count", "0"]) == 0
    assert json.loads(capsys.readouterr().out) == []


@pytest.mark.parametrize("argv", [
    ["fool", "--L", "0", "--count", "1", "--trials", "10000"],
    ["fool", "--trials", "10"],
    ["moments", "--k", "6", "--mode", "kwise", "--prime", "12"],
    ["restrict", "--poly", "/nonexistent.json", "--lambda", "0.1"],
    ["anticoncentration", "--corpus", "bogus"],
    ["anticoncentration", "--eps", "abc"],
    ["nonsense"],
    [],
])
def test_usage_errors_exit_1(argv, capsys):
    try:
        rc = main(argv)
    except SystemExit as exc:
        rc = exc.code
    assert rc == 1
    assert capsys.readouterr().err


def test_malformed_json_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 1, "d": 1, "basis": "hermite", '
                   '"terms": [{"alpha": [1], "c": 1.0}, {"alpha": [0], "c": 2.0}]}')
    assert main(["convert", "--poly", str(bad), "--to", "standard"]) == 1
    bad.write_text("{not json")
    assert main(["restrict", "--poly", str(bad), "--lambda", "0.1"]) == 1
    assert "malformed" in capsys.readouterr().err


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_help_documents_every_flag(name):
    sub = build_parser()._subparsers._group_actions[0].choices[name]
    text = sub.format_help()
    assert sub.description
    for action in sub._actions:
        if action.option_strings and action.dest != "help":
            assert action.help, (name, action.dest)
            assert action.option_strings[-1] in text


def test_help_exits_0(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fool", "--help"])
    assert exc.value.code == 0
    assert "--L" in capsys.readouterr().out


def test_jobs_do_not_change_output(tmp_path):
    outs = []
    for jobs in (1, 3):
        out = tmp_path / f"r{jobs}.csv"
        assert main(["anticoncentration", "--count", "5", "--eps", "0.05,0.1", "--trials", "2000",
                     "--seed", "4", "--jobs", str(jobs), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_run_tasks_keeps_order():
    p = Poly.monomial((1,))
    tasks = [("exp_anticoncentration", dict(p=p, eps=e, trials=500, seed=1)) for e in (0.1, 0.5, 1.0)]
    assert [r.params["eps"] for r in run_tasks(tasks, 2)] == [0.1, 0.5, 1.0]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ptf_prg", "moments", "--k", "3"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("nodes=2")
