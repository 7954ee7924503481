import json
import subprocess
import sys

import pytest

from wstl.cli import EXIT_CHECK, EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(d / "s.csv")]) == EXIT_OK
    assert main(["train", "--data", str(d / "s.csv"), "--ki", "8", "--structure", "G[0,7](pred)",
                 "--out", str(d / "m.wstl"), "--history", str(d / "h.csv")]) == EXIT_OK
    return d


def test_train_then_evaluate(workdir, capsys):
    code, out, _ = run(capsys, "evaluate", "--model", workdir / "m.wstl", "--data", workdir / "s.csv",
                       "--ki", 8, "--split", "test", "--json")
    assert code == EXIT_OK
    assert json.loads(out)["accuracy"] == 1.0
    assert (workdir / "h.csv").read_text().startswith("epoch,loss,train_accuracy")


def test_evaluate_table_is_deterministic(workdir, capsys):
    args = ("evaluate", "--model", workdir / "m.wstl", "--data", workdir / "s.csv", "--ki", 8)
    a = run(capsys, *args)[1]
    b = run(capsys, *args)[1]
    assert a == b and "specificity" in a


def test_train_json(workdir, capsys):
    code, out, _ = run(capsys, "train", "--data", workdir / "s.csv", "--ki", 8, "--structure",
                       "G[0,7](pred)", "--out", workdir / "m2.wstl", "--json", "--epochs", 2)
    assert code == EXIT_OK and json.loads(out)["train_windows"] == 80


def test_parse_weight_mismatch(tmp_path, capsys):
    p = tmp_path / "bad.wstl"
    p.write_text("G[0,2]{1,2}(x1 <= 0.5)\n")
    code, _, err = run(capsys, "parse", "--formula", p)
    assert code == EXIT_USAGE
    assert err.startswith("ERROR:parse:") and "weight length 2" in err and "^^^" in err


def test_parse_canonical(tmp_path, capsys):
    p = tmp_path / "ok.wstl"
    p.write_text("G[0,1]{1,1}((1*x1<=0.5))\n")
    code, out, _ = run(capsys, "parse", "--formula", p, "-v")
    assert code == EXIT_OK and out.splitlines()[0].startswith("G[0,1]") and "horizon 2" in out


def test_robustness(workdir, tmp_path, capsys):
    p = tmp_path / "f.wstl"
    p.write_text("G[0,2]{1,1,1}((1*x1 <= 5.0))\n")
    sig = tmp_path / "sig.csv"
    sig.write_text("x1\n3\n4\n6\n")
    code, out, _ = run(capsys, "robustness", "--model", p, "--signal", sig, "--classical")
    assert code == EXIT_OK and float(out) == -1.0
    code, out, _ = run(capsys, "robustness", "--model", p, "--signal", sig)
    assert code == EXIT_OK and -1.0 < float(out) < 2.0


def test_robustness_short_signal(tmp_path, capsys):
    p = tmp_path / "f.wstl"
    p.write_text("G[0,2]{1,1,1}((1*x1 <= 5.0))\n")
    sig = tmp_path / "sig.csv"
    sig.write_text("x1\n3\n")
    code, _, err = run(capsys, "robustness", "--model", p, "--signal", sig)
    assert code == EXIT_DATA and err.startswith("ERROR:data:")


def test_sparsify_top_sbar(workdir, capsys):
    rep = workdir / "r.csv"
    code, out, _ = run(capsys, "sparsify", "--model", workdir / "m.wstl", "--top-sbar", 2,
                       "--out", workdir / "p.wstl", "--report", rep)
    assert code == EXIT_OK and "pruned 6 of 8" in out
    assert rep.read_text().startswith("operator_path,operator,index,pre_weight,post_weight")
    code, out, _ = run(capsys, "evaluate", "--model", workdir / "p.wstl", "--data", workdir / "s.csv",
                       "--ki", 8, "--json")
    assert code == EXIT_OK


def test_sparsify_tau_full_prune(workdir, capsys):
    code, _, err = run(capsys, "sparsify", "--model", workdir / "m.wstl", "--tau", 0.9,
                       "--out", workdir / "p.wstl")
    assert code == EXIT_DATA and err.startswith("ERROR:prune:")


def test_sparsify_gates(workdir, capsys):
    rep = workdir / "g.csv"
    code, out, _ = run(capsys, "sparsify", "--model", workdir / "m.wstl", "--gates", "--lambda1", 0.5,
                       "--lambda2", 0.5, "--data", workdir / "s.csv", "--ki", 8,
                       "--out", workdir / "pg.wstl", "--report", rep)
    assert code == EXIT_OK and "open" in out
    lines = rep.read_text().splitlines()
    assert lines[0] == "index,gate,open" and len(lines) == 9


def test_sparsify_needs_one_mode(workdir, capsys):
    code, _, err = run(capsys, "sparsify", "--model", workdir / "m.wstl", "--tau", 0.1, "--top-sbar", 2,
                       "--out", workdir / "x.wstl")
    assert code == EXIT_USAGE and err.startswith("ERROR:usage:")


def test_check_grad(capsys):
    code, out, _ = run(capsys, "check", "--grad", "--trials", 20)
    assert code == EXIT_OK and "PASS" in out


def test_check_failure_exit_code(capsys):
    code, _, err = run(capsys, "check", "--grad", "--trials", 3, "--tol", -1)
    assert code == EXIT_CHECK and err.startswith("ERROR:check:")


def test_usage_errors(capsys):
    assert run(capsys)[0] == EXIT_USAGE
    code, _, err = run(capsys, "train", "--bogus")
    assert code == EXIT_USAGE and "ERROR:usage:" in err
    assert run(capsys, "check")[0] == EXIT_USAGE


def test_data_errors(tmp_path, workdir, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,label\n1,0\nnope,1\n")
    code, _, err = run(capsys, "evaluate", "--model", workdir / "m.wstl", "--data", bad)
    assert code == EXIT_DATA and err.startswith("ERROR:data:")
    code, _, err = run(capsys, "evaluate", "--model", tmp_path / "missing.wstl", "--data", bad)
    assert code == EXIT_DATA and err.startswith("ERROR:model:")


def test_data_dir_fallback(workdir, tmp_path, monkeypatch, capsys):
    (tmp_path / "s.csv").write_text((workdir / "s.csv").read_text())
    monkeypatch.setenv("WSTL_DATA_DIR", str(tmp_path))
    code, out, _ = run(capsys, "evaluate", "--model", workdir / "m.wstl", "--ki", 8, "--json")
    assert code == EXIT_OK and json.loads(out)["counts"]["tp"] > 0
    monkeypatch.delenv("WSTL_DATA_DIR")
    assert run(capsys, "evaluate", "--model", workdir / "m.wstl")[0] == EXIT_USAGE


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "wstl.cli", "parse"], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE and "ERROR:usage:" in res.stderr
