from __future__ import annotations

import json

import pytest

from conftest import COMPONENTS, CORPUS
from mswasm.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, main
from mswasm.ir import parse_module
from mswasm.trace import read_trace

MSWAT = CORPUS / "mswat"


def cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_config_is_echoed(capsys):
    code, _, err = cli(capsys, "run", MSWAT / "slices.mswat")
    assert code == EXIT_OK
    line = err.splitlines()[0]
    assert line.startswith("# config ")
    cfg = json.loads(line[len("# config "):])
    assert cfg["command"] == "run" and cfg["fuel"] == 1_000_000 and cfg["mode"] == "enforce"


def test_run_result(capsys):
    code, out, _ = cli(capsys, "run", MSWAT / "slices.mswat")
    assert (code, out) == (EXIT_OK, "result 9\n")


def test_run_linked(capsys):
    code, out, _ = cli(capsys, "run", MSWAT / "lib.mswat", MSWAT / "linked.mswat")
    assert (code, out) == (EXIT_OK, "result 42\n")


def test_run_unlinked(capsys):
    code, _, err = cli(capsys, "run", MSWAT / "linked.mswat")
    assert code == EXIT_USAGE and "UnlinkedImport" in err


def test_run_trap_and_trace_then_monitor(capsys, tmp_path):
    t = tmp_path / "t.jsonl"
    code, out, _ = cli(capsys, "run", MSWAT / "store_oob.mswat", "--trace", t)
    assert (code, out) == (EXIT_FAIL, "trap OutOfBounds at event 2\n")
    assert len(read_trace(t.read_text())) == 3
    code, out, _ = cli(capsys, "monitor", t, "--policy", "spatial")
    assert (code, out) == (EXIT_VIOLATION, "VIOLATION SpatialOOB at 2 color 1\n")
    code, out, _ = cli(capsys, "monitor", t, "--policy", "pointer-integrity")
    assert (code, out) == (EXIT_OK, "SAFE\n")


def test_run_observe(capsys):
    code, out, _ = cli(capsys, "run", MSWAT / "stale_load.mswat", "--mode", "observe")
    assert (code, out) == (EXIT_OK, "result 0\n")


def test_run_minic_both_backends(capsys):
    for backend in ("safe", "unsafe"):
        code, out, _ = cli(capsys, "run", CORPUS / "print_demo" / "prog.minic",
                           "--backend", backend)
        assert (code, out) == (EXIT_OK, "3\nok\n")


def test_run_args(capsys):
    code, out, _ = cli(capsys, "run", CORPUS / "hyper_leak_print" / "prog.minic", "--args", 9)
    assert (code, out) == (EXIT_OK, "9\nok\n")


def test_run_bad_source(capsys, tmp_path):
    src = tmp_path / "bad.minic"
    src.write_text("fn main() { let p: ptr = 5; }")
    code, _, err = cli(capsys, "run", src)
    assert code == EXIT_USAGE and "TypeMismatch" in err


def test_run_missing_file(capsys):
    code, _, err = cli(capsys, "run", "no-such.mswat")
    assert code == EXIT_USAGE and err.rstrip().splitlines()[-1].startswith("error:")


def test_compile_round_trips(capsys, tmp_path):
    out_path = tmp_path / "a.mswat"
    code, _, _ = cli(capsys, "compile", CORPUS / "array_sum" / "prog.minic", "-o", out_path,
                     "--backend", "unsafe", "--module-id", "arr")
    assert code == EXIT_OK
    assert parse_module(out_path.read_text()).id == "arr"
    code, out, _ = cli(capsys, "run", out_path)
    assert (code, out) == (EXIT_OK, "result 45\n")


def test_compile_to_stdout(capsys):
    code, out, _ = cli(capsys, "compile", CORPUS / "print_demo" / "prog.minic")
    assert code == EXIT_OK and out.startswith("(module prog\n")


def test_monitor_invalid_trace(capsys, tmp_path):
    t = tmp_path / "t.jsonl"
    t.write_text('{"idx":0,"kind":"Realloc","color":1,"owner":"m"}\n')
    code, out, _ = cli(capsys, "monitor", t)
    assert code == EXIT_USAGE and out.startswith("INVALID") and "unknown kind" in out
    t.write_text('{"idx":0,"kind":"free","color":1,"owner":"m"}\n')
    code, out, _ = cli(capsys, "monitor", t)
    assert code == EXIT_USAGE and "never-allocated" in out


def test_enumerate(capsys):
    code, out, _ = cli(capsys, "enumerate", "--max-len", 4, "--colors", 2, "--addrs", 2,
                       "--sizes", 1)
    assert code == EXIT_OK
    assert out == "length 1: 1\nlength 2: 6\nlength 3: 41\nlength 4: 319\ntotal 367\n"


def test_enumerate_guard(capsys):
    code, _, err = cli(capsys, "enumerate", "--max-len", 9)
    assert code == EXIT_USAGE and "universe too large" in err


def test_lattice(capsys):
    code, out, _ = cli(capsys, "lattice", "--max-len", 3, "--colors", 2, "--addrs", 2,
                       "--sizes", 1)
    assert code == EXIT_OK
    assert out == ("traces 48\n"
                   "full=>relaxed-temporal: 0 counterexamples, witness [alloc free read]\n"
                   "relaxed-temporal=>spatial: 0 counterexamples, witness [alloc free free]\n"
                   "full=>data-integrity: 0 counterexamples, witness [alloc read]\n"
                   "0 counterexamples\n")


def test_robust(capsys, tmp_path):
    report = tmp_path / "r.jsonl"
    code, out, _ = cli(capsys, "robust", "--component", COMPONENTS / "bufpool",
                       "--contexts", 20, "--seed", 2, "--report", report)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "seed 2" and lines[-2:] == ["0 catalog failures", "0 violations"]
    assert sum(1 for line in lines if line.startswith("  PASS bufpool/")) == 3
    assert len(report.read_text().splitlines()) == 20


def test_robust_observe_fails(capsys):
    code, out, _ = cli(capsys, "robust", "--component", COMPONENTS / "bufpool",
                       "--contexts", 30, "--mode", "observe")
    assert code == EXIT_FAIL and not out.endswith("\n0 violations\n")


def test_corpus(capsys):
    code, out, _ = cli(capsys, "corpus", "--dir", CORPUS)
    lines = out.splitlines()
    assert code == EXIT_OK
    assert all(line.startswith("PASS ") for line in lines[:-1])
    assert lines[-1] == f"{len(lines) - 1}/{len(lines) - 1} entries pass"


def test_corpus_mismatch(capsys, tmp_path):
    d = tmp_path / "c" / "one"
    d.mkdir(parents=True)
    (d / "prog.minic").write_text("fn main() { print(1); }")
    (d / "expected.toml").write_text('[safe.enforce]\noutcome = "ok"\noutput = [2]\n')
    code, out, _ = cli(capsys, "corpus", "--dir", tmp_path / "c")
    assert code == EXIT_FAIL
    assert out.splitlines() == ["FAIL one: safe.enforce.output: expected [2], got [1]",
                                "0/1 entries pass"]


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run"], ["monitor", "x", "--policy", "nope"]])
def test_usage_errors(capsys, argv):
    assert main(argv) == EXIT_USAGE
    capsys.readouterr()


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "usage: mswasm" in capsys.readouterr().out
