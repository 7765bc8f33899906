import csv
import io
import json

import pytest
from conftest import CORPUS

from qsat.cli import EXIT_RESOURCE, EXIT_USAGE, EXIT_VERIFY, main

RUNNING = str(CORPUS / "running.cnf")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("mode, qubits", [("parallel", 9), ("sequential", 7), ("distributed", 16)])
def test_compile_reports_qubits(capsys, mode, qubits):
    code, out, err = run(capsys, "compile", RUNNING, "--mode", mode)
    assert code == 0
    assert f"qubits: {qubits}" in err.splitlines()
    doc = json.loads(out)
    assert doc["stats"]["qubits"] == qubits
    assert doc["circuit"]["format"] == "qsat-circuit"


def test_compile_distributed_stats(capsys):
    code, out, _ = run(capsys, "compile", RUNNING, "--mode", "distributed", "--iterations", "1")
    stats = json.loads(out)["stats"]
    assert stats["protocol_invocations"]["oracle.conjunction"] == 1
    assert stats["messages"] == 2 * sum(stats["epr_pairs"].values())
    assert stats["segment_depth"]["iter1.oracle.omega.clauses"] == 2


def test_compile_components(capsys, tmp_path):
    out_file = tmp_path / "o.json"
    code, _, _ = run(capsys, "compile", RUNNING, "--component", "oracle", "-o", str(out_file))
    assert code == 0
    assert json.loads(out_file.read_text())["component"] == "oracle"
    code, out, _ = run(capsys, "compile", RUNNING, "--component", "diffuser")
    assert json.loads(out)["stats"]["gates"] == 15


def test_missing_file_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "solve", str(tmp_path / "nope.cnf"))
    assert code == EXIT_USAGE and "cannot read" in err


def test_parse_error_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.cnf"
    bad.write_text("p cnf 1 1\n2 0\n")
    code, _, err = run(capsys, "compile", str(bad))
    assert code == EXIT_USAGE and "line 2" in err


def test_bad_flag_exit_2(capsys):
    assert run(capsys, "solve", RUNNING, "--mode", "quantum")[0] == EXIT_USAGE
    assert run(capsys, "solve", RUNNING, "--iterations", "-1")[0] == EXIT_USAGE
    assert run(capsys, "solve", RUNNING, "--shots", "0")[0] == EXIT_USAGE
    assert run(capsys, "solve", RUNNING, "--trace", "t.jsonl")[0] == EXIT_USAGE


def test_resource_cap_exit_3(capsys, monkeypatch):
    monkeypatch.setenv("QSAT_MAX_QUBITS", "8")
    assert run(capsys, "solve", RUNNING)[0] == EXIT_RESOURCE


def test_solve_csv(capsys):
    code, out, _ = run(capsys, "solve", RUNNING, "--iterations", "1", "--shots", "8192")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["bitstring", "count"]
    counts = {k: int(v) for k, v in rows[1:]}
    assert sum(counts.values()) == 8192
    assert 6200 <= counts["111"] <= 6600


def test_solve_exact_json(capsys):
    code, out, _ = run(capsys, "solve", RUNNING, "--mode", "distributed", "--iterations", "1",
                       "--exact", "--format", "json")
    doc = json.loads(out)
    assert abs(doc["exact_distribution"]["111"] - 0.78125) < 1e-9
    assert doc["iterations"] == 1 and doc["solutions"] == 1


def test_solve_unsat_warns_and_stays_uniform(capsys):
    code, out, err = run(capsys, "solve", str(CORPUS / "unsat.cnf"), "--exact")
    assert code == 0 and "unsatisfiable" in err
    rows = [line.split(",") for line in out.splitlines()[1:]]
    assert [r[0] for r in rows] == ["0", "1"]
    assert all(float(r[1]) == pytest.approx(0.5) for r in rows)


def test_solve_trace(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    code, _, _ = run(capsys, "solve", RUNNING, "--mode", "distributed", "--iterations", "1",
                     "--shots", "3", "--trace", str(trace))
    lines = [json.loads(x) for x in trace.read_text().splitlines()]
    assert {r["shot"] for r in lines} == {0, 1, 2}
    assert {r["step"] for r in lines} == {1, 3}


def test_solve_partition_file(capsys, tmp_path):
    part = tmp_path / "p.json"
    part.write_text(json.dumps({"nodes": {"a": ["v1", "C1^e", "F^e"],
                                          "b": ["v1[e2]", "v2", "C2^e", "v1[e3]", "v3", "C3^e"]}}))
    code, out, _ = run(capsys, "solve", RUNNING, "--mode", "distributed", "--iterations", "1",
                       "--exact", "--partition", str(part))
    assert code == 0 and "111,0.78125" in out
    part.write_text(json.dumps({"nodes": {"a": ["v1"]}}))
    assert run(capsys, "solve", RUNNING, "--mode", "distributed", "--partition", str(part))[0] == 2
    assert run(capsys, "solve", RUNNING, "--partition", str(part))[0] == 2


def test_solve_byte_identical(capsys):
    args = ("solve", RUNNING, "--mode", "distributed", "--iterations", "1", "--shots", "500",
            "--format", "json")
    first = run(capsys, *args)[1]
    assert run(capsys, *args)[1] == first
    assert run(capsys, *args, "--workers", "4")[1] == first


def test_verify_all_modes_pass(capsys):
    code, out, _ = run(capsys, "verify", RUNNING, "--trials", "5")
    assert code == 0 and out.rstrip().endswith("PASS")
    assert "protocol-equivalence" in out and "message-discipline" in out


def test_verify_json(capsys):
    code, out, _ = run(capsys, "verify", RUNNING, "--mode", "parallel", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["ok"] is True


def test_verify_compiled_oracle(capsys, tmp_path):
    oracle = tmp_path / "o.json"
    for mode in ("parallel", "distributed"):
        run(capsys, "compile", RUNNING, "--mode", mode, "--component", "oracle", "-o", str(oracle))
        code, out, _ = run(capsys, "verify", RUNNING, "--mode", mode, "--circuit", str(oracle))
        assert code == 0, out


def test_verify_corrupted_circuit_fails(capsys, tmp_path):
    oracle = tmp_path / "o.json"
    run(capsys, "compile", RUNNING, "--component", "oracle", "-o", str(oracle))
    doc = json.loads(oracle.read_text())
    z = next(i for i, g in enumerate(doc["circuit"]["gates"]) if g["kind"] == "z")
    doc["circuit"]["gates"][z]["kind"] = "x"
    oracle.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "verify", RUNNING, "--mode", "parallel", "--circuit", str(oracle))
    assert code == EXIT_VERIFY and "FAIL" in out

    doc["circuit"]["gates"][0]["qubits"] = [99]
    oracle.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "verify", RUNNING, "--mode", "parallel", "--circuit", str(oracle))
    assert code == EXIT_VERIFY and "circuit-load" in out


def test_verify_circuit_needs_single_mode(capsys, tmp_path):
    assert run(capsys, "verify", RUNNING, "--circuit", "x.json")[0] == EXIT_USAGE


def test_printed_partition_reads_back(capsys, tmp_path):
    _, out, _ = run(capsys, "compile", RUNNING, "--mode", "distributed")
    part = tmp_path / "p.json"
    part.write_text(json.dumps(json.loads(out)["stats"]["partition"]))
    code, out, err = run(capsys, "solve", RUNNING, "--mode", "distributed", "--iterations", "1",
                         "--exact", "--partition", str(part))
    assert code == 0, err
    assert "111,0.78125" in out
