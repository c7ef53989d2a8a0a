import json
import subprocess
import sys
import time

import pytest

from nonfifo.cli import EXIT_GAP, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_UNSUPPORTED, main


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def workload(*rows):
    return {"packets": [{"id": i + 1, "bits": b, "arrival": a, "deadline": d} for i, (b, a, d) in enumerate(rows)]}


@pytest.fixture
def golden(tmp_path):
    return write(tmp_path / "golden.json", workload((2, 0, 4), (1, 1, 2)))


def test_schedule_non_fifo(golden, capsys):
    assert main(["schedule", golden]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "nonfifo" and out["possibility"] == "P4"
    assert out["split_bits"] == pytest.approx(2 / 3)
    assert out["energy_joules"] == pytest.approx(7.559526299369, rel=1e-9)


def test_schedule_fifo(tmp_path, capsys):
    path = write(tmp_path / "w.json", workload((1, 0, 2), (1, 1, 3)))
    assert main(["schedule", path]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "fifo" and out["energy_joules"] == pytest.approx(3 * (2 ** (4 / 3) - 1))


def test_schedule_online_with_trace(tmp_path, capsys):
    path = write(tmp_path / "w.json", workload((1, 0, 2), (1, 1, 3)))
    trace = tmp_path / "trace.csv"
    assert main(["schedule", path, "--online", "--trace", str(trace)]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "online-nonfifo" and out["misses"] == []
    assert trace.read_text().startswith("event,t0,t1,value,detail")


def test_model_file(tmp_path, golden, capsys):
    model = write(tmp_path / "m.json", {"kind": "monomial", "k": 2})
    assert main(["schedule", golden, "--model", model]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["possibility"] == "P4"


def test_verify_golden(golden, capsys):
    assert main(["verify", golden]) == EXIT_OK
    out = capsys.readouterr().out
    assert "grid oracle" in out and "discrete oracle" in out and out.rstrip().endswith("OK")


def test_verify_flags_gap(golden, capsys):
    # a 3-point grid misses the optimum by far more than the tolerance
    assert main(["verify", golden, "--grid", "3"]) == EXIT_GAP
    assert "FAIL" in capsys.readouterr().out


def test_verify_too_coarse_time_grid(golden, capsys):
    assert main(["verify", golden, "--dt", "3"]) == EXIT_INPUT
    assert "n_steps" in capsys.readouterr().err


def test_check_schedule(tmp_path, golden, capsys):
    main(["schedule", golden])
    sched = json.loads(capsys.readouterr().out)["schedule"]
    ok = write(tmp_path / "s.json", sched)
    assert main(["verify", golden, "--check-schedule", ok]) == EXIT_OK
    assert "feasible" in capsys.readouterr().out
    sched["segments"][0]["rate"] *= 0.5
    bad = write(tmp_path / "bad.json", sched)
    assert main(["verify", golden, "--check-schedule", bad]) == EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().out


def test_infeasible_workload_names_packet(tmp_path, capsys):
    # packet 2 arrives after its deadline
    path = write(tmp_path / "w.json", workload((1, 0, 2), (1, 3, 2.5)))
    assert main(["schedule", path]) == EXIT_INFEASIBLE
    assert "packet 2" in capsys.readouterr().err


def test_unsupported_two_inversions(tmp_path, capsys):
    path = write(tmp_path / "w.json", workload((1, 0, 5), (1, 1, 3), (1, 2, 6), (1, 3, 4)))
    assert main(["schedule", path]) == EXIT_UNSUPPORTED
    assert "unsupported" in capsys.readouterr().err


def test_input_errors(tmp_path, capsys):
    assert main(["schedule", str(tmp_path / "missing.json")]) == EXIT_INPUT
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["schedule", str(broken)]) == EXIT_INPUT
    assert main(["schedule", write(tmp_path / "nofield.json", {"packets": [{"id": 1}]})]) == EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_simulate_missing_config_field(tmp_path, capsys):
    path = write(tmp_path / "c.json", {"lambda_fifo": [2.0]})
    assert main(["simulate", path, "--out", str(tmp_path / "out")]) == EXIT_INPUT
    assert "missing config field" in capsys.readouterr().err


def test_simulate_one_trial_is_fast(tmp_path, capsys):
    t0 = time.perf_counter()
    assert main(["simulate", "--trials", "1", "--out", str(tmp_path)]) == EXIT_OK
    assert time.perf_counter() - t0 < 1.0
    assert (tmp_path / "results.csv").exists()
    assert "saving" in capsys.readouterr().out


def test_module_entry_point(golden):
    res = subprocess.run([sys.executable, "-m", "nonfifo", "schedule", golden], capture_output=True, text=True)
    assert res.returncode == 0 and '"possibility": "P4"' in res.stdout
