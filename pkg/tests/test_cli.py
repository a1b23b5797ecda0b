import csv
import hashlib
import json

import pytest

from vlbf.bound import FeedbackSchedule, evaluate_theorem1
from vlbf.cli import main, schedule_report_rows, sweep_header
from vlbf.rcu import MessageCount


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _rcu_lines(out):
    return dict(line.split(": ") for line in out.strip().splitlines())


def test_rcu_examples(capsys):
    code, out, _ = run(capsys, "rcu", "--n", "2", "--log2m", "1", "--p", "0.11")
    assert code == 0
    assert float(_rcu_lines(out)["rcu"]) == pytest.approx(0.356975, abs=1e-12)
    code, out, _ = run(capsys, "rcu", "--n", "5", "--log2m", "0", "--p", "0.11")
    assert _rcu_lines(out) == {"rcu": "0", "log10_rcu": "-inf"}
    _, out, _ = run(capsys, "rcu", "--n", "3", "--m", "2", "--p", "1e-12")
    assert float(_rcu_lines(out)["rcu"]) == pytest.approx(0.125, abs=1e-9)


def test_rcu_tiny_value_printed_in_log_form(capsys):
    _, out, _ = run(capsys, "rcu", "--n", "1000", "--log2m", "1", "--p", "1e-9")
    lines = _rcu_lines(out)
    assert lines["rcu"] == "below 1e-300"
    assert float(lines["log10_rcu"]) < -300


def test_rcu_missing_args(capsys):
    code, _, err = run(capsys, "rcu", "--n", "3", "--p", "0.11")
    assert code == 2 and "--log2m" in err


def test_domain_error_exit_code(capsys):
    code, _, err = run(capsys, "rcu", "--n", "3", "--log2m", "1", "--p", "0.7")
    assert code == 4 and "domain error" in err


def test_np_command(capsys):
    code, out, _ = run(capsys, "np", "--t-prime", "2", "--p", "0.11", "--gamma", "1")
    d = json.loads(out)
    assert code == 0
    assert d["eps"] == pytest.approx(0.0121) and d["beta"] == pytest.approx(0.2079)
    _, out, _ = run(capsys, "np", "--t-prime", "10", "--p", "0.11", "--eps", "-3")
    d = json.loads(out)
    assert d["log10_eps"] == pytest.approx(-3, abs=1e-12)


def test_bound_anchor(capsys, tmp_path):
    out_path = tmp_path / "b.json"
    code, _, _ = run(capsys, "bound", "--schedule", "2,4,6", "--m", "2", "--p", "0.11", "--gammas", "1",
                     "--out", str(out_path))
    assert code == 0
    d = json.loads(out_path.read_text())
    assert d["eps_bound"] == pytest.approx(0.2170081195, abs=1e-9)
    assert d["n_bound"] == pytest.approx(4.58972, abs=1e-4)
    man = json.loads((tmp_path / "b.json.manifest.json").read_text())
    assert man["command"] == "bound"
    assert man["outputs"][str(out_path)] == hashlib.sha256(out_path.read_bytes()).hexdigest()
    assert {"parameters", "seed", "version", "timestamp"} <= set(man)


def test_bound_single_message(capsys):
    _, out, _ = run(capsys, "bound", "--schedule", "2,4,6", "--log2m", "0", "--p", "0.11", "--gammas", "1")
    assert json.loads(out)["eps_bound"] == 0.0


def test_bound_malformed_schedule(capsys):
    code, _, err = run(capsys, "bound", "--schedule", "2,4,4", "--m", "2", "--p", "0.11", "--gammas", "1")
    assert code == 2 and "n_3" in err
    code, _, _ = run(capsys, "bound", "--schedule", "2,x,4", "--m", "2", "--p", "0.11", "--gammas", "1")
    assert code == 2


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schedule": "2,4,6", "m": 2, "p": 0.11, "gammas": "1"}))
    _, out, _ = run(capsys, "bound", "--config", str(cfg))
    assert json.loads(out)["n_bound"] == pytest.approx(4.58972, abs=1e-4)
    _, out, _ = run(capsys, "bound", "--config", str(cfg), "--m", "1")
    assert json.loads(out)["eps_bound"] == 0.0
    cfg.write_text(json.dumps({"nonsense": 1}))
    code, _, _ = run(capsys, "bound", "--config", str(cfg))
    assert code == 2


def test_optimize_feasible_and_infeasible(capsys, tmp_path):
    out_path = tmp_path / "o.json"
    code, _, _ = run(capsys, "optimize", "--m", "2", "--p", "0.11", "--eps", "-0.6", "--L", "3",
                     "--box", "2:2,4:4,6:6", "--out", str(out_path))
    d = json.loads(out_path.read_text())
    assert code == 0 and d["schedule"] == [2, 4, 6] and d["gammas"] == [1]
    assert (tmp_path / "o.json.manifest.json").exists()
    code, out, _ = run(capsys, "optimize", "--m", "2", "--p", "0.11", "--eps", "-30", "--L", "3",
                       "--box", "1:5,2:8,3:12")
    assert code == 3 and json.loads(out)["feasible"] is False


def test_optimize_bad_eps(capsys):
    code, _, _ = run(capsys, "optimize", "--m", "2", "--p", "0.11", "--eps", "0.5", "--L", "3")
    assert code == 2


def test_sweep_empty_range(capsys, tmp_path):
    out_path = tmp_path / "s.csv"
    code, _, _ = run(capsys, "sweep", "--p", "0.11", "--eps", "-3", "--L", "3", "--log2m-range", "",
                     "--out", str(out_path))
    assert code == 0
    assert out_path.read_text() == ",".join(sweep_header(3)) + "\n"
    assert (tmp_path / "s.csv.manifest.json").exists()


def test_sweep_row_matches_bound(capsys, tmp_path):
    out_path = tmp_path / "s.csv"
    run(capsys, "sweep", "--p", "0.11", "--eps", "-3", "--L", "3", "--log2m-range", "4", "--seed", "1",
        "--out", str(out_path))
    rows = list(csv.DictReader(out_path.open()))
    assert len(rows) == 1
    row = rows[0]
    assert list(row) == sweep_header(3)
    sched = FeedbackSchedule(tuple(int(row[f"n_{i}"]) for i in (1, 2, 3)))
    r = evaluate_theorem1(sched, MessageCount.from_log2(4), 0.11, [int(row["gamma_1"])])
    assert float(row["N_bound"]) == pytest.approx(r.n_bound, rel=1e-11)
    assert float(row["eps_bound_log10"]) <= -3
    assert 0 < float(row["rate"]) < 0.50009
    first = out_path.read_bytes()
    run(capsys, "sweep", "--p", "0.11", "--eps", "-3", "--L", "3", "--log2m-range", "4", "--seed", "1",
        "--out", str(out_path))
    assert out_path.read_bytes() == first


def test_sweep_requires_odd_l(capsys, tmp_path):
    code, _, _ = run(capsys, "sweep", "--p", "0.11", "--eps", "-3", "--L", "4", "--out", str(tmp_path / "x.csv"))
    assert code == 2


def test_schedule_report_example():
    rows = [{"log2M": "1", "N_bound": "4.58972", "n_1": "2", "n_2": "4", "n_3": "6", "gamma_1": "1"}]
    (line,) = schedule_report_rows(rows)
    ratios = [float(v) for v in line[1:]]
    assert ratios == pytest.approx([0.4358, 0.8715, 1.3073], abs=1e-4)
    assert [r * 4.58972 for r in ratios] == pytest.approx([2, 4, 6], abs=1e-9)


def test_schedule_report_command(capsys, tmp_path):
    src = tmp_path / "s.csv"
    src.write_text(",".join(sweep_header(3)) + "\n1,4.58972,-0.66,0.21,2,4,6,1\n")
    out_path = tmp_path / "r.csv"
    code, _, _ = run(capsys, "schedule-report", "--input", str(src), "--out", str(out_path))
    assert code == 0
    lines = out_path.read_text().splitlines()
    assert lines[0] == "N_bound,n_1/N,n_2/N,n_3/N"
    assert lines[1].startswith("4.58972,0.4357")
    empty = tmp_path / "e.csv"
    empty.write_text("")
    code, out, _ = run(capsys, "schedule-report", "--input", str(empty))
    assert code == 0 and out == ""


def _sim_config(tmp_path, trials):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"schedule": [2, 4, 6], "m": 2, "p": 0.11, "gammas": [1], "trials": trials,
                               "master_seed": 3}))
    return cfg


def test_simulate_reproducible_and_passes(capsys, tmp_path):
    cfg = _sim_config(tmp_path, 1_000_000)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(a))
    assert code == 0 and "PASS" in out
    run(capsys, "simulate", "--config", str(cfg), "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["trial_count"] == 1_000_000 and rep["check"]["verdict"] == "PASS"
    man = json.loads((tmp_path / "a.json.manifest.json").read_text())
    assert man["seed"] == 3


def test_simulate_overrides_and_trace(capsys, tmp_path):
    cfg = _sim_config(tmp_path, 10)
    out_path, trace = tmp_path / "o.json", tmp_path / "t.csv"
    run(capsys, "simulate", "--config", str(cfg), "--trials", "40", "--seed", "8", "--out", str(out_path),
        "--trace", str(trace))
    rep = json.loads(out_path.read_text())
    assert rep["trial_count"] == 40 and rep["master_seed"] == 8
    assert len(trace.read_text().splitlines()) == 41


def test_simulate_zero_trials(capsys, tmp_path):
    cfg = _sim_config(tmp_path, 10)
    code, _, _ = run(capsys, "simulate", "--config", str(cfg), "--trials", "0")
    assert code == 2
    code, _, _ = run(capsys, "simulate")
    assert code == 2
