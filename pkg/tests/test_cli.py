import csv
import io
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from qdcsim import cli

SCHEMA = json.loads(resources.files("qdcsim.schemas").joinpath("envelope.schema.json").read_text())

RUNS = {
    "qram-demo": ["qram-demo", "--arch", "selectswap", "--n", "8", "--m", "2"],
    "qpq": ["qpq", "--n", "4", "--index", "2", "--rounds", "300", "--bob", "measure"],
    "blind": ["blind", "--n", "4", "--index", "3"],
    "multiparty": ["multiparty", "--senders", "2"],
    "compress": ["compress", "--n", "8"],
    "estimate": ["estimate", "--delay", "1e-3"],
    "sweep": ["sweep", "--delays", "1e-6..1e0:log12"],
    "cost": ["cost", "--nmin", "16", "--nmax", "128"],
}


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def masked(text):
    env = json.loads(text)
    env.pop("timestamp")
    return json.dumps(env, sort_keys=True)


def test_qpq_honest_example(capsys):
    code, out, _ = run(["qpq", "--n", "4", "--index", "2", "--rounds", "1000", "--bob", "honest", "--seed", "7"], capsys)
    assert code == 0
    env = json.loads(out)
    assert env["payload"]["detection_rate"] == 0.0
    assert env["config"]["seed"] == 7


def test_unknown_flag_is_usage_error(capsys):
    code, out, err = run(["qpq", "--index", "1", "--bogus"], capsys)
    assert code == 1
    assert "usage:" in err and "--rounds" in err
    assert out == ""


def test_missing_subcommand_and_bad_values(capsys):
    assert run([], capsys)[0] == 1
    assert run(["qram-demo", "--n", "6"], capsys)[0] == 1
    assert run(["qpq", "--index", "9", "--n", "4"], capsys)[0] == 1
    assert run(["sweep", "--delays", "0..1:log3"], capsys)[0] == 1
    assert run(["blind", "--seed", "-1"], capsys)[0] == 1
    assert run(["qpq", "--index", "1", "--format", "csv"], capsys)[0] == 1


@pytest.mark.parametrize("name", sorted(RUNS))
def test_envelope_validates_and_is_deterministic(name, capsys):
    argv = RUNS[name] + ["--seed", "11"]
    code1, out1, _ = run(argv, capsys)
    code2, out2, _ = run(argv, capsys)
    assert code1 == code2 == 0
    jsonschema.validate(json.loads(out1), SCHEMA)
    assert masked(out1) == masked(out2)
    env = json.loads(out1)
    assert env["config"]["subcommand"] == name
    assert env["checks"], "every run reports checks"


def test_different_seed_changes_payload(capsys):
    _, a, _ = run(["compress", "--n", "8", "--seed", "1"], capsys)
    _, b, _ = run(["compress", "--n", "8", "--seed", "2"], capsys)
    assert json.loads(a)["payload"] != json.loads(b)["payload"]


def test_seed_env_fallback(capsys, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "123")
    _, out, _ = run(["blind"], capsys)
    assert json.loads(out)["config"]["seed"] == 123
    monkeypatch.setenv(cli.SEED_ENV, "abc")
    assert run(["blind"], capsys)[0] == 1


def test_check_failure_exits_2(capsys, monkeypatch):
    def failing(args, rng):
        return {}, [("always_fails", False, 0.0)], None

    monkeypatch.setattr(cli, "cmd_blind", failing)
    code, out, _ = run(["blind"], capsys)
    assert code == 2
    assert json.loads(out)["checks"][0]["passed"] is False


def test_sweep_csv_roundtrip(tmp_path, capsys):
    path = tmp_path / "curve.csv"
    code, _, _ = run(["sweep", "--delays", "1e-6..1e0:log40", "--format", "csv", "--out", str(path)], capsys)
    assert code == 0
    text = path.read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["delay_time_s", "relative_qubit_number", "protocol_name", "crossed_one"]
    assert len(rows) == 40
    resorted = sorted(rows, key=lambda r: float(r["delay_time_s"]))
    assert resorted == rows
    widths = {len(r) for r in csv.reader(io.StringIO(text))}
    assert widths == {4}
    assert any(r["crossed_one"] == "True" for r in rows)


def test_metrics_csv_columns(capsys):
    code, out, _ = run(["cost", "--nmin", "16", "--nmax", "64", "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == list(cli.METRIC_COLUMNS)
    assert {r["arch"] for r in rows} == {"bucket", "fanout", "selectswap"}


def test_estimate_with_channel_file(tmp_path, capsys):
    topo = {
        "nodes": [{"id": "u", "role": "User"}, {"id": "dc", "role": "QDC"}],
        "channels": [{"a": "u", "b": "dc", "latency_s": 1e-4, "bell_rate_hz": 1e6, "fidelity": 1.0}],
    }
    path = tmp_path / "topo.json"
    path.write_text(json.dumps(topo))
    code, out, _ = run(["estimate", "--channel", f"{path}#chan0"], capsys)
    assert code == 0
    with_qdc = json.loads(out)["payload"]["with_qdc"]
    assert with_qdc["delay_time"] == pytest.approx(1e-4 + 1e-6)
    assert run(["estimate", "--channel", f"{path}#nope"], capsys)[0] == 1


def test_multiparty_config_and_timeline(tmp_path, capsys):
    users = ["A0", "A1", "B0", "B1"]
    topo = {
        "nodes": [{"id": u, "role": "User"} for u in users] + [{"id": f"C{i}", "role": "QDC"} for i in range(3)],
        "channels": [{"a": u, "b": f"C{i}", "latency_s": 0.001, "bell_rate_hz": 1e4}
                     for u in users for i in range(3)],
    }
    path = tmp_path / "topo.json"
    path.write_text(json.dumps(topo))
    timeline = tmp_path / "timeline.csv"
    code, out, _ = run(["multiparty", "--config", str(path), "--timeline", str(timeline)], capsys)
    assert code == 0
    env = json.loads(out)
    assert env["payload"]["timeline_ref"] == str(timeline)
    assert timeline.read_text().startswith("time_s,event,src,dst,qubits")
    topo["extra"] = 1
    path.write_text(json.dumps(topo))
    assert run(["multiparty", "--config", str(path)], capsys)[0] == 1


def test_unwritable_output(capsys, tmp_path):
    code, _, err = run(["blind", "--out", str(tmp_path / "missing" / "x.json")], capsys)
    assert code == 1
    assert "missing" in err


def test_console_script_subprocess():
    proc = subprocess.run([sys.executable, "-m", "qdcsim.cli", "compress", "--n", "4", "--seed", "3"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["payload"]["bell_pairs_used"] == 3
