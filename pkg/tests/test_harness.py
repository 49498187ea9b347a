import csv
import json

import pytest

from dnlap import cli
from dnlap.errors import ConfigError, MissingArtifact
from dnlap.harness import (RunConfig, apply_override, count_failures, emit_report, load_config, load_reports,
                           run_experiment)

SMALL = {
    "params": {"d": 1, "s": 0.5, "p": 3.0, "m": 1.0},
    "domain": {"mode": "full_line", "R": 40.0, "n": 128},
    "time": {"t0": 1e-3, "t1": 10.0, "steps": 80},
    "initial": {"kind": "box", "mass": 1.0, "support": 1.0},
}


def _write(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    cfg = RunConfig({**SMALL, "experiment": "verify-suite", "output": str(out)})
    return run_experiment(cfg)


@pytest.mark.parametrize("patch, key", [
    ({"params": {"s": 1.5}}, "params"),
    ({"domain": {"mode": "annulus"}}, "domain.mode"),
    ({"domain": {"n": 1}}, "domain"),
    ({"time": {"t1": -1.0}}, "time"),
    ({"initial": {"kind": "spike"}}, "initial.kind"),
    ({"initial": {"support": 50.0}}, "initial.support"),
    ({"initial": {"mass": -2.0}}, "initial.mass"),
    ({"params": {"p": 1.2}}, "params"),
    ({"exponent_overrides": {"beta": "x"}}, "exponent_overrides"),
    ({"experiment": "verify-suite", "verify": {"checks": ["magic"]}}, "verify.checks"),
])
def test_validation_single_diagnostic(patch, key):
    data = json.loads(json.dumps(SMALL))
    for k, v in patch.items():
        if isinstance(v, dict):
            data.setdefault(k, {}).update(v)
        else:
            data[k] = v
    with pytest.raises(ConfigError) as info:
        RunConfig(data, "bad.json")
    msg = str(info.value)
    assert msg.startswith(f"bad.json: {key}:")
    assert "\n" not in msg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="paramz"):
        RunConfig({"paramz": {}})


def test_apply_override():
    data = {}
    apply_override(data, "params.p=1.8")
    apply_override(data, "initial.kind=bump")
    apply_override(data, "extract.k_schedule=[1, 2]")
    assert data == {"params": {"p": 1.8}, "initial": {"kind": "bump"}, "extract": {"k_schedule": [1, 2]}}
    with pytest.raises(ConfigError):
        apply_override(data, "params.p")


def test_load_config_env_output(tmp_path, monkeypatch):
    path = _write(tmp_path, SMALL)
    monkeypatch.setenv("DNLAP_OUT", str(tmp_path / "envout"))
    cfg = load_config(path, ["params.p=2.5"])
    assert cfg.output == tmp_path / "envout"
    assert cfg.params.p == 2.5
    assert load_config(path, (), str(tmp_path / "flag")).output == tmp_path / "flag"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_exponents_experiment(tmp_path):
    cfg = RunConfig({"experiment": "exponents", "output": str(tmp_path)})
    out = run_experiment(cfg)
    exps = json.loads((out / "exponents.json").read_text())
    assert exps["beta"] == pytest.approx(0.4, abs=1e-14)
    assert json.loads((out / "config.json").read_text())["experiment"] == "exponents"


def test_march_zero_datum(tmp_path):
    data = {**SMALL, "experiment": "march", "time": {"t1": 1.0, "steps": 5},
            "initial": {"kind": "zero"}, "output": str(tmp_path)}
    out = run_experiment(RunConfig(data))
    with open(out / "snapshots.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 * 128
    assert all(float(r["u"]) == 0.0 for r in rows)
    assert (out / "diagnostics.csv").exists()
    assert not (out / "report.json").exists()


def test_csv_seventeen_digits(tmp_path):
    data = {**SMALL, "experiment": "march", "time": {"t1": 0.1, "steps": 3}, "output": str(tmp_path)}
    out = run_experiment(RunConfig(data))
    with open(out / "snapshots.csv") as fh:
        rd = csv.reader(fh)
        assert next(rd) == ["step", "t", "node", "x", "u"]
        row = next(rd)
    assert float(row[3]) == pytest.approx(-40.0 + 40.0 / 128)
    assert repr(float(row[1])) == repr(1e-3) or len(row[1].replace(".", "").lstrip("0")) <= 17


def test_suite_passes(suite_dir):
    reports = load_reports(suite_dir)
    assert count_failures(reports) == 0
    names = {r["name"] for r in reports}
    assert {"contraction", "reflection", "mass_conservation", "time_decay", "dissipation"} <= names
    table = emit_report(suite_dir)
    assert "FAIL" not in table
    assert table.splitlines()[0].split() == ["check", "measured", "tolerance", "status"]


def test_report_byte_identical(suite_dir, tmp_path):
    cfg = RunConfig({**SMALL, "experiment": "verify-suite", "output": str(tmp_path)})
    again = run_experiment(cfg)
    assert (again / "report.json").read_bytes() == (suite_dir / "report.json").read_bytes()


def test_fault_injection_one_fail(tmp_path):
    cfg = load_config(_write(tmp_path, {**SMALL, "experiment": "verify-suite"}),
                      ["exponent_overrides.beta=0.6"], str(tmp_path / "out"))
    out = run_experiment(cfg)
    table = emit_report(out)
    fails = [line for line in table.splitlines() if line.rstrip().endswith("FAIL")]
    assert len(fails) == 1
    assert fails[0].startswith("time_decay")


def test_missing_artifact(tmp_path):
    with pytest.raises(MissingArtifact):
        emit_report(tmp_path)


def test_cli_exponents(tmp_path, capsys):
    assert cli.main(["exponents", "--override", "params.p=1.45", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["beta"] == pytest.approx(1.0 / (0.45 - 1.0 + 0.725))


def test_cli_verify_and_report(tmp_path, capsys):
    cfg = _write(tmp_path, {**SMALL, "verify": {"checks": ["contraction", "reflection"]},
                            "time": {"t1": 1.0, "steps": 20}})
    out = tmp_path / "run"
    assert cli.main(["verify", "--config", str(cfg), "--out", str(out), "--threads", "1"]) == 0
    first = capsys.readouterr().out
    assert "contraction" in first and "PASS" in first
    assert cli.main(["report", str(out)]) == 0
    assert capsys.readouterr().out == first


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path)]) == 2
    assert "MissingArtifact" in capsys.readouterr().err
    assert cli.main(["march", "--override", "params.s=2", "--out", str(tmp_path)]) == 2
    assert "params" in capsys.readouterr().err
