import json
import subprocess
import sys

import pytest

from hypknowe.c2f.metrics import RunHistory, SessionReport, to_json
from hypknowe.cli import main
from hypknowe.config import (
    EUCLIDEAN_LIMIT_CURVATURE,
    ConfigFieldError,
    ExperimentConfig,
    default_config_dict,
    parse_config,
)
from hypknowe.geometry import default_curvature

FAST = {"epochs": {"base": 3, "incremental": 3}}


def write_config(tmp_path, name="cfg.json", **overrides):
    doc = default_config_dict()
    for key, value in {**FAST, **overrides}.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key] = {**doc[key], **value}
        else:
            doc[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# --- config parsing -------------------------------------------------------------------


def test_default_config_round_trips():
    cfg = parse_config(default_config_dict())
    assert cfg == ExperimentConfig()
    assert cfg.resolved_curvature() == default_curvature(16)
    assert parse_config(cfg.to_dict()) == cfg


def test_curvature_modes():
    doc = default_config_dict()
    doc["curvature"] = 0.3
    assert parse_config(doc).resolved_curvature() == 0.3
    doc["hyperbolic"] = False
    assert parse_config(doc).resolved_curvature() == EUCLIDEAN_LIMIT_CURVATURE


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda d: d.update(schema_version=2), "schema_version"),
        (lambda d: d.update(bogus=1), "bogus"),
        (lambda d: d["temperatures"].update(tau=0.0), "temperatures.tau"),
        (lambda d: d["temperatures"].update(lambda_=1.0), "temperatures.lambda_"),
        (lambda d: d["learning_rates"].update(base=-0.1), "learning_rates.base"),
        (lambda d: d["epochs"].update(incremental=0), "epochs.incremental"),
        (lambda d: d["protocol"].update(sessions=4), "protocol.sessions"),
        (lambda d: d["protocol"].update(way="4"), "protocol.way"),
        (lambda d: d.update(curvature=-1.0), "curvature"),
        (lambda d: d.update(curvature="big"), "curvature"),
        (lambda d: d.update(hyperbolic="yes"), "hyperbolic"),
        (lambda d: d["hierarchy"].update(fine_spread=2.0), "hierarchy"),
        (lambda d: d["training"].update(momentum=1.0), "training.momentum"),
    ],
)
def test_invalid_configs_name_the_field(mutate, field):
    doc = default_config_dict()
    mutate(doc)
    with pytest.raises(ConfigFieldError) as exc:
        parse_config(doc)
    assert exc.value.field == field
    assert field in str(exc.value)


# --- run ------------------------------------------------------------------------------


def test_run_smoke(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(write_config(tmp_path)), "--out", str(out)]) == 0
    doc = json.loads((out / "history.json").read_text())
    assert len(doc["sessions"]) == 1 + 5
    csv = (out / "history.csv").read_text().splitlines()
    assert csv[0] == "session,acc_coarse,acc_fine,acc_total,avg_acc,f_fine,f_coarse" and len(csv) == 7
    text = capsys.readouterr().out
    assert "A_coarse^0=" in text and "forgetting=" in text
    assert sorted(p.name for p in out.iterdir()) == ["history.csv", "history.json"]


def test_run_is_byte_deterministic(tmp_path):
    # the output directory is echoed into the JSON, so rerun into the same one
    cfg, out = write_config(tmp_path), tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    first = (out / "history.json").read_bytes(), (out / "history.csv").read_bytes()
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert ((out / "history.json").read_bytes(), (out / "history.csv").read_bytes()) == first


def test_seed_override_changes_run(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "7"])
    a = json.loads((tmp_path / "a/history.json").read_text())
    b = json.loads((tmp_path / "b/history.json").read_text())
    assert b["run"]["config"]["seed"] == 7
    assert a["sessions"] != b["sessions"]


def test_ablation_pair_same_schema(tmp_path):
    hyp = write_config(tmp_path, "h.json", hyperbolic=True)
    euc = write_config(tmp_path, "e.json", hyperbolic=False)
    assert main(["run", "--config", str(hyp), "--out", str(tmp_path / "h")]) == 0
    assert main(["run", "--config", str(euc), "--out", str(tmp_path / "e")]) == 0
    a = json.loads((tmp_path / "h/history.json").read_text())
    b = json.loads((tmp_path / "e/history.json").read_text())

    def keys(doc):
        return sorted(doc), sorted(doc["sessions"][0]), sorted(doc["summary"])

    assert keys(a) == keys(b)
    assert a["run"]["curvature"] != b["run"]["curvature"]
    assert a["sessions"] != b["sessions"]


def test_malformed_config_exits_2_without_output(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1, "temperatures": {"tau": -1}}')
    out = tmp_path / "out"
    assert main(["run", "--config", str(bad), "--out", str(out)]) == 2
    assert "temperatures.tau" in capsys.readouterr().err
    assert not out.exists()
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["run", "--config", str(broken), "--out", str(out)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(out)]) == 2
    assert not out.exists()


def test_runtime_failure_exits_1_without_output(tmp_path, capsys):
    # a single coarse class passes validation but cannot train a base session
    cfg = write_config(tmp_path, hierarchy={"n_coarse": 1, "fine_per_coarse": 4}, protocol={"sessions": 1})
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 1
    assert "run failed" in capsys.readouterr().err
    assert not (out / "history.json").exists()


# --- report ---------------------------------------------------------------------------


def hand_history():
    rows = [(0, 0.8, 0.0, 0.8), (1, 0.7, 0.6, 0.5), (2, 0.6, 0.45, 0.4)]
    return RunHistory([SessionReport(*r) for r in rows], [0, 10, 20], 20)


def test_report_hand_history(tmp_path, capsys):
    path = tmp_path / "h.json"
    path.write_text(to_json(hand_history()))
    assert main(["report", str(path)]) == 0
    out = capsys.readouterr().out
    assert "avg_acc=0.5667" in out and "forgetting=0.3125" in out


def test_report_fresh_run_round_trip(tmp_path):
    out = tmp_path / "out"
    main(["run", "--config", str(write_config(tmp_path)), "--out", str(out)])
    assert main(["report", str(out / "history.json")]) == 0


def test_report_detects_stale_values(tmp_path, capsys):
    doc = json.loads(to_json(hand_history()))
    doc["summary"]["forgetting"] += 1e-6
    path = tmp_path / "h.json"
    path.write_text(json.dumps(doc))
    assert main(["report", str(path)]) == 1
    assert "summary.forgetting" in capsys.readouterr().out
    doc = json.loads(to_json(hand_history()))
    doc["sessions"][2]["acc_total"] = 0.41
    path.write_text(json.dumps(doc))
    assert main(["report", str(path)]) == 1


@pytest.mark.parametrize(
    "drop,field",
    [
        (lambda d: d["sessions"][1].pop("acc_fine"), "sessions[1].acc_fine"),
        (lambda d: d["sessions"][2].pop("avg_acc"), "sessions[2].avg_acc"),
        (lambda d: d.pop("cumulative_fine_counts"), "cumulative_fine_counts"),
        (lambda d: d["summary"].pop("forgetting"), "summary.forgetting"),
    ],
)
def test_report_missing_field_exits_2(tmp_path, capsys, drop, field):
    doc = json.loads(to_json(hand_history()))
    drop(doc)
    path = tmp_path / "h.json"
    path.write_text(json.dumps(doc))
    assert main(["report", str(path)]) == 2
    assert field in capsys.readouterr().err


def test_report_unreadable_exits_2(tmp_path):
    assert main(["report", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert main(["report", str(bad)]) == 2


# --- selftest -------------------------------------------------------------------------


def test_selftest_passes_and_lists_properties(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    for name in ("exp_log_inversion", "gyro_translation_invariance", "euclidean_limit", "grad_contrastive",
                 "frechet_bruteforce", "density_relation"):
        assert name in out
    assert "FAIL" not in out


def test_selftest_curvature_override(capsys):
    assert main(["selftest", "--curvature", "1.0"]) == 0
    out = capsys.readouterr().out
    assert "[c=1]" in out and "[c=0.1]" not in out


@pytest.mark.parametrize("bad", ["0", "-1", "nan", "inf", "abc"])
def test_selftest_rejects_bad_tolerance(bad):
    with pytest.raises(SystemExit) as exc:
        main(["selftest", "--tol", bad])
    assert exc.value.code == 2


def test_selftest_failure_exits_1(capsys):
    assert main(["selftest", "--curvature", "0.5", "--tol", "1e-30"]) == 1
    assert "failed:" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hypknowe", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "selftest" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "hypknowe", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
