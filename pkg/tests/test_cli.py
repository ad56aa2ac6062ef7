import json
import math

import pytest

from main import main
from src.handlers.commands import EXIT_CONFIG, EXIT_GATE, EXIT_OK, router
from src.services.pipeline_service import PipelineResult, PipelineService


def read(path):
    return json.loads(path.read_text())


def test_oracle_command(tmp_path):
    out = tmp_path / "oracle.json"
    assert main(["oracle", "--n", "6", "--trials", "100", "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert read(out)["violations"] == 0


def test_selfsim_certificate_command(tmp_path):
    out = tmp_path / "cert.json"
    assert router.dispatch(["certify", "--pipeline", "selfsim", "--b", "2", "--out", str(out)]) == EXIT_OK
    document = read(out)
    assert document["pipeline"] == "selfsim"
    assert document["log_rho"]["source"] == "closed-form"
    assert document["log_rho"]["value"] < -4e7


def test_check_hypotheses_command(tmp_path):
    out = tmp_path / "hyp.json"
    assert router.dispatch(["check-hypotheses", "--out", str(out)]) == EXIT_OK
    document = read(out)
    assert document["satisfied"]
    assert document["growth_class"] == "ExactlyLinear"


def test_configuration_errors(tmp_path):
    assert router.dispatch(["check-hypotheses", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG
    assert router.dispatch(["minorise", "--R", "bogus", "--out", str(tmp_path / "s.json")]) == EXIT_CONFIG


def test_unknown_command():
    with pytest.raises(SystemExit):
        router.dispatch(["teleport"])


def test_evolve_command(tmp_path, constant_mitosis_config):
    out = tmp_path / "traj.json"
    code = router.dispatch(["evolve", "--config", str(constant_mitosis_config), "--out", str(out), "--dump-flow"])
    assert code == EXIT_OK
    summary = read(out)
    assert summary["snapshots"]["source"] == "simulated"
    assert (tmp_path / "traj.csv").exists()
    flow = (tmp_path / "flow.csv").read_text().splitlines()
    assert flow[0] == "t,x0,X_t"


@pytest.mark.slow
def test_pipeline_command(tmp_path, constant_mitosis_config):
    out = tmp_path / "summary.json"
    code = router.dispatch(["pipeline", "--config", str(constant_mitosis_config), "--out", str(out),
                            "--threads", "2"])
    assert code in (0, 1)
    summary = read(out)
    assert "gates" in summary and "errors" in summary
    assert summary["exit_code"] == code


def test_weight_constraint_is_a_configuration_error(tmp_path):
    path = tmp_path / "bad_weight.json"
    path.write_text(json.dumps({
        "model": {"g": {"type": "power", "a": 0.5, "g0": 1.0}, "B": {"type": "power", "b": 1.0, "b0": 1.0}},
        "certificate": {"K_w": 1.0},
    }))
    assert router.dispatch(["check-hypotheses", "--config", str(path), "--out", str(tmp_path / "h.json")]) == EXIT_CONFIG


def test_oracle_is_deterministic(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for out in (first, second):
        assert router.dispatch(["oracle", "--n", "2", "--trials", "10", "--seed", "0", "--out", str(out)]) == EXIT_OK
    a, b = read(first), read(second)
    a.pop("generated_at"), b.pop("generated_at")
    assert a == b
    assert a["chain"] == "identity"
    assert a["doeblin"]["status"] == "Doeblin failure: no uniform minorisation"


def test_failed_gate_sets_the_exit_code(tmp_path, constant_mitosis_config, monkeypatch):
    failed = PipelineResult(summary={"verdict": "lower bound violated"}, gates={"hypotheses": True, "lower_bound": False},
                            verdict="lower bound violated")
    monkeypatch.setattr(PipelineService, "run", lambda self: failed)
    out = tmp_path / "summary.json"
    assert router.dispatch(["pipeline", "--config", str(constant_mitosis_config), "--out", str(out)]) == EXIT_GATE
    assert read(out)["verdict"] == "lower bound violated"


def test_unsatisfied_hypotheses_fail_the_gate(tmp_path, monkeypatch):
    monkeypatch.setattr("src.models.hypotheses.HypothesisReport.satisfied", property(lambda self: False))
    out = tmp_path / "hyp.json"
    assert router.dispatch(["check-hypotheses", "--out", str(out)]) == EXIT_GATE
    assert out.exists()


def test_evolve_checks_the_splitting_order(tmp_path):
    path = tmp_path / "self_similar.json"
    path.write_text(json.dumps({
        "model": {"g": {"type": "power", "a": 1.0, "g0": 1.0}, "B": {"type": "power", "b": 1.0, "b0": 1.0}},
        "grid": {"x_min": 2.0 ** -6, "x_max": 4.0, "scheme": "dyadic", "q": 32},
        "evolution": {"T": math.log(2.0), "snapshots": 4},
        "rate": {"bumps": [1.0]},
    }))
    out = tmp_path / "traj.json"
    assert router.dispatch(["evolve", "--config", str(path), "--out", str(out), "--check-order"]) == EXIT_OK
    assert read(tmp_path / "order.json")["observed_order"]["value"] >= 0.9


@pytest.mark.slow
def test_rate_command(tmp_path, constant_mitosis_config):
    out = tmp_path / "rate.json"
    code = router.dispatch(["rate", "--config", str(constant_mitosis_config), "--out", str(out)])
    document = read(out)
    assert len(document["fits"]) == 1
    comparison = document["comparison"]
    assert comparison["verdict"] in ("lower bound holds", "lower bound violated", "no empirical rate", "no certificate")
    assert (tmp_path / "rate.csv").exists()
    assert code == (EXIT_GATE if comparison["holds"] is False else EXIT_OK)
