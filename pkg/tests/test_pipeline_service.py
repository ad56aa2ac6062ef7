import numpy as np
import pytest

from src.numerics.eigen import ConstantMitosis, explicit_eigen
from src.services.pipeline_service import LAMBDA_INVARIANCE_RTOL, PipelineResult, PipelineService, StageError
from src.services.ratemeter import RateFit
from src.utils.errors import GateFailure
from src.utils.run_config import RunConfig

LINEAR_MITOSIS = {
    "model": {"g": {"type": "power", "a": 1.0, "g0": 1.0}, "B": {"type": "power", "b": 2.0, "b0": 1.0},
              "kernel": "mitosis"},
    "grid": {"x_min": 2.0 ** -6, "x_max": 32.0, "scheme": "dyadic", "q": 8},
}


def rejected(reason):
    times = np.linspace(0.0, 1.0, 5)
    return RateFit(initial="bump", times=times, distances=times, rejection=reason)


def accepted():
    times = np.linspace(0.0, 1.0, 5)
    return RateFit(initial="bump", times=times, distances=times, rho_emp=0.5)


@pytest.fixture
def linear_mitosis():
    return PipelineService(RunConfig.from_dict(LINEAR_MITOSIS))


def test_gates_raise_only_on_false():
    result = PipelineResult(summary={}, gates={"hypotheses": True, "lower_bound": None}, verdict="no empirical rate")
    assert result.exit_code == 0
    result.raise_for_gates()

    result.gates["drift"] = False
    assert result.failed_gates == ["drift"]
    assert result.exit_code == 1
    with pytest.raises(GateFailure, match="drift"):
        result.raise_for_gates()


def test_linear_growth_mitosis_expects_no_gap(linear_mitosis):
    assert linear_mitosis.expects_no_gap()


@pytest.mark.parametrize("errors,fits,observed", [
    (["EmptyIntervalError"], ["oscillation"], True),
    (["EmptyIntervalError"], ["oscillation", "poor log-linear fit"], True),
    (["EmptyIntervalError"], ["poor log-linear fit"], False),
    (["EmptyIntervalError"], ["oscillation", None], False),
    (["EmptyIntervalError"], [], False),
    (["ConvergenceError"], ["oscillation"], False),
    ([], ["oscillation"], False),
])
def test_no_gap_needs_its_own_failures(linear_mitosis, errors, fits, observed):
    linear_mitosis.errors = [StageError("minorise", kind, "") for kind in errors]
    linear_mitosis.fits = [accepted() if reason is None else rejected(reason) for reason in fits]
    assert linear_mitosis.no_gap_observed() is observed


def test_lambda_invariance_in_the_summary(linear_mitosis):
    linear_mitosis.triple = explicit_eigen(ConstantMitosis(), linear_mitosis.grid)
    linear_mitosis.triple.lam_malthus = 1.0 + 0.5 * LAMBDA_INVARIANCE_RTOL
    assert linear_mitosis.lambda_mismatch() == pytest.approx(0.5 * LAMBDA_INVARIANCE_RTOL)
    invariance = linear_mitosis.summary()["eigen"]["lambda_invariance"]
    assert invariance["within_tolerance"] is True
    assert invariance["lambda_malthus"]["source"] == "fitted"


@pytest.mark.slow
def test_linear_growth_mitosis_end_to_end(tmp_path):
    service = PipelineService(RunConfig.from_dict({
        **LINEAR_MITOSIS,
        "eigen": {"tol": 1e-3, "t_max": 20.0, "malthus_T": 0.0, "extrapolate": False},
        "certificate": {"trials": 10, "probes": 5},
        "rate": {"T": 10.0, "bumps": [1.0]},
        "output": {"dir": str(tmp_path)},
    }))
    result = service.run()
    assert service.triple is not None and not service.triple.converged
    assert any(e.type == "EmptyIntervalError" for e in result.errors)
    assert service.certified is None
    assert service.fits[0].rejection == "oscillation"
    assert result.gates == {"no_gap_observed": True}
    assert result.verdict == "no-gap expected and observed"
    assert result.exit_code == 0
