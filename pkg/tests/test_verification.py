import logging

import numpy as np
import pytest

from larp.lrpe import project_backward
from larp.verification import (
    OracleResult,
    check_adjoint,
    check_gradients,
    check_median,
    check_projection,
    random_toy_model,
    run_all,
)


def _doubled_adjoint(image, kernel, upstream):
    grad_input, grad_coefficients = project_backward(image, kernel, upstream)
    return 2.0 * grad_input, 2.0 * grad_coefficients


class TestOracleResult:
    def test_line(self):
        result = OracleResult("median", 0.0, 0.0, 5, True)
        assert result.line() == "median max_error=0.000e+00 tolerance=0e+00 checked=5 status=PASS"

    def test_fail_status(self):
        result = OracleResult("adjoint", 0.5, 1e-10, 3, False)
        assert result.status == "FAIL"
        assert result.line().endswith("tolerance=1e-10 checked=3 status=FAIL")


# ---------------------------------------------------------------------------
# Individual oracles
# ---------------------------------------------------------------------------


class TestChecks:
    def test_projection(self, rng):
        result = check_projection(20, rng)
        assert result.passed
        assert result.max_error <= 1e-12
        assert result.checked == 20

    def test_adjoint(self, rng):
        assert check_adjoint(20, rng).passed

    def test_wrong_adjoint_fails(self, rng):
        result = check_adjoint(5, rng, adjoint=_doubled_adjoint)
        assert not result.passed
        assert result.max_error == pytest.approx(0.5, rel=1e-6)

    def test_median_is_exact(self, rng):
        result = check_median(30, rng)
        assert result.passed
        assert result.max_error == 0.0

    def test_gradients(self, rng):
        result = check_gradients(2, rng)
        assert result.passed
        assert result.checked > 0

    @pytest.mark.parametrize("seed", range(6))
    def test_gradients_across_seeds(self, seed):
        result = check_gradients(20, np.random.default_rng([seed, 3]))
        assert result.passed, result.line()

    def test_random_toy_model(self, rng):
        model = random_toy_model(rng, seed=4)
        assert 1 <= model.config.num_layers <= 2
        assert all(1 <= layer.num_projections <= 3 for layer in model.config.layers)
        assert model.config.input_height == model.config.input_width == 8
        assert model.classifier_weights.any()


# ---------------------------------------------------------------------------
# run_all
# ---------------------------------------------------------------------------


class TestRunAll:
    def test_all_pass(self):
        results = run_all(10, seed=0, grad_models=2)
        assert [result.name for result in results] == ["projection", "adjoint", "median", "gradient"]
        assert all(result.passed for result in results)

    def test_repeatable(self):
        first = [result.line() for result in run_all(5, seed=3, grad_models=1)]
        second = [result.line() for result in run_all(5, seed=3, grad_models=1)]
        assert first == second

    def test_wrong_adjoint_reported(self):
        results = {result.name: result for result in run_all(5, seed=0, grad_models=0, adjoint=_doubled_adjoint)}
        assert not results["adjoint"].passed
        assert results["projection"].passed

    def test_zero_trials_pass_vacuously(self, caplog):
        with caplog.at_level(logging.WARNING, logger="larp.verification"):
            results = run_all(0, seed=0)
        assert all(result.passed and result.checked == 0 for result in results)
        assert np.all([result.max_error == 0.0 for result in results])
        assert "vacuously" in caplog.text
