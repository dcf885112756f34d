import numpy as np
import pytest
from pydantic import ValidationError

from tests.conftest import library_from
from ubic.features.evaluate import (
    FalseEquation,
    PercentCE,
    TruthSpec,
    evaluate,
    evaluate_support,
    percent_ce,
    r_bic,
    support_from_report,
)
from ubic.features.bayes import uncertainty_sweep
from ubic.features.select import score_inputs, select_model
from ubic.features.subset import sweep
from ubic.features.weaklib import CandidateTerm
from ubic.utils.exceptions import SelectionException

U_XX = CandidateTerm(d1=0, d2=2)
UU_X = CandidateTerm(d1=1, d2=1)
BURGERS = TruthSpec(terms=(U_XX, UU_X), coefficients=(0.1, -1.0))


@pytest.fixture
def burgers_library(rng):
    """Columns u_xx (1) and uu_x (3) generate the target."""
    phi = rng.standard_normal((300, 8))
    q0 = 0.1 * phi[:, 1] - 1.0 * phi[:, 3] + 1e-4 * rng.standard_normal(300)
    return library_from(phi, q0)


class TestTruthSpec:
    def test_validation(self):
        with pytest.raises(ValidationError):
            TruthSpec(terms=(U_XX,), coefficients=(1.0, 2.0))
        with pytest.raises(ValidationError):
            TruthSpec(terms=(U_XX, U_XX), coefficients=(1.0, 2.0))
        with pytest.raises(ValidationError):
            TruthSpec(terms=(U_XX,), coefficients=(0.0,))

    def test_support_in(self, burgers_library):
        assert BURGERS.support_in(burgers_library) == [1, 3]
        kdv = TruthSpec(terms=(CandidateTerm(d1=0, d2=3),), coefficients=(-1.0,))
        assert kdv.support_in(burgers_library) is None


class TestPercentCE:
    def test_exact(self):
        outcome = percent_ce([UU_X, U_XX], [-1.0, 0.1], BURGERS)
        assert isinstance(outcome, PercentCE)
        assert outcome.value == pytest.approx(0.0)

    def test_mean_of_relative_errors(self):
        outcome = percent_ce([U_XX, UU_X], [0.11, -0.98], BURGERS)
        assert outcome.per_term == pytest.approx({"u_xx": 10.0, "uu_x": 2.0})
        assert outcome.value == pytest.approx(6.0)

    @pytest.mark.parametrize(
        "terms",
        [
            [U_XX],
            [U_XX, UU_X, CandidateTerm(d1=1, d2=0)],
            [U_XX, CandidateTerm(d1=0, d2=1)],
            [U_XX, UU_X, None],
        ],
    )
    def test_false_equation(self, terms):
        outcome = percent_ce(terms, [1.0] * len(terms), BURGERS)
        assert isinstance(outcome, FalseEquation)
        assert outcome.expected == ("u_xx", "uu_x")
        assert outcome.to_dict()["outcome"] == "false_equation"


class TestRBic:
    def test_value(self):
        assert r_bic([-10.0, -50.0, -40.0]) == -40.0
        assert r_bic([5.0, 5.0]) == 0.0

    def test_needs_two_models(self):
        with pytest.raises(SelectionException):
            r_bic([1.0])


class TestEvaluate:
    def test_planted_support(self, burgers_library):
        model = sweep(burgers_library, max_s=4).model_for_size(2)
        report = evaluate_support(
            burgers_library, model.support, model.coefficients, [-10.0, -30.0, -32.0], [1, 2, 3], BURGERS
        )
        assert report.chosen_terms == ["u_xx", "uu_x"]
        assert not report.false_equation
        assert report.percent_ce.value < 1.0
        assert report.r_bic == -22.0
        assert report.bic_argmin_size == 3
        assert report.ubic_argmin_size == 2
        assert report.to_dict()["coefficient_error"]["outcome"] == "ok"

    def test_refined_library(self, burgers_library):
        report = evaluate_support(
            burgers_library, [1, 3], [0.1, -1.0], [-1.0, -2.0], [1, 2], BURGERS, refined_library=burgers_library
        )
        assert report.refined_coefficients == pytest.approx([0.1, -1.0], abs=1e-3)
        assert "refined_coefficient_error" in report.to_dict()

    def test_wrong_support(self, burgers_library):
        report = evaluate_support(burgers_library, [3], [-1.0], [-1.0, -2.0], [1, 2], BURGERS)
        assert report.false_equation
        assert report.to_dict()["coefficient_error"]["found"] == ["uu_x"]

    def test_from_selection_report(self, burgers_library):
        models = sweep(burgers_library, max_s=5)
        selection = select_model(score_inputs(burgers_library, uncertainty_sweep(burgers_library, models)))
        report = evaluate(burgers_library, selection, BURGERS)
        assert report.chosen_terms == ["u_xx", "uu_x"]
        assert report.percent_ce.value < 1.0

        support, means = support_from_report(burgers_library, selection.to_dict())
        assert support == [1, 3]
        assert means == pytest.approx([0.1, -1.0], abs=1e-3)

    def test_report_with_unknown_term(self, burgers_library):
        report = {"coefficients": [{"term": {"d1": 0, "d2": 4}, "mean": 1.0, "sd": 0.1}]}
        with pytest.raises(SelectionException):
            support_from_report(burgers_library, report)
