"""Discovery-quality metrics: percentage coefficient error and BIC reduction."""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ubic.core.logger import get_logger
from ubic.utils.exceptions import SelectionException

from .weaklib import CandidateTerm, WeakLibrary, refit

logger = get_logger(__name__)


class TruthSpec(BaseModel):
    """Ground-truth PDE terms and their nonzero coefficients."""

    model_config = ConfigDict(frozen=True)

    terms: Tuple[CandidateTerm, ...]
    coefficients: Tuple[float, ...]

    @model_validator(mode="after")
    def validate_truth(self):
        if len(self.terms) != len(self.coefficients):
            raise ValueError("one coefficient per term is required")
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("truth terms must be distinct")
        if any(c == 0 for c in self.coefficients):
            raise ValueError("truth coefficients must be nonzero")
        return self

    def mapping(self) -> Dict[CandidateTerm, float]:
        return dict(zip(self.terms, self.coefficients))

    def support_in(self, library: WeakLibrary) -> Optional[List[int]]:
        """Library columns of the truth terms, or ``None`` if one is missing."""
        index = {term: i for i, term in enumerate(library.terms)}
        if any(term not in index for term in self.terms):
            return None
        return sorted(index[term] for term in self.terms)


@dataclass(frozen=True)
class PercentCE:
    value: float
    per_term: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {"outcome": "ok", "percent_ce": self.value, "per_term": self.per_term}


@dataclass(frozen=True)
class FalseEquation:
    """The found support differs from the true one; no %CE is defined."""

    found: Tuple[str, ...]
    expected: Tuple[str, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {"outcome": "false_equation", "found": list(self.found), "expected": list(self.expected)}


CoefficientError = Union[PercentCE, FalseEquation]


def percent_ce(
    found_terms: Sequence[Optional[CandidateTerm]],
    found_coefficients: Sequence[float],
    truth: TruthSpec,
) -> CoefficientError:
    """Mean of ``100 |found - true| / |true|`` over the truth terms.

    ``None`` in ``found_terms`` stands for a non-term column (the intercept)
    and always makes the equation false. Term order does not matter.
    """
    expected = tuple(sorted(term.label for term in truth.terms))
    labels = tuple(sorted("1" if term is None else term.label for term in found_terms))
    if None in found_terms or set(found_terms) != set(truth.terms) or len(found_terms) != len(truth.terms):
        return FalseEquation(labels, expected)
    found = dict(zip(found_terms, found_coefficients))
    per_term = {
        term.label: 100.0 * abs(found[term] - value) / abs(value) for term, value in truth.mapping().items()
    }
    return PercentCE(float(np.mean(list(per_term.values()))), per_term)


def model_terms(library: WeakLibrary, support: Sequence[int]) -> List[Optional[CandidateTerm]]:
    """Candidate term per support column; ``None`` for the intercept."""
    return [library.terms[i] if i < len(library.terms) else None for i in support]


def r_bic(bic: Sequence[float]) -> float:
    """``min BIC - max BIC`` over the sweep (never positive)."""
    bic = np.asarray(bic, dtype=np.float64)
    if bic.size < 2:
        raise SelectionException("R_BIC needs at least two models")
    return float(np.min(bic) - np.max(bic))


@dataclass
class EvaluationReport:
    """Chosen equation quality, naive-BIC comparison and the BIC reduction."""

    chosen_terms: List[str]
    chosen_coefficients: List[float]
    percent_ce: CoefficientError
    r_bic: float
    bic_argmin_size: int
    ubic_argmin_size: int
    refined_coefficients: Optional[List[float]] = None
    refined_percent_ce: Optional[CoefficientError] = None

    @property
    def false_equation(self) -> bool:
        return isinstance(self.percent_ce, FalseEquation)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "chosen_terms": self.chosen_terms,
            "chosen_coefficients": self.chosen_coefficients,
            "coefficient_error": self.percent_ce.to_dict(),
            "r_bic": self.r_bic,
            "bic_argmin_support_size": self.bic_argmin_size,
            "ubic_argmin_support_size": self.ubic_argmin_size,
        }
        if self.refined_percent_ce is not None:
            data["refined_coefficients"] = self.refined_coefficients
            data["refined_coefficient_error"] = self.refined_percent_ce.to_dict()
        return data


def evaluate_support(
    library: WeakLibrary,
    support: Sequence[int],
    coefficients: Sequence[float],
    bic: Sequence[float],
    support_sizes: Sequence[int],
    truth: TruthSpec,
    refined_library: Optional[WeakLibrary] = None,
) -> EvaluationReport:
    """Score a chosen support and its coefficients against the truth.

    ``bic`` and ``support_sizes`` describe the whole sweep. With
    ``refined_library`` (a denoised weak-form library on the same subdomains)
    the chosen support is refit on it and scored again.
    """
    support = list(support)
    coefficients = [float(c) for c in coefficients]
    terms = model_terms(library, support)
    outcome = percent_ce(terms, coefficients, truth)

    refined_coefficients = refined_outcome = None
    if refined_library is not None:
        refined_coefficients = [float(c) for c in refit(refined_library, support)]
        refined_outcome = percent_ce(terms, refined_coefficients, truth)

    result = EvaluationReport(
        chosen_terms=[library.labels[i] for i in support],
        chosen_coefficients=coefficients,
        percent_ce=outcome,
        r_bic=r_bic(bic),
        bic_argmin_size=int(np.asarray(support_sizes)[int(np.argmin(bic))]),
        ubic_argmin_size=len(support),
        refined_coefficients=refined_coefficients,
        refined_percent_ce=refined_outcome,
    )
    if result.false_equation:
        logger.warning(f"false equation: found {outcome.found}, expected {outcome.expected}")
    else:
        logger.info(f"%CE = {outcome.value:.4f}")
    return result


def evaluate(
    library: WeakLibrary,
    report,
    truth: TruthSpec,
    refined_library: Optional[WeakLibrary] = None,
) -> EvaluationReport:
    """:func:`evaluate_support` for a SelectionReport."""
    inputs = report.table.inputs
    coefficients = inputs.means[report.chosen] if inputs.means else []
    return evaluate_support(
        library,
        report.chosen_support,
        coefficients,
        report.table.bic,
        inputs.support_sizes,
        truth,
        refined_library,
    )


def support_from_report(library: WeakLibrary, report: Dict[str, Any]) -> Tuple[List[int], List[float]]:
    """Library columns and posterior means of the chosen model in a report JSON."""
    index = {(term.d1, term.d2): i for i, term in enumerate(library.terms)}
    if library.include_intercept:
        index[(0, 0)] = library.n_candidates - 1
    pairs = []
    for entry in report["coefficients"]:
        key = (int(entry["term"]["d1"]), int(entry["term"]["d2"]))
        if key not in index:
            raise SelectionException(f"report term {entry['term']} is not a library column")
        pairs.append((index[key], float(entry["mean"])))
    pairs.sort()
    return [column for column, _ in pairs], [mean for _, mean in pairs]
