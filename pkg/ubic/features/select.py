"""BIC / UBIC scoring and the adaptive ``lambda_U`` tuner.

    logL_k = -(N/2) log(2 pi SSE_k / N)
    BIC_k  = -2 logL_k + log(N) s_k
    UBIC_k = BIC_k + lambda_U * Gamma * U_k

``Gamma = log(N)`` gives the standard UBIC; any other positive ``Gamma`` is the
generalized form. The tuner starts from ``log10(lambda_max)`` and walks the
exponent down in ``n_delta`` equal steps, stopping as soon as a step changes
the chosen support size for too little (or too costly) a BIC change.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from ubic.core.logger import get_logger
from ubic.utils.exceptions import SelectionException
from ubic.utils.helpers import ensure_directory

from .bayes import NOISE_FLOOR, UncertaintySweep
from .weaklib import WeakLibrary

logger = get_logger(__name__)

DEFAULT_TAU0 = 0.02
DEFAULT_N_DELTA = 3
DEFAULT_PERCENTILE = 75.0
DEFAULT_RETRY_PERCENTILE = 80.0
TAU0_MODES = ("fixed", "percentile")


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def log_likelihood_from_sse(sse: float, n_samples: int) -> float:
    sse = max(float(sse), n_samples * NOISE_FLOOR)
    return -0.5 * n_samples * math.log(2.0 * math.pi * sse / n_samples)


def log_likelihood(library: WeakLibrary, coefficients: np.ndarray, support: Sequence[int]) -> float:
    """Gaussian log-likelihood of the weak-form residual; a zero residual is clamped."""
    residual = library.q0 - library.phi[:, list(support)] @ np.asarray(coefficients)
    return log_likelihood_from_sse(float(residual @ residual), library.n_samples)


@dataclass
class ScoreInputs:
    """Per-model quantities the scores are built from, ordered by support size."""

    support_sizes: np.ndarray
    log_likelihood: np.ndarray
    u: np.ndarray
    n_samples: int
    supports: List[List[int]] = field(default_factory=list)
    means: List[np.ndarray] = field(default_factory=list)
    sds: List[np.ndarray] = field(default_factory=list)
    descriptors: List[Dict[str, int]] = field(default_factory=list)

    def __post_init__(self):
        self.support_sizes = np.asarray(self.support_sizes, dtype=int)
        self.log_likelihood = np.asarray(self.log_likelihood, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        n = self.support_sizes.size
        if n == 0:
            raise SelectionException("no models to score")
        if self.log_likelihood.shape != (n,) or self.u.shape != (n,):
            raise SelectionException("support sizes, log-likelihoods and U must have equal lengths")
        if np.any(np.diff(self.support_sizes) <= 0):
            raise SelectionException("support sizes must increase strictly")
        if self.n_samples < 2:
            raise SelectionException("at least two samples are required")

    @property
    def log_n(self) -> float:
        return math.log(self.n_samples)

    @property
    def bic(self) -> np.ndarray:
        return -2.0 * self.log_likelihood + self.log_n * self.support_sizes

    def resolve_gamma(self, gamma: Optional[float]) -> float:
        if gamma is None:
            return self.log_n
        if not gamma > 0:
            raise SelectionException("gamma must be positive")
        return float(gamma)


def score_inputs(library: WeakLibrary, uncertainty: UncertaintySweep) -> ScoreInputs:
    """Score inputs with the log-likelihood evaluated at each posterior mean."""
    posteriors = uncertainty.posteriors
    return ScoreInputs(
        support_sizes=[p.support_size for p in posteriors],
        log_likelihood=[log_likelihood(library, p.mean, p.support) for p in posteriors],
        u=uncertainty.u,
        n_samples=library.n_samples,
        supports=[list(p.support) for p in posteriors],
        means=[p.mean for p in posteriors],
        sds=[p.sd for p in posteriors],
        descriptors=[library.column_descriptor(i) for i in range(library.n_candidates)],
    )


@dataclass
class ScoreTable:
    inputs: ScoreInputs
    lambda_u: float
    gamma: float
    bic: np.ndarray
    ubic: np.ndarray

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.ubic))

    @property
    def bic_argmin(self) -> int:
        return int(np.argmin(self.bic))

    def records(self) -> List[Dict[str, Any]]:
        return [
            {
                "s": int(s),
                "logL": float(ll),
                "bic": float(b),
                "u": _finite_or_none(u),
                "ubic": _finite_or_none(ub),
            }
            for s, ll, b, u, ub in zip(
                self.inputs.support_sizes, self.inputs.log_likelihood, self.bic, self.inputs.u, self.ubic
            )
        ]


def ubic(inputs: ScoreInputs, lambda_u: float, gamma: Optional[float] = None) -> ScoreTable:
    """Score table with ``ubic = bic + lambda_u * gamma * u``."""
    if lambda_u < 0 or not math.isfinite(lambda_u):
        raise SelectionException("lambda_u must be finite and non-negative")
    gamma = inputs.resolve_gamma(gamma)
    bic = inputs.bic
    if lambda_u == 0:
        scores = bic.copy()
    else:
        scores = bic + lambda_u * gamma * inputs.u
    return ScoreTable(inputs, float(lambda_u), gamma, bic, scores)


def lambda_max(inputs: ScoreInputs, gamma: Optional[float] = None) -> float:
    """Largest ``lambda_U`` keeping the penalty below the log-likelihood term.

    Models with infinite ``U`` are skipped; ``-inf`` when none remain.
    """
    gamma = inputs.resolve_gamma(gamma)
    finite = np.isfinite(inputs.u)
    if not np.any(finite):
        return float("-inf")
    numerator = 2.0 * inputs.log_likelihood - inputs.log_n * inputs.support_sizes
    return float(np.max(numerator[finite] / (gamma * inputs.u[finite])))


def improvement_factors(inputs: ScoreInputs) -> np.ndarray:
    """``|dBIC / (BIC_k1 * ds)|`` over consecutive models while BIC keeps decreasing."""
    bic = inputs.bic
    sizes = inputs.support_sizes
    factors = []
    for k in range(len(bic) - 1):
        if not bic[k + 1] < bic[k]:
            break
        if bic[k] == 0:
            break
        factors.append(abs((bic[k + 1] - bic[k]) / (bic[k] * (sizes[k + 1] - sizes[k]))))
    return np.array(factors)


class Tau0Estimate(NamedTuple):
    value: float
    percentile: float
    fallback: bool


def tau0_heuristic(inputs: ScoreInputs, percentile: float = DEFAULT_PERCENTILE) -> Tau0Estimate:
    """Percentile (linear interpolation) of the improvement factors.

    Falls back to ``0.02`` and flags it when no BIC-decreasing pair exists.
    """
    factors = improvement_factors(inputs)
    if factors.size == 0:
        logger.warning(f"no BIC-decreasing model pair; tau0 falls back to {DEFAULT_TAU0}")
        return Tau0Estimate(DEFAULT_TAU0, percentile, True)
    value = float(np.percentile(factors, percentile, method="linear"))
    logger.debug(f"tau0 = P{percentile:g} of {np.round(factors, 6).tolist()} = {value:.6g}")
    return Tau0Estimate(value, percentile, False)


@dataclass
class TuneStep:
    """One UBIC evaluation of the tuner; the first step has no comparison."""

    lambda_exponent: float
    argmin: int
    support_size: int
    delta_s: Optional[int] = None
    delta_bic: Optional[float] = None
    tau: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda": _finite_or_none(self.lambda_exponent),
            "argmin_k": self.argmin,
            "support_size": self.support_size,
            "delta_s": self.delta_s,
            "delta_bic": _finite_or_none(self.delta_bic),
            "tau": _finite_or_none(self.tau),
        }


@dataclass
class SelectionReport:
    table: ScoreTable
    chosen: int
    lambda_u: float
    lambda_max: float
    tau0: float
    overfit_warning: bool
    trace: List[TuneStep]
    tau0_mode: str = "fixed"
    attempts: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def chosen_support_size(self) -> int:
        return int(self.table.inputs.support_sizes[self.chosen])

    @property
    def chosen_support(self) -> List[int]:
        supports = self.table.inputs.supports
        return list(supports[self.chosen]) if supports else []

    def coefficients(self) -> List[Dict[str, Any]]:
        inputs = self.table.inputs
        if not inputs.supports:
            return []
        support = inputs.supports[self.chosen]
        return [
            {
                "term": inputs.descriptors[j] if inputs.descriptors else {"column": j},
                "mean": float(mean),
                "sd": float(sd),
            }
            for j, mean, sd in zip(support, inputs.means[self.chosen], inputs.sds[self.chosen])
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_omega": self.table.inputs.n_samples,
            "gamma": self.table.gamma,
            "lambda_u": self.lambda_u,
            "lambda_max": _finite_or_none(self.lambda_max),
            "tau0": self.tau0,
            "tau0_mode": self.tau0_mode,
            "chosen_support_size": self.chosen_support_size,
            "warning": self.overfit_warning,
            "scores": self.table.records(),
            "coefficients": self.coefficients(),
            "trace": [step.to_dict() for step in self.trace],
            "attempts": self.attempts,
        }


def _overfit(bic: np.ndarray, k: int, tau0: float) -> bool:
    if k == 0 or bic[k - 1] == 0:
        return False
    return bool(abs(bic[k] - bic[k - 1]) / abs(bic[k - 1]) < tau0)


def tune(
    inputs: ScoreInputs,
    tau0: float = DEFAULT_TAU0,
    n_delta: int = DEFAULT_N_DELTA,
    gamma: Optional[float] = None,
) -> SelectionReport:
    """Pick the support size by stepping ``log10(lambda_U)`` down from its bound.

    A step from the current choice ``k*`` to the candidate choice ``k^c`` is
    rejected (and the walk ends) when it grows the support without a large
    enough BIC improvement, or shrinks it at a BIC cost above ``tau0``.
    ``lambda_max <= 0`` means pure BIC (``lambda_U = 0``).
    """
    if not tau0 > 0:
        raise SelectionException("tau0 must be positive")
    if n_delta < 1:
        raise SelectionException("n_delta must be a positive integer")
    gamma = inputs.resolve_gamma(gamma)
    sizes = inputs.support_sizes
    bic = inputs.bic
    bound = lambda_max(inputs, gamma)

    if not bound > 0:
        table = ubic(inputs, 0.0, gamma)
        k = table.argmin
        trace = [TuneStep(float("-inf"), k, int(sizes[k]))]
        lambda_u = 0.0
        logger.info(f"lambda_max = {bound:.4g} <= 0: selecting by BIC alone")
    else:
        start = math.log10(bound)
        table = ubic(inputs, 10.0 ** start, gamma)
        k = table.argmin
        exponent = start
        trace = [TuneStep(start, k, int(sizes[k]))]
        for j in range(1, n_delta + 1):
            candidate = start * (n_delta - j) / n_delta
            if not candidate > 0:
                break
            candidate_table = ubic(inputs, 10.0 ** candidate, gamma)
            kc = candidate_table.argmin
            delta_s = int(sizes[kc] - sizes[k])
            delta_bic = float(bic[kc] - bic[k])
            if delta_s == 0:
                tau = 0.0
            elif bic[k] == 0:
                tau = float("inf")
            else:
                tau = abs(delta_bic / (bic[k] * delta_s))
            trace.append(TuneStep(candidate, kc, int(sizes[kc]), delta_s, delta_bic, tau))
            if (delta_s > 0 and (delta_bic > 0 or tau < tau0)) or (delta_s < 0 and delta_bic > 0 and tau > tau0):
                logger.debug(f"tuner stops at lambda=10^{candidate:.3f}: ds={delta_s}, dBIC={delta_bic:.4g}")
                break
            exponent, table, k = candidate, candidate_table, kc
        lambda_u = 10.0 ** exponent

    warning = _overfit(bic, k, tau0)
    if warning:
        logger.warning(
            f"s={int(sizes[k])} improves BIC by less than tau0={tau0:.4g} over s={int(sizes[k - 1])}; "
            f"consider a larger tau0"
        )
    logger.info(f"selected s={int(sizes[k])} with lambda_U={lambda_u:.4g}")
    return SelectionReport(
        table=table,
        chosen=k,
        lambda_u=lambda_u,
        lambda_max=bound,
        tau0=tau0,
        overfit_warning=warning,
        trace=trace,
    )


def select_model(
    inputs: ScoreInputs,
    tau0_mode: str = "fixed",
    tau0: float = DEFAULT_TAU0,
    percentile: float = DEFAULT_PERCENTILE,
    retry_percentile: float = DEFAULT_RETRY_PERCENTILE,
    n_delta: int = DEFAULT_N_DELTA,
    gamma: Optional[float] = None,
) -> SelectionReport:
    """Run the tuner with a fixed ``tau0`` or a percentile of the improvement factors.

    In percentile mode an overfit warning triggers one retry with
    ``retry_percentile``; both attempts are recorded on the report.
    """
    if tau0_mode not in TAU0_MODES:
        raise SelectionException(f"unknown tau0 mode '{tau0_mode}', expected one of {TAU0_MODES}")
    if tau0_mode == "fixed":
        report = tune(inputs, tau0, n_delta, gamma)
        report.attempts = [_attempt(report, "fixed")]
        return report

    estimate = tau0_heuristic(inputs, percentile)
    report = tune(inputs, estimate.value, n_delta, gamma)
    attempts = [_attempt(report, "fallback" if estimate.fallback else f"P{percentile:g}")]
    if report.overfit_warning and not estimate.fallback:
        retry = tau0_heuristic(inputs, retry_percentile)
        retried = tune(inputs, retry.value, n_delta, gamma)
        attempts.append(_attempt(retried, f"P{retry_percentile:g}"))
        logger.info(
            f"retry with P{retry_percentile:g}: s={report.chosen_support_size} -> "
            f"s={retried.chosen_support_size}, warning={retried.overfit_warning}"
        )
        report = retried
    report.tau0_mode = "percentile"
    report.attempts = attempts
    return report


def _attempt(report: SelectionReport, source: str) -> Dict[str, Any]:
    return {
        "tau0": report.tau0,
        "source": source,
        "chosen_support_size": report.chosen_support_size,
        "warning": report.overfit_warning,
    }


@dataclass
class Tau0SweepResult:
    rows: List[Dict[str, Any]]
    success_rate: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {"success_rate": self.success_rate, "rows": self.rows}


def tau0_sweep(
    inputs: ScoreInputs,
    tau0_values: Optional[Sequence[float]] = None,
    percentiles: Optional[Sequence[float]] = None,
    truth_support: Optional[Sequence[int]] = None,
    n_delta: int = DEFAULT_N_DELTA,
    gamma: Optional[float] = None,
) -> Tau0SweepResult:
    """Chosen support per ``tau0`` value (raw values or percentiles).

    The success rate counts only runs selecting more than one term; a run
    succeeds when its support equals ``truth_support``.
    """
    if (tau0_values is None) == (percentiles is None):
        raise SelectionException("give either tau0 values or percentiles")
    if tau0_values is not None:
        settings = [(float(t), None) for t in tau0_values]
    else:
        settings = [(tau0_heuristic(inputs, p).value, float(p)) for p in percentiles]

    truth = sorted(int(i) for i in truth_support) if truth_support is not None else None
    rows = []
    for value, percentile in settings:
        report = tune(inputs, value, n_delta, gamma)
        row = {
            "tau0": value,
            "percentile": percentile,
            "chosen_support_size": report.chosen_support_size,
            "chosen_support": report.chosen_support,
            "warning": report.overfit_warning,
        }
        if truth is not None:
            row["correct"] = report.chosen_support == truth
        rows.append(row)

    success_rate = None
    counted = [row for row in rows if row["chosen_support_size"] > 1]
    if truth is not None and counted:
        success_rate = sum(row["correct"] for row in counted) / len(counted)
    logger.info(f"tau0 sweep: {len(rows)} runs, success rate {success_rate}")
    return Tau0SweepResult(rows, success_rate)


def score_curve_csv(table: ScoreTable, path: Union[str, Path]) -> Path:
    """Plot-ready CSV with columns ``s, bic, u, ubic``."""
    path = Path(path)
    ensure_directory(path.parent)
    data = np.column_stack([table.inputs.support_sizes, table.bic, table.inputs.u, table.ubic])
    np.savetxt(path, data, delimiter=",", header="s,bic,u,ubic", comments="", fmt=["%d", "%.17g", "%.17g", "%.17g"])
    return path
