"""Conjugate Bayesian linear regression per support size and its uncertainty score.

For a support with matrix ``Phi`` the prior ``N(xi0, V0)`` and noise variance
``s2`` give

    A    = s2 V0^-1 + Phi^T Phi
    V    = s2 A^-1
    mean = A^-1 (s2 V0^-1 xi0 + Phi^T q0)

``s2`` is the maximum-likelihood residual variance of the OLS fit on the
support (divide by ``N_omega``).
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import linalg

from ubic.core.logger import get_logger
from ubic.utils.exceptions import PosteriorException
from ubic.utils.helpers import parallel_map

from .subset import SubsetModel, SubsetSweep
from .weaklib import WeakLibrary

logger = get_logger(__name__)

NOISE_FLOOR = 1e-30
CONDITION_LIMIT = 1e14
PRIORS = ("ols", "zero")


@dataclass
class PosteriorModel:
    support: List[int]
    mean: np.ndarray
    covariance: np.ndarray
    noise_var: float
    cv: float
    noise_clamped: bool = False

    @property
    def support_size(self) -> int:
        return len(self.support)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


@dataclass
class UncertaintySweep:
    """Posteriors over the sweep and ``u_k = cv_k / min cv``."""

    posteriors: List[PosteriorModel]
    u: np.ndarray

    @property
    def cv(self) -> np.ndarray:
        return np.array([p.cv for p in self.posteriors])

    @property
    def support_sizes(self) -> List[int]:
        return [p.support_size for p in self.posteriors]


def coefficient_of_variation(mean: np.ndarray, covariance: np.ndarray) -> float:
    """``sum_j sqrt(V_jj) / ||mean||_1``; infinite when the mean vanishes."""
    norm = float(np.sum(np.abs(mean)))
    if norm == 0.0:
        return float("inf")
    return float(np.sum(np.sqrt(np.diag(covariance))) / norm)


def noise_variance(library: WeakLibrary, model: SubsetModel):
    """MLE residual variance of ``model`` and whether it hit the floor."""
    residual = library.q0 - library.phi[:, model.support] @ model.coefficients
    variance = float(residual @ residual) / library.n_samples
    if variance < NOISE_FLOOR:
        return NOISE_FLOOR, True
    return variance, False


def _factor(matrix: np.ndarray, what: str):
    try:
        return linalg.cho_factor(matrix, lower=True)
    except linalg.LinAlgError as e:
        raise PosteriorException(f"{what} is not positive definite") from e


def posterior(
    library: WeakLibrary,
    model: SubsetModel,
    prior_mean: Optional[np.ndarray] = None,
    prior_cov: Optional[np.ndarray] = None,
    noise_var: Optional[float] = None,
) -> PosteriorModel:
    """Exact conjugate update on the model's support.

    Defaults: ``prior_mean`` is the model's OLS coefficients, ``prior_cov``
    the identity and ``noise_var`` the MLE residual variance.
    """
    s = model.support_size
    phi = library.phi[:, model.support]
    xi0 = model.coefficients if prior_mean is None else np.asarray(prior_mean, dtype=np.float64)
    v0 = np.eye(s) if prior_cov is None else np.asarray(prior_cov, dtype=np.float64)
    if xi0.shape != (s,) or v0.shape != (s, s):
        raise PosteriorException(f"prior shapes {xi0.shape}, {v0.shape} do not match support size {s}")
    if not np.allclose(v0, v0.T, rtol=1e-12, atol=0.0):
        raise PosteriorException("prior covariance must be symmetric")

    clamped = False
    if noise_var is None:
        noise_var, clamped = noise_variance(library, model)
        if clamped:
            logger.warning(f"s={s}: perfect fit, noise variance clamped to {NOISE_FLOOR:g}")

    v0_inv = linalg.cho_solve(_factor(v0, "prior covariance"), np.eye(s))
    gram = phi.T @ phi
    a = noise_var * v0_inv + gram
    condition = np.linalg.cond(a)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise PosteriorException(f"s={s}: posterior precision is ill-conditioned (cond = {condition:.3g})")
    a_factor = _factor(a, "posterior precision")
    mean = linalg.cho_solve(a_factor, noise_var * v0_inv @ xi0 + phi.T @ library.q0)
    covariance = noise_var * linalg.cho_solve(a_factor, np.eye(s))
    covariance = 0.5 * (covariance + covariance.T)
    return PosteriorModel(
        support=list(model.support),
        mean=mean,
        covariance=covariance,
        noise_var=noise_var,
        cv=coefficient_of_variation(mean, covariance),
        noise_clamped=clamped,
    )


def ridge_estimate(phi: np.ndarray, q0: np.ndarray, noise_var: float) -> np.ndarray:
    """``(Phi^T Phi + noise_var I)^-1 Phi^T q0``, the posterior mean under a zero prior mean."""
    gram = phi.T @ phi + noise_var * np.eye(phi.shape[1])
    return linalg.solve(gram, phi.T @ q0, assume_a="pos")


def uncertainty_sweep(
    library: WeakLibrary,
    sweep: SubsetSweep,
    prior: str = "ols",
    prior_scale: float = 1.0,
    threads: int = 1,
) -> UncertaintySweep:
    """Posterior per support size and the normalized uncertainty ``u_k``.

    ``prior="ols"`` centres each prior on the OLS estimate, ``"zero"`` on the
    origin; ``V0 = prior_scale * I`` in both cases.
    """
    if prior not in PRIORS:
        raise PosteriorException(f"unknown prior '{prior}', expected one of {PRIORS}")
    if prior_scale <= 0:
        raise PosteriorException("prior_scale must be positive")
    sweep.check_library(library)

    def fit(model: SubsetModel) -> PosteriorModel:
        s = model.support_size
        mean = model.coefficients if prior == "ols" else np.zeros(s)
        return posterior(library, model, mean, prior_scale * np.eye(s))

    posteriors = parallel_map(fit, sweep.models, threads)
    cv = np.array([p.cv for p in posteriors])
    best = float(np.min(cv))
    if not np.isfinite(best) or best <= 0:
        raise PosteriorException("no support size has a finite, positive coefficient of variation")
    u = cv / best
    for p, uk in zip(posteriors, u):
        logger.debug(f"s={p.support_size}: cv={p.cv:.4g} U={uk:.4g} sigma2={p.noise_var:.4g}")
    logger.info(f"uncertainty minimum at s={posteriors[int(np.argmin(u))].support_size}")
    return UncertaintySweep(posteriors, u)
