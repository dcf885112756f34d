"""Weak-form candidate library.

Each row of the library integrates the target ``u_t`` and every candidate
``u^d1 * d^d2 u / dx^d2`` against a smooth weight over one random rectangular
subdomain ``[xc - Hx, xc + Hx] x [tc - Ht, tc + Ht]``:

    w = (xb^2 - 1)^P (tb^2 - 1)^P,   xb = (x - xc) / Hx,  tb = (t - tc) / Ht

Derivatives are moved onto ``w`` wherever an identity allows it:

- ``q0 = -int w_t u``
- ``d1 = 0``:            ``(-1)^d2 int (d^d2 w / dx^d2) u``
- ``d1 >= 1, d2 = 0``:   ``int w u^d1``
- ``d1 >= 1, d2 = 1``:   ``-1/(d1 + 1) int w_x u^(d1 + 1)``
- ``d1 >= 1, d2 >= 2``:  ``int w u^d1 d^d2 u`` with finite differences on the data
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, model_validator

from ubic.core.logger import get_logger
from ubic.utils.exceptions import FieldFormatException, LibraryException
from ubic.utils.helpers import make_rng, parallel_map

from .denoise import SavgolSpec, savgol_smooth
from .grid import Field, read_header_and_payload, write_header_and_payload

logger = get_logger(__name__)

MIN_POINTS = 5

_DERIVATIVE_SUFFIX = {0: "", 1: "_x", 2: "_xx", 3: "_xxx", 4: "_xxxx"}


class CandidateTerm(BaseModel):
    """The candidate ``u^d1 * d^d2 u / dx^d2``; with ``d2 = 0`` it is ``u^d1``."""

    model_config = ConfigDict(frozen=True)

    d1: int
    d2: int

    @model_validator(mode="after")
    def validate_orders(self):
        if self.d1 < 0 or self.d2 < 0:
            raise ValueError("term orders must be non-negative")
        if self.d1 + self.d2 < 1:
            raise ValueError("a term needs d1 + d2 >= 1")
        return self

    @property
    def label(self) -> str:
        """Readable name: ``u``, ``u^2``, ``u_xx``, ``uu_x``, ``u^2u_xxx``."""
        if self.d2 == 0:
            return "u" if self.d1 == 1 else f"u^{self.d1}"
        derivative = "u" + _DERIVATIVE_SUFFIX.get(self.d2, f"_x{self.d2}")
        if self.d1 == 0:
            return derivative
        prefix = "u" if self.d1 == 1 else f"u^{self.d1}"
        return prefix + derivative

    def to_dict(self) -> Dict[str, int]:
        return {"d1": self.d1, "d2": self.d2}


def enumerate_terms(max_power: int, max_deriv: int) -> List[CandidateTerm]:
    """Every ``(d1, d2)`` with ``d1 <= max_power``, ``d2 <= max_deriv``, ``d1 + d2 >= 1``."""
    if max_power < 0 or max_deriv < 0:
        raise LibraryException("term bounds must be non-negative")
    return [
        CandidateTerm(d1=d1, d2=d2)
        for d1 in range(max_power + 1)
        for d2 in range(max_deriv + 1)
        if d1 + d2 >= 1
    ]


def required_weight_power(terms: Sequence[CandidateTerm]) -> int:
    """Smallest P for which every derivative transfer has no boundary terms."""
    pure = [term.d2 for term in terms if term.d1 == 0]
    return max([2] + pure)


class SubdomainSpec(BaseModel):
    """Random rectangular subdomains and the weight they carry."""

    model_config = ConfigDict(frozen=True)

    n_domains: int = 500
    half_width_x: float
    half_width_t: float
    seed: int = 0
    weight_power: int = 2

    @model_validator(mode="after")
    def validate_spec(self):
        if self.n_domains < 1:
            raise ValueError("n_domains must be positive")
        if self.half_width_x <= 0 or self.half_width_t <= 0:
            raise ValueError("half widths must be positive")
        if self.weight_power < 2:
            raise ValueError("weight_power must be at least 2")
        return self

    @classmethod
    def from_fractions(
        cls,
        field: Field,
        n_domains: int = 500,
        hx_frac: float = 0.1,
        ht_frac: float = 0.1,
        seed: int = 0,
        weight_power: int = 2,
    ) -> "SubdomainSpec":
        """Half widths as fractions of each axis extent."""
        return cls(
            n_domains=n_domains,
            half_width_x=hx_frac * field.x_axis.extent,
            half_width_t=ht_frac * field.t_axis.extent,
            seed=seed,
            weight_power=weight_power,
        )


class TestFunction:
    """Separable weight ``(xb^2 - 1)^P (tb^2 - 1)^P`` with analytic derivatives."""

    __test__ = False

    def __init__(self, power: int):
        self.power = power
        self.base = Polynomial([-1.0, 0.0, 1.0]) ** power
        self._derivatives: Dict[int, Polynomial] = {0: self.base}

    def polynomial(self, order: int) -> Polynomial:
        if order not in self._derivatives:
            self._derivatives[order] = self.base.deriv(order)
        return self._derivatives[order]

    def evaluate(self, scaled: np.ndarray, order: int = 0, half_width: float = 1.0) -> np.ndarray:
        """``d^order/dz^order`` of one factor at ``z = c + half_width * scaled``."""
        return self.polynomial(order)(scaled) / half_width ** order


@dataclass(eq=False)
class Subdomain:
    """Grid-aligned rectangle: centre indices and half widths in grid steps."""

    ix: int
    it: int
    mx: int
    mt: int

    def slices(self) -> Tuple[slice, slice]:
        return slice(self.ix - self.mx, self.ix + self.mx + 1), slice(self.it - self.mt, self.it + self.mt + 1)


@dataclass(eq=False)
class WeakLibrary:
    """``phi`` (N_omega x N_q), target ``q0`` and the candidate descriptors."""

    phi: np.ndarray
    q0: np.ndarray
    terms: List[CandidateTerm]
    include_intercept: bool
    spec: SubdomainSpec
    savgol_window: Optional[int] = None

    @property
    def n_samples(self) -> int:
        return self.phi.shape[0]

    @property
    def n_candidates(self) -> int:
        return self.phi.shape[1]

    @property
    def labels(self) -> List[str]:
        labels = [term.label for term in self.terms]
        return labels + (["1"] if self.include_intercept else [])

    def column_descriptor(self, index: int) -> Dict[str, int]:
        """``{d1, d2}`` for a column; the intercept is ``{d1: 0, d2: 0}``."""
        if index < len(self.terms):
            return self.terms[index].to_dict()
        return {"d1": 0, "d2": 0}

    def header(self) -> Dict:
        return {
            "kind": "weak-library",
            "n_omega": self.n_samples,
            "n_q": self.n_candidates,
            "terms": [term.to_dict() for term in self.terms],
            "include_intercept": self.include_intercept,
            "spec": self.spec.model_dump(),
            "savgol_window": self.savgol_window,
            "layout": "q0-then-phi-row-major",
            "dtype": "f64le",
        }


def _grid_half_width(half_width: float, spacing: float, count: int, axis_name: str) -> int:
    steps = int(round(half_width / spacing))
    if 2 * steps + 1 > count:
        raise LibraryException(f"subdomain wider than the {axis_name} axis (2H = {2 * half_width:.4g})")
    if 2 * steps + 1 < MIN_POINTS:
        raise LibraryException(
            f"subdomain holds {2 * steps + 1} points along {axis_name}; need at least {MIN_POINTS}"
        )
    return steps


def sample_subdomains(field: Field, spec: SubdomainSpec) -> List[Subdomain]:
    """Centres drawn uniformly among grid indices that keep the rectangle inside."""
    nx, nt = field.shape
    mx = _grid_half_width(spec.half_width_x, field.x_axis.spacing, nx, "x")
    mt = _grid_half_width(spec.half_width_t, field.t_axis.spacing, nt, "t")
    rng = make_rng(spec.seed)
    ix = rng.integers(mx, nx - mx, size=spec.n_domains)
    it = rng.integers(mt, nt - mt, size=spec.n_domains)
    return [Subdomain(int(i), int(j), mx, mt) for i, j in zip(ix, it)]


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return weights


def _finite_difference(values: np.ndarray, order: int, h: float) -> np.ndarray:
    out = values
    for _ in range(order):
        out = np.gradient(out, h, axis=0, edge_order=2)
    return out


def _subdomain_row(
    values: np.ndarray,
    domain: Subdomain,
    terms: Sequence[CandidateTerm],
    include_intercept: bool,
    weight: TestFunction,
    dx: float,
    dt: float,
    smoother: Optional[Callable[[np.ndarray], np.ndarray]],
) -> Tuple[float, np.ndarray]:
    sx, st = domain.slices()
    u = values[sx, st]
    if smoother is not None:
        u = smoother(u)
    hx, ht = domain.mx * dx, domain.mt * dt
    xb = np.linspace(-1.0, 1.0, 2 * domain.mx + 1)
    tb = np.linspace(-1.0, 1.0, 2 * domain.mt + 1)
    qx = _trapezoid_weights(xb.size, dx)
    qt = _trapezoid_weights(tb.size, dt)

    def integrate(wx: np.ndarray, wt: np.ndarray, integrand: np.ndarray) -> float:
        return float((wx * qx) @ integrand @ (wt * qt))

    wx0 = weight.evaluate(xb, 0, hx)
    wt0 = weight.evaluate(tb, 0, ht)
    q0 = -integrate(wx0, weight.evaluate(tb, 1, ht), u)

    row = []
    for term in terms:
        if term.d1 == 0:
            wx = weight.evaluate(xb, term.d2, hx)
            row.append((-1) ** term.d2 * integrate(wx, wt0, u))
        elif term.d2 == 0:
            row.append(integrate(wx0, wt0, u ** term.d1))
        elif term.d2 == 1:
            wx = weight.evaluate(xb, 1, hx)
            row.append(-integrate(wx, wt0, u ** (term.d1 + 1)) / (term.d1 + 1))
        else:
            derivative = _finite_difference(u, term.d2, dx)
            row.append(integrate(wx0, wt0, u ** term.d1 * derivative))
    if include_intercept:
        row.append(integrate(wx0, wt0, np.ones_like(u)))
    return q0, np.asarray(row)


def _assemble(
    field: Field,
    terms: Sequence[CandidateTerm],
    spec: SubdomainSpec,
    include_intercept: bool,
    smoother: Optional[Callable[[np.ndarray], np.ndarray]],
    threads: int,
) -> Tuple[np.ndarray, np.ndarray]:
    terms = list(terms)
    if not terms and not include_intercept:
        raise LibraryException("the library needs at least one candidate")
    needed = required_weight_power(terms)
    if spec.weight_power < needed:
        raise LibraryException(
            f"weight_power {spec.weight_power} leaves boundary terms for derivative order {needed}; "
            f"use weight_power >= {needed}"
        )
    domains = sample_subdomains(field, spec)
    weight = TestFunction(spec.weight_power)
    for order in range(max([1] + [term.d2 for term in terms]) + 1):
        weight.polynomial(order)
    dx, dt = field.x_axis.spacing, field.t_axis.spacing
    rows = parallel_map(
        lambda d: _subdomain_row(field.values, d, terms, include_intercept, weight, dx, dt, smoother),
        domains,
        threads,
    )
    q0 = np.array([r[0] for r in rows])
    phi = np.vstack([r[1] for r in rows])
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(q0))):
        raise LibraryException("library contains non-finite entries")
    return phi, q0


def build(
    field: Field,
    terms: Sequence[CandidateTerm],
    spec: SubdomainSpec,
    include_intercept: bool = False,
    threads: int = 1,
) -> WeakLibrary:
    """Weak-form target and candidate matrix over ``spec.n_domains`` subdomains."""
    phi, q0 = _assemble(field, terms, spec, include_intercept, None, threads)
    logger.info(f"weak library: N_omega={phi.shape[0]}, N_q={phi.shape[1]}, P={spec.weight_power}")
    return WeakLibrary(phi, q0, list(terms), include_intercept, spec)


def denoised_build(
    field: Field,
    terms: Sequence[CandidateTerm],
    spec: SubdomainSpec,
    alpha: int,
    include_intercept: bool = False,
    threads: int = 1,
) -> WeakLibrary:
    """As :func:`build`, with the field smoothed inside each subdomain first.

    The smoother is a 2D Savitzky-Golay filter of order 2 with window
    ``alpha``; ``alpha = 1`` disables it.
    """
    if alpha < 1 or alpha % 2 == 0:
        raise LibraryException("alpha must be an odd positive integer")
    smoother = None
    if alpha > 1:
        order = min(2, alpha - 1)
        savgol = SavgolSpec.square(alpha, order)
        smoother = lambda u: savgol_smooth(u, savgol)  # noqa: E731
    try:
        phi, q0 = _assemble(field, terms, spec, include_intercept, smoother, threads)
    except Exception as e:
        if isinstance(e, LibraryException):
            raise
        raise LibraryException(f"denoised weak form failed: {e}") from e
    logger.info(f"denoised weak library: alpha={alpha}, N_omega={phi.shape[0]}, N_q={phi.shape[1]}")
    return WeakLibrary(phi, q0, list(terms), include_intercept, spec, savgol_window=alpha)


def refit(library: WeakLibrary, support: Sequence[int]) -> np.ndarray:
    """Ordinary least-squares coefficients of ``q0`` on the given columns."""
    support = list(support)
    coefficients, *_ = np.linalg.lstsq(library.phi[:, support], library.q0, rcond=None)
    return coefficients


def write_library(library: WeakLibrary, path: Union[str, Path]) -> Path:
    """Header line + ``q0`` followed by ``phi`` row-major as little-endian float64."""
    payload = np.concatenate([library.q0, library.phi.ravel(order="C")])
    return write_header_and_payload(path, library.header(), payload)


def read_library(path: Union[str, Path]) -> WeakLibrary:
    """Read a library written by :func:`write_library`."""
    header, payload = read_header_and_payload(path)
    try:
        n_omega, n_q = int(header["n_omega"]), int(header["n_q"])
        terms = [CandidateTerm(**t) for t in header["terms"]]
        spec = SubdomainSpec(**header["spec"])
        include_intercept = bool(header["include_intercept"])
    except (KeyError, TypeError, ValueError) as e:
        raise FieldFormatException(f"{path}: malformed library header: {e}") from e
    if payload.size != n_omega * (n_q + 1):
        raise FieldFormatException(
            f"{path}: header claims {n_omega}x({n_q}+1) values, payload has {payload.size}"
        )
    if len(terms) + int(include_intercept) != n_q:
        raise FieldFormatException(f"{path}: term count does not match n_q")
    q0 = payload[:n_omega].copy()
    phi = payload[n_omega:].reshape(n_omega, n_q).copy()
    return WeakLibrary(phi, q0, terms, include_intercept, spec, header.get("savgol_window"))
