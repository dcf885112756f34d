"""Clean reference solutions of the 1D benchmark PDEs (Burgers, KdV, KS).

Integration is periodic pseudo-spectral with fourth-order exponential time
differencing (ETDRK4). The linear part holds the pure-derivative terms and is
integrated exactly; the ETDRK4 coefficients come from contour integrals over
32 points on a unit circle around each ``h * L(k)`` (full circle, so complex
``L`` such as the dispersive KdV operator is handled too). Nonlinear terms are
formed in physical space with 2/3-rule de-aliasing.
"""

from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from tqdm import tqdm

from ubic.core.logger import get_logger
from ubic.utils.exceptions import SolverBlowupException

from .evaluate import TruthSpec
from .grid import Axis, Field
from .weaklib import CandidateTerm

logger = get_logger(__name__)

CONTOUR_POINTS = 32
BASE_SUBSTEPS = 50


class PdeName(str, Enum):
    BURGERS = "burgers"
    KDV = "kdv"
    KS = "ks"


class InitialCondition(str, Enum):
    GAUSSIAN = "gaussian"          # exp(-(x + 2)^2)
    NEGATIVE_SINE = "negative_sine"  # -sin(pi x / 20)
    KS_COSINE = "ks_cosine"        # cos(x / 16) (1 + sin(x / 16))
    ZERO = "zero"

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        if self is InitialCondition.GAUSSIAN:
            return np.exp(-(x + 2.0) ** 2)
        if self is InitialCondition.NEGATIVE_SINE:
            return -np.sin(np.pi * x / 20.0)
        if self is InitialCondition.KS_COSINE:
            return np.cos(x / 16.0) * (1.0 + np.sin(x / 16.0))
        return np.zeros_like(x)


_PRESETS = {
    PdeName.BURGERS: {
        "coefficients": {(0, 2): 0.1, (1, 1): -1.0},
        "initial_condition": InitialCondition.GAUSSIAN,
        "x": (-8.0, 8.0, 256),
        "t": (0.0, 10.0, 101),
    },
    PdeName.KDV: {
        "coefficients": {(0, 3): -1.0, (1, 1): -1.0},
        "initial_condition": InitialCondition.NEGATIVE_SINE,
        "x": (-20.0, 20.0, 512),
        "t": (0.0, 40.0, 501),
    },
    PdeName.KS: {
        "coefficients": {(0, 2): -1.0, (0, 4): -1.0, (1, 1): -1.0},
        "initial_condition": InitialCondition.KS_COSINE,
        "x": (0.0, 32.0 * np.pi, 1024),
        "t": (0.0, 100.0, 251),
    },
}


class PdeSpec(BaseModel):
    """A benchmark PDE ``u_t = sum_j c_j u^d1 d^d2 u``, its initial condition and grid."""

    model_config = ConfigDict(frozen=True)

    name: PdeName
    coefficients: Tuple[Tuple[CandidateTerm, float], ...]
    initial_condition: InitialCondition
    axes: Tuple[Axis, Axis]

    @model_validator(mode="after")
    def validate_terms(self):
        if not self.coefficients:
            raise ValueError("a PDE needs at least one term")
        for term, value in self.coefficients:
            if term.d1 > 0 and term.d2 == 0:
                raise ValueError(f"term {term.label} has no spectral treatment here")
            if not np.isfinite(value):
                raise ValueError("coefficients must be finite")
        return self

    @classmethod
    def preset(
        cls,
        name: str,
        nx: Optional[int] = None,
        nt: Optional[int] = None,
        initial_condition: Optional[InitialCondition] = None,
    ) -> "PdeSpec":
        """Table defaults for ``burgers``, ``kdv`` or ``ks``; grid counts may be overridden."""
        pde = PdeName(name.lower())
        preset = _PRESETS[pde]
        x_min, x_max, x_count = preset["x"]
        t_min, t_max, t_count = preset["t"]
        return cls(
            name=pde,
            coefficients=tuple(
                (CandidateTerm(d1=d1, d2=d2), value) for (d1, d2), value in preset["coefficients"].items()
            ),
            initial_condition=initial_condition or preset["initial_condition"],
            axes=(
                Axis(min=x_min, max=x_max, count=nx or x_count),
                Axis(min=t_min, max=t_max, count=nt or t_count),
            ),
        )

    def coefficient_map(self) -> Dict[CandidateTerm, float]:
        return dict(self.coefficients)

    def truth(self) -> TruthSpec:
        """Ground-truth terms and coefficients for %CE scoring."""
        terms = [term for term, _ in self.coefficients]
        return TruthSpec(terms=terms, coefficients=[value for _, value in self.coefficients])


class _SpectralOperators:
    """Wavenumbers, linear symbol and de-aliasing mask of a periodic grid."""

    def __init__(self, spec: PdeSpec):
        x_axis = spec.axes[0]
        n = x_axis.count
        self.n = n
        k = 2.0 * np.pi * np.fft.rfftfreq(n, d=x_axis.spacing)
        self.k = k
        # Odd derivatives drop the unpaired Nyquist mode.
        self.k_odd = k.copy()
        if n % 2 == 0:
            self.k_odd[-1] = 0.0
        index = np.arange(k.size)
        self.dealias = index <= n // 3

        self.linear = np.zeros(k.size, dtype=np.complex128)
        self.nonlinear_terms = []
        for term, value in spec.coefficients:
            if term.d1 == 0:
                self.linear += value * self.symbol(term.d2)
            else:
                self.nonlinear_terms.append((term, value))

    def symbol(self, order: int) -> np.ndarray:
        base = self.k_odd if order % 2 else self.k
        return (1j * base) ** order

    def nonlinear(self, u_hat: np.ndarray) -> np.ndarray:
        result = np.zeros_like(u_hat)
        u = np.fft.irfft(u_hat * self.dealias, n=self.n)
        for term, value in self.nonlinear_terms:
            if term.d1 >= 1 and term.d2 == 1:
                # u^d1 u_x = d/dx u^(d1+1) / (d1 + 1), conservative form
                product = np.fft.rfft(u ** (term.d1 + 1))
                result += value * self.symbol(1) * product / (term.d1 + 1)
            else:
                derivative = np.fft.irfft(self.symbol(term.d2) * u_hat * self.dealias, n=self.n)
                result += value * np.fft.rfft(u ** term.d1 * derivative)
        return result * self.dealias


class ETDRK4:
    """Kassam-Trefethen ETDRK4 step for ``v' = L v + N(v)`` with diagonal ``L``.

    The phi-function coefficients are contour means over a full circle of
    radius 1 around each ``h L``.
    """

    def __init__(self, linear: np.ndarray, nonlinear, step: float):
        self.nonlinear = nonlinear
        h = step
        self.exp_full = np.exp(h * linear)
        self.exp_half = np.exp(0.5 * h * linear)
        roots = np.exp(2j * np.pi * (np.arange(1, CONTOUR_POINTS + 1) - 0.5) / CONTOUR_POINTS)
        lr = h * linear[:, None] + roots[None, :]
        exp_lr = np.exp(lr)
        q = h * np.mean((np.exp(lr / 2.0) - 1.0) / lr, axis=1)
        f1 = h * np.mean((-4.0 - lr + exp_lr * (4.0 - 3.0 * lr + lr ** 2)) / lr ** 3, axis=1)
        f2 = h * np.mean((2.0 + lr + exp_lr * (lr - 2.0)) / lr ** 3, axis=1)
        f3 = h * np.mean((-4.0 - 3.0 * lr - lr ** 2 + exp_lr * (4.0 - lr)) / lr ** 3, axis=1)
        if not np.any(np.imag(linear)):
            # real symbol: the contour means are real up to rounding
            q, f1, f2, f3 = q.real, f1.real, f2.real, f3.real
        self.q, self.f1, self.f2, self.f3 = q, f1, f2, f3

    def step(self, v: np.ndarray) -> np.ndarray:
        n_v = self.nonlinear(v)
        a = self.exp_half * v + self.q * n_v
        n_a = self.nonlinear(a)
        b = self.exp_half * v + self.q * n_a
        n_b = self.nonlinear(b)
        c = self.exp_half * a + self.q * (2.0 * n_b - n_v)
        n_c = self.nonlinear(c)
        return self.exp_full * v + self.f1 * n_v + 2.0 * self.f2 * (n_a + n_b) + self.f3 * n_c


def solve(spec: PdeSpec, oversample: int = 1, progress: bool = False) -> Field:
    """Integrate ``spec`` and sample the solution on ``spec.axes``.

    The internal step is the output time spacing divided by ``50 * oversample``.
    The grid points ``x_min + i dx`` (``i < nx``) are one period of length
    ``nx * dx``.
    """
    if oversample < 1:
        raise ValueError("oversample must be a positive integer")
    x_axis, t_axis = spec.axes
    x = x_axis.points()
    ops = _SpectralOperators(spec)
    substeps = BASE_SUBSTEPS * oversample
    dt = t_axis.spacing / substeps
    integrator = ETDRK4(ops.linear, ops.nonlinear, dt)

    u0 = spec.initial_condition.evaluate(x)
    values = np.empty((x_axis.count, t_axis.count))
    values[:, 0] = u0
    v = np.fft.rfft(u0)
    times = t_axis.points()
    for j in tqdm(range(1, t_axis.count), desc=f"{spec.name.value} ETDRK4", disable=not progress):
        for n in range(substeps):
            v = integrator.step(v)
            if not np.all(np.isfinite(v)):
                raise SolverBlowupException(
                    f"{spec.name.value} integration produced non-finite values", times[j - 1] + (n + 1) * dt
                )
        values[:, j] = np.fft.irfft(v, n=x_axis.count)
    logger.info(
        f"solved {spec.name.value}: {x_axis.count}x{t_axis.count}, "
        f"dt={dt:.3g}, max|u|={np.max(np.abs(values)):.4g}"
    )
    return Field(x_axis, t_axis, values)


def mass(field: Field) -> np.ndarray:
    """Periodic-grid mass ``sum_i u(x_i, t) dx`` per time sample."""
    return field.values.sum(axis=0) * field.x_axis.spacing
