"""Field data model, field file I/O and the Gaussian noise-injection model."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from ubic.core.logger import get_logger
from ubic.utils.exceptions import FieldFormatException
from ubic.utils.helpers import PRNG_NAME, ensure_directory, make_rng

logger = get_logger(__name__)

LAYOUT = "x-major"
DTYPE = "f64le"


class Axis(BaseModel):
    """Uniformly sampled axis: ``count`` points from ``min`` to ``max`` inclusive."""

    model_config = ConfigDict(frozen=True)

    min: float
    max: float
    count: int

    @field_validator("count")
    @classmethod
    def validate_count(cls, v):
        if v < 2:
            raise ValueError("axis count must be at least 2")
        return v

    @model_validator(mode="after")
    def validate_extent(self):
        if not (np.isfinite(self.min) and np.isfinite(self.max)):
            raise ValueError("axis bounds must be finite")
        if not self.max > self.min:
            raise ValueError("axis max must be greater than min")
        return self

    @property
    def spacing(self) -> float:
        return (self.max - self.min) / (self.count - 1)

    @property
    def extent(self) -> float:
        return self.max - self.min

    def points(self) -> np.ndarray:
        """Sample locations of the axis."""
        return self.min + self.spacing * np.arange(self.count)


class NoiseSpec(BaseModel):
    """Noise level in percent of the field's standard deviation, plus its seed."""

    model_config = ConfigDict(frozen=True)

    epsilon_percent: float = 0.0
    seed: int = 0

    @field_validator("epsilon_percent")
    @classmethod
    def validate_epsilon(cls, v):
        if not np.isfinite(v) or v < 0:
            raise ValueError("epsilon_percent must be finite and non-negative")
        return v

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v):
        if not 0 <= v < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        return v


@dataclass(frozen=True, eq=False)
class Field:
    """Real-valued state on a rectangular space-time grid.

    ``values[i, j]`` is the sample at ``x_axis.points()[i]``, ``t_axis.points()[j]``.
    The values array is read-only once the field is constructed.
    """

    x_axis: Axis
    t_axis: Axis
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.shape != (self.x_axis.count, self.t_axis.count):
            raise FieldFormatException(
                f"values shape {values.shape} does not match axes "
                f"({self.x_axis.count}, {self.t_axis.count})"
            )
        if not np.all(np.isfinite(values)):
            raise FieldFormatException("field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def x(self) -> np.ndarray:
        return self.x_axis.points()

    @property
    def t(self) -> np.ndarray:
        return self.t_axis.points()

    def with_values(self, values: np.ndarray) -> "Field":
        """New field on the same axes."""
        return Field(self.x_axis, self.t_axis, values)

    def header(self) -> Dict[str, Any]:
        return {
            "nx": self.x_axis.count,
            "nt": self.t_axis.count,
            "xmin": self.x_axis.min,
            "xmax": self.x_axis.max,
            "tmin": self.t_axis.min,
            "tmax": self.t_axis.max,
            "layout": LAYOUT,
            "dtype": DTYPE,
            "prng": PRNG_NAME,
        }


def add_noise(field: Field, spec: NoiseSpec) -> Field:
    """Add i.i.d. Gaussian noise scaled to ``epsilon_percent`` of the field's sd.

    The sd is the population (divide-by-N) standard deviation over every grid
    value. The same (field, spec) always yields the same realization.
    """
    if spec.epsilon_percent == 0:
        return field
    sigma_u = float(np.std(field.values))
    scale = spec.epsilon_percent * sigma_u / 100.0
    rng = make_rng(spec.seed)
    noise = scale * rng.standard_normal(field.shape)
    logger.debug(f"noise: eps={spec.epsilon_percent}% sigma_u={sigma_u:.6g} seed={spec.seed}")
    return field.with_values(field.values + noise)


def relative_error(estimate: Union[Field, np.ndarray], reference: Union[Field, np.ndarray]) -> float:
    """Frobenius-norm relative error ``||estimate - reference|| / ||reference||``."""
    a = estimate.values if isinstance(estimate, Field) else np.asarray(estimate)
    b = reference.values if isinstance(reference, Field) else np.asarray(reference)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


class _FieldHeader(BaseModel):
    model_config = ConfigDict(extra="ignore")

    nx: int
    nt: int
    xmin: float
    xmax: float
    tmin: float
    tmax: float
    layout: str
    dtype: str
    prng: str = PRNG_NAME

    @model_validator(mode="after")
    def validate_format(self):
        if self.layout != LAYOUT:
            raise ValueError(f"unsupported layout '{self.layout}'")
        if self.dtype != DTYPE:
            raise ValueError(f"unsupported dtype '{self.dtype}'")
        return self


def read_header_and_payload(path: Union[str, Path]):
    """Split a UBIC binary file into its JSON header and float64 payload."""
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FieldFormatException(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FieldFormatException(f"{path}: malformed header: {e}") from e
    if not isinstance(header, dict):
        raise FieldFormatException(f"{path}: header must be a JSON object")
    body = raw[newline + 1:]
    if len(body) % 8 != 0:
        raise FieldFormatException(f"{path}: payload is not a whole number of float64 values")
    payload = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(payload)):
        raise FieldFormatException(f"{path}: payload contains non-finite values")
    return header, payload


def write_header_and_payload(path: Union[str, Path], header: Dict[str, Any], payload: np.ndarray) -> Path:
    """Write a JSON header line followed by little-endian float64 values."""
    path = Path(path)
    ensure_directory(path.parent)
    line = json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n"
    with open(path, "wb") as f:
        f.write(line)
        f.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())
    return path


def read_field(path: Union[str, Path]) -> Field:
    """Read a field file (JSON header line + x-major float64 payload)."""
    header, payload = read_header_and_payload(path)
    try:
        meta = _FieldHeader(**header)
    except ValidationError as e:
        raise FieldFormatException(f"{path}: malformed header: {e}") from e
    expected = meta.nx * meta.nt
    if payload.size != expected:
        raise FieldFormatException(
            f"{path}: header claims {meta.nx}x{meta.nt} = {expected} values, payload has {payload.size}"
        )
    try:
        x_axis = Axis(min=meta.xmin, max=meta.xmax, count=meta.nx)
        t_axis = Axis(min=meta.tmin, max=meta.tmax, count=meta.nt)
    except ValidationError as e:
        raise FieldFormatException(f"{path}: invalid axes: {e}") from e
    return Field(x_axis, t_axis, payload.reshape(meta.nx, meta.nt))


def write_field(field: Field, path: Union[str, Path]) -> Path:
    """Write a field file; reading it back reproduces the values bit for bit."""
    return write_header_and_payload(path, field.header(), field.values.ravel(order="C"))


def write_field_csv(field: Field, path: Union[str, Path]) -> Path:
    """CSV export for inspection: header row of t samples, one row per x sample."""
    path = Path(path)
    ensure_directory(path.parent)
    table = np.empty((field.shape[0] + 1, field.shape[1] + 1))
    table[0, 0] = np.nan
    table[0, 1:] = field.t
    table[1:, 0] = field.x
    table[1:, 1:] = field.values
    np.savetxt(path, table, delimiter=",", fmt="%.17g")
    return path
