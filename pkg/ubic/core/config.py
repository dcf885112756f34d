"""Configuration settings for UBIC"""

from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ubic.utils.exceptions import ConfigException


class Settings(BaseSettings):
    """Application settings using pydantic-settings."""

    # Core settings
    app_name: str = "UBIC PDE Discovery"
    app_version: str = "0.1.0"
    debug: bool = False
    log_level: str = "INFO"
    log_dir: str = "./logs"
    data_dir: str = "./data"
    log_to_file: bool = True

    # Performance settings
    threads: int = 1
    show_progress: bool = False

    # Environment variables configuration
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="UBIC_",
        extra="ignore"
    )

    # Validators
    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        allowed_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed_levels:
            raise ValueError(f"Log level must be one of {allowed_levels}")
        return v.upper()

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v):
        if v < 1:
            raise ValueError("threads must be at least 1")
        return v

    def get_log_dir(self) -> Path:
        """Get the log directory as an absolute path."""
        return Path(self.log_dir).expanduser().absolute()


# Per-dataset defaults: K-SVD patch size and rho, candidate grammar bounds, noise level.
PDE_PRESETS: Dict[str, Dict[str, Any]] = {
    "burgers": {"patch_size": 8, "rho": 0.05, "max_power": 2, "max_deriv": 2, "epsilon_percent": 30.0},
    "kdv": {"patch_size": 25, "rho": 0.01, "max_power": 2, "max_deriv": 4, "epsilon_percent": 30.0},
    "ks": {"patch_size": 25, "rho": 0.01, "max_power": 2, "max_deriv": 4, "epsilon_percent": 30.0},
}

DENOISERS = ("rksvd", "savgol", "svd", "none")
SOLVERS = ("exhaustive", "frols", "refine")
PRIORS = ("ols", "zero")
TAU0_MODES = ("fixed", "percentile")


class PipelineConfig(BaseModel):
    """Every pipeline key as a flat field.

    A config file is a flat ``key=value`` text file; keys are the field names
    below (case-insensitive). ``None`` means "use the preset or derived default".
    """

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # Data source: a built-in PDE or a field file
    pde: Optional[str] = None
    input_path: Optional[str] = None
    nx: Optional[int] = None
    nt: Optional[int] = None
    oversample: int = 1

    # Noise and seeding
    epsilon_percent: Optional[float] = None
    seed: int = 0

    # Denoising
    denoiser: str = "rksvd"
    patch_size: Optional[int] = None
    rho: Optional[float] = None
    atoms: Optional[int] = None
    patch_stride: Optional[int] = None
    ksvd_iterations: int = 30
    train_sparsity: int = 1
    savgol_window: int = 11
    savgol_order: int = 2
    svd_rank: int = 10

    # Weak-form library
    max_power: Optional[int] = None
    max_deriv: Optional[int] = None
    n_domains: int = 500
    hx_frac: float = 0.1
    ht_frac: float = 0.1
    weight_power: Optional[int] = None
    include_intercept: bool = False
    refine_alpha: Optional[int] = None

    # Best-subset search
    solver: str = "exhaustive"
    max_support: Optional[int] = None
    subset_budget: int = 1_000_000

    # Posterior and selection
    prior: str = "ols"
    prior_scale: float = 1.0
    tau0_mode: str = "fixed"
    tau0: float = 0.02
    tau0_percentile: float = 75.0
    tau0_retry_percentile: float = 80.0
    n_delta: int = 3
    gamma: Optional[float] = None
    tau0_sweep: Optional[str] = None

    # Output
    output_dir: str = "./runs/latest"

    @field_validator("pde")
    @classmethod
    def validate_pde(cls, v):
        if v is None:
            return v
        if v.lower() not in PDE_PRESETS:
            raise ValueError(f"pde must be one of {sorted(PDE_PRESETS)}")
        return v.lower()

    @field_validator("denoiser")
    @classmethod
    def validate_denoiser(cls, v):
        if v.lower() not in DENOISERS:
            raise ValueError(f"denoiser must be one of {list(DENOISERS)}")
        return v.lower()

    @field_validator("solver")
    @classmethod
    def validate_solver(cls, v):
        if v.lower() not in SOLVERS:
            raise ValueError(f"solver must be one of {list(SOLVERS)}")
        return v.lower()

    @field_validator("prior")
    @classmethod
    def validate_prior(cls, v):
        if v.lower() not in PRIORS:
            raise ValueError(f"prior must be one of {list(PRIORS)}")
        return v.lower()

    @field_validator("tau0_mode")
    @classmethod
    def validate_tau0_mode(cls, v):
        if v.lower() not in TAU0_MODES:
            raise ValueError(f"tau0_mode must be one of {list(TAU0_MODES)}")
        return v.lower()

    @field_validator("savgol_window")
    @classmethod
    def validate_window(cls, v):
        if v < 3 or v % 2 == 0:
            raise ValueError("savgol_window must be an odd integer >= 3")
        return v

    @field_validator("refine_alpha")
    @classmethod
    def validate_alpha(cls, v):
        if v is not None and (v < 1 or v % 2 == 0):
            raise ValueError("refine_alpha must be an odd positive integer")
        return v

    @field_validator("rho", "epsilon_percent")
    @classmethod
    def validate_non_negative(cls, v):
        if v is not None and v < 0:
            raise ValueError("value must be non-negative")
        return v

    @field_validator("tau0", "prior_scale", "hx_frac", "ht_frac")
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError("value must be positive")
        return v

    @field_validator("tau0_percentile", "tau0_retry_percentile")
    @classmethod
    def validate_percentile(cls, v):
        if not 0 < v <= 100:
            raise ValueError("percentile must lie in (0, 100]")
        return v

    @field_validator("oversample", "ksvd_iterations", "train_sparsity", "n_domains",
                     "svd_rank", "n_delta", "subset_budget")
    @classmethod
    def validate_positive_int(cls, v):
        if v < 1:
            raise ValueError("value must be a positive integer")
        return v

    @model_validator(mode="after")
    def validate_source(self):
        if (self.pde is None) == (self.input_path is None):
            raise ValueError("exactly one of 'pde' or 'input_path' must be given")
        if self.input_path is not None and not Path(self.input_path).expanduser().exists():
            raise ValueError(f"input_path '{self.input_path}' does not exist")
        if self.savgol_order >= self.savgol_window:
            raise ValueError("savgol_order must be smaller than savgol_window")
        return self

    @classmethod
    def from_file(cls, path: Union[str, Path], **overrides: Any) -> "PipelineConfig":
        """Load a flat key=value config file; ``overrides`` win over file values."""
        path = Path(path)
        if not path.exists():
            raise ConfigException(f"Config file '{path}' does not exist")
        values: Dict[str, Any] = {
            key.strip().lower(): value
            for key, value in dotenv_values(path).items()
            if value is not None and value != ""
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.create(**values)

    @classmethod
    def create(cls, **values: Any) -> "PipelineConfig":
        """Build a config, turning validation errors into ConfigException."""
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigException(str(e)) from e

    def resolved(self) -> "PipelineConfig":
        """Return a copy with preset and derived defaults filled in."""
        preset = PDE_PRESETS.get(self.pde or "", {})
        values = self.model_dump()
        defaults = {
            "patch_size": preset.get("patch_size", 8),
            "rho": preset.get("rho", 0.05),
            "max_power": preset.get("max_power", 2),
            "max_deriv": preset.get("max_deriv", 2),
            "epsilon_percent": preset.get("epsilon_percent", 0.0),
        }
        for key, default in defaults.items():
            if values[key] is None:
                values[key] = default
        return type(self).create(**values)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization."""
        return self.model_dump()
