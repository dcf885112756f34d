"""End-to-end discovery pipeline: data -> noise -> denoise -> library -> subsets -> UBIC -> report."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, TypeVar

from ubic.features.bayes import UncertaintySweep, uncertainty_sweep
from ubic.features.datagen import PdeSpec, solve
from ubic.features.denoise import denoise
from ubic.features.evaluate import EvaluationReport, TruthSpec, evaluate
from ubic.features.grid import Field, NoiseSpec, add_noise, read_field, relative_error, write_field
from ubic.features.select import (
    SelectionReport,
    Tau0SweepResult,
    score_curve_csv,
    score_inputs,
    select_model,
    tau0_sweep,
)
from ubic.features.subset import SubsetSweep, sweep, write_sweep
from ubic.features.weaklib import (
    SubdomainSpec,
    WeakLibrary,
    build,
    denoised_build,
    enumerate_terms,
    required_weight_power,
    write_library,
)
from ubic.utils.exceptions import ConfigException, FieldFormatException, StageException, UBICException
from ubic.utils.helpers import derive_seed, ensure_directory, parse_range, stage_seed, write_json_file

from .config import PipelineConfig, Settings
from .logger import StageTimer, get_logger

T = TypeVar("T")


@dataclass
class PipelineResult:
    config: PipelineConfig
    selection: SelectionReport
    library: WeakLibrary
    sweep: SubsetSweep
    uncertainty: UncertaintySweep
    evaluation: Optional[EvaluationReport] = None
    tau0_sweep: Optional[Tau0SweepResult] = None
    fields: Dict[str, Field] = field(default_factory=dict)
    errors: Dict[str, float] = field(default_factory=dict)
    artifacts: Dict[str, Path] = field(default_factory=dict)

    @property
    def false_equation(self) -> bool:
        return self.evaluation is not None and self.evaluation.false_equation

    def to_dict(self) -> Dict[str, Any]:
        """Report JSON; no timestamps or paths outside the config, so reruns match byte for byte."""
        data = {
            "config": self.config.to_dict(),
            "selection": self.selection.to_dict(),
            "chosen_terms": [self.library.labels[i] for i in self.selection.chosen_support],
            "field_errors": self.errors,
        }
        if self.evaluation is not None:
            data["evaluation"] = self.evaluation.to_dict()
        if self.tau0_sweep is not None:
            data["tau0_sweep"] = self.tau0_sweep.to_dict()
        return data


class DiscoveryPipeline:
    """Runs every stage of one configured discovery and writes its artifacts."""

    def __init__(self, config: PipelineConfig, settings: Optional[Settings] = None):
        self.config = config.resolved()
        self.settings = settings or Settings()
        self.logger = get_logger(__name__)
        self.output_dir = Path(self.config.output_dir).expanduser()
        self.artifacts: Dict[str, Path] = {}

    def _stage(self, name: str, func: Callable[[], T]) -> T:
        with StageTimer(name):
            try:
                return func()
            except (ConfigException, FieldFormatException, StageException):
                raise
            except UBICException as e:
                raise StageException(name, e) from e
            except (ValueError, ArithmeticError, MemoryError) as e:
                raise StageException(name, e) from e

    def _write(self, name: str, writer: Callable[[Path], Path], filename: str) -> None:
        self.artifacts[name] = writer(self.output_dir / filename)

    # Stages

    def _load(self):
        cfg = self.config
        if cfg.pde is not None:
            spec = PdeSpec.preset(cfg.pde, cfg.nx, cfg.nt)
            clean = solve(spec, cfg.oversample, self.settings.show_progress)
            return clean, spec.truth()
        return read_field(cfg.input_path), None

    def _noise(self, clean: Field) -> Field:
        spec = NoiseSpec(epsilon_percent=self.config.epsilon_percent, seed=stage_seed(self.config.seed, "noise"))
        return add_noise(clean, spec)

    def _denoise(self, noisy: Field) -> Field:
        cfg = self.config
        if cfg.denoiser == "rksvd":
            params = {
                "p": cfg.patch_size,
                "atoms": cfg.atoms,
                "rho": cfg.rho,
                "train_sparsity": cfg.train_sparsity,
                "iterations": cfg.ksvd_iterations,
                "stride": cfg.patch_stride,
                "seed": derive_seed(cfg.seed, "dictionary"),
                "progress": self.settings.show_progress,
            }
        elif cfg.denoiser == "savgol":
            params = {"window": cfg.savgol_window, "polyorder": cfg.savgol_order}
        elif cfg.denoiser == "svd":
            params = {"rank": cfg.svd_rank}
        else:
            params = {}
        return denoise(noisy, cfg.denoiser, **params)

    def _library(self, state: Field):
        cfg = self.config
        terms = enumerate_terms(cfg.max_power, cfg.max_deriv)
        power = cfg.weight_power if cfg.weight_power is not None else required_weight_power(terms)
        spec = SubdomainSpec.from_fractions(
            state, cfg.n_domains, cfg.hx_frac, cfg.ht_frac, stage_seed(cfg.seed, "subdomains"), power
        )
        library = build(state, terms, spec, cfg.include_intercept, self.settings.threads)
        refined = None
        if cfg.refine_alpha is not None:
            refined = denoised_build(state, terms, spec, cfg.refine_alpha, cfg.include_intercept, self.settings.threads)
        return library, refined

    def run(self) -> PipelineResult:
        cfg = self.config
        threads = self.settings.threads
        self.logger.info(f"pipeline: {cfg.pde or cfg.input_path}, seed={cfg.seed}, output={self.output_dir}")
        ensure_directory(self.output_dir)

        fields: Dict[str, Field] = {}
        clean, truth = self._stage("generate", self._load)
        if cfg.pde is not None:
            fields["clean"] = clean
            self._write("clean", lambda p: write_field(clean, p), "clean.field")
        noisy = self._stage("noise", lambda: self._noise(clean))
        fields["noisy"] = noisy
        self._write("noisy", lambda p: write_field(noisy, p), "noisy.field")

        state = self._stage("denoise", lambda: self._denoise(noisy))
        fields["denoised"] = state
        self._write("denoised", lambda p: write_field(state, p), "denoised.field")

        errors: Dict[str, float] = {}
        if cfg.pde is not None and cfg.epsilon_percent > 0:
            errors["noise_relative_error"] = relative_error(noisy, clean)
            errors["denoised_relative_error"] = relative_error(state, clean)
            self.logger.info(
                f"relative error: noisy {errors['noise_relative_error']:.4f}, "
                f"denoised {errors['denoised_relative_error']:.4f}"
            )

        library, refined = self._stage("library", lambda: self._library(state))
        self._write("library", lambda p: write_library(library, p), "library.bin")

        models = self._stage(
            "subsets",
            lambda: sweep(library, cfg.max_support, cfg.solver, cfg.subset_budget, threads, self.settings.show_progress),
        )
        self._write("sweep", lambda p: write_sweep(models, p), "sweep.json")

        uncertainty = self._stage(
            "posterior", lambda: uncertainty_sweep(library, models, cfg.prior, cfg.prior_scale, threads)
        )
        inputs = score_inputs(library, uncertainty)
        selection = self._stage(
            "select",
            lambda: select_model(
                inputs,
                cfg.tau0_mode,
                cfg.tau0,
                cfg.tau0_percentile,
                cfg.tau0_retry_percentile,
                cfg.n_delta,
                cfg.gamma,
            ),
        )
        self._write("scores", lambda p: score_curve_csv(selection.table, p), "scores.csv")

        evaluation = None
        if truth is not None:
            evaluation = self._stage("evaluate", lambda: evaluate(library, selection, truth, refined))

        sweep_result = None
        if cfg.tau0_sweep:
            sweep_result = self._stage("tau0-sweep", lambda: self._tau0_sweep(inputs, library, truth))

        result = PipelineResult(
            config=cfg,
            selection=selection,
            library=library,
            sweep=models,
            uncertainty=uncertainty,
            evaluation=evaluation,
            tau0_sweep=sweep_result,
            fields=fields,
            errors=errors,
        )
        self._write("report", lambda p: write_json_file(p, result.to_dict()), "report.json")
        result.artifacts = dict(self.artifacts)
        return result

    def _tau0_sweep(self, inputs, library: WeakLibrary, truth: Optional[TruthSpec]) -> Tau0SweepResult:
        try:
            values = parse_range(self.config.tau0_sweep)
        except ValueError as e:
            raise ConfigException(f"tau0_sweep: {e}") from e
        truth_support = truth.support_in(library) if truth is not None else None
        return tau0_sweep(inputs, tau0_values=values, truth_support=truth_support,
                          n_delta=self.config.n_delta, gamma=self.config.gamma)


def run_pipeline(config: PipelineConfig, settings: Optional[Settings] = None) -> PipelineResult:
    """Run the full pipeline for ``config`` and return its result."""
    return DiscoveryPipeline(config, settings).run()
