"""Command-line interface for UBIC PDE discovery."""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from ubic import __version__
from ubic.utils.exceptions import (
    ConfigException,
    FieldFormatException,
    StageException,
    UBICException,
)
from ubic.utils.helpers import derive_seed, parse_int_range, parse_range, read_json_file, stage_seed, write_json_file

from .config import DENOISERS, PDE_PRESETS, PRIORS, SOLVERS, TAU0_MODES, PipelineConfig, Settings
from .logger import setup_logger

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FALSE_EQUATION = 4

console = Console()
err_console = Console(stderr=True)


def exit_code_for(error: BaseException) -> int:
    """Exit code of a failure: 2 config or input, 3 numerical, 1 anything else."""
    cause = error.cause if isinstance(error, StageException) and error.cause is not None else error
    if isinstance(cause, (ConfigException, FieldFormatException, ValidationError)):
        return EXIT_CONFIG
    if isinstance(cause, UBICException) or isinstance(error, StageException):
        return EXIT_NUMERICAL
    return EXIT_OTHER


def _existing_file(value: str) -> str:
    if not Path(value).expanduser().is_file():
        raise argparse.ArgumentTypeError(f"file '{value}' does not exist")
    return value


# Output helpers

def _scores_table(report) -> Table:
    table = Table(title=f"UBIC scores (lambda_U = {report.lambda_u:.4g}, tau0 = {report.tau0:.4g})")
    for column in ("s", "logL", "BIC", "U", "UBIC", ""):
        table.add_column(column, justify="right")
    for k, record in enumerate(report.table.records()):
        u = "inf" if record["u"] is None else f"{record['u']:.4f}"
        ubic = "inf" if record["ubic"] is None else f"{record['ubic']:.2f}"
        mark = "✓" if k == report.chosen else ""
        table.add_row(str(record["s"]), f"{record['logL']:.2f}", f"{record['bic']:.2f}", u, ubic, mark)
    return table


def _coefficients_table(library, report) -> Table:
    table = Table(title="Selected equation: u_t = ...")
    table.add_column("term")
    table.add_column("mean", justify="right")
    table.add_column("sd", justify="right")
    inputs = report.table.inputs
    for j, mean, sd in zip(report.chosen_support, inputs.means[report.chosen], inputs.sds[report.chosen]):
        table.add_row(library.labels[j], f"{mean:.6g}", f"{sd:.3g}")
    return table


def _print_evaluation(evaluation) -> None:
    outcome = evaluation.percent_ce.to_dict()
    if evaluation.false_equation:
        console.print(f"[bold red]False equation[/bold red]: found {outcome['found']}, expected {outcome['expected']}")
    else:
        console.print(f"%CE = [bold]{outcome['percent_ce']:.4f}[/bold]")
    if evaluation.refined_percent_ce is not None:
        refined = evaluation.refined_percent_ce.to_dict()
        if refined["outcome"] == "ok":
            console.print(f"%CE after denoised weak-form refit = [bold]{refined['percent_ce']:.4f}[/bold]")
    console.print(
        f"R_BIC = {evaluation.r_bic:.2f}; argmin BIC s = {evaluation.bic_argmin_size}, "
        f"argmin UBIC s = {evaluation.ubic_argmin_size}"
    )


# Commands

def generate(args: argparse.Namespace, settings: Settings) -> int:
    """Solve a benchmark PDE and optionally add Gaussian noise."""
    from ubic.features.datagen import PdeSpec, solve
    from ubic.features.grid import NoiseSpec, add_noise, write_field, write_field_csv

    clean = solve(PdeSpec.preset(args.pde, args.nx, args.nt), args.oversample, settings.show_progress)
    noisy = add_noise(clean, NoiseSpec(epsilon_percent=args.epsilon, seed=stage_seed(args.seed, "noise")))
    write_field(noisy, args.out)
    if args.clean_out:
        write_field(clean, args.clean_out)
    if args.csv:
        write_field_csv(noisy, args.csv)
    console.print(f"wrote {args.out} ({noisy.shape[0]}x{noisy.shape[1]}, eps={args.epsilon}%)")
    return EXIT_OK


def denoise(args: argparse.Namespace, settings: Settings) -> int:
    """Denoise a field file."""
    from ubic.features.denoise import denoise as run_denoiser
    from ubic.features.grid import read_field, write_field

    params: Dict[str, Any] = {}
    if args.method == "rksvd":
        params = dict(p=args.patch, atoms=args.atoms, rho=args.rho, train_sparsity=args.sparsity,
                      iterations=args.iters, stride=args.stride,
                      seed=derive_seed(args.seed, "dictionary"), progress=settings.show_progress)
    elif args.method == "savgol":
        params = dict(window=args.window, polyorder=args.order)
    elif args.method == "svd":
        params = dict(rank=args.rank)
    field = run_denoiser(read_field(args.input), args.method, **params)
    write_field(field, args.out)
    console.print(f"wrote {args.out} ({args.method})")
    return EXIT_OK


def library(args: argparse.Namespace, settings: Settings) -> int:
    """Build the weak-form library of a field file."""
    from ubic.features.grid import read_field
    from ubic.features.weaklib import (
        SubdomainSpec,
        build,
        denoised_build,
        enumerate_terms,
        required_weight_power,
        write_library,
    )

    field = read_field(args.input)
    terms = enumerate_terms(args.max_power, args.max_deriv)
    power = args.weight_power if args.weight_power is not None else required_weight_power(terms)
    spec = SubdomainSpec.from_fractions(
        field, args.ndomains, args.hx_frac, args.ht_frac, stage_seed(args.seed, "subdomains"), power
    )
    if args.denoised_wf:
        result = denoised_build(field, terms, spec, args.alpha, args.intercept, settings.threads)
    else:
        result = build(field, terms, spec, args.intercept, settings.threads)
    write_library(result, args.out)
    console.print(f"wrote {args.out} (N_omega={result.n_samples}, N_q={result.n_candidates})")
    return EXIT_OK


def fit(args: argparse.Namespace, settings: Settings) -> int:
    """Best-subset sweep over support sizes."""
    from ubic.features.subset import sweep, write_sweep
    from ubic.features.weaklib import read_library

    lib = read_library(args.library)
    result = sweep(lib, args.max_support, args.solver, args.budget, settings.threads, settings.show_progress)
    write_sweep(result, args.out)
    table = Table(title=f"{args.solver} sweep")
    for column in ("s", "terms", "SSE"):
        table.add_column(column)
    for model in result.models:
        table.add_row(str(model.support_size), ", ".join(lib.labels[i] for i in model.support), f"{model.sse:.6g}")
    console.print(table)
    return EXIT_OK


def select(args: argparse.Namespace, settings: Settings) -> int:
    """Posterior uncertainty, UBIC scores and the tuned selection."""
    from ubic.features.bayes import uncertainty_sweep
    from ubic.features.select import score_curve_csv, score_inputs, select_model
    from ubic.features.subset import read_sweep
    from ubic.features.weaklib import read_library

    lib = read_library(args.library)
    models = read_sweep(args.sweep)
    models.check_library(lib)
    uncertainty = uncertainty_sweep(lib, models, args.prior, args.prior_scale, settings.threads)
    report = select_model(
        score_inputs(lib, uncertainty),
        args.tau0_mode,
        args.tau0,
        args.percentile,
        args.retry_percentile,
        args.n_delta,
        args.gamma,
    )
    write_json_file(args.out, report.to_dict())
    if args.csv:
        score_curve_csv(report.table, args.csv)
    console.print(_scores_table(report))
    console.print(_coefficients_table(lib, report))
    return EXIT_OK


def evaluate(args: argparse.Namespace, settings: Settings) -> int:
    """Score a selection report against a benchmark PDE."""
    from ubic.features.datagen import PdeSpec
    from ubic.features.evaluate import evaluate_support, support_from_report
    from ubic.features.weaklib import read_library

    lib = read_library(args.library)
    report = read_json_file(args.report)
    support, means = support_from_report(lib, report)
    refined = read_library(args.refined_library) if args.refined_library else None
    evaluation = evaluate_support(
        lib,
        support,
        means,
        [row["bic"] for row in report["scores"]],
        [row["s"] for row in report["scores"]],
        PdeSpec.preset(args.pde).truth(),
        refined,
    )
    if args.out:
        write_json_file(args.out, evaluation.to_dict())
    _print_evaluation(evaluation)
    return EXIT_FALSE_EQUATION if evaluation.false_equation else EXIT_OK


def pipeline(args: argparse.Namespace, settings: Settings) -> int:
    """Run generate -> noise -> denoise -> library -> fit -> select -> evaluate."""
    from .pipeline import run_pipeline

    overrides = {
        "pde": args.preset,
        "input_path": args.input,
        "seed": args.seed,
        "epsilon_percent": args.epsilon,
        "gamma": args.gamma,
        "tau0_sweep": args.tau0_sweep,
        "output_dir": args.output_dir,
        "denoiser": "none" if args.no_denoise else None,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        config = PipelineConfig.from_file(args.config, **overrides)
    else:
        config = PipelineConfig.create(**overrides)

    result = run_pipeline(config, settings)
    console.print(_scores_table(result.selection))
    console.print(_coefficients_table(result.library, result.selection))
    if result.evaluation is not None:
        _print_evaluation(result.evaluation)
    if result.tau0_sweep is not None:
        console.print(f"tau0 sweep success rate: {result.tau0_sweep.success_rate}")
    console.print(f"report: {result.artifacts['report']}")
    return EXIT_FALSE_EQUATION if result.false_equation else EXIT_OK


def tau0_sweep(args: argparse.Namespace, settings: Settings) -> int:
    """Selected support size per tau0 value, with the success rate."""
    from ubic.features.bayes import uncertainty_sweep
    from ubic.features.datagen import PdeSpec
    from ubic.features.select import score_inputs, tau0_sweep as run_sweep
    from ubic.features.subset import read_sweep
    from ubic.features.weaklib import read_library

    if (args.range is None) == (args.percentiles is None):
        raise ConfigException("give exactly one of --range or --percentiles")
    try:
        values = parse_range(args.range) if args.range else None
        levels = parse_int_range(args.percentiles) if args.percentiles else None
    except ValueError as e:
        raise ConfigException(str(e)) from e

    lib = read_library(args.library)
    models = read_sweep(args.sweep)
    models.check_library(lib)
    inputs = score_inputs(lib, uncertainty_sweep(lib, models, args.prior, threads=settings.threads))
    truth = PdeSpec.preset(args.pde).truth().support_in(lib) if args.pde else None
    result = run_sweep(inputs, values, levels, truth, args.n_delta, args.gamma)
    if args.out:
        write_json_file(args.out, result.to_dict())

    table = Table(title="tau0 sensitivity")
    for column in ("tau0", "percentile", "s*", "correct"):
        table.add_column(column, justify="right")
    for row in result.rows:
        table.add_row(
            f"{row['tau0']:.4g}",
            "" if row["percentile"] is None else f"{row['percentile']:g}",
            str(row["chosen_support_size"]),
            str(row.get("correct", "")),
        )
    console.print(table)
    console.print(f"success rate: {result.success_rate}")
    return EXIT_OK


# Parser

def build_parser() -> argparse.ArgumentParser:
    """The ``ubic`` parser with one subcommand per stage plus ``pipeline``."""
    parser = argparse.ArgumentParser(
        prog="ubic",
        description="Discover governing PDEs from noisy data with the uncertainty-penalized BIC",
    )
    parser.add_argument("--version", action="version", version=f"ubic {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    common.add_argument("--debug", action="store_true", help="Verbose logs and rich tracebacks")

    commands = parser.add_subparsers(dest="command", required=True)
    pdes = sorted(PDE_PRESETS)

    p = commands.add_parser("generate", parents=[common], help=generate.__doc__)
    p.add_argument("--pde", choices=pdes, required=True)
    p.add_argument("--nx", type=int, default=None, help="Override the preset spatial grid count")
    p.add_argument("--nt", type=int, default=None, help="Override the preset temporal grid count")
    p.add_argument("--oversample", type=int, default=1, help="Extra internal steps per output step")
    p.add_argument("--epsilon", type=float, default=0.0, help="Noise level in percent of sd(u)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="Noisy field file")
    p.add_argument("--clean-out", default=None, help="Also write the clean field")
    p.add_argument("--csv", default=None, help="CSV copy of the output field")
    p.set_defaults(handler=generate)

    p = commands.add_parser("denoise", parents=[common], help=denoise.__doc__)
    p.add_argument("--input", type=_existing_file, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=DENOISERS, default="rksvd")
    p.add_argument("--patch", type=int, default=8, help="K-SVD patch size p")
    p.add_argument("--rho", type=float, default=0.05, help="K-SVD code regularization")
    p.add_argument("--atoms", type=int, default=None, help="Dictionary size (default min(2p^2, patches / 10))")
    p.add_argument("--stride", type=int, default=None, help="Patch stride (default max(1, p // 6))")
    p.add_argument("--iters", type=int, default=30, help="K-SVD iterations")
    p.add_argument("--sparsity", type=int, default=1, help="Training sparsity")
    p.add_argument("--window", type=int, default=11, help="Savitzky-Golay window")
    p.add_argument("--order", type=int, default=2, help="Savitzky-Golay polynomial order")
    p.add_argument("--rank", type=int, default=10, help="Truncated SVD rank")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=denoise)

    p = commands.add_parser("library", parents=[common], help=library.__doc__)
    p.add_argument("--input", type=_existing_file, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-power", type=int, default=2)
    p.add_argument("--max-deriv", type=int, default=2)
    p.add_argument("--ndomains", type=int, default=500)
    p.add_argument("--hx-frac", type=float, default=0.1)
    p.add_argument("--ht-frac", type=float, default=0.1)
    p.add_argument("--weight-power", type=int, default=None, help="Weight exponent P (default max(2, max d2))")
    p.add_argument("--intercept", action="store_true", help="Add the constant column")
    p.add_argument("--denoised-wf", action="store_true", help="Smooth each subdomain before quadrature")
    p.add_argument("--alpha", type=int, default=5, help="Savitzky-Golay window of --denoised-wf")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=library)

    p = commands.add_parser("fit", parents=[common], help=fit.__doc__)
    p.add_argument("--library", type=_existing_file, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--solver", choices=SOLVERS, default="exhaustive")
    p.add_argument("--max-support", type=int, default=None, help="Largest support size (default N_q)")
    p.add_argument("--budget", type=int, default=1_000_000, help="Exhaustive subset budget")
    p.set_defaults(handler=fit)

    p = commands.add_parser("select", parents=[common], help=select.__doc__)
    p.add_argument("--library", type=_existing_file, required=True)
    p.add_argument("--sweep", type=_existing_file, required=True)
    p.add_argument("--out", required=True, help="Selection report JSON")
    p.add_argument("--csv", default=None, help="Score curve CSV")
    p.add_argument("--prior", choices=PRIORS, default="ols")
    p.add_argument("--prior-scale", type=float, default=1.0)
    p.add_argument("--tau0-mode", choices=TAU0_MODES, default="fixed")
    p.add_argument("--tau0", type=float, default=0.02)
    p.add_argument("--percentile", type=float, default=75.0)
    p.add_argument("--retry-percentile", type=float, default=80.0)
    p.add_argument("--n-delta", type=int, default=3)
    p.add_argument("--gamma", type=float, default=None, help="Penalty scale (default log N_omega)")
    p.set_defaults(handler=select)

    p = commands.add_parser("evaluate", parents=[common], help=evaluate.__doc__)
    p.add_argument("--library", type=_existing_file, required=True)
    p.add_argument("--report", type=_existing_file, required=True)
    p.add_argument("--pde", choices=pdes, required=True, help="Ground truth to score against")
    p.add_argument("--refined-library", type=_existing_file, default=None,
                   help="Denoised weak-form library to refit the chosen support on")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=evaluate)

    p = commands.add_parser("pipeline", parents=[common], help=pipeline.__doc__)
    p.add_argument("--preset", choices=pdes, default=None, help="Built-in benchmark PDE")
    p.add_argument("--config", type=_existing_file, default=None, help="Flat key=value config file")
    p.add_argument("--input", type=_existing_file, default=None, help="Field file instead of a preset")
    p.add_argument("--no-denoise", action="store_true", help="Skip the denoising stage")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None, help="Noise level in percent of sd(u)")
    p.add_argument("--gamma", type=float, default=None, help="Penalty scale (default log N_omega)")
    p.add_argument("--tau0-sweep", default=None, help="Also sweep tau0 over start:stop:count")
    p.add_argument("--output-dir", default=None, help="Artifact directory")
    p.set_defaults(handler=pipeline)

    p = commands.add_parser("tau0-sweep", parents=[common], help=tau0_sweep.__doc__)
    p.add_argument("--library", type=_existing_file, required=True)
    p.add_argument("--sweep", type=_existing_file, required=True)
    p.add_argument("--range", default=None, help="Raw tau0 values as start:stop:count")
    p.add_argument("--percentiles", default=None, help="Percentiles as start:stop:step, e.g. 55:100:5")
    p.add_argument("--pde", choices=pdes, default=None, help="Truth for the success rate")
    p.add_argument("--prior", choices=PRIORS, default="ols")
    p.add_argument("--n-delta", type=int, default=3)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=tau0_sweep)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, set up logging and run one command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help, --version and usage errors
        return int(e.code or 0)

    overrides: Dict[str, Any] = {}
    if args.log_level:
        overrides["log_level"] = args.log_level
    if args.debug:
        overrides.update(debug=True, log_level="DEBUG")
    try:
        settings = Settings(**overrides)
    except ValueError as e:
        err_console.print(f"[red]invalid settings:[/red] {e}")
        return EXIT_CONFIG
    setup_logger(settings)

    try:
        return args.handler(args, settings)
    except (UBICException, ValueError) as e:
        err_console.print(f"[red]error:[/red] {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
