"""End-to-end discovery on the full benchmark grids (``pytest -m slow``)."""

import pytest

from ubic.core.config import PipelineConfig, Settings
from ubic.core.pipeline import run_pipeline
from ubic.features.evaluate import PercentCE

pytestmark = pytest.mark.slow

NOISY_SEEDS = [0, 1, 2]


def _run(output_dir, settings, **values):
    values.setdefault("output_dir", str(output_dir))
    return run_pipeline(PipelineConfig.create(**values), settings)


@pytest.fixture(scope="module")
def run_settings():
    return Settings(log_to_file=False, threads=1)


@pytest.fixture(scope="module")
def noisy_burgers(tmp_path_factory, run_settings):
    """30% noise Burgers runs with K-SVD denoising (p=8, rho=0.05), one per noise seed."""
    return {
        seed: _run(tmp_path_factory.mktemp(f"burgers{seed}"), run_settings,
                   pde="burgers", epsilon_percent=30.0, denoiser="rksvd", patch_size=8, rho=0.05,
                   train_sparsity=1, seed=seed)
        for seed in NOISY_SEEDS
    }


@pytest.mark.parametrize("seed", NOISY_SEEDS)
def test_noisy_burgers_recovers_equation(noisy_burgers, seed):
    evaluation = noisy_burgers[seed].evaluation
    assert sorted(evaluation.chosen_terms) == ["u_xx", "uu_x"]
    assert isinstance(evaluation.percent_ce, PercentCE)
    assert evaluation.percent_ce.value <= 5.0


@pytest.mark.parametrize("seed", NOISY_SEEDS)
def test_noisy_burgers_bic_overshoots(noisy_burgers, seed):
    evaluation = noisy_burgers[seed].evaluation
    assert evaluation.ubic_argmin_size == 2
    assert evaluation.bic_argmin_size > evaluation.ubic_argmin_size


@pytest.mark.parametrize("seed", NOISY_SEEDS)
def test_noisy_burgers_uncertainty_minimum_at_two(noisy_burgers, seed):
    uncertainty = noisy_burgers[seed].uncertainty
    best = int(uncertainty.u.argmin())
    assert uncertainty.support_sizes[best] == 2
    assert uncertainty.u[best] == pytest.approx(1.0)


def test_denoising_sharpens_bic_reduction(noisy_burgers, tmp_path, run_settings):
    seed = NOISY_SEEDS[0]
    raw = _run(tmp_path / "raw", run_settings, pde="burgers", epsilon_percent=30.0, denoiser="none", seed=seed)
    assert noisy_burgers[seed].evaluation.r_bic < raw.evaluation.r_bic


def test_noisy_burgers_denoising_reduces_field_error(noisy_burgers):
    errors = noisy_burgers[NOISY_SEEDS[0]].errors
    assert errors["denoised_relative_error"] < 0.5 * errors["noise_relative_error"]


def test_noisy_burgers_generalized_gamma(tmp_path, run_settings):
    result = _run(tmp_path, run_settings, pde="burgers", epsilon_percent=30.0, gamma=1.0, seed=NOISY_SEEDS[0])
    assert sorted(result.evaluation.chosen_terms) == ["u_xx", "uu_x"]


def test_noisy_kdv(tmp_path, run_settings):
    result = _run(tmp_path, run_settings, pde="kdv", epsilon_percent=30.0, denoiser="rksvd",
                  patch_size=25, rho=0.01, seed=0)
    evaluation = result.evaluation
    assert sorted(evaluation.chosen_terms) == ["u_xxx", "uu_x"]
    assert evaluation.percent_ce.value <= 15.0


def test_noisy_ks(tmp_path, run_settings):
    result = _run(tmp_path, run_settings, pde="ks", epsilon_percent=30.0, denoiser="rksvd",
                  patch_size=25, rho=0.01, max_support=6, seed=0)
    evaluation = result.evaluation
    assert sorted(evaluation.chosen_terms) == ["u_xx", "u_xxxx", "uu_x"]
    assert evaluation.percent_ce.value <= 5.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_clean_burgers(tmp_path, run_settings, seed):
    result = _run(tmp_path, run_settings, pde="burgers", epsilon_percent=0.0, denoiser="none", seed=seed)
    evaluation = result.evaluation
    assert sorted(evaluation.chosen_terms) == ["u_xx", "uu_x"]
    assert evaluation.percent_ce.value <= 5.0
    assert result.uncertainty.support_sizes[int(result.uncertainty.u.argmin())] == 2


def test_clean_kdv(tmp_path, run_settings):
    result = _run(tmp_path, run_settings, pde="kdv", epsilon_percent=0.0, denoiser="none")
    assert sorted(result.evaluation.chosen_terms) == ["u_xxx", "uu_x"]
    assert result.evaluation.percent_ce.value <= 5.0
