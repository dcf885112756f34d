import numpy as np
import pytest

from ubic.core.config import PipelineConfig
from ubic.core.pipeline import DiscoveryPipeline, run_pipeline
from ubic.features.datagen import PdeSpec, solve
from ubic.features.grid import read_field, write_field
from ubic.features.subset import read_sweep
from ubic.features.weaklib import read_library
from ubic.utils.exceptions import StageException
from ubic.utils.helpers import read_json_file


def _config(tmp_path, **overrides):
    values = {
        "pde": "burgers",
        "nx": 128,
        "nt": 41,
        "epsilon_percent": 0.0,
        "denoiser": "none",
        "n_domains": 100,
        "max_support": 3,
        "seed": 11,
        "output_dir": str(tmp_path / "run"),
    }
    values.update(overrides)
    return PipelineConfig.create(**values)


class TestPipeline:
    def test_artifacts(self, tmp_path, settings):
        result = run_pipeline(_config(tmp_path), settings)
        assert set(result.artifacts) == {"clean", "noisy", "denoised", "library", "sweep", "scores", "report"}
        for path in result.artifacts.values():
            assert path.exists()

        assert np.array_equal(read_field(result.artifacts["clean"]).values, result.fields["clean"].values)
        library = read_library(result.artifacts["library"])
        assert np.array_equal(library.phi, result.library.phi)
        assert read_sweep(result.artifacts["sweep"]).support_sizes == [1, 2, 3]

        report = read_json_file(result.artifacts["report"])
        assert report["config"]["patch_size"] == 8
        assert report["selection"]["chosen_support_size"] == result.selection.chosen_support_size
        assert "evaluation" in report
        assert report["field_errors"] == {}

    def test_report_is_reproducible(self, tmp_path, settings):
        config = _config(tmp_path)
        first = run_pipeline(config, settings).artifacts["report"].read_bytes()
        second = run_pipeline(config, settings).artifacts["report"].read_bytes()
        assert first == second

    def test_noise_errors_are_recorded(self, tmp_path, settings):
        result = run_pipeline(_config(tmp_path, epsilon_percent=10.0, denoiser="savgol"), settings)
        assert set(result.errors) == {"noise_relative_error", "denoised_relative_error"}
        assert result.errors["noise_relative_error"] > 0

    def test_ksvd_stage_uses_patch_stride(self, tmp_path, settings):
        config = _config(tmp_path, epsilon_percent=20.0, denoiser="rksvd", patch_stride=4, ksvd_iterations=2)
        result = run_pipeline(config, settings)
        assert result.config.patch_stride == 4
        assert not np.allclose(result.fields["denoised"].values, result.fields["noisy"].values)
        assert result.errors["denoised_relative_error"] < result.errors["noise_relative_error"]

    def test_field_file_input(self, tmp_path, settings):
        clean = solve(PdeSpec.preset("burgers", nx=128, nt=41))
        path = write_field(clean, tmp_path / "input.field")
        config = _config(tmp_path, pde=None, input_path=str(path), denoiser="svd", svd_rank=5)
        result = run_pipeline(config, settings)
        assert result.evaluation is None
        assert "clean" not in result.artifacts
        assert not result.false_equation

    def test_tau0_sweep(self, tmp_path, settings):
        result = run_pipeline(_config(tmp_path, tau0_sweep="0.01:0.05:5"), settings)
        assert len(result.tau0_sweep.rows) == 5
        assert "tau0_sweep" in read_json_file(result.artifacts["report"])

    def test_failing_stage_is_named(self, tmp_path, settings):
        with pytest.raises(StageException) as info:
            DiscoveryPipeline(_config(tmp_path, hx_frac=0.9), settings).run()
        assert info.value.stage == "library"
