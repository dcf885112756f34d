import json

import pytest

from ubic import __version__
from ubic.core.cli import EXIT_CONFIG, EXIT_NUMERICAL, exit_code_for, main
from ubic.utils.exceptions import ConfigException, PosteriorException, StageException


@pytest.fixture
def workdir(tmp_path):
    """Noisy Burgers field, its library and a best-subset sweep."""
    field = tmp_path / "u.field"
    library = tmp_path / "library.bin"
    sweep = tmp_path / "sweep.json"
    steps = [
        ["generate", "--pde", "burgers", "--nx", "128", "--nt", "41", "--epsilon", "1",
         "--seed", "3", "--out", str(field), "--clean-out", str(tmp_path / "clean.field"),
         "--csv", str(tmp_path / "u.csv")],
        ["library", "--input", str(field), "--out", str(library), "--ndomains", "100", "--seed", "3"],
        ["fit", "--library", str(library), "--out", str(sweep), "--max-support", "3"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv[0]
    return tmp_path


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_unknown_command_is_a_usage_error(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["generate", "--pde", "heat", "--out", "x.field"]) == 2


def test_generate_outputs(workdir):
    assert (workdir / "u.field").exists()
    assert (workdir / "clean.field").exists()
    assert (workdir / "u.csv").exists()


def test_select_and_evaluate(workdir):
    report = workdir / "report.json"
    code = main([
        "select", "--library", str(workdir / "library.bin"), "--sweep", str(workdir / "sweep.json"),
        "--out", str(report), "--csv", str(workdir / "scores.csv"), "--tau0-mode", "percentile",
    ])
    assert code == 0
    data = json.loads(report.read_text())
    assert data["tau0_mode"] == "percentile"
    assert (workdir / "scores.csv").exists()

    code = main([
        "evaluate", "--library", str(workdir / "library.bin"), "--report", str(report),
        "--pde", "burgers", "--out", str(workdir / "evaluation.json"),
    ])
    assert code in (0, 4)
    assert "r_bic" in json.loads((workdir / "evaluation.json").read_text())


def test_denoise(workdir):
    out = workdir / "smooth.field"
    code = main([
        "denoise", "--input", str(workdir / "u.field"), "--out", str(out), "--method", "savgol", "--window", "7",
    ])
    assert code == 0
    assert out.exists()


def test_missing_input_file(tmp_path):
    code = main(["denoise", "--input", str(tmp_path / "absent.field"), "--out", str(tmp_path / "o.field")])
    assert code == EXIT_CONFIG


def test_tau0_sweep(workdir):
    out = workdir / "tau0.json"
    base = ["tau0-sweep", "--library", str(workdir / "library.bin"), "--sweep", str(workdir / "sweep.json")]
    assert main(base + ["--range", "0.01:0.05:3", "--pde", "burgers", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["rows"]) == 3

    assert main(base + ["--percentiles", "55:100:15"]) == 0

    assert main(base) == EXIT_CONFIG
    assert main(base + ["--range", "0.01:0.05:3", "--percentiles", "55:100:5"]) == EXIT_CONFIG
    assert main(base + ["--range", "0.05:0.01"]) == EXIT_CONFIG


def test_budget_is_a_numerical_error(workdir):
    code = main([
        "fit", "--library", str(workdir / "library.bin"), "--out", str(workdir / "big.json"), "--budget", "2",
    ])
    assert code == EXIT_NUMERICAL


def test_malformed_field_is_an_input_error(tmp_path):
    bad = tmp_path / "bad.field"
    bad.write_bytes(b"not a field")
    assert main(["denoise", "--input", str(bad), "--out", str(tmp_path / "o.field")]) == EXIT_CONFIG


def test_pipeline_from_config(tmp_path):
    config = tmp_path / "burgers.cfg"
    config.write_text(
        "pde=burgers\nnx=128\nnt=41\nepsilon_percent=0\ndenoiser=none\nn_domains=100\nmax_support=3\n"
    )
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(config), "--output-dir", str(out)]) in (0, 4)
    assert (out / "report.json").exists()


def test_pipeline_needs_a_source(tmp_path):
    assert main(["pipeline", "--output-dir", str(tmp_path / "run")]) == EXIT_CONFIG


def test_exit_codes():
    assert exit_code_for(ConfigException("x")) == 2
    assert exit_code_for(StageException("library", ConfigException("x"))) == 2
    assert exit_code_for(StageException("posterior", PosteriorException("x"))) == 3
    assert exit_code_for(RuntimeError("x")) == 1
