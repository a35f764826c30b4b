import json
import logging

import pytest

from rfi_toolkit import __version__
from rfi_toolkit.__main__ import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUNTIME_ERROR, main
from rfi_toolkit.backend.artifacts import save_measure
from rfi_toolkit.backend.measures import EmpiricalMeasure
from rfi_toolkit.shared import setup_logging

CONFIG_WITHOUT_SEED = """\
name = "broken"
dimension = 1
iterations = 3

[problem]
kind = "affine_maps"
maps = [{ matrix = [[-1.0]] }]

[initial]
kind = "dirac"
"""


@pytest.fixture(autouse=True)
def restore_logging():
    yield
    setup_logging(logging.WARNING)


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == f"RFI Toolkit v{__version__}"


def test_no_command_prints_help(capsys):
    assert main([]) == EXIT_CONFIG_ERROR
    assert "usage" in capsys.readouterr().out


def test_list_examples(capsys):
    assert main(["list-examples"]) == EXIT_OK
    names = capsys.readouterr().out.split()
    assert "rotation" in names
    assert "cyclic_projections" in names


def test_run_bundled_example(tmp_path, capsys):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert main(["run", "rotation", "--out", str(first)]) == EXIT_OK
    assert main(["run", "rotation", "--out", str(second), "--threads", "2"]) == EXIT_OK
    assert "Wrote" in capsys.readouterr().out
    manifests = [json.loads((d / "manifest.json").read_text()) for d in (first, second)]
    assert manifests[0]["status"] == "complete"
    assert manifests[0]["outputs"] == manifests[1]["outputs"]
    assert (first / "trajectory.csv").is_file()


def test_run_with_missing_seed(tmp_path, capsys):
    path = tmp_path / "broken.toml"
    path.write_text(CONFIG_WITHOUT_SEED)
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR
    assert "seed" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("seed", [2 ** 64, -1])
def test_run_with_out_of_range_seed(tmp_path, capsys, seed):
    path = tmp_path / "big_seed.toml"
    path.write_text(CONFIG_WITHOUT_SEED.replace('name = "broken"', f'name = "big_seed"\nseed = {seed}'))
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR
    assert "seed" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_run_unknown_config(capsys):
    assert main(["run", "no-such-example"]) == EXIT_CONFIG_ERROR
    assert "no-such-example" in capsys.readouterr().err


def test_run_with_failing_diagnostic(tmp_path, capsys):
    path = tmp_path / "short.toml"
    text = CONFIG_WITHOUT_SEED.replace('name = "broken"', 'name = "short"\nseed = 1')
    path.write_text(text + '\n[[diagnostics]]\nkind = "cesaro"\ncheckpoints = [3]\n')
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == EXIT_RUNTIME_ERROR
    assert "cesaro" in capsys.readouterr().err
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "partial"


def test_compare(tmp_path, capsys):
    first = save_measure(EmpiricalMeasure.dirac([0.0]), str(tmp_path / "first.json"))
    second = save_measure(EmpiricalMeasure([[0.0], [10.0]], [0.9, 0.1]), str(tmp_path / "second.csv"))
    assert main(["compare", first, second, "--wasserstein", "1", "--prokhorov"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["wasserstein"]["p"] == 1.0
    assert report["wasserstein"]["value"] == pytest.approx(1.0)
    assert report["wasserstein"]["method"] == "sorted_1d"
    assert report["prokhorov"]["value"] == pytest.approx(0.1)


def test_compare_defaults_to_w2(tmp_path, capsys):
    first = save_measure(EmpiricalMeasure.dirac([0.0, 0.0]), str(tmp_path / "first.json"))
    second = save_measure(EmpiricalMeasure.dirac([3.0, 4.0]), str(tmp_path / "second.json"))
    assert main(["compare", first, second]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"wasserstein"}
    assert report["wasserstein"]["value"] == pytest.approx(5.0)


def test_compare_dimension_mismatch(tmp_path, capsys):
    first = save_measure(EmpiricalMeasure.dirac([0.0]), str(tmp_path / "first.json"))
    second = save_measure(EmpiricalMeasure.dirac([0.0, 1.0]), str(tmp_path / "second.json"))
    assert main(["compare", first, second]) == EXIT_CONFIG_ERROR
    assert "dimension" in capsys.readouterr().err
