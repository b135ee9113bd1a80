"""Tests for command-line interface."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mldenoise.cli import (
    EXIT_DATAERR,
    EXIT_NOINPUT,
    EXIT_NOT_CONVERGED,
    EXIT_SUCCESS,
    EXIT_USAGE,
    main,
)
from mldenoise.config import RunManifest
from mldenoise.sweep import read_sweep_csv


@pytest.fixture
def synth_dir(tmp_path: Path) -> Path:
    """A 32x32 speckled phantom written by the synth command."""
    out = tmp_path / "run"
    code = main(["synth", "--size", "32", "--seed", "7", "-o", str(out), "-q"])
    assert code == EXIT_SUCCESS
    return out


@pytest.fixture
def constant_npy(tmp_path: Path) -> Path:
    """A flat 8x8 image."""
    path = tmp_path / "flat.npy"
    np.save(path, np.full((8, 8), 0.25))
    return path


class TestSynth:
    """Test the synth command."""

    def test_outputs(self, synth_dir: Path) -> None:
        """Images, the phantom spec and the manifest are written."""
        for name in ("reference.npy", "speckled.npy", "log_speckled.npy", "phantom.txt"):
            assert (synth_dir / name).exists()
        assert np.load(synth_dir / "reference.npy").shape == (32, 32)
        manifest = RunManifest.read(synth_dir / "manifest.txt")
        assert manifest.command == "synth"
        assert manifest.seed == 7
        assert manifest.parameters["gamma"] == "1.5"

    def test_deterministic(self, synth_dir: Path, tmp_path: Path) -> None:
        """The same seed reproduces the same speckle."""
        again = tmp_path / "again"
        assert main(["synth", "--size", "32", "--seed", "7", "-o", str(again), "-q"]) == 0
        first = np.load(synth_dir / "log_speckled.npy")
        second = np.load(again / "log_speckled.npy")
        assert np.array_equal(first, second)

    def test_seed_recorded_when_omitted(self, tmp_path: Path) -> None:
        """A drawn seed is written to the manifest."""
        out = tmp_path / "run"
        assert main(["synth", "--size", "16", "-o", str(out), "-q"]) == EXIT_SUCCESS
        assert RunManifest.read(out / "manifest.txt").seed is not None

    def test_manifest_argv_replays_seedless_run(self, tmp_path: Path) -> None:
        """Rerunning the recorded command line rewrites the same files byte for byte."""
        out = tmp_path / "run"
        assert main(["synth", "--size", "16", "-o", str(out), "-q"]) == EXIT_SUCCESS
        names = ("reference.npy", "speckled.npy", "log_speckled.npy")
        first = {name: (out / name).read_bytes() for name in names}
        manifest = RunManifest.read(out / "manifest.txt")
        assert manifest.argv[-2:] == ["--seed", str(manifest.seed)]

        assert main(manifest.argv) == EXIT_SUCCESS
        for name in names:
            assert (out / name).read_bytes() == first[name]
        assert RunManifest.read(out / "manifest.txt").seed == manifest.seed

    def test_pgm_format(self, tmp_path: Path) -> None:
        """Non-npy outputs are rescaled and the original range recorded."""
        out = tmp_path / "run"
        code = main(["synth", "--size", "16", "--seed", "1", "-o", str(out), "-f", "pgm", "-q"])
        assert code == EXIT_SUCCESS
        assert (out / "log_speckled.pgm").exists()
        manifest = RunManifest.read(out / "manifest.txt")
        lo, hi = (float(v) for v in manifest.parameters["log_speckled.range"].split(","))
        assert lo < hi

    def test_invalid_noise_parameters(self, tmp_path: Path) -> None:
        """Nonpositive GG parameters are a usage error."""
        assert main(["synth", "--gamma", "0", "-o", str(tmp_path), "-q"]) == EXIT_USAGE

    def test_missing_spec(self, tmp_path: Path) -> None:
        """A missing phantom spec file is reported."""
        code = main(["synth", "--spec", str(tmp_path / "none.txt"), "-o", str(tmp_path), "-q"])
        assert code == EXIT_NOINPUT


class TestDenoise:
    """Test the denoise command."""

    def test_mld_gg(self, synth_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """The MLD solver converges and prints its status line."""
        out = synth_dir / "mld.npy"
        code = main(
            [
                "denoise", str(synth_dir / "log_speckled.npy"), "-o", str(out),
                "-a", "0.5", "--gamma", "1.4", "--nu", "1.4", "--delta", "1.3",
                "--grad-eps", "0.01", "-q",
            ]
        )
        assert code == EXIT_SUCCESS
        assert "status=converged" in capsys.readouterr().out
        assert np.load(out).shape == (32, 32)
        manifest = RunManifest.read(synth_dir / "mld.npy.manifest.txt")
        assert manifest.parameters["result.converged"] == "True"

    def test_mld_gg_edge_parameters(self, synth_dir: Path) -> None:
        """The edge-preserving GG setting converges and reports a small residual."""
        out = synth_dir / "edge.npy"
        code = main(
            [
                "denoise", str(synth_dir / "log_speckled.npy"), "-o", str(out),
                "-a", "0.5", "--gamma", "0.8", "--nu", "0.8", "--delta", "1.3",
                "--grad-eps", "0.01", "-q",
            ]
        )
        assert code == EXIT_SUCCESS
        denoised = np.load(out)
        assert np.all(np.isfinite(denoised))
        manifest = RunManifest.read(synth_dir / "edge.npy.manifest.txt")
        assert manifest.parameters["scheme"] == "implicit"
        assert manifest.parameters["result.status"] == "converged"
        assert float(manifest.parameters["result.final_residual_inf_norm"]) < 100 * 1e-5

    def test_tvl1_constant(self, constant_npy: Path, tmp_path: Path) -> None:
        """TV-L1 leaves a flat image unchanged."""
        out = tmp_path / "out.npy"
        code = main(["denoise", str(constant_npy), "-o", str(out), "-m", "tvl1", "-a", "1", "-q"])
        assert code == EXIT_SUCCESS
        np.testing.assert_allclose(np.load(out), 0.25)

    def test_schemes_on_flat_image(self, constant_npy: Path, tmp_path: Path) -> None:
        """The implicit scheme removes the noise mean; pointwise steps stall and exit 2."""
        base = ["denoise", str(constant_npy), "-m", "mld_gaussian", "--mu", "0.25", "-a", "1"]
        implicit = tmp_path / "implicit.npy"
        assert main([*base, "-o", str(implicit), "-q"]) == EXIT_SUCCESS
        np.testing.assert_allclose(np.load(implicit), 0.0, atol=1e-4)

        pointwise = tmp_path / "pointwise.npy"
        code = main(
            [*base, "-o", str(pointwise), "--scheme", "pointwise", "--max-iter", "20", "-q"]
        )
        assert code == EXIT_NOT_CONVERGED
        manifest = RunManifest.read(tmp_path / "pointwise.npy.manifest.txt")
        assert manifest.parameters["result.status"] == "stalled"
        np.testing.assert_allclose(np.load(pointwise), 0.25, atol=1e-6)

    def test_not_converged(self, synth_dir: Path) -> None:
        """Hitting the iteration cap exits 2 but still writes the output."""
        out = synth_dir / "capped.npy"
        code = main(
            ["denoise", str(synth_dir / "log_speckled.npy"), "-o", str(out), "--max-iter", "1", "-q"]
        )
        assert code == EXIT_NOT_CONVERGED
        assert out.exists()

    def test_unknown_method(self, constant_npy: Path, tmp_path: Path) -> None:
        """Methods outside the known set are rejected by the parser."""
        with pytest.raises(SystemExit) as exc_info:
            main(["denoise", str(constant_npy), "-o", str(tmp_path / "o.npy"), "-m", "median"])
        assert exc_info.value.code == EXIT_USAGE

    def test_missing_input(self, tmp_path: Path) -> None:
        """A missing input file exits 66."""
        code = main(["denoise", str(tmp_path / "none.npy"), "-o", str(tmp_path / "o.npy"), "-q"])
        assert code == EXIT_NOINPUT

    def test_missing_output_option(self, constant_npy: Path) -> None:
        """-o is required."""
        with pytest.raises(SystemExit) as exc_info:
            main(["denoise", str(constant_npy)])
        assert exc_info.value.code == EXIT_USAGE


class TestMetrics:
    """Test the metrics command."""

    def test_identical_images(
        self, synth_dir: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """A perfect reconstruction scores 0, 0 and 1."""
        ref = str(synth_dir / "reference.npy")
        assert main(["metrics", ref, ref, "--no-header", "-q"]) == EXIT_SUCCESS
        assert capsys.readouterr().out.strip() == "0,0,0,1,"

    def test_with_noisy_and_output(self, synth_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """--noisy fills the pearson column and -o writes the CSV and a manifest."""
        out = synth_dir / "metrics.csv"
        code = main(
            [
                "metrics", str(synth_dir / "reference.npy"), str(synth_dir / "log_speckled.npy"),
                "--noisy", str(synth_dir / "log_speckled.npy"), "--frame-id", "f1",
                "-o", str(out), "-q",
            ]
        )
        assert code == EXIT_SUCCESS
        lines = out.read_text().splitlines()
        assert lines[0] == "frame_id,eps_b,eps_d,eps_e,pearson_lowpass"
        fields = lines[1].split(",")
        assert fields[0] == "f1"
        assert fields[4] != ""
        manifest = RunManifest.read(synth_dir / "metrics.csv.manifest.txt")
        assert manifest.parameters["lowpass_fraction"] == "0.25"
        assert capsys.readouterr().out.splitlines() == lines

    def test_literal_eps_e(self, synth_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """The literal form differs from the normalized one."""
        ref = str(synth_dir / "reference.npy")
        assert main(["metrics", ref, ref, "--no-header", "--literal-eps-e", "-q"]) == 0
        eps_e = float(capsys.readouterr().out.strip().split(",")[3])
        assert eps_e != pytest.approx(1.0)

    def test_missing_file(self, synth_dir: Path) -> None:
        """A missing image exits 66."""
        ref = str(synth_dir / "reference.npy")
        assert main(["metrics", ref, str(synth_dir / "none.npy"), "-q"]) == EXIT_NOINPUT

    def test_dimension_mismatch(self, tmp_path: Path) -> None:
        """Images of different shapes exit 65."""
        rng = np.random.default_rng(0)
        a, b = tmp_path / "a.npy", tmp_path / "b.npy"
        np.save(a, rng.random((4, 4)))
        np.save(b, rng.random((5, 5)))
        assert main(["metrics", str(a), str(b), "-q"]) == EXIT_DATAERR

    def test_flat_reference(self, constant_npy: Path) -> None:
        """Undefined metrics exit 65."""
        assert main(["metrics", str(constant_npy), str(constant_npy), "-q"]) == EXIT_DATAERR


class TestSweep:
    """Test the sweep command."""

    def test_tvl1_sweep(self, synth_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """A small TV-L1 sweep writes one row per alpha and a best summary."""
        out = synth_dir / "sweep.csv"
        code = main(
            [
                "sweep", str(synth_dir / "reference.npy"), str(synth_dir / "log_speckled.npy"),
                "-m", "tvl1", "--alphas", "0.1,0.05", "--out", str(out), "-q",
            ]
        )
        assert code == EXIT_SUCCESS
        report = read_sweep_csv(out)
        assert [r.alpha for r in report.rows] == [0.05, 0.1]
        assert report.best["eps_b"] is not None
        assert "eps_b: alpha=" in capsys.readouterr().out
        manifest = RunManifest.read(synth_dir / "sweep.csv.manifest.txt")
        assert manifest.parameters["lowpass_fraction"] == "0.25"

    def test_paper_grids_need_supported_method(self, synth_dir: Path) -> None:
        """The published grid exists for mld_gg and tvl1 only."""
        code = main(
            [
                "sweep", str(synth_dir / "reference.npy"), str(synth_dir / "log_speckled.npy"),
                "-m", "mld_gaussian", "--paper-grids", "--out", str(synth_dir / "s.csv"), "-q",
            ]
        )
        assert code == EXIT_USAGE

    def test_mld_gg_needs_all_lists(self, synth_dir: Path) -> None:
        """GG sweeps without gamma/nu/delta lists are a usage error."""
        code = main(
            [
                "sweep", str(synth_dir / "reference.npy"), str(synth_dir / "log_speckled.npy"),
                "--alphas", "0.5", "--gammas", "1.4", "--out", str(synth_dir / "s.csv"), "-q",
            ]
        )
        assert code == EXIT_USAGE

    def test_bad_float_list(self, synth_dir: Path) -> None:
        """Malformed value lists are rejected by the parser."""
        with pytest.raises(SystemExit) as exc_info:
            main(
                [
                    "sweep", str(synth_dir / "reference.npy"), str(synth_dir / "log_speckled.npy"),
                    "--alphas", "0.1,abc", "--out", str(synth_dir / "s.csv"),
                ]
            )
        assert exc_info.value.code == EXIT_USAGE


class TestConfigFile:
    """Test --config handling."""

    def test_config_supplies_options(self, constant_npy: Path, tmp_path: Path) -> None:
        """Config values act as defaults, including required options."""
        out = tmp_path / "out.npy"
        config = tmp_path / "run.cfg"
        config.write_text(f"method = tvl1\nalpha = 0.2\noutput = {out}\n")
        assert main(["denoise", str(constant_npy), "--config", str(config), "-q"]) == 0
        manifest = RunManifest.read(tmp_path / "out.npy.manifest.txt")
        assert manifest.parameters["method"] == "tvl1"
        assert manifest.parameters["alpha"] == "0.2"

    def test_flags_override_config(self, constant_npy: Path, tmp_path: Path) -> None:
        """Command-line flags win over the config file."""
        out = tmp_path / "out.npy"
        config = tmp_path / "run.json"
        config.write_text('{"method": "tvl1", "alpha": 0.2}')
        code = main(
            ["denoise", str(constant_npy), "-o", str(out), "--config", str(config), "-a", "0.1", "-q"]
        )
        assert code == EXIT_SUCCESS
        manifest = RunManifest.read(tmp_path / "out.npy.manifest.txt")
        assert manifest.parameters["alpha"] == "0.25"

    def test_unknown_key(self, constant_npy: Path, tmp_path: Path) -> None:
        """Keys that name no option are a usage error."""
        config = tmp_path / "run.cfg"
        config.write_text("radius = 3\n")
        code = main(
            ["denoise", str(constant_npy), "-o", str(tmp_path / "o.npy"), "--config", str(config)]
        )
        assert code == EXIT_USAGE

    def test_missing_config(self, constant_npy: Path, tmp_path: Path) -> None:
        """A missing config file exits 66."""
        code = main(
            ["denoise", str(constant_npy), "-o", str(tmp_path / "o.npy"),
             "--config", str(tmp_path / "none.cfg")]
        )
        assert code == EXIT_NOINPUT


class TestCLIIntegration:
    """Integration tests for CLI using subprocess."""

    def test_version_flag(self) -> None:
        """Test --version flag."""
        result = subprocess.run(
            [sys.executable, "-m", "mldenoise", "--version"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert "mldenoise 0.1.0" in result.stdout

    def test_help_flag(self) -> None:
        """Test --help flag."""
        result = subprocess.run(
            [sys.executable, "-m", "mldenoise", "--help"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert "synth" in result.stdout
        assert "Exit codes" in result.stdout

    def test_missing_command(self) -> None:
        """Running without a subcommand is a usage error."""
        result = subprocess.run(
            [sys.executable, "-m", "mldenoise"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == EXIT_USAGE
        assert "required" in result.stderr
