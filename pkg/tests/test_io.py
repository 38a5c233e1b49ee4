import json

import numpy as np
import pytest

from specrcv.covmodel import SpectralDistribution
from specrcv.diffusion import ClassCSpec, ConstantProfile, make_grid, simulate_increments
from specrcv.errors import BadConfigError, SpecrcvError
from specrcv.io import (
    format_float,
    read_density_csv,
    read_eigenvalues_csv,
    read_increments_csv,
    read_manifest,
    read_spectrum_json,
    sha256_file,
    write_density_csv,
    write_eigenvalues_csv,
    write_increments_csv,
    write_manifest,
    write_objective_csv,
    write_solver_trace_csv,
    write_spectrum_json,
)
from specrcv.mpsolve import PopulationSpectrum
from specrcv.spectra import DensityCurve


class TestFormatFloat:
    def test_round_trips_exactly(self):
        rng = np.random.default_rng(0)
        for x in rng.normal(scale=1e4, size=200):
            assert float(format_float(x)) == x

    def test_shortest_representation(self):
        assert format_float(0.1) == "0.1"
        assert format_float(4e-4) == "0.0004"


class TestIncrementsRoundTrip:
    def test_preserves_values_grid_and_digest(self, tmp_path):
        spec = ClassCSpec(p=3, profile=ConstantProfile(0.02), seed=5)
        grid = make_grid("poisson", 17, seed=2)
        incr = simulate_increments(spec, grid)
        path = tmp_path / "incr.csv"
        write_increments_csv(path, incr)
        back = read_increments_csv(path)
        assert np.array_equal(back.increments, incr.increments)
        assert np.array_equal(back.grid.times, grid.times)
        assert back.spec_digest == incr.spec_digest

    def test_write_is_deterministic(self, tmp_path):
        spec = ClassCSpec(p=2, profile=ConstantProfile(1.0), seed=9)
        incr = simulate_increments(spec, make_grid("equispaced", 8))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_increments_csv(a, incr)
        write_increments_csv(b, incr)
        assert sha256_file(a) == sha256_file(b)

    def test_rejects_wrong_kind(self, tmp_path):
        path = tmp_path / "eig.csv"
        write_eigenvalues_csv(path, SpectralDistribution(np.ones(3)), {})
        with pytest.raises(SpecrcvError):
            read_increments_csv(path)


class TestEigenvaluesRoundTrip:
    def test_round_trip(self, tmp_path):
        dist = SpectralDistribution(np.array([0.5, 1.25, 1.25, 3.0]))
        path = tmp_path / "eig.csv"
        write_eigenvalues_csv(path, dist, {"p": "4"})
        back, meta = read_eigenvalues_csv(path)
        assert np.array_equal(back.eigenvalues, dist.eigenvalues)
        assert meta["p"] == "4"


class TestDensityRoundTrip:
    def test_round_trip_with_zero_mass(self, tmp_path):
        xs = np.linspace(0.0, 2.0, 51)
        ys = np.where((xs > 0.5) & (xs < 1.5), 0.5, 0.0)
        curve = DensityCurve(xs, ys, 0.5)
        path = tmp_path / "dens.csv"
        write_density_csv(path, curve, {})
        back, _ = read_density_csv(path)
        assert np.array_equal(back.xs, curve.xs)
        assert np.array_equal(back.ys, curve.ys)
        assert back.mass_at_zero == 0.5


class TestSpectrumJson:
    def test_round_trip(self, tmp_path):
        sp = PopulationSpectrum(np.array([0.4, 1.6]), np.array([0.25, 0.75]))
        path = tmp_path / "spectrum.json"
        write_spectrum_json(path, sp, extra={"y": 0.5})
        back = read_spectrum_json(path)
        assert np.array_equal(back.locations, sp.locations)
        assert np.array_equal(back.weights, sp.weights)
        payload = json.loads(path.read_text())
        assert payload["y"] == 0.5
        assert [a["location"] for a in payload["atoms"]] == [0.4, 1.6]

    def test_stable_key_order(self, tmp_path):
        sp = PopulationSpectrum.point_mass(1.0)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_spectrum_json(a, sp, extra={"zeta": 1, "alpha": 2})
        write_spectrum_json(b, sp, extra={"alpha": 2, "zeta": 1})
        assert a.read_bytes() == b.read_bytes()


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = {
            "command": "simulate",
            "config": {"p": 4, "n": 10, "seed": 1},
            "version": "0.1.0",
            "files": {"x.csv": "ab" * 32},
            "timings_s": {"total": 0.5},
        }
        path = tmp_path / "manifest.json"
        write_manifest(path, manifest)
        assert read_manifest(path) == manifest

    def test_requires_command_and_config(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"config": {}}))
        with pytest.raises(BadConfigError):
            read_manifest(path)
        path.write_text(json.dumps({"command": "simulate"}))
        with pytest.raises(BadConfigError):
            read_manifest(path)


class TestTraceFiles:
    def test_solver_trace_columns(self, tmp_path):
        path = tmp_path / "trace.csv"
        zs = np.array([0.5 + 0.1j, 1.0 + 0.1j])
        values = np.array([0.2 + 0.9j, -0.1 + 1.1j])
        write_solver_trace_csv(path, zs, values, np.array([1e-12, 2e-12]),
                               np.array([40, 52]), {"solver": "classical"})
        lines = path.read_text().splitlines()
        assert lines[1] == "re_z,im_z,re_m,im_m,residual,iterations"
        assert lines[2].split(",")[:2] == ["0.5", "0.1"]
        assert lines[3].split(",")[-1] == "52"

    def test_objective_trace(self, tmp_path):
        path = tmp_path / "objective.csv"
        write_objective_csv(path, [3.0, 2.0, 1.5], {})
        lines = path.read_text().splitlines()
        assert lines[1] == "iteration,objective"
        assert lines[-1] == "2,1.5"


class TestMetaLine:
    def test_meta_survives_round_trip(self, tmp_path):
        dist = SpectralDistribution(np.ones(2))
        path = tmp_path / "eig.csv"
        write_eigenvalues_csv(path, dist, {"seed": "42", "design": "design1"})
        first = path.read_text().splitlines()[0]
        assert first.startswith("# ")
        assert "seed=42" in first and "design=design1" in first

    def test_rejects_unencodable_values(self, tmp_path):
        dist = SpectralDistribution(np.ones(2))
        path = tmp_path / "eig.csv"
        with pytest.raises(ValueError):
            write_eigenvalues_csv(path, dist, {"note": "a,b"})
        with pytest.raises(ValueError):
            write_eigenvalues_csv(path, dist, {"note": "a=b"})
