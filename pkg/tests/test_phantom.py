"""Tests for the IVUS phantom."""

import dataclasses
import math

import numpy as np
import pytest

from mldenoise.exceptions import ConfigError
from mldenoise.image import forward_gradient, polar_to_cartesian
from mldenoise.phantom import (
    DEFAULT_INTENSITIES,
    PhantomSpec,
    analytic_jump_sum,
    default_phantom_spec,
    generate_phantom,
    scan_geometry,
)


def _pixel_at(spec: PhantomSpec, u: float, v: float) -> tuple[int, int]:
    """(row, column) of the pixel containing normalized point (u, v)."""
    half = spec.size / 2.0
    return int(math.floor(v * half + half)), int(math.floor(u * half + half))


class TestPhantomSpec:
    """Test phantom specification validation and serialization."""

    def test_default_is_valid(self) -> None:
        """The canonical spec satisfies every invariant."""
        spec = default_phantom_spec()
        assert spec.size == 512
        assert spec.intensities == DEFAULT_INTENSITIES
        assert spec == PhantomSpec()

    @pytest.mark.parametrize(
        "changes",
        [
            {"size": 2},
            {"lumen_radius": 0.6},
            {"adventitia_outer_radius": 1.2},
            {"eccentricity": 0.3},
            {"calcium_arc": (0.0, 1.0, 0.2, 0.5)},
            {"calcium_arc": (0.0, 1.0, 0.5, 0.45)},
            {"calcium_arc": (1.0, 1.0, 0.42, 0.52)},
            {"n_radii": 1},
        ],
    )
    def test_invalid_geometry(self, changes: dict) -> None:
        """Nesting and ordering constraints are enforced."""
        with pytest.raises(ValueError):
            dataclasses.replace(default_phantom_spec(), **changes)

    def test_invalid_intensities(self) -> None:
        """Intensities must be complete, in [0, 1] and ordered."""
        base = dict(DEFAULT_INTENSITIES)
        missing = {k: v for k, v in base.items() if k != "calcium"}
        with pytest.raises(ValueError):
            PhantomSpec(intensities=missing)
        with pytest.raises(ValueError):
            PhantomSpec(intensities={**base, "background": 1.5})
        with pytest.raises(ValueError):
            PhantomSpec(intensities={**base, "lumen": 0.5})

    def test_text_round_trip(self) -> None:
        """to_text() output parses back to an equal spec."""
        spec = PhantomSpec(size=64, eccentricity=-0.05, n_angles=90)
        assert PhantomSpec.from_text(spec.to_text()) == spec
        plain = PhantomSpec(size=32, calcium_arc=None)
        assert PhantomSpec.from_text(plain.to_text()) == plain

    def test_from_text_defaults(self) -> None:
        """Missing keys take their default values."""
        spec = PhantomSpec.from_text("# small\nsize = 48\nintensity.calcium = 0.9\n")
        assert spec.size == 48
        assert spec.intensities["calcium"] == 0.9
        assert spec.lumen_radius == PhantomSpec().lumen_radius

    def test_from_text_errors(self) -> None:
        """Unknown keys and malformed values raise ConfigError."""
        with pytest.raises(ConfigError, match="unknown phantom key"):
            PhantomSpec.from_text("radius = 3\n")
        with pytest.raises(ConfigError):
            PhantomSpec.from_text("intensity.plaque = 0.5\n")
        with pytest.raises(ConfigError):
            PhantomSpec.from_text("calcium_arc = 0.1, 0.2\n")
        with pytest.raises(ConfigError):
            PhantomSpec.from_text("size = big\n")

    def test_load_and_save(self, tmp_path) -> None:
        """Specs survive a trip through a file."""
        spec = PhantomSpec(size=40)
        path = tmp_path / "phantom.txt"
        spec.save(path)
        assert PhantomSpec.load(path) == spec
        with pytest.raises(FileNotFoundError):
            PhantomSpec.load(tmp_path / "missing.txt")


class TestGeneratePhantom:
    """Test phantom rendering."""

    @pytest.fixture(scope="class")
    def default_renderings(self):
        """Cartesian and polar renderings of the canonical spec."""
        return generate_phantom(default_phantom_spec())

    def test_shapes(self, default_renderings) -> None:
        """Renderings have the configured sizes."""
        cartesian, polar = default_renderings
        assert cartesian.shape == (512, 512)
        assert polar.shape == (256, 256)

    def test_five_levels(self, default_renderings) -> None:
        """Only the five structure intensities occur."""
        cartesian, _ = default_renderings
        assert set(np.unique(cartesian.data)) == set(DEFAULT_INTENSITIES.values())

    def test_structures_at_known_points(self, default_renderings) -> None:
        """The center is lumen, the plaque is calcium, corners are background."""
        cartesian, _ = default_renderings
        spec = default_phantom_spec()
        it = spec.intensities
        assert cartesian.data[_pixel_at(spec, 0.0, 0.0)] == it["lumen"]
        mid = math.pi / 3.0
        assert cartesian.data[_pixel_at(spec, 0.47 * math.cos(mid), 0.47 * math.sin(mid))] == it[
            "calcium"
        ]
        assert cartesian.data[_pixel_at(spec, -0.45, 0.0)] == it["intima"]
        assert cartesian.data[_pixel_at(spec, -0.7, 0.0)] == it["adventitia"]
        assert cartesian.data[0, 0] == it["background"]

    def test_bitwise_stable(self, default_renderings) -> None:
        """Rendering the same spec twice gives identical arrays."""
        cartesian, polar = default_renderings
        again_c, again_p = generate_phantom(default_phantom_spec())
        assert np.array_equal(cartesian.data, again_c.data)
        assert np.array_equal(polar.data, again_p.data)

    def test_concentric_polar_rows_identical(self) -> None:
        """Without eccentricity or plaque every angle sees the same radial profile."""
        spec = PhantomSpec(size=64, eccentricity=0.0, calcium_arc=None, n_angles=32, n_radii=64)
        _, polar = generate_phantom(spec)
        assert np.all(polar.data == polar.data[:1, :])

    def test_radial_profile(self) -> None:
        """Polar columns follow the ring radii."""
        spec = PhantomSpec(size=64, eccentricity=0.0, calcium_arc=None, n_angles=8, n_radii=101)
        _, polar = generate_phantom(spec)
        it = spec.intensities
        row = polar.data[0]
        assert row[10] == it["lumen"]
        assert row[40] == it["intima"]
        assert row[70] == it["adventitia"]
        assert row[90] == it["background"]

    def test_total_variation_matches_jump_sum(self) -> None:
        """Discrete TV approaches the perimeter-weighted jump sum."""
        spec = default_phantom_spec()
        cartesian, _ = generate_phantom(spec)
        gx, gy = forward_gradient(cartesian)

        anisotropic = float(np.sum(np.abs(gx) + np.abs(gy)))
        expected = analytic_jump_sum(spec, anisotropic=True)
        assert anisotropic == pytest.approx(expected, rel=0.05)

        isotropic = float(np.sum(np.hypot(gx, gy)))
        length = analytic_jump_sum(spec)
        assert 0.97 * length <= isotropic <= 1.25 * length

    def test_polar_matches_cartesian(self) -> None:
        """Scan-converting the polar rendering reproduces the cartesian one."""
        spec = PhantomSpec(size=256, n_angles=1024, n_radii=256)
        cartesian, polar = generate_phantom(spec)
        center, extent = scan_geometry(spec)
        converted = polar_to_cartesian(polar, center, extent, size=spec.size)

        ys, xs = np.mgrid[0 : spec.size, 0 : spec.size].astype(float)
        disk = np.hypot(xs - center[0], ys - center[1]) <= extent - 1.0
        mismatch = np.abs(converted.data - cartesian.data) > 0.05
        assert np.mean(mismatch[disk]) <= 0.05


class TestAnalyticJumpSum:
    """Test the closed-form total variation."""

    def test_concentric_rings(self) -> None:
        """Circles contribute 2 pi r |jump| (isotropic) or 8 r |jump| (anisotropic)."""
        spec = PhantomSpec(size=100, eccentricity=0.0, calcium_arc=None)
        it = spec.intensities
        weighted = (
            abs(it["adventitia"] - it["background"]) * spec.adventitia_outer_radius
            + abs(it["intima"] - it["adventitia"]) * spec.intima_outer_radius
            + abs(it["lumen"] - it["intima"]) * spec.lumen_radius
        )
        assert analytic_jump_sum(spec) == pytest.approx(2 * math.pi * weighted * 50)
        assert analytic_jump_sum(spec, anisotropic=True) == pytest.approx(8 * weighted * 50)

    def test_plaque_adds_its_outline(self) -> None:
        """The calcium sector adds two arcs and two radial sides."""
        with_plaque = PhantomSpec(size=100, calcium_arc=(0.0, math.pi / 2, 0.42, 0.52))
        without = dataclasses.replace(with_plaque, calcium_arc=None)
        jump = abs(with_plaque.intensities["calcium"] - with_plaque.intensities["intima"])
        outline = (math.pi / 2) * (0.42 + 0.52) + 2 * 0.10
        extra = analytic_jump_sum(with_plaque) - analytic_jump_sum(without)
        assert extra == pytest.approx(jump * outline * 50)
