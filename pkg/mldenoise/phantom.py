"""
In-silico IVUS-like phantom for mldenoise.

The phantom is a piecewise-constant vessel cross-section: background,
adventitia and intima rings around the transducer, a calcium plaque sector
inset in the intima, and an eccentric lumen. Every pixel is classified
analytically from its center coordinates, so renderings are exactly
reproducible. Radii are fractions of half the image side.

Structures are painted in this order, later ones on top:

    background -> adventitia (r <= adventitia_outer_radius)
               -> intima (r <= intima_outer_radius)
               -> calcium (angle in arc, inner <= r <= outer)
               -> lumen (disk of lumen_radius centered at (eccentricity, 0))

Angles are measured from the +x axis towards +y, where y grows downwards
(row index), matching polar_to_cartesian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mldenoise.config import parse_key_values
from mldenoise.exceptions import ConfigError
from mldenoise.image import Image

STRUCTURES = ("background", "lumen", "intima", "adventitia", "calcium")

DEFAULT_INTENSITIES: dict[str, float] = {
    "background": 0.05,
    "lumen": 0.10,
    "intima": 0.45,
    "adventitia": 0.30,
    "calcium": 0.95,
}

TWO_PI = 2.0 * math.pi


def _default_intensities() -> dict[str, float]:
    return dict(DEFAULT_INTENSITIES)


@dataclass(frozen=True)
class PhantomSpec:
    """
    Geometry and intensities of the phantom.

    Attributes:
        size: Pixels per side of the cartesian rendering
        lumen_radius: Lumen radius as a fraction of half the side
        intima_outer_radius: Outer intima radius, same units
        adventitia_outer_radius: Outer adventitia radius, same units
        calcium_arc: (start angle, end angle, inner radius, outer radius) of the
            calcium sector, or None for no plaque. The arc runs counterclockwise
            from start to end (mod 2 pi).
        intensities: Intensity of each structure in STRUCTURES, all in [0, 1]
        eccentricity: Offset of the lumen center along +x, same units as radii
        n_angles: Rows of the polar rendering
        n_radii: Columns of the polar rendering
    """

    size: int = 512
    lumen_radius: float = 0.30
    intima_outer_radius: float = 0.55
    adventitia_outer_radius: float = 0.80
    calcium_arc: tuple[float, float, float, float] | None = (
        math.pi / 6.0,
        math.pi / 2.0,
        0.42,
        0.52,
    )
    intensities: dict[str, float] = field(default_factory=_default_intensities)
    eccentricity: float = 0.08
    n_angles: int = 256
    n_radii: int = 256

    def __post_init__(self) -> None:
        if self.size < 3:
            raise ValueError(f"Phantom size must be at least 3, got {self.size}")
        if self.n_angles < 1 or self.n_radii < 2:
            raise ValueError(
                f"Polar grid needs n_angles >= 1 and n_radii >= 2, "
                f"got {self.n_angles}x{self.n_radii}"
            )
        if not (
            0 < self.lumen_radius < self.intima_outer_radius < self.adventitia_outer_radius <= 1
        ):
            raise ValueError(
                "Radii must satisfy 0 < lumen < intima_outer < adventitia_outer <= 1, got "
                f"{self.lumen_radius}, {self.intima_outer_radius}, {self.adventitia_outer_radius}"
            )
        ecc = abs(self.eccentricity)
        if not self.lumen_radius + ecc < self.intima_outer_radius:
            raise ValueError(
                f"Eccentric lumen (radius {self.lumen_radius}, offset {self.eccentricity}) "
                f"must lie inside the intima (radius {self.intima_outer_radius})"
            )

        if set(self.intensities) != set(STRUCTURES):
            raise ValueError(
                f"Intensities must be given for exactly {', '.join(STRUCTURES)}, "
                f"got {', '.join(sorted(self.intensities))}"
            )
        for name, value in self.intensities.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"Intensity of {name} must lie in [0, 1], got {value}")
        it = self.intensities
        if not it["calcium"] > it["intima"] > it["lumen"]:
            raise ValueError("Intensities must satisfy calcium > intima > lumen")

        if self.calcium_arc is not None:
            if len(self.calcium_arc) != 4:
                raise ValueError("calcium_arc must be (start, end, inner, outer)")
            _, _, inner, outer = self.calcium_arc
            if _arc_span(self.calcium_arc) <= 0.0:
                raise ValueError("calcium_arc must span a nonzero angle")
            if not self.lumen_radius + ecc < inner < outer < self.intima_outer_radius:
                raise ValueError(
                    "calcium_arc radii must satisfy lumen + |eccentricity| < inner < outer "
                    f"< intima_outer, got inner={inner}, outer={outer}"
                )

    def to_text(self) -> str:
        """Serialize to key=value lines readable by from_text()."""
        lines = [
            f"size = {self.size}",
            f"lumen_radius = {self.lumen_radius!r}",
            f"intima_outer_radius = {self.intima_outer_radius!r}",
            f"adventitia_outer_radius = {self.adventitia_outer_radius!r}",
            f"eccentricity = {self.eccentricity!r}",
            f"n_angles = {self.n_angles}",
            f"n_radii = {self.n_radii}",
        ]
        if self.calcium_arc is None:
            lines.append("calcium_arc = none")
        else:
            lines.append("calcium_arc = " + ",".join(repr(float(v)) for v in self.calcium_arc))
        for name in STRUCTURES:
            lines.append(f"intensity.{name} = {self.intensities[name]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, content: str, source: str = "<string>") -> PhantomSpec:
        """Parse a spec written by to_text(). Missing keys take their defaults.

        Raises:
            ConfigError: If a key is unknown or a value can't be parsed
            ValueError: If the resulting spec violates an invariant
        """
        data = parse_key_values(content, source)
        kwargs: dict = {}
        intensities = _default_intensities()
        int_keys = ("size", "n_angles", "n_radii")
        float_keys = (
            "lumen_radius",
            "intima_outer_radius",
            "adventitia_outer_radius",
            "eccentricity",
        )
        try:
            for key, value in data.items():
                if key in int_keys:
                    kwargs[key] = int(value)
                elif key in float_keys:
                    kwargs[key] = float(value)
                elif key == "calcium_arc":
                    if value.lower() == "none":
                        kwargs[key] = None
                    else:
                        parts = tuple(float(v) for v in value.split(","))
                        if len(parts) != 4:
                            raise ConfigError(
                                f"{source}: calcium_arc needs 4 values, got {len(parts)}"
                            )
                        kwargs[key] = parts
                elif key.startswith("intensity."):
                    name = key[len("intensity.") :]
                    if name not in STRUCTURES:
                        raise ConfigError(f"{source}: unknown structure '{name}'")
                    intensities[name] = float(value)
                else:
                    raise ConfigError(f"{source}: unknown phantom key '{key}'")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{source}: {e}") from e
        return cls(intensities=intensities, **kwargs)

    @classmethod
    def load(cls, file_path: Path | str) -> PhantomSpec:
        """Read a spec file.

        Raises:
            FileNotFoundError: If the file doesn't exist
        """
        file_path = Path(file_path)
        if not file_path.exists():
            raise FileNotFoundError(f"Phantom spec not found: {file_path}")
        return cls.from_text(file_path.read_text(), source=str(file_path))

    def save(self, file_path: Path | str) -> None:
        Path(file_path).write_text(self.to_text())


def default_phantom_spec() -> PhantomSpec:
    """The canonical phantom used by all reproduction runs."""
    return PhantomSpec()


def _arc_span(arc: tuple[float, float, float, float]) -> float:
    start, end = arc[0], arc[1]
    return (end - start) % TWO_PI


def _classify(u: np.ndarray, v: np.ndarray, spec: PhantomSpec) -> np.ndarray:
    """Intensity at normalized coordinates (u, v), radii in units of half the side."""
    it = spec.intensities
    r = np.hypot(u, v)
    out = np.full(u.shape, it["background"], dtype=np.float64)
    out[r <= spec.adventitia_outer_radius] = it["adventitia"]
    out[r <= spec.intima_outer_radius] = it["intima"]

    if spec.calcium_arc is not None:
        start, _, inner, outer = spec.calcium_arc
        rel_angle = np.mod(np.arctan2(v, u) - start, TWO_PI)
        in_arc = rel_angle <= _arc_span(spec.calcium_arc)
        out[in_arc & (r >= inner) & (r <= outer)] = it["calcium"]

    out[np.hypot(u - spec.eccentricity, v) <= spec.lumen_radius] = it["lumen"]
    return out


def generate_phantom(spec: PhantomSpec) -> tuple[Image, Image]:
    """
    Render a phantom in cartesian and polar form.

    Both renderings classify sample points with the same analytic membership
    test; the polar image is never resampled from the cartesian one.

    Args:
        spec: Phantom geometry and intensities

    Returns:
        (cartesian, polar): cartesian is size x size with pixel (x, y) centered
        at ((x + 0.5 - size/2), (y + 0.5 - size/2)) / (size/2). polar is
        n_angles x n_radii with row i at angle 2 pi i / n_angles and column j
        at radius j / (n_radii - 1).
    """
    n = spec.size
    half = n / 2.0
    coords = (np.arange(n, dtype=np.float64) + 0.5 - half) / half
    v, u = np.meshgrid(coords, coords, indexing="ij")
    cartesian = Image(_classify(u, v, spec))

    theta = TWO_PI * np.arange(spec.n_angles, dtype=np.float64) / spec.n_angles
    radius = np.linspace(0.0, 1.0, spec.n_radii)
    pu = np.cos(theta)[:, None] * radius[None, :]
    pv = np.sin(theta)[:, None] * radius[None, :]
    polar = Image(_classify(pu, pv, spec))

    return cartesian, polar


def scan_geometry(spec: PhantomSpec) -> tuple[tuple[float, float], float]:
    """(center, radial_extent) mapping the polar rendering onto the cartesian one."""
    half = spec.size / 2.0
    return (half - 0.5, half - 0.5), half


def _abs_cos_integral(x: float) -> float:
    # integral of |cos t| from 0 to x
    k = math.floor((x + math.pi / 2.0) / math.pi)
    return 2.0 * k + (-1.0) ** k * math.sin(x)


def _abs_sin_integral(x: float) -> float:
    # integral of |sin t| from 0 to x
    k = math.floor(x / math.pi)
    return 2.0 * k + 1.0 - (-1.0) ** k * math.cos(x)


def _arc_weight(start: float, span: float, anisotropic: bool) -> float:
    """Integral of the boundary norm over a unit-radius arc."""
    if not anisotropic:
        return span
    end = start + span
    return (
        _abs_cos_integral(end)
        - _abs_cos_integral(start)
        + _abs_sin_integral(end)
        - _abs_sin_integral(start)
    )


def analytic_jump_sum(spec: PhantomSpec, anisotropic: bool = False) -> float:
    """
    Total variation of the continuous piecewise-constant phantom, in pixels.

    Sums |intensity jump| times boundary length over every interface. With
    anisotropic=True each boundary element ds is weighted by |n_x| + |n_y|
    instead of 1, which is what sum |J_x| + |J_y| measures on the pixel grid.

    Args:
        spec: Phantom specification
        anisotropic: Weight boundaries by the l1 norm of their normal

    Returns:
        Perimeter-weighted jump sum in pixel units
    """
    it = spec.intensities
    half = spec.size / 2.0
    full_circle = _arc_weight(0.0, TWO_PI, anisotropic)

    total = abs(it["adventitia"] - it["background"]) * full_circle * spec.adventitia_outer_radius
    total += abs(it["intima"] - it["adventitia"]) * full_circle * spec.intima_outer_radius
    total += abs(it["lumen"] - it["intima"]) * full_circle * spec.lumen_radius

    if spec.calcium_arc is not None:
        start, end, inner, outer = spec.calcium_arc
        span = _arc_span(spec.calcium_arc)
        arcs = _arc_weight(start, span, anisotropic) * (inner + outer)
        radial = outer - inner
        if anisotropic:
            sides = radial * sum(abs(math.cos(a)) + abs(math.sin(a)) for a in (start, end))
        else:
            sides = 2.0 * radial
        total += abs(it["calcium"] - it["intima"]) * (arcs + sides)

    return total * half
