"""
Image type and finite-difference stencils for mldenoise.

An Image is an immutable 2D float64 field with grid spacing. Arrays are
indexed ``[y, x]`` (row-major, top-left origin). Every stencil realizes the
homogeneous Neumann condition (grad J . n = 0) by replicating the outermost
pixel into one ghost layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from mldenoise.exceptions import DimensionError


@dataclass(frozen=True, eq=False)
class Image:
    """A dense 2D scalar field.

    Attributes:
        data: Intensities as a read-only float64 array of shape (height, width)
        dx: Grid spacing along x (columns), default 1
        dy: Grid spacing along y (rows), default 1
    """

    data: np.ndarray
    dx: float = 1.0
    dy: float = 1.0

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError(f"Image data must be a nonempty 2D array, got shape {arr.shape}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError(f"Grid spacing must be positive, got dx={self.dx}, dy={self.dy}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        """Number of pixels, |Omega|."""
        return int(self.data.size)

    def with_data(self, data: np.ndarray) -> Image:
        """Return a new image on the same grid holding ``data``."""
        return Image(data, dx=self.dx, dy=self.dy)

    @classmethod
    def from_values(
        cls, values: list[float], width: int, height: int, dx: float = 1.0, dy: float = 1.0
    ) -> Image:
        """Build an image from a flat row-major list of intensities."""
        if len(values) != width * height:
            raise DimensionError(
                f"Expected {width * height} values for a {width}x{height} image, got {len(values)}"
            )
        return cls(np.asarray(values, dtype=np.float64).reshape(height, width), dx=dx, dy=dy)


@dataclass(frozen=True, eq=False)
class HalfPixelGradients:
    """Gradient estimates on the cell faces of an image.

    Both fields hold (x-component, y-component) pairs in the last axis.
    Faces on the replicated boundary are included, so for an H x W image:

    Attributes:
        gxp: Shape (H, W+1, 2). ``gxp[y, k]`` is G at (k - 1/2, y), i.e.
            column k is the face between pixels x=k-1 and x=k.
            ``gxp[:, 1:]`` are the G_{x+1/2,y}, ``gxp[:, :-1]`` the G_{x-1/2,y}.
        gyp: Shape (H+1, W, 2), the same layout for the faces (x, y -/+ 1/2).
    """

    gxp: np.ndarray
    gyp: np.ndarray

    def magnitudes(self, eps: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Return smoothed magnitudes sqrt(|G|^2 + eps^2) for both face sets."""
        mx = np.sqrt(np.sum(self.gxp**2, axis=-1) + eps * eps)
        my = np.sqrt(np.sum(self.gyp**2, axis=-1) + eps * eps)
        return mx, my


def check_same_shape(a: Image, b: Image, what: str = "images") -> None:
    """Raise DimensionError unless ``a`` and ``b`` have equal shapes."""
    if a.shape != b.shape:
        raise DimensionError(f"Shape mismatch between {what}: {a.shape} vs {b.shape}")


def _require_stencil_size(img: Image, minimum: int = 3) -> None:
    if img.width < minimum or img.height < minimum:
        raise DimensionError(
            f"Image must be at least {minimum}x{minimum} for this stencil, "
            f"got {img.width}x{img.height}"
        )


def normalize(img: Image) -> Image:
    """Affinely map intensities onto [0, 1]. Constant images map to zeros."""
    lo = float(np.min(img.data))
    hi = float(np.max(img.data))
    if hi <= lo:
        return img.with_data(np.zeros(img.shape))
    out = (img.data - lo) / (hi - lo)
    return img.with_data(np.clip(out, 0.0, 1.0))


def laplacian(img: Image) -> Image:
    """5-point discrete Laplacian with edge-replicated boundary.

    Raises:
        DimensionError: If width or height is below 3
    """
    _require_stencil_size(img)
    p = np.pad(img.data, 1, mode="edge")
    center = p[1:-1, 1:-1]
    lap_x = (p[1:-1, 2:] + p[1:-1, :-2] - 2.0 * center) / (img.dx * img.dx)
    lap_y = (p[2:, 1:-1] + p[:-2, 1:-1] - 2.0 * center) / (img.dy * img.dy)
    return img.with_data(lap_x + lap_y)


def half_pixel_gradients(img: Image) -> HalfPixelGradients:
    """Gradient estimates at pixel edges.

    G_{x+1/2,y} = ((J[x+1,y] - J[x,y]) / dx,
                   (J[x+1,y+1] + J[x,y+1] - J[x+1,y-1] - J[x,y-1]) / (4 dy))

    and symmetrically for G_{x,y+1/2}. Values outside the image come from
    one layer of edge replication.

    Raises:
        DimensionError: If width or height is below 3
    """
    _require_stencil_size(img)
    p = np.pad(img.data, 1, mode="edge")
    dx, dy = img.dx, img.dy

    # Vertical faces: between padded columns c and c+1, rows 1..H.
    nx = (p[1:-1, 1:] - p[1:-1, :-1]) / dx
    tx = (p[2:, 1:] + p[2:, :-1] - p[:-2, 1:] - p[:-2, :-1]) / (4.0 * dy)

    # Horizontal faces: between padded rows r and r+1, columns 1..W.
    ny = (p[1:, 1:-1] - p[:-1, 1:-1]) / dy
    ty = (p[1:, 2:] + p[:-1, 2:] - p[1:, :-2] - p[:-1, :-2]) / (4.0 * dx)

    return HalfPixelGradients(
        gxp=np.stack([nx, tx], axis=-1),
        gyp=np.stack([ty, ny], axis=-1),
    )


def forward_gradient(img: Image) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences (gx, gy), zero across the replicated boundary."""
    data = img.data
    gx = np.zeros_like(data)
    gy = np.zeros_like(data)
    gx[:, :-1] = np.diff(data, axis=1) / img.dx
    gy[:-1, :] = np.diff(data, axis=0) / img.dy
    return gx, gy


def divergence(px: np.ndarray, py: np.ndarray, dx: float = 1.0, dy: float = 1.0) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of forward_gradient."""
    div = np.zeros_like(px)
    div[:, 0] = px[:, 0]
    div[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    div[:, -1] = -px[:, -2]
    div_y = np.zeros_like(py)
    div_y[0, :] = py[0, :]
    div_y[1:-1, :] = py[1:-1, :] - py[:-2, :]
    div_y[-1, :] = -py[-2, :]
    return div / dx + div_y / dy


def polar_to_cartesian(
    img: Image,
    center: tuple[float, float],
    radial_extent: float,
    size: int | None = None,
) -> Image:
    """Scan-convert a polar image (rows = angle, columns = radius).

    Row i holds angle 2*pi*i/n_angles and column j radius
    j*radial_extent/(n_radii - 1), both measured in output pixels around
    ``center`` = (x, y) in output index coordinates. Each output pixel is
    inverse-mapped and bilinearly interpolated; pixels farther than
    ``radial_extent`` from the center are set to 0.

    Args:
        img: Polar image
        center: (x, y) of the transducer in output pixel coordinates
        radial_extent: Radius covered by the last polar column, in pixels
        size: Output side length (default ceil(2 * radial_extent))

    Raises:
        ValueError: If radial_extent is not positive
    """
    if not radial_extent > 0:
        raise ValueError(f"radial_extent must be positive, got {radial_extent}")
    n_angles, n_radii = img.shape
    if n_radii < 2:
        raise DimensionError("Polar image needs at least two radial samples")
    side = size if size is not None else int(math.ceil(2.0 * radial_extent))

    cx, cy = center
    ys, xs = np.mgrid[0:side, 0:side].astype(np.float64)
    rel_x = xs - cx
    rel_y = ys - cy
    r = np.hypot(rel_x, rel_y)
    theta = np.mod(np.arctan2(rel_y, rel_x), 2.0 * np.pi)

    # Repeat the first angle row after the last so interpolation wraps.
    wrapped = np.vstack([img.data, img.data[:1]])
    rows = theta / (2.0 * np.pi) * n_angles
    cols = r / radial_extent * (n_radii - 1)
    out = ndimage.map_coordinates(wrapped, [rows, cols], order=1, mode="nearest")
    out[r > radial_extent] = 0.0
    return Image(out)


def cartesian_to_polar(
    img: Image,
    center: tuple[float, float],
    radial_extent: float,
    n_angles: int = 256,
    n_radii: int = 256,
) -> Image:
    """Resample a cartesian image onto the polar grid used by polar_to_cartesian."""
    if not radial_extent > 0:
        raise ValueError(f"radial_extent must be positive, got {radial_extent}")
    cx, cy = center
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    radius = np.linspace(0.0, radial_extent, n_radii)
    xs = cx + np.cos(theta)[:, None] * radius[None, :]
    ys = cy + np.sin(theta)[:, None] * radius[None, :]
    out = ndimage.map_coordinates(img.data, [ys, xs], order=1, mode="nearest")
    return Image(out)
