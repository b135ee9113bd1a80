"""
Error functions for denoising experiments.

  - eps_b: mean intensity bias, normalized L2 norm of ref - J
  - eps_d: a posteriori noise dispersion, population std of ref - J
  - eps_e: edge pattern recovery, correlation of the Laplacians of ref and J
  - pearson_lowpass: Pearson correlation between a low-passed input and J

Images are compared as given; the caller decides whether that is the polar
or the cartesian rendering.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from mldenoise.exceptions import UndefinedMetricError
from mldenoise.image import Image, check_same_shape, laplacian

logger = logging.getLogger(__name__)

METRICS_CSV_HEADER = "frame_id,eps_b,eps_d,eps_e,pearson_lowpass"

# Retained band of the low-pass filter: |k| <= n * LOWPASS_FRACTION per axis,
# with k the centered integer frequency index.
LOWPASS_FRACTION = 0.25


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.12g}"


@dataclass
class MetricsReport:
    """
    All error functions for one denoised image.

    Attributes:
        eps_b: Normalized L2 bias against the reference
        eps_d: Bias-corrected standard deviation of ref - J
        eps_e: Laplacian edge correlation (normalized unless literal_eps_e)
        pearson_lowpass: Correlation with the low-passed input, if one was given
        literal_eps_e: Whether eps_e uses the squared-numerator form
    """

    eps_b: float
    eps_d: float
    eps_e: float
    pearson_lowpass: float | None = None
    literal_eps_e: bool = False

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        return asdict(self)

    def to_csv_row(self, frame_id: str | int = 0) -> str:
        """One CSV line matching METRICS_CSV_HEADER, 12 significant digits."""
        return ",".join(
            [
                str(frame_id),
                _fmt(self.eps_b),
                _fmt(self.eps_d),
                _fmt(self.eps_e),
                _fmt(self.pearson_lowpass),
            ]
        )


def eps_b(ref: Image, J: Image) -> float:
    """
    Mean intensity bias sqrt(sum (ref - J)^2 / sum ref^2).

    Raises:
        DimensionError: If the images differ in shape
        UndefinedMetricError: If ref is identically zero
    """
    check_same_shape(ref, J, "reference and denoised image")
    r = np.asarray(ref.data).ravel()
    c = np.asarray(J.data).ravel()
    denom = float(np.sum(r * r))
    if denom == 0.0:
        raise UndefinedMetricError("eps_b is undefined for an all-zero reference")
    return math.sqrt(float(np.sum((r - c) ** 2)) / denom)


def eps_d(ref: Image, J: Image) -> float:
    """
    A posteriori noise dispersion: population standard deviation of ref - J.

    Raises:
        DimensionError: If the images differ in shape
    """
    check_same_shape(ref, J, "reference and denoised image")
    d = np.asarray(ref.data - J.data).ravel()
    return float(np.sqrt(np.mean((d - np.mean(d)) ** 2)))


def eps_e(ref: Image, J: Image, literal: bool = False) -> float:
    """
    Edge pattern recovery from 5-point Laplacians.

    The default is the normalized correlation

        sum(Lref * LJ) / (sqrt(sum Lref^2) * sqrt(sum LJ^2))

    which is 1 for J = ref and lies in [-1, 1]. literal=True squares the
    numerator term-wise, sum((Lref * LJ)^2) / (...), which is not
    normalized and is kept for comparison with published tables.

    Raises:
        DimensionError: If the images differ in shape or are smaller than 3x3
        UndefinedMetricError: If either Laplacian is identically zero
    """
    check_same_shape(ref, J, "reference and denoised image")
    lr = laplacian(ref).data.ravel()
    lj = laplacian(J).data.ravel()
    norm_r = math.sqrt(float(np.sum(lr * lr)))
    norm_j = math.sqrt(float(np.sum(lj * lj)))
    if norm_r == 0.0 or norm_j == 0.0:
        raise UndefinedMetricError("eps_e is undefined for an image with a flat Laplacian")
    prod = lr * lj
    numerator = float(np.sum(prod * prod)) if literal else float(np.sum(prod))
    return numerator / (norm_r * norm_j)


def lowpass(I: Image, fraction: float = LOWPASS_FRACTION) -> Image:
    """
    Zero the upper frequencies of the 2D DFT of I.

    Coefficients whose centered index magnitude exceeds ``fraction`` times
    the size along either axis are removed; the real part of the inverse
    transform is returned.
    """
    h, w = I.shape
    ky = np.abs(np.fft.fftfreq(h) * h)
    kx = np.abs(np.fft.fftfreq(w) * w)
    keep = (ky[:, None] <= h * fraction) & (kx[None, :] <= w * fraction)
    spectrum = np.fft.fft2(I.data)
    spectrum[~keep] = 0.0
    return I.with_data(np.real(np.fft.ifft2(spectrum)))


def _is_flat(x: np.ndarray) -> bool:
    # lowpass() of a constant carries rounding noise
    return bool(np.std(x) <= 1e-12 * (1.0 + float(np.max(np.abs(x)))))


def pearson_lowpass(I: Image, J: Image) -> float:
    """
    Pearson correlation between lowpass(I) and J over all pixels.

    Raises:
        DimensionError: If the images differ in shape
        UndefinedMetricError: If lowpass(I) or J has zero variance
    """
    check_same_shape(I, J, "input and denoised image")
    a = lowpass(I).data.ravel()
    b = np.asarray(J.data).ravel()
    if _is_flat(a) or _is_flat(b):
        raise UndefinedMetricError("Pearson correlation is undefined for a constant image")
    return float(np.corrcoef(a, b)[0, 1])


def evaluate(
    ref: Image,
    J: Image,
    noisy: Image | None = None,
    literal: bool = False,
    undefined_as_nan: bool = False,
) -> MetricsReport:
    """
    Compute every metric for one denoised image.

    Args:
        ref: Noiseless reference
        J: Denoised image
        noisy: Denoiser input; pearson_lowpass is computed only if given
        literal: Use the squared-numerator eps_e
        undefined_as_nan: Report an undefined metric as NaN instead of raising;
            the other metrics are still computed

    Returns:
        MetricsReport

    Raises:
        UndefinedMetricError: If a metric is undefined and undefined_as_nan is False
    """

    def metric(fn: Callable[..., float], *args: object, **kwargs: object) -> float:
        try:
            return fn(*args, **kwargs)
        except UndefinedMetricError as e:
            if not undefined_as_nan:
                raise
            logger.debug("%s", e)
            return math.nan

    return MetricsReport(
        eps_b=metric(eps_b, ref, J),
        eps_d=metric(eps_d, ref, J),
        eps_e=metric(eps_e, ref, J, literal=literal),
        pearson_lowpass=metric(pearson_lowpass, noisy, J) if noisy is not None else None,
        literal_eps_e=literal,
    )
