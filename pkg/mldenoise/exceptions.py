"""
Exception types raised by mldenoise.

Everything derives from MldenoiseError. Input problems additionally derive
from ValueError so callers that only know about ValueError (as the CLI's
generic handlers do) still catch them.
"""

from __future__ import annotations

import typing

if typing.TYPE_CHECKING:
    from mldenoise.sweep import SweepReport


class MldenoiseError(Exception):
    """Base class for all mldenoise errors."""


class DimensionError(MldenoiseError, ValueError):
    """Image too small for a stencil, or two images of different shapes."""


class ImageFormatError(MldenoiseError, ValueError):
    """Unsupported, malformed or colour image file."""


class UndefinedMetricError(MldenoiseError, ValueError):
    """A metric is undefined for the given images (flat Laplacian, zero variance)."""


class ConfigError(MldenoiseError, ValueError):
    """Malformed key=value configuration or manifest file."""


class SweepError(MldenoiseError):
    """A parameter sweep could not produce a best row.

    Attributes:
        report: The (possibly partial) report, so callers can still write it out
    """

    def __init__(self, message: str, report: SweepReport | None = None) -> None:
        super().__init__(message)
        self.report = report
