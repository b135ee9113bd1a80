"""
mldenoise - Maximum-likelihood-data variational denoising

Total-variation denoisers whose data term is the negative log-likelihood of
the noise model, built for log-compressed generalized gamma speckle in
intravascular ultrasound, with the TV-L1 and ROF baselines, speckle
synthesis, a parametric vessel phantom, error metrics and a sweep harness.
"""

__version__ = "0.1.0"

from mldenoise.exceptions import (  # noqa: E402
    ConfigError,
    DimensionError,
    ImageFormatError,
    MldenoiseError,
    SweepError,
    UndefinedMetricError,
)
from mldenoise.image import (  # noqa: E402
    HalfPixelGradients,
    Image,
    cartesian_to_polar,
    half_pixel_gradients,
    laplacian,
    normalize,
    polar_to_cartesian,
)
from mldenoise.image_io import read_image, write_image  # noqa: E402
from mldenoise.metrics import (  # noqa: E402
    MetricsReport,
    eps_b,
    eps_d,
    eps_e,
    evaluate,
    pearson_lowpass,
)
from mldenoise.noise import (  # noqa: E402
    GaussianParams,
    GGParams,
    apply_speckle,
    gg_pdf,
    log_compress,
    log_gg_pdf,
    mld_data_term_gaussian,
    mld_data_term_gg,
    sample_gg,
    sample_log_gg,
    synthesize_log_speckle,
)
from mldenoise.phantom import (  # noqa: E402
    PhantomSpec,
    analytic_jump_sum,
    default_phantom_spec,
    generate_phantom,
)
from mldenoise.solvers import (  # noqa: E402
    DenoiseResult,
    SolverConfig,
    denoise,
    denoise_mld_gaussian,
    denoise_mld_gg,
    denoise_tvl1,
    el_residual_mld,
    mld_energy,
    second_variation_check,
)
from mldenoise.sweep import (  # noqa: E402
    ParamGrid,
    SweepReport,
    paper_grids,
    run_sweep,
)

__all__ = [
    # Images
    "Image",
    "HalfPixelGradients",
    "half_pixel_gradients",
    "laplacian",
    "normalize",
    "polar_to_cartesian",
    "cartesian_to_polar",
    "read_image",
    "write_image",
    # Noise model
    "GGParams",
    "GaussianParams",
    "gg_pdf",
    "log_gg_pdf",
    "sample_gg",
    "sample_log_gg",
    "apply_speckle",
    "log_compress",
    "synthesize_log_speckle",
    "mld_data_term_gg",
    "mld_data_term_gaussian",
    # Solvers
    "SolverConfig",
    "DenoiseResult",
    "denoise",
    "denoise_mld_gg",
    "denoise_tvl1",
    "denoise_mld_gaussian",
    "mld_energy",
    "el_residual_mld",
    "second_variation_check",
    # Phantom
    "PhantomSpec",
    "default_phantom_spec",
    "generate_phantom",
    "analytic_jump_sum",
    # Metrics
    "MetricsReport",
    "eps_b",
    "eps_d",
    "eps_e",
    "pearson_lowpass",
    "evaluate",
    # Sweeps
    "ParamGrid",
    "SweepReport",
    "paper_grids",
    "run_sweep",
    # Errors
    "MldenoiseError",
    "DimensionError",
    "ImageFormatError",
    "UndefinedMetricError",
    "ConfigError",
    "SweepError",
]
