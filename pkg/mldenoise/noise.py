"""
Generalized-gamma speckle model for mldenoise.

The speckle factor eps follows a generalized gamma (GG) law with density

    P(eps) = gamma / (delta^(gamma*nu) Gamma(nu)) eps^(gamma*nu - 1) exp(-(eps/delta)^gamma)

and log-compression turns the multiplicative model u = v * eps into the
additive one I = J + ln(eps). This module holds both densities, an exact
sampler, speckle synthesis and the maximum-likelihood data terms used by the
MLD functionals.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from mldenoise.image import Image, check_same_shape

# Exponents gamma*(I - J) are clamped here before exp() to avoid overflow.
EXP_CLAMP = 700.0

# Samples are drawn in chunks of this size, each from its own child seed.
SAMPLE_CHUNK = 1 << 16

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class GGParams:
    """Generalized gamma parameters (gamma, nu, delta), all positive."""

    gamma: float
    nu: float
    delta: float

    def __post_init__(self) -> None:
        for name in ("gamma", "nu", "delta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"GG parameter {name} must be positive and finite, got {value}")

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        return asdict(self)


@dataclass(frozen=True)
class GaussianParams:
    """Normal noise parameters for the Gaussian MLD functional."""

    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        return asdict(self)


def resolve_seed(seed: int | None) -> int:
    """Validate a 64-bit seed, or draw a fresh one from OS entropy if None."""
    if seed is None:
        return int(np.random.SeedSequence().entropy) & MAX_SEED
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return int(seed)


def gg_pdf(eps: float | np.ndarray, p: GGParams) -> float | np.ndarray:
    """Generalized gamma density at eps > 0.

    Raises:
        ValueError: If any eps is not positive
    """
    x = np.asarray(eps, dtype=np.float64)
    if np.any(~(x > 0)):
        raise ValueError("gg_pdf is defined for eps > 0 only")
    log_p = (
        math.log(p.gamma)
        - p.gamma * p.nu * math.log(p.delta)
        - special.gammaln(p.nu)
        + (p.gamma * p.nu - 1.0) * np.log(x)
        - (x / p.delta) ** p.gamma
    )
    out = np.exp(log_p)
    return float(out) if out.ndim == 0 else out


def log_gg_pdf(eps_tilde: float | np.ndarray, p: GGParams) -> float | np.ndarray:
    """Density of ln(eps) for GG eps (log-compressed GG density).

    Defined on the whole real line; values that underflow return 0.
    """
    t = np.asarray(eps_tilde, dtype=np.float64)
    z = p.gamma * (t - math.log(p.delta))
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(math.log(p.gamma) - special.gammaln(p.nu) + p.nu * z - np.exp(z))
    return float(out) if out.ndim == 0 else out


def log_gg_cdf(eps_tilde: float | np.ndarray, p: GGParams) -> float | np.ndarray:
    """Distribution function of ln(eps): P(nu, e^(gamma (t - ln delta)))."""
    t = np.asarray(eps_tilde, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = special.gammainc(p.nu, np.exp(p.gamma * (t - math.log(p.delta))))
    return float(out) if out.ndim == 0 else out


def log_gg_mode(p: GGParams) -> float:
    """Maximizer of the log-compressed density, ln(delta) + ln(nu)/gamma."""
    return math.log(p.delta) + math.log(p.nu) / p.gamma


def gg_mean(p: GGParams) -> float:
    """E[eps] = delta Gamma(nu + 1/gamma) / Gamma(nu)."""
    return p.delta * math.exp(special.gammaln(p.nu + 1.0 / p.gamma) - special.gammaln(p.nu))


def gg_log_moments(p: GGParams) -> tuple[float, float]:
    """Mean and variance of ln(eps)."""
    mean = math.log(p.delta) + float(special.digamma(p.nu)) / p.gamma
    var = float(special.polygamma(1, p.nu)) / (p.gamma * p.gamma)
    return mean, var


def sample_log_gg(p: GGParams, n: int, seed: int) -> np.ndarray:
    """Draw n samples of ln(eps) for GG distributed eps.

    With W ~ Gamma(nu, 1), ln(eps) = ln(delta) + ln(W)/gamma. For nu < 1, ln W
    is taken as ln(G) + ln(U)/nu with G ~ Gamma(nu + 1) and U ~ U(0, 1], which
    has the same law and does not underflow for very small nu.

    Generation proceeds in chunks of SAMPLE_CHUNK values, chunk k drawing from
    the k-th child of SeedSequence(seed). Output depends only on (p, n, seed).
    """
    if n < 1:
        raise ValueError(f"Sample count must be at least 1, got {n}")
    seed = resolve_seed(seed)
    n_chunks = -(-n // SAMPLE_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    out = np.empty(n, dtype=np.float64)

    for k, child in enumerate(children):
        start = k * SAMPLE_CHUNK
        m = min(SAMPLE_CHUNK, n - start)
        rng = np.random.default_rng(child)
        if p.nu >= 1.0:
            log_w = np.log(rng.standard_gamma(p.nu, m))
        else:
            g = rng.standard_gamma(p.nu + 1.0, m)
            u = 1.0 - rng.random(m)
            log_w = np.log(g) + np.log(u) / p.nu
        out[start : start + m] = log_w

    return math.log(p.delta) + out / p.gamma


def sample_gg(p: GGParams, n: int, seed: int) -> np.ndarray:
    """Draw n GG samples eps = delta * W^(1/gamma), W ~ Gamma(nu, 1)."""
    return np.exp(sample_log_gg(p, n, seed))


def apply_speckle(v: Image, p: GGParams, seed: int) -> Image:
    """Multiply every pixel of v by an independent GG factor.

    Raises:
        ValueError: If v has negative pixels
    """
    if np.any(v.data < 0):
        raise ValueError("Speckle can only be applied to nonnegative images")
    eps = sample_gg(p, v.size, seed).reshape(v.shape)
    return v.with_data(v.data * eps)


def log_compress(u: Image, floor: float = 1e-6) -> Image:
    """Pixel-wise ln(max(u, floor)).

    Raises:
        ValueError: If floor is not positive
    """
    if not floor > 0:
        raise ValueError(f"Log-compression floor must be positive, got {floor}")
    return u.with_data(np.log(np.maximum(u.data, floor)))


def synthesize_log_speckle(ref: Image, p: GGParams, seed: int) -> tuple[Image, Image]:
    """Speckle a noiseless log-compressed image.

    ``ref`` is read as the log-compressed noiseless image J, so the envelope is
    v = exp(J). Returns (u, I) with u = v * eps and I = J + ln(eps), which is
    log_compress(u) without a floor.
    """
    log_eps = sample_log_gg(p, ref.size, seed).reshape(ref.shape)
    noisy = ref.data + log_eps
    return ref.with_data(np.exp(noisy)), ref.with_data(noisy)


def gg_data_derivative(I: np.ndarray, J: np.ndarray, p: GGParams) -> np.ndarray:
    """Pixel-wise d/dJ of the negated GG data term: gamma nu - gamma/delta^gamma e^(gamma (I-J))."""
    z = np.minimum(p.gamma * (I - J), EXP_CLAMP)
    return p.gamma * p.nu - p.gamma * p.delta ** (-p.gamma) * np.exp(z)


def gg_data_curvature(I: np.ndarray, J: np.ndarray, p: GGParams) -> np.ndarray:
    """Pixel-wise second derivative of the negated GG data term (always positive)."""
    z = np.minimum(p.gamma * (I - J), EXP_CLAMP)
    return p.gamma * p.gamma * p.delta ** (-p.gamma) * np.exp(z)


def gg_data_values(I: np.ndarray, J: np.ndarray, p: GGParams) -> np.ndarray:
    """Pixel-wise c(I, J) = gamma nu (I - J) - e^(gamma (I - J)) / delta^gamma."""
    diff = I - J
    z = np.minimum(p.gamma * diff, EXP_CLAMP)
    return p.gamma * p.nu * diff - p.delta ** (-p.gamma) * np.exp(z)


def mld_data_term_gg(I: Image, J: Image, p: GGParams) -> float:
    """Maximum-likelihood data term for log-compressed GG noise, summed over pixels.

    The constant C1 = |Omega| (ln(gamma/Gamma(nu)) - gamma nu ln(delta)) is dropped,
    so values are comparable only for a fixed parameter set.

    Raises:
        DimensionError: If I and J differ in shape
    """
    check_same_shape(I, J, "I and J")
    return float(np.sum(gg_data_values(I.data, J.data, p)))


def mld_data_term_gaussian(I: Image, J: Image, p: GaussianParams) -> float:
    """Maximum-likelihood data term for normal noise: -sum (I - J - mu)^2.

    Raises:
        DimensionError: If I and J differ in shape
    """
    check_same_shape(I, J, "I and J")
    r = I.data - J.data - p.mu
    return -float(np.sum(r * r))
