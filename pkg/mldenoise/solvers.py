"""
Variational denoisers for mldenoise.

Three minimizers share one result type and one step test
(||J^{k+1} - J^k||_inf < tol):

  - denoise_mld_gg: maximum-likelihood-data functional for log-compressed
    generalized-gamma speckle, solved by the lagged-diffusivity fixed point
    with sub-relaxation
  - denoise_mld_gaussian: the same machinery with a normal-noise data term
    (mu = 0 is the ROF model)
  - denoise_tvl1: |I - J| + alpha |grad J|, solved by a first-order
    primal-dual scheme

The fixed-point schemes lag the diffusivity 1/|G| at the previous iterate.
The "pointwise" scheme updates every pixel from its frozen neighbours, which
is the displayed per-pixel update; the "implicit" scheme (default) solves
the same lagged stencil for all pixels at once with a sparse factorization,
so flat regions, where 1/|G| is of order 1/grad_eps, still move. Both stop
only when the step test holds and the Euler-Lagrange residual is below
RESIDUAL_FACTOR * tol; a run whose steps are small but whose residual is not
ends as "stalled".
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from mldenoise.image import (
    Image,
    check_same_shape,
    divergence,
    forward_gradient,
    half_pixel_gradients,
)
from mldenoise.noise import (
    GaussianParams,
    GGParams,
    gg_data_curvature,
    gg_data_derivative,
    gg_data_values,
)

logger = logging.getLogger(__name__)

METHODS = ("mld_gg", "tvl1", "mld_gaussian")
SCHEMES = ("implicit", "pointwise")

# Converged iterates must satisfy ||EL residual||_inf < RESIDUAL_FACTOR * tol.
RESIDUAL_FACTOR = 100.0

NoiseParams = Union[GGParams, GaussianParams, None]


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings shared by all denoisers.

    Attributes:
        alpha: Regularization weight
        beta: Sub-relaxation factor in [0, 1) for the fixed-point schemes
        tol: Stopping tolerance on the infinity norm of the update
        max_iter: Iteration cap; runs hitting it are reported as not converged
        grad_eps: Smoothing in sqrt(|G|^2 + grad_eps^2)
        record_every: Energy is recorded every this many iterations (0 disables)
        divergence_limit: Iterates whose infinity norm exceeds this are divergent
        log_every: Progress is logged at DEBUG level every this many iterations
        scheme: "implicit" or "pointwise" update of the fixed-point schemes
    """

    alpha: float
    beta: float = 0.5
    tol: float = 1e-5
    max_iter: int = 5000
    grad_eps: float = 1e-8
    record_every: int = 10
    divergence_limit: float = 1e6
    log_every: int = 500
    scheme: str = "implicit"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if not self.grad_eps > 0:
            raise ValueError(f"grad_eps must be positive, got {self.grad_eps}")
        if self.record_every < 0:
            raise ValueError(f"record_every must be nonnegative, got {self.record_every}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {', '.join(SCHEMES)}, got {self.scheme!r}")


@dataclass
class DenoiseResult:
    """Output of a denoiser.

    Attributes:
        image: The denoised image J (last finite iterate if the run diverged)
        iterations: Number of iterations performed
        final_step_inf_norm: ||J^{k} - J^{k-1}||_inf of the last update
        final_energy: Value of the discrete functional at ``image``
        converged: True iff the stopping criterion was met
        status: "converged", "max_iter", "stalled" or "diverged"
        method: Which denoiser produced the result
        energy_history: (iteration, energy) pairs sampled during the run
        final_residual_inf_norm: ||EL residual||_inf at ``image`` (NaN for tvl1)
    """

    image: Image
    iterations: int
    final_step_inf_norm: float
    final_energy: float
    converged: bool
    status: str = "converged"
    method: str = ""
    energy_history: list[tuple[int, float]] = field(default_factory=list)
    final_residual_inf_norm: float = math.nan

    def to_dict(self) -> dict:
        """Convert the trace (without the image) to a dictionary."""
        return {
            "method": self.method,
            "iterations": self.iterations,
            "final_step_inf_norm": self.final_step_inf_norm,
            "final_residual_inf_norm": self.final_residual_inf_norm,
            "final_energy": self.final_energy,
            "converged": self.converged,
            "status": self.status,
        }

    def status_line(self) -> str:
        """Single machine-readable key=value line describing the run."""
        residual = ""
        if not math.isnan(self.final_residual_inf_norm):
            residual = f" residual={self.final_residual_inf_norm:.6e}"
        return (
            f"method={self.method} iterations={self.iterations} "
            f"final_step={self.final_step_inf_norm:.6e}{residual} "
            f"energy={self.final_energy:.12g} "
            f"converged={'true' if self.converged else 'false'} status={self.status}"
        )


def _require_finite(img: Image) -> None:
    if not np.all(np.isfinite(img.data)):
        raise ValueError("Input image contains non-finite values")


def _smoothed_tv_density(J: Image, grad_eps: float) -> np.ndarray:
    gx, gy = forward_gradient(J)
    return np.sqrt(gx * gx + gy * gy + grad_eps * grad_eps)


def _mld_energy_density(
    I: Image, J: Image, p: GGParams, alpha: float, grad_eps: float
) -> np.ndarray:
    return -gg_data_values(I.data, J.data, p) + alpha * _smoothed_tv_density(J, grad_eps)


def mld_energy(I: Image, J: Image, p: GGParams, alpha: float, grad_eps: float = 1e-8) -> float:
    """Discrete MLD functional for GG noise.

    sum over pixels of -gamma nu (I-J) + e^(gamma (I-J)) / delta^gamma
    + alpha sqrt(|grad J|^2 + grad_eps^2), with forward-difference gradients.

    Raises:
        DimensionError: If I and J differ in shape
    """
    check_same_shape(I, J, "I and J")
    return float(np.sum(_mld_energy_density(I, J, p, alpha, grad_eps)))


def gaussian_energy(
    I: Image, J: Image, p: GaussianParams, alpha: float, grad_eps: float = 1e-8
) -> float:
    """Discrete Gaussian MLD functional, sum (I-J-mu)^2 + alpha |grad J|_smoothed.

    With mu = 0 this is the (smoothed) ROF energy.
    """
    check_same_shape(I, J, "I and J")
    r = I.data - J.data - p.mu
    return float(np.sum(r * r + alpha * _smoothed_tv_density(J, grad_eps)))


def tvl1_energy(I: Image, J: Image, alpha: float) -> float:
    """Discrete TV-L1 functional, sum |I - J| + alpha |grad J| (unsmoothed)."""
    check_same_shape(I, J, "I and J")
    gx, gy = forward_gradient(J)
    return float(np.sum(np.abs(I.data - J.data) + alpha * np.sqrt(gx * gx + gy * gy)))


def stencil_coefficients(J: Image, grad_eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Lagged-diffusivity coefficients f and s of the fixed-point scheme.

    f = -(J[x+1]/|G(x+1/2)| + J[x-1]/|G(x-1/2)|)/dx^2 - (same along y)/dy^2
    s = -(1/|G(x+1/2)| + 1/|G(x-1/2)|)/dx^2 - (same along y)/dy^2

    with |G| = sqrt(|G|^2 + grad_eps^2) from half_pixel_gradients, so that
    div(grad J/|grad J|) = -f + s J.
    """
    mx, my = half_pixel_gradients(J).magnitudes(grad_eps)
    inv_e, inv_w = 1.0 / mx[:, 1:], 1.0 / mx[:, :-1]
    inv_n, inv_s = 1.0 / my[1:, :], 1.0 / my[:-1, :]

    p = np.pad(J.data, 1, mode="edge")
    cx = 1.0 / (J.dx * J.dx)
    cy = 1.0 / (J.dy * J.dy)
    f = -cx * (p[1:-1, 2:] * inv_e + p[1:-1, :-2] * inv_w) - cy * (
        p[2:, 1:-1] * inv_n + p[:-2, 1:-1] * inv_s
    )
    s = -cx * (inv_e + inv_w) - cy * (inv_n + inv_s)
    return f, s


def tv_divergence(J: Image, grad_eps: float) -> np.ndarray:
    """div(grad J / |grad J|) as a difference of face fluxes."""
    mx, my = half_pixel_gradients(J).magnitudes(grad_eps)
    p = np.pad(J.data, 1, mode="edge")
    center = p[1:-1, 1:-1]
    cx = 1.0 / (J.dx * J.dx)
    cy = 1.0 / (J.dy * J.dy)
    flux_x = cx * ((p[1:-1, 2:] - center) / mx[:, 1:] - (center - p[1:-1, :-2]) / mx[:, :-1])
    flux_y = cy * ((p[2:, 1:-1] - center) / my[1:, :] - (center - p[:-2, 1:-1]) / my[:-1, :])
    return flux_x + flux_y


def el_residual_mld(
    I: Image, J: Image, p: GGParams, alpha: float, grad_eps: float = 1e-8
) -> Image:
    """Pixel-wise Euler-Lagrange residual of the smoothed MLD functional.

    gamma nu - gamma/delta^gamma e^(gamma (I-J)) - alpha div(grad J/|grad J|),
    with the divergence evaluated as -f + s J.
    """
    check_same_shape(I, J, "I and J")
    f, s = stencil_coefficients(J, grad_eps)
    div = -f + s * J.data
    return J.with_data(gg_data_derivative(I.data, J.data, p) - alpha * div)


def lagged_operator(J: Image, grad_eps: float) -> sparse.csc_matrix:
    """Sparse matrix L with L u = -div(grad u / |G(J)|) for the lagged weights of J.

    Uses the same face weights as stencil_coefficients; boundary faces carry
    no flux. L is symmetric positive semidefinite and annihilates constants.
    """
    mx, my = half_pixel_gradients(J).magnitudes(grad_eps)
    ny, nx = J.shape
    n = ny * nx
    index = np.arange(n).reshape(ny, nx)
    weights = np.concatenate(
        [(1.0 / (J.dx * J.dx * mx[:, 1:-1])).ravel(), (1.0 / (J.dy * J.dy * my[1:-1, :])).ravel()]
    )
    rows = np.concatenate([index[:, :-1].ravel(), index[:-1, :].ravel()])
    cols = np.concatenate([index[:, 1:].ravel(), index[1:, :].ravel()])
    degree = np.bincount(rows, weights=weights, minlength=n) + np.bincount(
        cols, weights=weights, minlength=n
    )
    off = sparse.coo_matrix((weights, (rows, cols)), shape=(n, n))
    return (sparse.diags(degree) - off - off.T).tocsc()


def _implicit_step(
    J: Image, residual: np.ndarray, curvature: np.ndarray, alpha: float, grad_eps: float
) -> np.ndarray:
    """Solve (diag(curvature) + alpha L) delta = -residual for the lagged L of J."""
    A = sparse.diags(curvature.ravel()) + alpha * lagged_operator(J, grad_eps)
    delta = sparse_linalg.spsolve(A.tocsc(), -residual.ravel())
    return np.asarray(delta).reshape(J.shape)


def _fixed_point(
    I: Image,
    cfg: SolverConfig,
    data_derivative: Callable[[np.ndarray], np.ndarray],
    data_curvature: Callable[[np.ndarray], np.ndarray],
    energy: Callable[[Image], float],
    method: str,
) -> DenoiseResult:
    """J^{n+1} = J^n + (1-beta) delta^n from J^0 = I.

    With r = d(J) - alpha div the Euler-Lagrange residual, the pointwise
    scheme takes delta = r / (alpha s), which is the update
    beta J + (1-beta)(d + alpha f)/(alpha s); the implicit scheme solves
    (d'(J) + alpha L) delta = -r.
    """
    _require_finite(I)
    alpha, beta = cfg.alpha, cfg.beta
    J = I.data.copy()
    history: list[tuple[int, float]] = []
    step = math.inf
    residual_norm = math.inf
    residual_limit = RESIDUAL_FACTOR * cfg.tol
    status = "max_iter"
    iterations = 0

    while True:
        current = I.with_data(J)
        residual = data_derivative(J) - alpha * tv_divergence(current, cfg.grad_eps)
        residual_norm = float(np.max(np.abs(residual)))
        if step < cfg.tol and residual_norm < residual_limit:
            status = "converged"
            break
        if iterations == cfg.max_iter:
            break

        if cfg.scheme == "implicit":
            delta = _implicit_step(current, residual, data_curvature(J), alpha, cfg.grad_eps)
        else:
            _, s = stencil_coefficients(current, cfg.grad_eps)
            delta = residual / (alpha * s)
        J_new = J + (1.0 - beta) * delta

        if not np.all(np.isfinite(J_new)) or np.max(np.abs(J_new)) > cfg.divergence_limit:
            status = "diverged"
            logger.warning(
                "%s diverged at iteration %d (alpha=%g)", method, iterations + 1, alpha
            )
            break

        step = float(np.max(np.abs(J_new - J)))
        J = J_new
        iterations += 1

        if cfg.record_every and iterations % cfg.record_every == 0:
            history.append((iterations, energy(I.with_data(J))))
        if cfg.log_every and iterations % cfg.log_every == 0:
            logger.debug(
                "%s iteration %d: step=%.3e residual=%.3e",
                method, iterations, step, residual_norm,
            )

    if status == "max_iter":
        if step < cfg.tol:
            status = "stalled"
            logger.warning(
                "%s stalled: step=%.3e but residual=%.3e after %d iterations",
                method, step, residual_norm, iterations,
            )
        else:
            logger.warning("%s reached max_iter=%d (step=%.3e)", method, cfg.max_iter, step)

    result_image = I.with_data(J)
    return DenoiseResult(
        image=result_image,
        iterations=iterations,
        final_step_inf_norm=step,
        final_energy=energy(result_image),
        converged=status == "converged",
        status=status,
        method=method,
        energy_history=history,
        final_residual_inf_norm=residual_norm,
    )


def denoise_mld_gg(I: Image, p: GGParams, cfg: SolverConfig) -> DenoiseResult:
    """Minimize the MLD functional for log-compressed GG noise.

    Args:
        I: Noisy log-compressed image
        p: Noise model parameters
        cfg: Solver settings

    Returns:
        DenoiseResult with the last iterate and its convergence trace

    Raises:
        ValueError: If I contains non-finite values
    """
    # Above the per-pixel minimizer (u < nu) the curvature is floored at its value there.
    floor = p.gamma * p.gamma * p.nu
    return _fixed_point(
        I,
        cfg,
        data_derivative=lambda J: gg_data_derivative(I.data, J, p),
        data_curvature=lambda J: np.maximum(gg_data_curvature(I.data, J, p), floor),
        energy=lambda J: mld_energy(I, J, p, cfg.alpha, cfg.grad_eps),
        method="mld_gg",
    )


def denoise_mld_gaussian(I: Image, p: GaussianParams, cfg: SolverConfig) -> DenoiseResult:
    """Minimize sum (I - J - mu)^2 + alpha |grad J| with the fixed-point scheme.

    mu = 0 gives the ROF model.
    """
    return _fixed_point(
        I,
        cfg,
        data_derivative=lambda J: -2.0 * (I.data - J - p.mu),
        data_curvature=lambda J: np.full_like(J, 2.0),
        energy=lambda J: gaussian_energy(I, J, p, cfg.alpha, cfg.grad_eps),
        method="mld_gaussian",
    )


def denoise_tvl1(I: Image, cfg: SolverConfig) -> DenoiseResult:
    """Minimize sum |I - J| + alpha |grad J| by a first-order primal-dual scheme.

    The dual field p is projected onto the unit ball after each ascent step,
    the primal step applies the L1 proximal map (soft shrinkage towards I with
    threshold tau/alpha), and J is over-relaxed with theta = 1. Steps satisfy
    tau * sigma * L^2 = 1 with L^2 = 4/dx^2 + 4/dy^2 >= ||grad||^2.

    p starts saturated at grad I / |grad I| (zero where I is flat), so J = I
    is returned unchanged after one iteration whenever alpha <= 1/4 (dx = 1),
    where it is optimal. The run stops on the primal step alone.
    """
    _require_finite(I)
    alpha = cfg.alpha
    dx, dy = I.dx, I.dy
    lipschitz = math.sqrt(4.0 / (dx * dx) + 4.0 / (dy * dy))
    tau = sigma = 1.0 / lipschitz
    threshold = tau / alpha

    data = I.data
    J = data.copy()
    J_bar = J.copy()
    px, py = forward_gradient(I)
    mag = np.sqrt(px * px + py * py)
    nonzero = mag > 0.0
    px = np.where(nonzero, px / np.where(nonzero, mag, 1.0), 0.0)
    py = np.where(nonzero, py / np.where(nonzero, mag, 1.0), 0.0)
    history: list[tuple[int, float]] = []
    step = math.inf
    status = "max_iter"
    iterations = 0

    for it in range(1, cfg.max_iter + 1):
        gx, gy = forward_gradient(I.with_data(J_bar))
        qx = px + sigma * gx
        qy = py + sigma * gy
        norm = np.maximum(1.0, np.sqrt(qx * qx + qy * qy))
        qx /= norm
        qy /= norm
        dual_step = float(max(np.max(np.abs(qx - px)), np.max(np.abs(qy - py))))
        px, py = qx, qy

        v = J + tau * divergence(px, py, dx, dy) - data
        J_new = data + np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)

        if not np.all(np.isfinite(J_new)) or np.max(np.abs(J_new)) > cfg.divergence_limit:
            status = "diverged"
            logger.warning("tvl1 diverged at iteration %d (alpha=%g)", it, alpha)
            break

        step = float(np.max(np.abs(J_new - J)))
        J_bar = 2.0 * J_new - J
        J = J_new
        iterations = it

        if cfg.record_every and it % cfg.record_every == 0:
            history.append((it, tvl1_energy(I, I.with_data(J), alpha)))
        if cfg.log_every and it % cfg.log_every == 0:
            logger.debug("tvl1 iteration %d: step=%.3e dual=%.3e", it, step, dual_step)
        if step < cfg.tol:
            status = "converged"
            break

    if status == "max_iter":
        logger.warning("tvl1 reached max_iter=%d (step=%.3e)", cfg.max_iter, step)

    result_image = I.with_data(J)
    return DenoiseResult(
        image=result_image,
        iterations=iterations,
        final_step_inf_norm=step,
        final_energy=tvl1_energy(I, result_image, alpha),
        converged=status == "converged",
        status=status,
        method="tvl1",
        energy_history=history,
    )


def denoise(I: Image, method: str, params: NoiseParams, cfg: SolverConfig) -> DenoiseResult:
    """Run the denoiser named by ``method`` (one of METHODS).

    Raises:
        ValueError: If the method is unknown or params don't match it
    """
    if method == "mld_gg":
        if not isinstance(params, GGParams):
            raise ValueError("mld_gg requires GGParams")
        return denoise_mld_gg(I, params, cfg)
    if method == "mld_gaussian":
        if params is None:
            params = GaussianParams()
        elif not isinstance(params, GaussianParams):
            raise ValueError(
                f"mld_gaussian requires GaussianParams or None, got {type(params).__name__}"
            )
        return denoise_mld_gaussian(I, params, cfg)
    if method == "tvl1":
        return denoise_tvl1(I, cfg)
    raise ValueError(f"Unknown method: {method} (expected one of {', '.join(METHODS)})")


def second_variation_check(
    I: Image,
    J: Image,
    eta: Image,
    p: GGParams,
    alpha: float,
    grad_eps: float = 1e-8,
    tau: float = 1e-4,
) -> float:
    """Second directional difference of the MLD energy at J along eta.

    Returns [F(J + tau eta) - 2 F(J) + F(J - tau eta)] / tau^2. The per-pixel
    differences are formed before summation to limit cancellation.

    Raises:
        DimensionError: If the images differ in shape
        ValueError: If eta is identically zero
    """
    check_same_shape(I, J, "I and J")
    check_same_shape(J, eta, "J and eta")
    if not np.any(eta.data):
        raise ValueError("Direction eta must not be identically zero")
    plus = _mld_energy_density(I, J.with_data(J.data + tau * eta.data), p, alpha, grad_eps)
    mid = _mld_energy_density(I, J, p, alpha, grad_eps)
    minus = _mld_energy_density(I, J.with_data(J.data - tau * eta.data), p, alpha, grad_eps)
    return float(np.sum((plus - mid) + (minus - mid)) / (tau * tau))
