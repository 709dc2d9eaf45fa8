"""Perturbation kernel, denoising posteriors, and score/Tweedie identities.

Time convention: ``t`` increases with noise, so ``sigma_of_t`` is
non-decreasing on the sampling grid.  The cross-scale design functions
``sigma12_sq`` / ``sigma21_sq`` take ``(t, t_prev)`` with ``t_prev < t``
and return the *squared* cross term entering the joint scale matrix; the
probability-flow choice ``sigma12_sq = sigma21_sq = sigma_t * sigma_prev``
zeroes the posterior scale, while ``sigma_prev**2`` gives the ancestral
chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dof import DofLike, DofSpec
from .errors import (
    NumericError,
    ParameterError,
    ScheduleInconsistencyError,
    SingularParameterizationError,
)
from .rng import RngStream
from .student_t import standard_t_noise


@dataclass
class GridSpec:
    """Sampler timestep-grid settings."""

    n_steps: int = 18
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ParameterError(f"n_steps must be >= 1, got {self.n_steps}")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ParameterError(
                f"need 0 < sigma_min < sigma_max, got ({self.sigma_min}, {self.sigma_max})"
            )


@dataclass
class ScheduleParams:
    """Perturbation-kernel parameters as functions of time.

    ``mu_dot_of_t`` / ``sigma_dot_of_t`` are optional analytic time
    derivatives; consumers fall back to central differences when absent.
    """

    mu_of_t: Callable[[float], float]
    sigma_of_t: Callable[[float], float]
    sigma12_sq: Callable[[float, float], float]
    sigma21_sq: Callable[[float, float], float]
    dof: DofSpec
    grid: GridSpec = field(default_factory=GridSpec)
    mu_dot_of_t: Callable[[float], float] | None = None
    sigma_dot_of_t: Callable[[float], float] | None = None

    def __post_init__(self):
        self.dof = DofSpec.parse(self.dof)


def ve_schedule(dof: DofLike, grid: GridSpec | None = None, cross: str = "ode") -> ScheduleParams:
    """The EDM-style schedule ``mu_t = 1, sigma_t = t``.

    ``cross='ode'`` selects the probability-flow cross-scales (posterior
    scale exactly zero); ``cross='ancestral'`` the variance-exploding
    ancestral ones.
    """
    if cross == "ode":
        c12 = c21 = lambda t, t_prev: float(t) * float(t_prev)
    elif cross == "ancestral":
        c12 = c21 = lambda t, t_prev: float(t_prev) ** 2
    else:
        raise ParameterError(f"unknown cross-scale preset {cross!r}")
    return ScheduleParams(
        mu_of_t=lambda t: 1.0,
        sigma_of_t=float,
        sigma12_sq=c12,
        sigma21_sq=c21,
        dof=DofSpec.parse(dof),
        grid=grid or GridSpec(),
        mu_dot_of_t=lambda t: 0.0,
        sigma_dot_of_t=lambda t: 1.0,
    )


@dataclass
class PosteriorParams:
    """Parameters of the forward denoising posterior at one step.

    ``scale_sq`` carries the data-dependent coefficient
    ``(nu + d1) / (nu + d) * sigma_bar_sq`` (per coordinate for
    per-dimension tail indices).
    """

    mean: np.ndarray
    sigma_bar_sq: float
    d1: float | np.ndarray
    dof: np.ndarray
    scale_sq: np.ndarray = None


def perturb(x0: np.ndarray, t: float, sched: ScheduleParams, rng: RngStream) -> np.ndarray:
    """Draw ``x_t ~ q(x_t | x0)`` by reparameterization.

    Works on a single vector or an ``(n, d)`` batch; a batch draws one
    independent noise vector per row.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    mu_t = sched.mu_of_t(t)
    sigma_t = sched.sigma_of_t(t)
    if sigma_t == 0.0:
        return mu_t * x0
    d = x0.shape[-1]
    n = None if x0.ndim == 1 else x0.shape[0]
    noise = standard_t_noise(sched.dof, d, rng, n=n)
    return mu_t * x0 + sigma_t * noise


def forward_posterior(
    x_t: np.ndarray,
    x0: np.ndarray,
    t: float,
    dt: float,
    sched: ScheduleParams,
    dof_convention: str = "percoord",
) -> PosteriorParams:
    """Exact parameters of ``q(x_{t-dt} | x_t, x0)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    t_prev = t - dt
    sigma_t = sched.sigma_of_t(t)
    if sigma_t <= 0:
        raise ParameterError("forward posterior requires sigma_t > 0")
    sigma_prev = sched.sigma_of_t(t_prev)
    mu_t, mu_prev = sched.mu_of_t(t), sched.mu_of_t(t_prev)
    s21 = sched.sigma21_sq(t, t_prev)
    s12 = sched.sigma12_sq(t, t_prev)
    sigma_bar_sq = sigma_prev**2 - s21 * s12 / sigma_t**2
    if sigma_bar_sq < -1e-12:
        raise ScheduleInconsistencyError(
            f"negative posterior variance {sigma_bar_sq} at t={t}, dt={dt}"
        )
    sigma_bar_sq = max(sigma_bar_sq, 0.0)
    resid = x_t - mu_t * x0
    mean = mu_prev * x0 + (s21 / sigma_t**2) * resid
    d = x_t.shape[-1]
    dof_post = sched.dof.posterior_dof(d, dof_convention)
    if sched.dof.is_gaussian:
        d1 = float(np.sum(resid**2) / sigma_t**2)
        scale_sq = np.full(d, sigma_bar_sq)
    elif sched.dof.is_per_dim and dof_convention == "percoord":
        # independent 1-d conditionals: per-coordinate quadratic forms
        nus = sched.dof.nu_array(d)
        d1 = resid**2 / sigma_t**2
        scale_sq = _data_factor(nus, d1, 1.0) * sigma_bar_sq
    else:
        nus = sched.dof.nu_array(d)
        d1 = float(np.sum(resid**2) / sigma_t**2)
        scale_sq = _data_factor(nus, d1, float(d)) * sigma_bar_sq
    return PosteriorParams(
        mean=mean,
        sigma_bar_sq=float(sigma_bar_sq),
        d1=d1,
        dof=dof_post,
        scale_sq=scale_sq,
    )


def _data_factor(nus: np.ndarray, d1, denom: float) -> np.ndarray:
    """(nu + d1) / (nu + denom) with the Gaussian entries pinned at 1."""
    with np.errstate(invalid="ignore"):
        factor = (nus + d1) / (nus + denom)
    return np.where(np.isinf(nus), 1.0, factor)


def reverse_posterior_mean_x0pred(
    x_t: np.ndarray, d_out: np.ndarray, t: float, dt: float, sched: ScheduleParams
) -> np.ndarray:
    """Reverse posterior mean with the x0-prediction parameterization."""
    x_t = np.asarray(x_t, dtype=np.float64)
    d_out = np.asarray(d_out, dtype=np.float64)
    t_prev = t - dt
    sigma_t = sched.sigma_of_t(t)
    mu_t, mu_prev = sched.mu_of_t(t), sched.mu_of_t(t_prev)
    ratio = sched.sigma21_sq(t, t_prev) / sigma_t**2
    return ratio * x_t + (mu_prev - ratio * mu_t) * d_out


def reverse_posterior_mean_epspred(
    x_t: np.ndarray, eps_out: np.ndarray, t: float, dt: float, sched: ScheduleParams
) -> np.ndarray:
    """Reverse posterior mean with the eps-prediction parameterization."""
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_out = np.asarray(eps_out, dtype=np.float64)
    t_prev = t - dt
    sigma_t = sched.sigma_of_t(t)
    mu_t, mu_prev = sched.mu_of_t(t), sched.mu_of_t(t_prev)
    if mu_t == 0.0:
        raise SingularParameterizationError("eps-prediction mean is undefined at mu_t = 0")
    ratio = sched.sigma21_sq(t, t_prev) / sigma_t**2
    return (mu_prev / mu_t) * x_t - (sigma_t / mu_t) * (mu_prev - mu_t * ratio) * eps_out


def score_from_denoiser(
    x_t: np.ndarray, d_out: np.ndarray, t: float, sched: ScheduleParams
) -> np.ndarray:
    """Score estimate from the denoiser output.

    Uses the inference-side plug-in ``d1' = ||x_t - mu_t D||^2 / sigma_t^2``
    in place of the data-dependent quadratic form.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    d_out = np.asarray(d_out, dtype=np.float64)
    sigma_t = sched.sigma_of_t(t)
    if sigma_t <= 0:
        raise ParameterError("score requires sigma_t > 0")
    mu_t = sched.mu_of_t(t)
    resid = x_t - mu_t * d_out
    if sched.dof.is_gaussian:
        factor = 1.0
    else:
        nu = sched.dof.scalar
        d = x_t.shape[-1]
        d1p = float(np.sum(resid**2) / sigma_t**2)
        factor = (nu + d) / (nu + d1p)
    return -factor * resid / sigma_t**2


def tweedie_x0_estimate(
    x_t: np.ndarray,
    score: np.ndarray,
    t: float,
    sched: ScheduleParams,
    d1_plugin: float | None = None,
) -> np.ndarray:
    """Posterior-mean reconstruction of x0 from the score.

    Inverts :func:`score_from_denoiser`.  The plug-in quadratic ``d1'``
    is recovered from the score magnitude; because the t score decays
    again in the far tail, two residual magnitudes share each score and
    the smaller-residual branch (``d1' < nu``) is taken.  Pass
    ``d1_plugin`` to select the branch explicitly when the residual is
    known to be large.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    mu_t = sched.mu_of_t(t)
    if mu_t == 0.0:
        raise SingularParameterizationError("Tweedie estimate is undefined at mu_t = 0")
    sigma_t = sched.sigma_of_t(t)
    if sched.dof.is_gaussian:
        factor = 1.0
    else:
        nu = sched.dof.scalar
        d = x_t.shape[-1]
        if d1_plugin is None:
            d1p = _d1_from_score_magnitude(score, sigma_t, nu, d)
        else:
            d1p = float(d1_plugin)
        factor = (nu + d1p) / (nu + d)
    return (x_t + sigma_t**2 * factor * score) / mu_t


def _d1_from_score_magnitude(score: np.ndarray, sigma_t: float, nu: float, d: int) -> float:
    # With s = -((nu+d)/(nu+u)) r / sigma^2 and u = ||r||^2/sigma^2, the
    # magnitude S = ||s||^2 sigma^2 satisfies S (nu+u)^2 = (nu+d)^2 u.  The
    # two positive roots have geometric mean nu; return the near branch.
    s_mag = float(np.sum(score**2)) * sigma_t**2
    if s_mag == 0.0:
        return 0.0
    b = 2.0 * nu * s_mag - (nu + d) ** 2
    c = nu**2 * s_mag
    disc = b * b - 4.0 * s_mag * c
    if disc < -1e-9 * (nu + d) ** 4:
        raise NumericError("score magnitude exceeds any denoiser-consistent residual")
    disc = max(disc, 0.0)
    # stable smaller root of s_mag*u^2 + b*u + c = 0 (b < 0 here)
    return float(2.0 * c / (-b + np.sqrt(disc)))
