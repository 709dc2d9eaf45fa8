"""Principled top-noise-level estimation from data statistics.

The top noise level trades off its own magnitude against the residual
data/noisy-state dependence.  The Gaussian design formula is
``sigma^2 = sqrt(lambda * mean_sq_norm)``; the Student-t extension
minimizes the same Lagrangian with the closed-form power divergence in
place of the Gaussian penalty.  The divergence term enters the
Student-t objective doubled so that its Gaussian limit reproduces the
Gaussian formula exactly (the two derivations otherwise disagree on a
factor that amounts to rescaling lambda by 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .divergences import gamma_for
from .errors import ParameterError
from .student_t import log_norm_const


@dataclass
class DataMoments:
    """Second-moment statistics of a dataset."""

    mean_sq_norm: float
    dim: int
    correlation: np.ndarray | None = None

    def __post_init__(self):
        if self.mean_sq_norm < 0:
            raise ParameterError("mean squared norm must be non-negative")
        if self.correlation is not None:
            r = np.asarray(self.correlation, dtype=np.float64)
            if r.ndim != 2 or r.shape[0] != r.shape[1]:
                raise ParameterError("correlation matrix must be square")
            if not np.allclose(r, r.T, atol=1e-10):
                raise ParameterError("correlation matrix must be symmetric")
            self.correlation = r

    @classmethod
    def from_data(cls, data: np.ndarray, with_correlation: bool = False) -> "DataMoments":
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        msn = float(np.mean(np.sum(data**2, axis=1)))
        corr = (data.T @ data) / data.shape[0] if with_correlation else None
        return cls(mean_sq_norm=msn, dim=data.shape[1], correlation=corr)


def sigma_max_gaussian(moments: DataMoments, lam: float) -> float:
    """Gaussian design value: sigma^2 = sqrt(lambda * mean_sq_norm)."""
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    return math.sqrt(lam * moments.mean_sq_norm)


def lambda_from_mi(target_mi: float, moments: DataMoments) -> float:
    """The multiplier realizing a requested residual dependence level."""
    if target_mi <= 0:
        raise ParameterError(f"target mutual information must be positive, got {target_mi}")
    return moments.mean_sq_norm / target_mi**2


def gaussian_objective(sigma_sq: float, lam: float, moments: DataMoments) -> float:
    """The Lagrangian whose minimizer is :func:`sigma_max_gaussian`."""
    return sigma_sq + lam * moments.mean_sq_norm / sigma_sq


def divergence_coefficient(nu: float, d: int) -> float:
    """log of f(nu, d), the constant in the Student-t dependence penalty."""
    if nu <= 2:
        raise ParameterError(f"nu must exceed 2, got {nu}")
    g = gamma_for(nu, d)
    r = g / (1.0 + g)
    log_f = (
        math.log(-1.0 / (nu * g))
        + r * log_norm_const(nu, d)
        - r * math.log1p(d / (nu - 2.0))
    )
    return log_f


def student_t_divergence_term(sigma_sq: float, nu: float, d: int, moments: DataMoments) -> float:
    """The dependence penalty at a given sigma^2 (doubled; see module doc)."""
    g = gamma_for(nu, d)
    exponent = -g * d / (2.0 * (1.0 + g)) - 1.0
    log_f = divergence_coefficient(nu, d)
    return 2.0 * math.exp(log_f + exponent * math.log(sigma_sq)) * moments.mean_sq_norm


def student_t_objective(sigma_sq: float, lam: float, nu: float, d: int, moments: DataMoments) -> float:
    """The Lagrangian whose minimizer is :func:`sigma_max_student_t`."""
    return sigma_sq + lam * student_t_divergence_term(sigma_sq, nu, d, moments)


def sigma_max_student_t(moments: DataMoments, lam: float, nu: float, d: int | None = None) -> float:
    """Student-t design value; reduces to the Gaussian one as nu grows.

    Computed in log space: the coefficient involves the normalizing
    constant at dimension d, which overflows naively.
    """
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if nu <= 2:
        raise ParameterError(f"nu must exceed 2, got {nu}")
    d = moments.dim if d is None else int(d)
    log_f = divergence_coefficient(nu, d)
    exponent = (nu - 2.0 + d) / (2.0 * (nu - 2.0) + d)
    log_inner = (
        math.log(2.0 * lam)
        + log_f
        + math.log((nu - 2.0) / (nu - 2.0 + d))
        + math.log(moments.mean_sq_norm)
    )
    return math.exp(exponent * log_inner)


def correlated_sigma(correlation: np.ndarray, lam: float, eig_floor: float = 1e-12) -> np.ndarray:
    """Optimal correlated noise scale: sqrt(lambda) times the matrix root.

    The root is taken by symmetric eigendecomposition with a small
    eigenvalue floor; empirical correlation matrices are often
    near-singular.
    """
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    r = np.asarray(correlation, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ParameterError("correlation matrix must be square")
    if not np.allclose(r, r.T, atol=1e-10):
        raise ParameterError("correlation matrix must be symmetric")
    w, v = np.linalg.eigh(0.5 * (r + r.T))
    if np.any(w < -1e-10 * max(1.0, float(np.max(np.abs(w))))):
        raise ParameterError("correlation matrix must be positive semi-definite")
    w = np.maximum(w, eig_floor)
    return math.sqrt(lam) * (v * np.sqrt(w)) @ v.T


def correlated_objective(sigma_mat: np.ndarray, correlation: np.ndarray, lam: float) -> float:
    """trace(Sigma) + lambda * trace(Sigma^{-1} R)."""
    inv = np.linalg.inv(sigma_mat)
    return float(np.trace(sigma_mat) + lam * np.trace(inv @ correlation))


def correlated_stationarity(sigma_mat: np.ndarray, correlation: np.ndarray, lam: float) -> np.ndarray:
    """Gradient I - lambda * Sigma^{-1} R Sigma^{-1}; zero at the optimum."""
    inv = np.linalg.inv(sigma_mat)
    return np.eye(sigma_mat.shape[0]) - lam * inv @ correlation @ inv


def rbf(x: float, center: float, beta: float) -> float:
    """exp(-beta (x - center)^2); the kernel form behind the heuristic."""
    return math.exp(-beta * (x - center) ** 2)


def pcp_pi_mean(dyn_range: float, alpha: float = 3.0, beta: float = 2.0) -> float:
    """Per-channel noise-level location from normalized dynamic range.

    A range near 1 pushes the noise-level distribution toward heavier
    values; alpha = 0 recovers the stock -1.2 location.
    """
    if not 0.0 <= dyn_range <= 1.0:
        raise ParameterError(f"normalized dynamic range must be in [0, 1], got {dyn_range}")
    return -1.2 + alpha * rbf(dyn_range, 1.0, beta)
