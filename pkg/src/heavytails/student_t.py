"""Student-t sampling primitives and the multivariate log density.

Sampling follows the scale-mixture construction: a Student-t vector is
``location + scale * z / sqrt(kappa)`` with ``z`` standard normal and
``kappa ~ chi2(nu)/nu``.  The ``inf`` sentinel bypasses ``kappa`` entirely
so the Gaussian limit is exact (and bitwise identical to a plain normal
draw from the same stream).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .dof import DofLike, DofSpec
from .errors import ParameterError, UnsupportedConfigurationError
from .rng import RngStream


@dataclass
class StudentTParams:
    """Location vector, isotropic scale, and degrees of freedom."""

    location: np.ndarray
    scale: float
    dof: DofSpec

    def __post_init__(self):
        self.location = np.atleast_1d(np.asarray(self.location, dtype=np.float64))
        self.scale = float(self.scale)
        self.dof = DofSpec.parse(self.dof)
        if self.scale < 0:
            raise ParameterError(f"scale must be non-negative, got {self.scale}")
        # materializes the dimension check for per-dimension specs
        self.dof.nu_array(self.location.size)

    @property
    def dim(self) -> int:
        return self.location.size


def sample_chi2_scaled(nu: float, rng: RngStream, size=None) -> np.ndarray:
    """Draw ``kappa ~ chi2(nu)/nu`` via a gamma(nu/2, 2) sampler.

    The gamma route supports fractional ``nu``; a sum of squared normals
    would not.
    """
    nu = float(nu)
    if not nu > 0:
        raise ParameterError(f"chi-squared dof must be positive, got {nu}")
    if np.isinf(nu):
        raise ParameterError("chi2 scaling is undefined for the Gaussian sentinel")
    return rng.standard_gamma(nu / 2.0, size=size) * (2.0 / nu)


def standard_t_noise(dof: DofLike, d: int, rng: RngStream, n: int | None = None) -> np.ndarray:
    """Zero-location unit-scale Student-t noise, shape ``(n, d)`` or ``(d,)``.

    A scalar finite nu draws one kappa per vector (joint multivariate t);
    a per-dimension spec draws an independent kappa per coordinate so the
    joint is a product of 1-d t's.  Normal draws happen first so that the
    Gaussian sentinel consumes the identical stream prefix.
    """
    dof = DofSpec.parse(dof)
    squeeze = n is None
    rows = 1 if n is None else int(n)
    z = rng.standard_normal((rows, d))
    if not dof.is_gaussian:
        if dof.is_per_dim:
            nus = dof.nu_array(d)
            kappa = np.ones((rows, d))
            for j in range(d):
                if np.isfinite(nus[j]):
                    kappa[:, j] = sample_chi2_scaled(nus[j], rng, size=rows)
            z = z / np.sqrt(kappa)
        else:
            kappa = sample_chi2_scaled(dof.scalar, rng, size=rows)
            z = z / np.sqrt(kappa)[:, None]
    return z[0] if squeeze else z


def sample_student_t(params: StudentTParams, d: int, rng: RngStream, n: int | None = None) -> np.ndarray:
    """Draw from ``t_d(location, scale^2 I, nu)`` by reparameterization."""
    if d != params.dim:
        raise ParameterError(f"dimension mismatch: d={d}, location has {params.dim}")
    noise = standard_t_noise(params.dof, d, rng, n=n)
    return params.location + params.scale * noise


def log_norm_const(nu: float, d: int) -> float:
    """log C_{nu,d} for the multivariate t density."""
    return float(gammaln((nu + d) / 2.0) - gammaln(nu / 2.0) - 0.5 * d * np.log(nu * np.pi))


def student_t_log_density(x: np.ndarray, params: StudentTParams) -> np.ndarray:
    """Exact log density of ``t_d(location, scale^2 I, nu)`` at ``x``.

    Accepts a single vector or an ``(n, d)`` batch.  Only a shared scalar
    nu defines a proper multivariate density; the Gaussian sentinel
    evaluates the exact normal limit.
    """
    if params.dof.is_per_dim:
        raise UnsupportedConfigurationError(
            "per-dimension dof has no joint multivariate t density; "
            "evaluate coordinates separately"
        )
    if params.scale <= 0:
        raise ParameterError("log density requires a strictly positive scale")
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(x)
    d = params.dim
    if x2.shape[1] != d:
        raise ParameterError(f"x has dimension {x2.shape[1]}, expected {d}")
    quad = np.sum((x2 - params.location) ** 2, axis=1) / params.scale**2
    if params.dof.is_gaussian:
        out = -0.5 * d * np.log(2.0 * np.pi) - d * np.log(params.scale) - 0.5 * quad
    else:
        nu = params.dof.scalar
        out = log_norm_const(nu, d) - d * np.log(params.scale) - 0.5 * (nu + d) * np.log1p(quad / nu)
    return out[0] if squeeze else out
