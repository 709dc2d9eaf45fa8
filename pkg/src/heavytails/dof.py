"""Degrees-of-freedom configuration.

A :class:`DofSpec` is either a single positive ``nu`` shared by all
dimensions, the explicit ``inf`` sentinel selecting the exact Gaussian
limit, or a per-dimension vector of ``nu`` values (the toy protocol where
each coordinate carries its own tail index).  With a per-dimension spec
the noise is a product of independent 1-d Student-t's, not a joint
multivariate t; operations that need the joint density reject it.
"""

from __future__ import annotations

import math
from typing import Sequence, Union

import numpy as np

from .errors import ParameterError, UnsupportedConfigurationError

DofLike = Union["DofSpec", float, int, str, Sequence[float], np.ndarray]


class DofSpec:
    """Scalar, infinite, or per-dimension degrees of freedom."""

    def __init__(self, nu: Union[float, Sequence[float], np.ndarray]):
        if isinstance(nu, (list, tuple, np.ndarray)):
            arr = np.asarray(nu, dtype=np.float64)
            if arr.ndim != 1 or arr.size == 0:
                raise ParameterError("per-dimension dof must be a non-empty 1-d vector")
            if np.any(np.isnan(arr)) or np.any(arr <= 0):
                raise ParameterError(f"dof entries must be positive, got {arr}")
            self._per_dim = arr
            self._scalar = None
        else:
            val = float(nu)
            if math.isnan(val) or val <= 0:
                raise ParameterError(f"dof must be positive, got {val}")
            self._per_dim = None
            self._scalar = val

    @classmethod
    def parse(cls, value: DofLike) -> "DofSpec":
        """Coerce floats, 'inf', or comma-separated strings into a spec."""
        if isinstance(value, DofSpec):
            return value
        if isinstance(value, str):
            parts = [p.strip() for p in value.split(",") if p.strip()]
            if not parts:
                raise ParameterError("empty dof specification")
            vals = [math.inf if p.lower() in ("inf", "infinity") else float(p) for p in parts]
            return cls(vals[0] if len(vals) == 1 else vals)
        return cls(value)

    @property
    def is_per_dim(self) -> bool:
        return self._per_dim is not None

    @property
    def is_gaussian(self) -> bool:
        """True when every coordinate uses the Gaussian (nu = inf) limit."""
        if self._per_dim is not None:
            return bool(np.all(np.isinf(self._per_dim)))
        return math.isinf(self._scalar)

    @property
    def scalar(self) -> float:
        """The shared nu; rejects per-dimension specs."""
        if self._per_dim is not None:
            raise UnsupportedConfigurationError(
                "operation requires a scalar dof; per-dimension dof describes a "
                "product of 1-d Student-t's, not a joint multivariate t"
            )
        return self._scalar

    def nu_array(self, d: int) -> np.ndarray:
        """Per-coordinate nu values broadcast to dimension ``d``."""
        if self._per_dim is not None:
            if self._per_dim.size != d:
                raise ParameterError(
                    f"per-dimension dof has {self._per_dim.size} entries, expected {d}"
                )
            return self._per_dim
        return np.full(d, self._scalar)

    def require_variance(self) -> None:
        """Raise unless every finite nu exceeds 2 (noise variance defined)."""
        nus = self._per_dim if self._per_dim is not None else np.array([self._scalar])
        finite = nus[np.isfinite(nus)]
        if np.any(finite <= 2):
            raise ParameterError(f"dof must exceed 2 for a defined variance, got {nus}")

    def posterior_dof(self, d: int, convention: str = "percoord") -> np.ndarray:
        """Degrees of freedom of the denoising posterior.

        For a scalar nu the multivariate conditional gives ``nu + d``.  For
        per-dimension nu the joint is a product of 1-d t's and the paper's
        formula does not directly apply; ``percoord`` (default) treats each
        coordinate as its own 1-d problem (``nu_i + 1``) while ``joint``
        applies the multivariate increment to each entry (``nu_i + d``).
        """
        if convention not in ("percoord", "joint"):
            raise ParameterError(f"unknown posterior dof convention {convention!r}")
        nus = self.nu_array(d)
        if not self.is_per_dim:
            return nus + d
        return nus + (1 if convention == "percoord" else d)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DofSpec):
            return NotImplemented
        if self.is_per_dim != other.is_per_dim:
            return False
        if self.is_per_dim:
            return np.array_equal(self._per_dim, other._per_dim)
        return self._scalar == other._scalar

    def __repr__(self) -> str:
        if self._per_dim is not None:
            return f"DofSpec({self._per_dim.tolist()})"
        return f"DofSpec({self._scalar})"

    def to_string(self) -> str:
        if self._per_dim is not None:
            return ",".join("inf" if math.isinf(v) else repr(v) for v in self._per_dim)
        return "inf" if math.isinf(self._scalar) else repr(self._scalar)


GAUSSIAN = DofSpec(math.inf)
