"""Toy data generators.

The funnel's second argument is read as a standard deviation by
default (the canonical construction, giving conditional variance
``exp(x1)``); the variance reading is selectable for comparison.
"""

from __future__ import annotations

import numpy as np

from .dof import DofSpec
from .errors import ParameterError
from .rng import RngStream
from .student_t import standard_t_noise


def neals_funnel(n: int, rng: RngStream, std_convention: str = "std") -> np.ndarray:
    """Funnel samples: a scale variable and a conditionally scaled one.

    ``std`` convention: x1 ~ Normal(0, std=3), x2 | x1 ~ Normal(0,
    std=exp(x1/2)).  ``var`` reads both second arguments as variances.
    """
    if std_convention not in ("std", "var"):
        raise ParameterError(f"unknown convention {std_convention!r}")
    z = rng.standard_normal((n, 2))
    if std_convention == "std":
        x1 = 3.0 * z[:, 0]
        x2 = np.exp(x1 / 2.0) * z[:, 1]
    else:
        x1 = np.sqrt(3.0) * z[:, 0]
        x2 = np.exp(x1 / 4.0) * z[:, 1]
    return np.column_stack([x1, x2])


def conditional_funnel_pairs(
    n: int, rng: RngStream, std_convention: str = "std"
) -> tuple[np.ndarray, np.ndarray]:
    """(condition, target) pairs for conditional-denoiser training.

    The scale coordinate conditions the heavy-tailed one; both come back
    as ``(n, 1)`` columns.
    """
    xy = neals_funnel(n, rng, std_convention)
    return xy[:, :1].copy(), xy[:, 1:].copy()


def student_t_mixture(
    n: int,
    rng: RngStream,
    locs=(-2.0, 2.0),
    scales=(1.0, 0.5),
    nus=(3.0, 6.0),
    weights=(0.5, 0.5),
    d: int = 1,
) -> np.ndarray:
    """Mixture of isotropic Student-t components, one row per draw."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise ParameterError("mixture weights must be non-negative and not all zero")
    w = w / w.sum()
    comp = np.searchsorted(np.cumsum(w), rng.uniform(size=n), side="right")
    comp = np.minimum(comp, len(w) - 1)
    out = np.empty((n, d))
    for k in range(len(w)):
        mask = comp == k
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        noise = standard_t_noise(DofSpec(float(nus[k])), d, rng, n=cnt)
        out[mask] = locs[k] + scales[k] * noise
    return out
