"""Generation procedures over the rho-spaced noise grid.

All samplers use the convention ``mu_t = 1, sigma_t = t``.  Heun steps
are computed in ratio form ``x + ((t_next - t)/t) * (x - D)`` so the
single-step jump to ``t = 0`` is exact for an oracle denoiser.  The SDE
family is parameterized by presets bundling ``(f, g, beta, sigma12_sq)``
whose discrete consistency condition is validated in multiplied-through
form (the division form is singular on the final interval where the
cross-scale vanishes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dof import DofLike, DofSpec
from .errors import NumericError, ParameterError, SdeConsistencyError
from .kernels import GridSpec, ScheduleParams
from .rng import RngStream
from .student_t import standard_t_noise

_CHUNK = 1 << 18


def timestep_grid(n_steps: int, sigma_min: float, sigma_max: float, rho: float) -> np.ndarray:
    """Noise levels t_0 >= ... >= t_{N-1} plus the terminal 0."""
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    if not 0 < sigma_min < sigma_max:
        raise ParameterError("need 0 < sigma_min < sigma_max")
    if n_steps == 1:
        ts = np.array([sigma_max])
    else:
        i = np.arange(n_steps)
        inv = 1.0 / rho
        ts = (sigma_max**inv + i / (n_steps - 1) * (sigma_min**inv - sigma_max**inv)) ** rho
    return np.concatenate([ts, [0.0]])


@dataclass
class SdePreset:
    """One instantiation of the generalized reverse-time dynamics.

    ``f`` is the discrete drift coefficient on ``[t_prev, t]``, ``g`` the
    posterior variance rate, ``beta`` its time-dependent scaling, and
    ``sigma12_sq`` the squared cross-scale; together they must satisfy
    ``sigma_prev^2 - beta*g*dt = sigma12_sq * (1 + f*dt)`` on every
    interval.
    """

    name: str
    f: Callable[[float, float], float]
    g: Callable[[float, float], float]
    beta: Callable[[float], float]
    sigma12_sq: Callable[[float, float], float]

    def validate_interval(self, t: float, t_prev: float, tol: float = 1e-8) -> float:
        dt = t - t_prev
        lhs = t_prev**2 - self.beta(t) * self.g(t, t_prev) * dt
        rhs = self.sigma12_sq(t, t_prev) * (1.0 + self.f(t, t_prev) * dt)
        resid = abs(lhs - rhs)
        if resid > tol * max(1.0, t_prev**2):
            raise SdeConsistencyError(
                f"preset {self.name!r} violates consistency on [{t_prev}, {t}]: residual {resid}"
            )
        return resid


def ode_preset() -> SdePreset:
    """Zero-noise instantiation; reproduces the deterministic Euler path."""
    return SdePreset(
        name="ode",
        f=lambda t, t_prev: (t_prev / t - 1.0) / (t - t_prev),
        g=lambda t, t_prev: 0.0,
        beta=lambda t: 1.0,
        sigma12_sq=lambda t, t_prev: t * t_prev,
    )


def ancestral_preset(beta0: float = 1.0) -> SdePreset:
    """Variance-exploding ancestral noise scaled by ``beta0`` in (0, 1]."""
    if not 0 < beta0 <= 1.0:
        raise ParameterError(f"beta0 must be in (0, 1], got {beta0}")

    def g(t, t_prev):
        if t_prev == 0.0:
            return 0.0
        return t_prev**2 * (1.0 - t_prev**2 / t**2) / (t - t_prev)

    def f(t, t_prev):
        # the final interval is a pure denoise step regardless of beta0
        if t_prev == 0.0:
            return -1.0 / (t - t_prev)
        return -beta0 * (1.0 - t_prev**2 / t**2) / (t - t_prev)

    return SdePreset(
        name=f"ancestral(beta0={beta0})",
        f=f,
        g=g,
        beta=lambda t: beta0,
        sigma12_sq=lambda t, t_prev: t_prev**2,
    )


SDE_PRESETS = {"ode": ode_preset, "ancestral": ancestral_preset}


@dataclass
class SamplerConfig:
    """Which sampler to run and on what grid."""

    kind: str = "heun"  # heun | ancestral | sde | tflow
    grid: GridSpec = field(default_factory=GridSpec)
    dof: DofSpec = field(default_factory=lambda: DofSpec(float("inf")))
    sde_preset: SdePreset | None = None
    dof_convention: str = "percoord"

    def __post_init__(self):
        if self.kind not in ("heun", "ancestral", "sde", "tflow"):
            raise ParameterError(f"unknown sampler kind {self.kind!r}")
        self.dof = DofSpec.parse(self.dof)


def _check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        bad = int(np.sum(~np.isfinite(x).all(axis=-1)))
        raise NumericError(f"non-finite denoiser output at {where} ({bad} rows affected)")


def heun_ode_sample(
    denoiser,
    cfg: SamplerConfig,
    rng: RngStream,
    n_samples: int | None = None,
    return_trajectory: bool = False,
):
    """Deterministic Heun integration of ``dx/dt = (x - D(x, t)) / t``.

    ``denoiser`` is any callable ``(x, sigma) -> x0_estimate`` operating
    on ``(n, d)`` batches; the initial state is a Student-t draw at the
    top of the grid.
    """
    d = _dim_of(denoiser)
    squeeze = n_samples is None
    n = 1 if n_samples is None else int(n_samples)
    grid = timestep_grid(cfg.grid.n_steps, cfg.grid.sigma_min, cfg.grid.sigma_max, cfg.grid.rho)
    x = grid[0] * standard_t_noise(cfg.dof, d, rng, n=n)
    traj = [x.copy()]
    for i in range(len(grid) - 1):
        t, t_next = grid[i], grid[i + 1]
        den = np.asarray(denoiser(x, t))
        _check_finite(den, f"step {i} (t={t})")
        c = (t_next - t) / t
        # multiplied-out Euler so the final jump to t=0 returns D exactly
        x_pred = (1.0 + c) * x - c * den
        if t_next != 0.0:
            den2 = np.asarray(denoiser(x_pred, t_next))
            _check_finite(den2, f"step {i} corrector (t={t_next})")
            c2 = (t_next - t) / t_next
            x = x + 0.5 * (c * (x - den) + c2 * (x_pred - den2))
        else:
            x = x_pred
        if return_trajectory:
            traj.append(x.copy())
    if return_trajectory:
        return np.stack(traj)
    return x[0] if squeeze else x


def ancestral_sample(
    denoiser,
    cfg: SamplerConfig,
    rng: RngStream,
    n_samples: int | None = None,
):
    """Stepwise draws from the learned reverse posterior.

    Uses the x0-prediction mean with variance-exploding cross-scales;
    the posterior draw is Student-t with the incremented tail index.
    """
    d = _dim_of(denoiser)
    squeeze = n_samples is None
    n = 1 if n_samples is None else int(n_samples)
    grid = timestep_grid(cfg.grid.n_steps, cfg.grid.sigma_min, cfg.grid.sigma_max, cfg.grid.rho)
    post_dof = DofSpec(cfg.dof.posterior_dof(d, cfg.dof_convention))
    if not post_dof.is_per_dim and not cfg.dof.is_per_dim:
        post_dof = DofSpec(float(cfg.dof.posterior_dof(d, cfg.dof_convention)[0]))
    x = grid[0] * standard_t_noise(cfg.dof, d, rng, n=n)
    for i in range(len(grid) - 1):
        t, t_prev = grid[i], grid[i + 1]
        den = np.asarray(denoiser(x, t))
        _check_finite(den, f"step {i} (t={t})")
        ratio = t_prev**2 / t**2
        mean = ratio * x + (1.0 - ratio) * den
        sigma_bar_sq = t_prev**2 * (1.0 - ratio)
        if sigma_bar_sq > 0.0:
            x = mean + math.sqrt(sigma_bar_sq) * standard_t_noise(post_dof, d, rng, n=n)
        else:
            x = mean
    return x[0] if squeeze else x


def sde_step(
    x_t: np.ndarray,
    denoiser,
    preset: SdePreset,
    t: float,
    dt: float,
    rng: RngStream,
    dof: DofLike,
    dof_convention: str = "percoord",
    validate: bool = True,
) -> np.ndarray:
    """One Euler-Maruyama step of the generalized dynamics.

    The heavy-tailed increment is ``sqrt(beta g dt)`` times unit
    Student-t noise with the posterior tail index; increments are drawn
    independently per step.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    t_prev = t - dt
    if validate:
        preset.validate_interval(t, t_prev)
    dof = DofSpec.parse(dof)
    d = x_t.shape[-1]
    den = np.asarray(denoiser(x_t, t))
    _check_finite(den, f"sde step (t={t})")
    drift = preset.f(t, t_prev) * dt * (x_t - den)
    var = preset.beta(t) * preset.g(t, t_prev) * dt
    x_next = x_t + drift
    if var > 0.0:
        post_dof = DofSpec(dof.posterior_dof(d, dof_convention)) if dof.is_per_dim else DofSpec(
            float(dof.posterior_dof(d, dof_convention)[0])
        )
        n = None if x_t.ndim == 1 else x_t.shape[0]
        x_next = x_next + math.sqrt(var) * standard_t_noise(post_dof, d, rng, n=n)
    return x_next


def sde_sample(
    denoiser,
    cfg: SamplerConfig,
    rng: RngStream,
    n_samples: int | None = None,
):
    """Integrate the SDE preset over the full grid."""
    preset = cfg.sde_preset or ancestral_preset()
    d = _dim_of(denoiser)
    squeeze = n_samples is None
    n = 1 if n_samples is None else int(n_samples)
    grid = timestep_grid(cfg.grid.n_steps, cfg.grid.sigma_min, cfg.grid.sigma_max, cfg.grid.rho)
    x = grid[0] * standard_t_noise(cfg.dof, d, rng, n=n)
    for i in range(len(grid) - 1):
        t, t_prev = grid[i], grid[i + 1]
        x = sde_step(x, denoiser, preset, t, t - t_prev, rng, cfg.dof, cfg.dof_convention)
    return x[0] if squeeze else x


def score_ode_step(
    x_t: np.ndarray,
    score_fn,
    t: float,
    sched: ScheduleParams,
    d1_plugin: float | None = None,
) -> np.ndarray:
    """Time derivative of the score-form probability-flow dynamics.

    Algebraically identical to the denoiser form when the score comes
    from a denoiser; the data-dependent factor is recovered from the
    score magnitude (near branch) unless ``d1_plugin`` is given.
    """
    from .kernels import _d1_from_score_magnitude

    x_t = np.asarray(x_t, dtype=np.float64)
    mu = sched.mu_of_t(t)
    sigma = sched.sigma_of_t(t)
    mu_dot = _derivative(sched.mu_of_t, t, getattr(sched, "mu_dot_of_t", None))
    sigma_dot = _derivative(sched.sigma_of_t, t, getattr(sched, "sigma_dot_of_t", None))
    score = np.asarray(score_fn(x_t, t))
    if sched.dof.is_gaussian:
        factor = 1.0
    else:
        nu = sched.dof.scalar
        d = x_t.shape[-1]
        d1p = _d1_from_score_magnitude(score, sigma, nu, d) if d1_plugin is None else float(d1_plugin)
        factor = (nu + d1p) / (nu + d)
    return (mu_dot / mu) * x_t + sigma**2 * factor * (mu_dot / mu - sigma_dot / sigma) * score


def _derivative(fn, t: float, explicit) -> float:
    if explicit is not None:
        return explicit(t)
    h = 1e-6 * max(1.0, abs(t))
    return (fn(t + h) - fn(t - h)) / (2.0 * h)


def tflow_heun_sample(
    eps_net,
    cfg: SamplerConfig,
    rng: RngStream,
    n_samples: int | None = None,
):
    """Heun integration of the straight-line flow field toward the data.

    The rho grid over noise scales maps (reversed) onto flow times in
    (0, 1]; at time t the noise-level input of the network is 1 - t.
    """
    d = _dim_of(eps_net)
    squeeze = n_samples is None
    n = 1 if n_samples is None else int(n_samples)
    sig_grid = timestep_grid(cfg.grid.n_steps, cfg.grid.sigma_min, cfg.grid.sigma_max, cfg.grid.rho)[:-1]
    times = sig_grid[::-1]
    x = standard_t_noise(cfg.dof, d, rng, n=n)
    for i in range(len(times) - 1):
        t, t_next = times[i], times[i + 1]
        eps = np.asarray(eps_net(x, 1.0 - t))
        _check_finite(eps, f"flow step {i} (t={t})")
        b = (x - eps) / t
        x_pred = x + (t_next - t) * b
        # no corrector on the terminal step where the noise level hits 0
        if 1.0 - t_next != 0.0:
            eps2 = np.asarray(eps_net(x_pred, 1.0 - t_next))
            _check_finite(eps2, f"flow step {i} corrector (t={t_next})")
            b2 = (x_pred - eps2) / t_next
            x = x + (t_next - t) * 0.5 * (b + b2)
        else:
            x = x_pred
    return x[0] if squeeze else x


def _dim_of(denoiser) -> int:
    d = getattr(denoiser, "d", None)
    if d is None:
        raise ParameterError(
            "denoiser must expose a .d attribute giving the data dimension "
            "(wrap plain callables in OracleDenoiser)"
        )
    return int(d)


@dataclass
class OracleDenoiser:
    """Adapter giving a plain callable the denoiser interface."""

    fn: Callable
    d: int

    def __call__(self, x, sigma):
        return self.fn(x, sigma)


def generate(
    denoiser,
    cfg: SamplerConfig,
    rng: RngStream,
    n_samples: int,
) -> np.ndarray:
    """Draw ``n_samples`` in fixed-size chunks, one substream per chunk.

    Chunking is deterministic in ``n_samples`` so identical inputs give
    bitwise-identical outputs regardless of available memory.
    """
    samplers = {
        "heun": heun_ode_sample,
        "ancestral": ancestral_sample,
        "sde": sde_sample,
        "tflow": tflow_heun_sample,
    }
    fn = samplers[cfg.kind]
    out = []
    n_left = int(n_samples)
    chunk_idx = 0
    while n_left > 0:
        take = min(_CHUNK, n_left)
        out.append(fn(denoiser, cfg, rng.substream(chunk_idx), n_samples=take))
        n_left -= take
        chunk_idx += 1
    return np.concatenate(out, axis=0)
