"""Loss computation and optimization loops.

Four modes share one trainer: the Student-t denoiser objective and its
Gaussian limit (``tedm`` / ``edm``), and the Student-t / Gaussian
straight-line flows (``tflow`` / ``gflow``).  The Gaussian modes are the
``inf``-sentinel paths of their heavy-tailed counterparts, so shared
seeds give bitwise-identical traces.

Per-step randomness comes from streams keyed by ``(seed, step)``; the
trace and checkpoints are therefore reproducible and resumable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dof import DofSpec, GAUSSIAN
from .errors import ParameterError, UnsupportedConfigurationError
from .network import (
    AdamState,
    MlpParams,
    Preconditioner,
    PreconditionedDenoiser,
    adam_step,
    init_mlp,
    load_checkpoint,
    save_checkpoint,
)
from .rng import RngStream
from .student_t import standard_t_noise

MODES = ("tedm", "edm", "tflow", "gflow")

# stream ids reserved under the training seed
_INIT_STREAM = 0
_STEP_STREAM = 1


@dataclass
class TrainConfig:
    """Configuration of one training run."""

    mode: str = "tedm"
    dof: DofSpec = field(default_factory=lambda: GAUSSIAN)
    pi_mean: float = -1.2
    pi_std: float = 1.2
    batch_size: int = 128
    budget: int = 3_000_000
    seed: int = 0
    sigma_data: float = 1.0
    hidden: Sequence[int] = (64, 64)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weighting: str = "cout"  # cout | unit | dsm
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        self.dof = DofSpec.parse(self.dof)
        if self.mode in ("edm", "gflow"):
            if not self.dof.is_gaussian:
                raise ParameterError(f"mode {self.mode!r} requires the Gaussian dof sentinel")
        elif self.mode == "tedm":
            self.dof.require_variance()
        if self.pi_std <= 0:
            raise ParameterError(f"pi_std must be positive, got {self.pi_std}")
        if self.budget < 0:
            raise ParameterError(f"budget must be non-negative, got {self.budget}")
        if self.weighting not in ("cout", "unit", "dsm"):
            raise ParameterError(f"unknown weighting {self.weighting!r}")

    @property
    def is_flow(self) -> bool:
        return self.mode in ("tflow", "gflow")

    def preconditioner(self) -> Preconditioner:
        return Preconditioner(
            sigma_data=self.sigma_data,
            dof=self.dof,
            mode="flow" if self.is_flow else "edm",
        )


def sample_noise_level(pi_mean: float, pi_std: float, rng: RngStream, size=None) -> np.ndarray:
    """LogNormal noise levels: exp of a normal with the given parameters."""
    return np.exp(pi_mean + pi_std * rng.standard_normal(size=size))


def tedm_loss_batch(
    den: PreconditionedDenoiser,
    x0: np.ndarray,
    cfg: TrainConfig,
    rng: RngStream,
    cond: np.ndarray | None = None,
):
    """Denoising loss on one batch; returns (loss, weight grads, bias grads, sigma mean).

    Noise levels are LogNormal, the perturbation is Student-t (Gaussian
    under the sentinel), and the default weighting is the inverse squared
    output coefficient.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    n, d = x0.shape
    sigma = sample_noise_level(cfg.pi_mean, cfg.pi_std, rng, size=n)
    noise = standard_t_noise(cfg.dof, d, rng, n=n)
    x = x0 + sigma[:, None] * noise
    out, cache = den.forward_cached(x, sigma, cond)
    resid = out - x0
    _, c_out = cache
    if cfg.weighting == "unit":
        lam = np.ones_like(c_out)
    else:
        lam = 1.0 / c_out**2
        if cfg.weighting == "dsm":
            nu = cfg.dof.scalar
            if math.isinf(nu):
                raise UnsupportedConfigurationError("dsm weighting needs a finite scalar dof")
            d1 = np.sum((x - x0) ** 2, axis=1) / sigma**2
            lam = lam * (((nu + d) / (nu + d1)) ** 2)[:, None]
    loss = float(np.mean(np.sum(lam * resid**2, axis=1)))
    grad_out = 2.0 * lam * resid / n
    w_grads, b_grads = den.backward(cache, grad_out)
    return loss, w_grads, b_grads, float(sigma.mean())


def tflow_loss_batch(
    den: PreconditionedDenoiser,
    x1: np.ndarray,
    cfg: TrainConfig,
    rng: RngStream,
    cond: np.ndarray | None = None,
):
    """Straight-line interpolant loss: predict the heavy-tailed noise."""
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    n, d = x1.shape
    t = rng.uniform(0.0, 1.0, size=n)
    noise = standard_t_noise(cfg.dof, d, rng, n=n)
    x_t = t[:, None] * x1 + (1.0 - t)[:, None] * noise
    sigma_t = 1.0 - t
    out, cache = den.forward_cached(x_t, sigma_t, cond)
    resid = out - noise
    loss = float(np.mean(np.sum(resid**2, axis=1)))
    grad_out = 2.0 * resid / n
    w_grads, b_grads = den.backward(cache, grad_out)
    return loss, w_grads, b_grads, float(sigma_t.mean())


@dataclass
class TrainResult:
    denoiser: PreconditionedDenoiser
    opt_state: AdamState
    trace: np.ndarray  # columns: step, loss, sigma_mean
    config: TrainConfig


def train(
    cfg: TrainConfig,
    data: np.ndarray,
    cond: np.ndarray | None = None,
    trace_path=None,
    checkpoint_path=None,
    resume_from=None,
) -> TrainResult:
    """Run the optimization loop for ``budget // batch_size`` steps.

    Deterministic given the config seed; resuming from a checkpoint
    written by this function reproduces the remaining trace exactly.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n_data, d = data.shape
    if cond is not None:
        cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
        if cond.shape[0] != n_data:
            raise ParameterError("cond must have one row per data row")
    cond_dim = 0 if cond is None else cond.shape[1]

    if resume_from is not None:
        den, opt = load_checkpoint(resume_from)
        if opt is None:
            raise ParameterError("checkpoint has no optimizer state; cannot resume")
        start_step = opt.step
    else:
        params = init_mlp(d, cfg.hidden, cond_dim, rng=RngStream(cfg.seed, _INIT_STREAM))
        den = PreconditionedDenoiser(params, cfg.preconditioner())
        opt = AdamState.zeros_like(params)
        start_step = 0

    loss_fn = tflow_loss_batch if cfg.is_flow else tedm_loss_batch
    n_steps = cfg.budget // cfg.batch_size
    rows = []
    for step in range(start_step, n_steps):
        stream = RngStream(cfg.seed, _STEP_STREAM, step)
        idx = stream.integers(0, n_data, size=cfg.batch_size)
        batch_cond = None if cond is None else cond[idx]
        loss, w_grads, b_grads, sigma_mean = loss_fn(den, data[idx], cfg, stream, batch_cond)
        if not math.isfinite(loss):
            raise ParameterError(f"non-finite loss {loss} at step {step}")
        adam_step(den.params, w_grads, b_grads, opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
        rows.append((step, loss, sigma_mean))
        if checkpoint_path and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, den, opt)

    trace = np.array(rows, dtype=np.float64).reshape(-1, 3)
    if checkpoint_path:
        save_checkpoint(checkpoint_path, den, opt)
    if trace_path:
        write_trace(trace_path, trace)
    return TrainResult(denoiser=den, opt_state=opt, trace=trace, config=cfg)


def write_trace(path, trace: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "sigma_mean"])
        for step, loss, sig in trace:
            writer.writerow([int(step), repr(float(loss)), repr(float(sig))])


def read_trace(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [(float(a), float(b), float(c)) for a, b, c in reader]
    return np.array(rows, dtype=np.float64).reshape(-1, 3)
