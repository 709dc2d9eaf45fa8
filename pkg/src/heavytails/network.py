"""From-scratch MLP denoiser with explicit backprop and preconditioning.

The network follows the toy protocol: the noisy state is concatenated
with a noise-level feature (plus an optional conditioning vector) and
passed through two hidden layers of size 64.  The preconditioning
wrapper supplies the noise-level-dependent coefficients; with the
``inf`` sentinel they reduce exactly to the Gaussian EDM column, and a
per-dimension tail index yields per-coordinate coefficients.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .dof import DofLike, DofSpec
from .errors import ParameterError
from .rng import RngStream

_MAGIC = b"HTDC"
_VERSION = 1


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


@dataclass
class MlpParams:
    """Weights and biases of the denoiser core network."""

    weights: list
    biases: list
    d: int
    cond_dim: int = 0
    activation: str = "silu"

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.d,
            self.cond_dim,
            self.activation,
        )


def init_mlp(
    d: int,
    hidden: Sequence[int] = (64, 64),
    cond_dim: int = 0,
    rng: RngStream | None = None,
) -> MlpParams:
    """Scaled-uniform initialization, limit sqrt(3 / fan_in) per layer."""
    rng = rng or RngStream(0)
    sizes = [d + 1 + cond_dim, *hidden, d]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, d=d, cond_dim=cond_dim)


def mlp_forward(params: MlpParams, inp: np.ndarray):
    """Forward pass; returns the output and the cache for backprop."""
    h = inp
    pre_acts = []
    acts = [inp]
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        if i < n_layers - 1:
            pre_acts.append(z)
            h = silu(z)
            acts.append(h)
        else:
            h = z
    return h, (acts, pre_acts)


def mlp_backward(params: MlpParams, cache, grad_out: np.ndarray):
    """Reverse-mode gradients; returns (weight grads, bias grads, input grad)."""
    acts, pre_acts = cache
    n_layers = len(params.weights)
    w_grads = [None] * n_layers
    b_grads = [None] * n_layers
    g = grad_out
    for i in range(n_layers - 1, -1, -1):
        w_grads[i] = g.T @ acts[i]
        b_grads[i] = g.sum(axis=0)
        g = g @ params.weights[i]
        if i > 0:
            g = g * silu_grad(pre_acts[i - 1])
    return w_grads, b_grads, g


@dataclass
class Preconditioner:
    """Noise-level-dependent wrapping coefficients for the denoiser.

    ``mode='edm'`` applies the variance-normalizing coefficients;
    ``mode='flow'`` is the unwrapped network (identity coefficients,
    noise level passed through as the feature).
    """

    sigma_data: float = 1.0
    dof: DofSpec = field(default_factory=lambda: DofSpec(float("inf")))
    mode: str = "edm"

    def __post_init__(self):
        self.dof = DofSpec.parse(self.dof)
        if self.sigma_data <= 0:
            raise ParameterError(f"sigma_data must be positive, got {self.sigma_data}")
        if self.mode not in ("edm", "flow"):
            raise ParameterError(f"unknown preconditioner mode {self.mode!r}")


def noise_variance_factor(nu) -> np.ndarray:
    """Variance of unit-scale Student-t noise: nu / (nu - 2), 1 at inf."""
    nu = np.asarray(nu, dtype=np.float64)
    out = np.where(np.isinf(nu), 1.0, nu / np.where(np.isinf(nu), 1.0, nu - 2.0))
    return out


def precondition_coeffs(sigma, nu: DofLike, sigma_data: float):
    """The (sigma, nu)-dependent coefficients (c_skip, c_out, c_in, c_noise).

    ``sigma`` may be a scalar or an array of noise levels; a per-dimension
    ``nu`` broadcasts the first three coefficients across coordinates.
    ``c_noise`` depends on sigma only.  Undefined for finite ``nu <= 2``
    (the noise variance does not exist).
    """
    dof = DofSpec.parse(nu)
    dof.require_variance()
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise ParameterError("sigma must be non-negative")
    if dof.is_per_dim:
        nus = dof.nu_array(dof._per_dim.size)
        sig = sigma[..., None] if sigma.ndim > 0 else sigma
    else:
        nus = np.float64(dof.scalar)
        sig = sigma
    var_fac = noise_variance_factor(nus)
    s_noise = var_fac * sig**2
    denom = s_noise + sigma_data**2
    c_in = 1.0 / np.sqrt(denom)
    c_skip = sigma_data**2 / denom
    c_out = np.sqrt(var_fac) * sig * sigma_data / np.sqrt(denom)
    with np.errstate(divide="ignore"):
        c_noise = 0.25 * np.log(sigma)
    return c_skip, c_out, c_in, c_noise


@dataclass
class PreconditionedDenoiser:
    """An MLP core wrapped with preconditioning coefficients.

    Callable as ``den(x, sigma, cond=None)`` where ``x`` is ``(n, d)`` or
    ``(d,)`` and ``sigma`` a scalar or per-row array.  At ``sigma == 0``
    the wrapper short-circuits to ``x`` (c_out vanishes) without touching
    the network, so the log-sigma feature never sees zero.
    """

    params: MlpParams
    precond: Preconditioner

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def dof(self) -> DofSpec:
        return self.precond.dof

    def forward_cached(self, x: np.ndarray, sigma, cond: np.ndarray | None = None):
        """Forward pass returning (output, cache) for a later backward."""
        x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x2.shape[0]
        sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n,)).copy()
        if cond is not None:
            cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
        zero = sig == 0.0
        safe_sig = np.where(zero, 1.0, sig)
        if self.precond.mode == "flow":
            c_skip = np.zeros((n, 1))
            c_out = np.ones((n, 1))
            c_in = np.ones((n, 1))
            feat_noise = sig[:, None]
        else:
            c_skip, c_out, c_in, c_noise = precondition_coeffs(
                safe_sig, self.precond.dof, self.precond.sigma_data
            )
            # scalar dof gives per-row vectors, per-dim dof (n, d) grids
            if c_skip.ndim == 1:
                c_skip, c_out, c_in = c_skip[:, None], c_out[:, None], c_in[:, None]
            feat_noise = c_noise[:, None]
            if np.any(zero):
                c_out = np.where(zero[:, None], 0.0, c_out)
                c_skip = np.where(zero[:, None], 1.0, c_skip)
        cols = [c_in * x2, feat_noise]
        if cond is not None:
            cols.append(cond)
        inp = np.concatenate(cols, axis=1)
        f_out, mlp_cache = mlp_forward(self.params, inp)
        out = c_skip * x2 + c_out * f_out
        cache = (mlp_cache, c_out)
        return out, cache

    def forward(self, x: np.ndarray, sigma, cond: np.ndarray | None = None) -> np.ndarray:
        x_arr = np.asarray(x, dtype=np.float64)
        out, _ = self.forward_cached(x_arr, sigma, cond)
        return out[0] if x_arr.ndim == 1 else out

    __call__ = forward

    def backward(self, cache, grad_out: np.ndarray):
        """Parameter gradients given the upstream gradient on the output."""
        mlp_cache, c_out = cache
        w_grads, b_grads, _ = mlp_backward(self.params, mlp_cache, grad_out * c_out)
        return w_grads, b_grads


def denoiser_forward(
    params: MlpParams, precond: Preconditioner, x: np.ndarray, sigma, cond=None
) -> np.ndarray:
    return PreconditionedDenoiser(params, precond).forward(x, sigma, cond)


def denoiser_backward(
    params: MlpParams, precond: Preconditioner, x: np.ndarray, sigma, grad_out: np.ndarray, cond=None
):
    """Exact parameter gradients of ``sum(grad_out * D(x, sigma))``."""
    den = PreconditionedDenoiser(params, precond)
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    g2 = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
    _, cache = den.forward_cached(x2, sigma, cond)
    return den.backward(cache, g2)


@dataclass
class AdamState:
    """First/second moment accumulators for Adam."""

    m_w: list
    v_w: list
    m_b: list
    v_b: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
        )


def adam_step(
    params: MlpParams,
    w_grads,
    b_grads,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for i in range(len(params.weights)):
        for val, grad, m, v in (
            (params.weights[i], w_grads[i], state.m_w[i], state.v_w[i]),
            (params.biases[i], b_grads[i], state.m_b[i], state.v_b[i]),
        ):
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad**2
            val -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def save_checkpoint(
    path, den: PreconditionedDenoiser, opt: AdamState | None = None
) -> None:
    """Versioned binary checkpoint: header, then little-endian float64 layers."""
    params, pre = den.params, den.precond
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        nus = pre.dof._per_dim if pre.dof.is_per_dim else np.array([pre.dof.scalar])
        hidden = params.hidden_sizes
        fh.write(
            struct.pack(
                "<IIIII",
                _VERSION,
                params.d,
                params.cond_dim,
                len(hidden),
                nus.size,
            )
        )
        fh.write(struct.pack(f"<{len(hidden)}I", *hidden))
        fh.write(nus.astype("<f8").tobytes())
        fh.write(struct.pack("<d", pre.sigma_data))
        fh.write(struct.pack("<BB", 0 if pre.mode == "edm" else 1, 0 if opt is None else 1))
        for w, b in zip(params.weights, params.biases):
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())
        if opt is not None:
            fh.write(struct.pack("<Q", opt.step))
            for arrs in (opt.m_w, opt.v_w, opt.m_b, opt.v_b):
                for a in arrs:
                    fh.write(a.astype("<f8").tobytes())


def _read_array(fh: IO[bytes], shape) -> np.ndarray:
    n = int(np.prod(shape))
    buf = fh.read(8 * n)
    if len(buf) != 8 * n:
        raise ParameterError("truncated checkpoint file")
    return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()


def load_checkpoint(path):
    """Load a checkpoint; returns (denoiser, adam_state_or_None)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ParameterError(f"{path} is not a denoiser checkpoint")
        version, d, cond_dim, n_hidden, n_nu = struct.unpack("<IIIII", fh.read(20))
        if version != _VERSION:
            raise ParameterError(f"unsupported checkpoint version {version}")
        hidden = struct.unpack(f"<{n_hidden}I", fh.read(4 * n_hidden))
        nus = _read_array(fh, (n_nu,))
        (sigma_data,) = struct.unpack("<d", fh.read(8))
        mode_flag, has_opt = struct.unpack("<BB", fh.read(2))
        dof = DofSpec(nus if n_nu > 1 else float(nus[0]))
        sizes = [d + 1 + cond_dim, *hidden, d]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(_read_array(fh, (fan_out, fan_in)))
            biases.append(_read_array(fh, (fan_out,)))
        params = MlpParams(weights, biases, d=d, cond_dim=cond_dim)
        pre = Preconditioner(sigma_data=sigma_data, dof=dof, mode="edm" if mode_flag == 0 else "flow")
        opt = None
        if has_opt:
            (step,) = struct.unpack("<Q", fh.read(8))
            opt = AdamState.zeros_like(params)
            opt.step = step
            for arrs, ref in (
                (opt.m_w, weights),
                (opt.v_w, weights),
                (opt.m_b, biases),
                (opt.v_b, biases),
            ):
                for i, r in enumerate(ref):
                    arrs[i] = _read_array(fh, r.shape)
    return PreconditionedDenoiser(params, pre), opt
