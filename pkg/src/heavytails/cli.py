"""Command-line interface wiring data, training, sampling, and scoring.

Subcommands: gen-data, train, sample, schedule, loglik, eval.  Flag
values take precedence over an optional key=value config file, which
takes precedence over defaults.  Exit codes: 0 success, 2 configuration
error, 3 numeric failure.  ``HEAVYTAILS_SEED`` overrides the default
seed where no ``--seed`` is given.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .dof import DofSpec
from .errors import ConfigError, HeavyTailsError, NumericError, ParameterError
from .io_utils import (
    load_array,
    read_kv_config,
    save_array,
    write_manifest,
    write_matrix_csv,
    write_svg_lines,
)
from .kernels import GridSpec
from .likelihood import LikelihoodConfig, log_likelihood
from .metrics import evaluate_tails, windowed_conditional_eval
from .network import load_checkpoint
from .normalizers import InverseCDFNormalizer, ZScoreNormalizer, load_normalizer, save_normalizer
from .rng import RngStream
from .samplers import SDE_PRESETS, SamplerConfig, generate
from .schedule_design import (
    DataMoments,
    correlated_sigma,
    lambda_from_mi,
    sigma_max_gaussian,
    sigma_max_student_t,
)
from .training import TrainConfig, train
from .datasets import neals_funnel, student_t_mixture


def _default_seed() -> int:
    return int(os.environ.get("HEAVYTAILS_SEED", "0"))


def _resolve(args, key: str, cfg: dict, default, cast=None):
    """flags > config file > default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in cfg:
        raw = cfg[key]
        return cast(raw) if cast else raw
    return default


def _manifest_base(args) -> dict:
    return {
        "version": __version__,
        "argv": " ".join(sys.argv[1:]),
        "command": args.command,
    }


def cmd_gen_data(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    rng = RngStream(seed)
    if args.dist == "funnel":
        data = neals_funnel(args.n, rng, args.funnel_std_convention)
    elif args.dist == "tmix":
        data = student_t_mixture(args.n, rng)
    else:
        raise ParameterError(f"unknown --dist {args.dist!r}")
    save_array(args.out, data)
    write_manifest(
        args.out + ".manifest.txt",
        {**_manifest_base(args), "seed": seed, "n": args.n, "dist": args.dist, "out": args.out},
    )
    return 0


def cmd_train(args) -> int:
    file_cfg = read_kv_config(args.config) if args.config else {}
    seed = _resolve(args, "seed", file_cfg, _default_seed(), int)
    mode = _resolve(args, "mode", file_cfg, "tedm")
    nu = _resolve(args, "nu", file_cfg, "inf")
    cfg = TrainConfig(
        mode=mode,
        dof=DofSpec.parse(nu),
        pi_mean=_resolve(args, "pi-mean", file_cfg, -1.2, float),
        pi_std=_resolve(args, "pi-std", file_cfg, 1.2, float),
        batch_size=_resolve(args, "batch", file_cfg, 128, int),
        budget=_resolve(args, "budget", file_cfg, 3_000_000, int),
        seed=seed,
        sigma_data=_resolve(args, "sigma-data", file_cfg, 1.0, float),
        weighting=_resolve(args, "weighting", file_cfg, "cout"),
        checkpoint_every=_resolve(args, "checkpoint-every", file_cfg, 0, int),
    )
    data = load_array(args.data)
    norm_kind = _resolve(args, "normalizer", file_cfg, "zscore")
    norm = None
    if norm_kind == "zscore":
        norm = ZScoreNormalizer().fit(data)
    elif norm_kind == "inc":
        norm = InverseCDFNormalizer().fit(data)
    elif norm_kind != "none":
        raise ParameterError(f"unknown normalizer {norm_kind!r}")
    if norm is not None:
        data = norm.transform(data)

    started = time.time()
    result = train(cfg, data, trace_path=args.out_trace, checkpoint_path=args.out_checkpoint)
    entries = {
        **_manifest_base(args),
        "seed": seed,
        "mode": cfg.mode,
        "nu": cfg.dof.to_string(),
        "pi_mean": cfg.pi_mean,
        "pi_std": cfg.pi_std,
        "batch": cfg.batch_size,
        "budget": cfg.budget,
        "sigma_data": cfg.sigma_data,
        "weighting": cfg.weighting,
        "normalizer": norm_kind,
        "data": args.data,
        "checkpoint": args.out_checkpoint,
        "trace": args.out_trace or "",
        "wall_clock_s": f"{time.time() - started:.3f}",
        "final_loss": repr(float(result.trace[-1, 1])) if len(result.trace) else "",
    }
    if norm is not None and args.out_normalizer:
        save_normalizer(args.out_normalizer, norm)
        entries["normalizer_file"] = args.out_normalizer
    write_manifest(args.out_checkpoint + ".manifest.txt", entries)
    return 0


def cmd_sample(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    den, _ = load_checkpoint(args.checkpoint)
    flow = den.precond.mode == "flow"
    kind = args.sampler or ("tflow" if flow else "heun")
    if flow and kind != "tflow":
        raise ParameterError("flow checkpoints sample with --sampler tflow")
    defaults = (0.01, 1.0) if kind == "tflow" else (0.002, 80.0)
    grid = GridSpec(
        n_steps=args.steps,
        sigma_min=args.sigma_min if args.sigma_min is not None else defaults[0],
        sigma_max=args.sigma_max if args.sigma_max is not None else defaults[1],
        rho=args.rho,
    )
    preset = None
    if kind == "sde":
        mk = SDE_PRESETS[args.sde_preset]
        preset = mk(args.sde_beta0) if args.sde_preset == "ancestral" else mk()
    cfg = SamplerConfig(kind=kind, grid=grid, dof=den.precond.dof, sde_preset=preset)
    samples = generate(den, cfg, RngStream(seed), args.n)
    if args.normalizer:
        samples = load_normalizer(args.normalizer).inverse_transform(samples)
    save_array(args.out, samples)
    n_chunks = -(-args.n // (1 << 18))
    write_manifest(
        args.out + ".manifest.txt",
        {
            **_manifest_base(args),
            "seed": seed,
            "sampler": kind,
            "n": args.n,
            "steps": grid.n_steps,
            "sigma_min": grid.sigma_min,
            "sigma_max": grid.sigma_max,
            "rho": grid.rho,
            "checkpoint": args.checkpoint,
            "out": args.out,
            "chain_streams": ",".join(f"({seed},{k})" for k in range(n_chunks)),
        },
    )
    return 0


def cmd_schedule(args) -> int:
    data = load_array(args.data)
    moments = DataMoments.from_data(data, with_correlation=args.mode == "corr")
    if args.lam is not None:
        lam = args.lam
    elif args.target_mi is not None:
        lam = lambda_from_mi(args.target_mi, moments)
    else:
        raise ParameterError("provide --lambda or --target-mi")
    mi = math.sqrt(moments.mean_sq_norm / lam)
    if args.mode == "gauss":
        sig = sigma_max_gaussian(moments, lam)
    elif args.mode == "t":
        if args.nu is None:
            raise ParameterError("--mode t requires --nu")
        sig = sigma_max_student_t(moments, lam, DofSpec.parse(args.nu).scalar)
    elif args.mode == "corr":
        mat = correlated_sigma(moments.correlation, lam)
        sig = float(np.trace(mat)) / mat.shape[0]
        save_array(args.out + ".sigma_matrix.csv", mat)
    else:
        raise ParameterError(f"unknown --mode {args.mode!r}")
    with open(args.out, "w") as fh:
        fh.write("sigma_max_sq,lambda,target_mi\n")
        fh.write(f"{sig!r},{lam!r},{mi!r}\n")
    return 0


def cmd_loglik(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    den, _ = load_checkpoint(args.checkpoint)
    if den.precond.mode == "flow":
        raise ParameterError("log-likelihood is defined for the diffusion family only")
    data = load_array(args.data)
    if args.normalizer:
        data = load_normalizer(args.normalizer).transform(data)
    cfg = LikelihoodConfig(
        n_probes=args.probes,
        probe_sigma=args.probe_sigma,
        grid=GridSpec(args.steps, args.sigma_min, args.sigma_max, args.rho),
        estimator=args.estimator,
        seed=seed,
    )
    vals = log_likelihood(den, data, cfg)
    with open(args.out, "w") as fh:
        fh.write("index,log_likelihood\n")
        for i, v in enumerate(np.atleast_1d(vals)):
            fh.write(f"{i},{v!r}\n")
    return 0


def cmd_eval(args) -> int:
    sim = load_array(args.sim)
    ref = load_array(args.ref)
    if args.window is not None:
        report = windowed_conditional_eval(
            sim, ref, window=args.window, threshold=args.threshold if args.threshold is not None else -math.inf
        )
        with open(args.out_prefix + "_report.csv", "w") as fh:
            fh.write("crps,rmse,ssr,n_windows,n_retained\n")
            fh.write(
                f"{report.crps!r},{report.rmse!r},{report.ssr!r},{report.n_windows},{report.n_retained}\n"
            )
        return 0
    report = evaluate_tails(sim, ref, tails=args.tails)
    with open(args.out_prefix + "_report.csv", "w") as fh:
        fh.write("kr,sr,ks_left,ks_right,ks_avg,n_sim,n_data\n")
        fh.write(
            f"{report.kr!r},{report.sr!r},{report.ks_left!r},{report.ks_right!r},"
            f"{report.ks_avg!r},{report.n_sim},{report.n_data}\n"
        )
    with open(args.out_prefix + "_summary.txt", "w") as fh:
        fh.write(report.summary() + "\n")
    edges, c_sim, c_ref = report.histogram
    with open(args.out_prefix + "_hist.csv", "w") as fh:
        fh.write("edge,count_sim,count_data\n")
        for e, a, b in zip(edges[:-1], c_sim, c_ref):
            fh.write(f"{e!r},{a},{b}\n")
    if args.svg:
        write_svg_lines(args.out_prefix + "_hist.svg", edges, {"sim": c_sim, "data": c_ref})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heavytails", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a toy dataset")
    p.add_argument("--dist", default="funnel", choices=["funnel", "tmix"])
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--funnel-std-convention", default="std", choices=["std", "var"])
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a denoiser or flow network")
    p.add_argument("--mode", default=None, choices=["tedm", "edm", "tflow", "gflow"])
    p.add_argument("--nu", default=None, help="scalar, comma list, or 'inf'")
    p.add_argument("--pi-mean", type=float, default=None)
    p.add_argument("--pi-std", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigma-data", type=float, default=None)
    p.add_argument("--weighting", default=None, choices=["cout", "unit", "dsm"])
    p.add_argument("--normalizer", default=None, choices=["zscore", "inc", "none"])
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value file; flags win")
    p.add_argument("--data", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-trace", default=None)
    p.add_argument("--out-normalizer", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate samples from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sampler", default=None, choices=["heun", "ancestral", "sde", "tflow"])
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--steps", type=int, default=18)
    p.add_argument("--sigma-min", type=float, default=None)
    p.add_argument("--sigma-max", type=float, default=None)
    p.add_argument("--rho", type=float, default=7.0)
    p.add_argument("--sde-preset", default="ancestral", choices=sorted(SDE_PRESETS))
    p.add_argument("--sde-beta0", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--normalizer", default=None, help="denormalize with this state file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("schedule", help="top noise level design from data")
    p.add_argument("--mode", default="gauss", choices=["gauss", "t", "corr"])
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--target-mi", type=float, default=None)
    p.add_argument("--nu", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("loglik", help="per-sample log likelihood")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--normalizer", default=None)
    p.add_argument("--probes", type=int, default=16)
    p.add_argument("--probe-sigma", type=float, default=1e-3)
    p.add_argument("--estimator", default="hutchinson", choices=["hutchinson", "taylor"])
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--sigma-min", type=float, default=0.002)
    p.add_argument("--sigma-max", type=float, default=80.0)
    p.add_argument("--rho", type=float, default=7.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser("eval", help="tail metrics or windowed forecast metrics")
    p.add_argument("--sim", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--tails", default="both", choices=["both", "right", "left"])
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except HeavyTailsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
