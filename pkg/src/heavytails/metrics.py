"""Tail statistics and probabilistic-forecast metrics.

Moment estimators are the uncorrected standardized sample moments;
kurtosis is raw (non-excess) by default since the ratio form is
convention-sensitive.  Tail thresholds always come from the reference
(data) side and are applied to both sets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError

MIN_TAIL_POINTS = 30


def sample_skewness(x: np.ndarray) -> float:
    x = np.ravel(np.asarray(x, dtype=np.float64))
    m = x.mean()
    m2 = np.mean((x - m) ** 2)
    if m2 == 0:
        raise ParameterError("skewness undefined for degenerate samples")
    return float(np.mean((x - m) ** 3) / m2**1.5)


def sample_kurtosis(x: np.ndarray, excess: bool = False) -> float:
    x = np.ravel(np.asarray(x, dtype=np.float64))
    m = x.mean()
    m2 = np.mean((x - m) ** 2)
    if m2 == 0:
        raise ParameterError("kurtosis undefined for degenerate samples")
    k = float(np.mean((x - m) ** 4) / m2**2)
    return k - 3.0 if excess else k


def kurtosis_ratio(sim: np.ndarray, data: np.ndarray, excess: bool = False) -> float:
    """|1 - k_sim / k_data| over flattened samples."""
    k_sim = sample_kurtosis(sim, excess)
    k_data = sample_kurtosis(data, excess)
    if k_data == 0:
        raise NumericError("reference kurtosis is zero; ratio undefined")
    return abs(1.0 - k_sim / k_data)


def skewness_ratio(sim: np.ndarray, data: np.ndarray) -> float:
    """|1 - s_sim / s_data| over flattened samples."""
    s_sim = sample_skewness(sim)
    s_data = sample_skewness(data)
    if s_data == 0:
        raise NumericError("reference skewness is zero; ratio undefined")
    return abs(1.0 - s_sim / s_data)


def two_sample_ks(a: np.ndarray, b: np.ndarray) -> float:
    """sup |ECDF_a - ECDF_b| over the pooled points."""
    a = np.sort(np.ravel(np.asarray(a, dtype=np.float64)))
    b = np.sort(np.ravel(np.asarray(b, dtype=np.float64)))
    if a.size == 0 or b.size == 0:
        raise NumericError("KS statistic needs non-empty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_tail(
    sim: np.ndarray,
    data: np.ndarray,
    upper_q: float = 0.999,
    lower_q: float = 0.001,
    tails: str = "both",
) -> tuple[float, float, float]:
    """Two-sample KS restricted to the extreme regions.

    Retains points beyond the data-side quantile thresholds on each
    requested tail and returns ``(ks_left, ks_right, ks_avg)`` with nan
    for a tail that was not requested.
    """
    if tails not in ("both", "right", "left"):
        raise ParameterError(f"unknown tails mode {tails!r}")
    sim = np.ravel(np.asarray(sim, dtype=np.float64))
    data = np.ravel(np.asarray(data, dtype=np.float64))
    ks_left = ks_right = math.nan
    if tails in ("both", "right"):
        thr = float(np.quantile(data, upper_q))
        ks_right = _tail_ks(sim[sim >= thr], data[data >= thr], "right")
    if tails in ("both", "left"):
        thr = float(np.quantile(data, lower_q))
        ks_left = _tail_ks(sim[sim <= thr], data[data <= thr], "left")
    if tails == "both":
        ks_avg = 0.5 * (ks_left + ks_right)
    elif tails == "right":
        ks_avg = ks_right
    else:
        ks_avg = ks_left
    return ks_left, ks_right, ks_avg


def _tail_ks(sim_tail: np.ndarray, data_tail: np.ndarray, which: str) -> float:
    if sim_tail.size == 0 or data_tail.size == 0:
        raise NumericError(f"no retained points on the {which} tail")
    if min(sim_tail.size, data_tail.size) < MIN_TAIL_POINTS:
        warnings.warn(
            f"only {min(sim_tail.size, data_tail.size)} points retained on the "
            f"{which} tail; KS statistic is unreliable",
            stacklevel=3,
        )
    return two_sample_ks(sim_tail, data_tail)


def crps_ensemble(ensemble: np.ndarray, y) -> np.ndarray | float:
    """Fair-form ensemble CRPS: mean |X - y| - pairwise spread term.

    ``ensemble`` holds members along the last axis; ``y`` broadcasts over
    the leading axes.  The pairwise term uses the unbiased 1/(n(n-1))
    normalization and vanishes for a single member.
    """
    e = np.asarray(ensemble, dtype=np.float64)
    scalar = e.ndim == 1
    e2 = np.atleast_2d(e)
    y2 = np.broadcast_to(np.asarray(y, dtype=np.float64), e2.shape[:-1])
    n = e2.shape[-1]
    term1 = np.mean(np.abs(e2 - y2[..., None]), axis=-1)
    if n > 1:
        srt = np.sort(e2, axis=-1)
        k = np.arange(n)
        pair_sum = 2.0 * np.sum(srt * (2.0 * k - n + 1.0), axis=-1)
        term2 = pair_sum / (2.0 * n * (n - 1))
    else:
        term2 = np.zeros_like(term1)
    out = term1 - term2
    return float(out[0]) if scalar else out


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def ssr(ensembles: np.ndarray, truths: np.ndarray) -> float:
    """Spread-skill ratio: mean ensemble std over RMSE of the ensemble mean.

    Near 1 for calibrated forecasts; raises when the skill term vanishes
    (zero residual with nonzero spread has no meaningful ratio).
    """
    e = np.asarray(ensembles, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if e.ndim < 2:
        raise ParameterError("ensembles must be (cases, members, ...)")
    spread = float(np.mean(np.std(e, axis=1, ddof=1)))
    skill = rmse(np.mean(e, axis=1), t)
    if skill == 0.0:
        if spread == 0.0:
            return 0.0
        raise NumericError("zero skill with nonzero spread; ratio undefined")
    return spread / skill


@dataclass
class WindowedReport:
    crps: float
    rmse: float
    ssr: float
    n_windows: int
    n_retained: int


def windowed_conditional_eval(
    pred_ensembles: np.ndarray,
    truths: np.ndarray,
    window: int = 16,
    threshold: float = -math.inf,
    stride: int | None = None,
) -> WindowedReport:
    """Windowed forecast metrics over spatial fields.

    ``pred_ensembles`` is (cases, members, H, W) and ``truths`` is
    (cases, H, W).  Windows tile the grid (stride defaults to the window
    size) and a window is retained when its truth-side maximum reaches
    the threshold; metrics aggregate over retained windows only.
    """
    e = np.asarray(pred_ensembles, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if e.ndim != 4 or t.ndim != 3:
        raise ParameterError("expected (cases, members, H, W) ensembles and (cases, H, W) truths")
    stride = window if stride is None else int(stride)
    n_cases, _, height, width = e.shape
    rows = range(0, height - window + 1, stride)
    cols = range(0, width - window + 1, stride)
    kept_members, kept_truth = [], []
    n_windows = 0
    for c in range(n_cases):
        for r in rows:
            for q in cols:
                n_windows += 1
                tw = t[c, r : r + window, q : q + window]
                if tw.max() >= threshold:
                    kept_truth.append(tw.ravel())
                    kept_members.append(e[c, :, r : r + window, q : q + window].reshape(e.shape[1], -1))
    if not kept_members:
        raise NumericError("threshold retained no windows; nothing to score")
    members = np.stack(kept_members)  # (kept, M, px)
    truth = np.stack(kept_truth)  # (kept, px)
    crps_px = crps_ensemble(np.moveaxis(members, 1, -1), truth)
    ens_mean = members.mean(axis=1)
    spread = float(np.mean(np.std(members, axis=1, ddof=1)))
    skill = rmse(ens_mean, truth)
    ratio = 0.0 if (skill == 0.0 and spread == 0.0) else spread / skill if skill > 0 else math.inf
    if math.isinf(ratio):
        raise NumericError("zero skill with nonzero spread; ratio undefined")
    return WindowedReport(
        crps=float(np.mean(crps_px)),
        rmse=skill,
        ssr=ratio,
        n_windows=n_windows,
        n_retained=len(kept_members),
    )


def histogram_pair(sim: np.ndarray, data: np.ndarray, n_bins: int | None = None):
    """Shared-edge histograms via Freedman-Diaconis on the pooled sample."""
    sim = np.ravel(np.asarray(sim, dtype=np.float64))
    data = np.ravel(np.asarray(data, dtype=np.float64))
    pooled = np.concatenate([sim, data])
    if n_bins is None:
        iqr = float(np.quantile(pooled, 0.75) - np.quantile(pooled, 0.25))
        if iqr == 0:
            n_bins = 10
        else:
            width = 2.0 * iqr / pooled.size ** (1.0 / 3.0)
            n_bins = max(10, min(2000, int(math.ceil((pooled.max() - pooled.min()) / width))))
    edges = np.linspace(pooled.min(), pooled.max(), n_bins + 1)
    counts_sim, _ = np.histogram(sim, bins=edges)
    counts_data, _ = np.histogram(data, bins=edges)
    return edges, counts_sim, counts_data


@dataclass
class EvalReport:
    """Tail-statistics report for a (generated, reference) pair."""

    kr: float
    sr: float
    ks_left: float
    ks_right: float
    ks_avg: float
    n_sim: int
    n_data: int
    histogram: tuple | None = None

    def summary(self) -> str:
        lines = [
            f"samples: sim={self.n_sim} data={self.n_data}",
            f"kurtosis ratio: {self.kr:.6g}",
            f"skewness ratio: {self.sr:.6g}",
            f"tail KS (left/right/avg): {self.ks_left:.6g} / {self.ks_right:.6g} / {self.ks_avg:.6g}",
        ]
        return "\n".join(lines)


def evaluate_tails(
    sim: np.ndarray,
    data: np.ndarray,
    tails: str = "both",
    excess: bool = False,
    upper_q: float = 0.999,
    lower_q: float = 0.001,
    with_histogram: bool = True,
) -> EvalReport:
    """All tail metrics for one generated-vs-reference comparison."""
    sim = np.ravel(np.asarray(sim, dtype=np.float64))
    data = np.ravel(np.asarray(data, dtype=np.float64))
    ks_l, ks_r, ks_a = ks_tail(sim, data, upper_q, lower_q, tails)
    return EvalReport(
        kr=kurtosis_ratio(sim, data, excess),
        sr=skewness_ratio(sim, data),
        ks_left=ks_l,
        ks_right=ks_r,
        ks_avg=ks_a,
        n_sim=sim.size,
        n_data=data.size,
        histogram=histogram_pair(sim, data) if with_histogram else None,
    )
