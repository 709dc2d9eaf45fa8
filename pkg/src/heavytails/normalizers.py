"""Data normalization transformers with the scikit-learn interface.

Both transformers fit per-dimension state, expose
``transform`` / ``inverse_transform``, and serialize to a plain CSV
table with a kind header so runs can be replayed outside Python.
"""

from __future__ import annotations

import csv
import warnings

import numpy as np
from scipy.special import ndtr, ndtri
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ParameterError


class ZScoreNormalizer(TransformerMixin, BaseEstimator):
    """Per-dimension standardization using precomputed statistics."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.std_ = X.std(axis=0)
        if np.any(self.std_ == 0):
            raise ParameterError("constant column; z-score normalization undefined")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) / self.std_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        return X * self.std_ + self.mean_


class InverseCDFNormalizer(TransformerMixin, BaseEstimator):
    """Gaussianizing transform through per-dimension empirical CDFs.

    ``transform`` maps a value to the standard-normal quantile of its
    histogram-based CDF, clamped away from 0 and 1 so the quantile stays
    finite; ``inverse_transform`` interpolates back through the same
    monotone table.  Queries outside the fitted support clamp to the
    edge and are counted on ``clamp_count_``.
    """

    def __init__(self, n_bins: int = 4096):
        self.n_bins = n_bins

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n, d = X.shape
        if self.n_bins < 2:
            raise ParameterError("need at least 2 bins")
        self.knots_ = []
        self.cdf_ = []
        for j in range(d):
            col = X[:, j]
            lo, hi = float(col.min()), float(col.max())
            if lo == hi:
                raise ParameterError(f"constant column {j}; empirical CDF undefined")
            counts, edges = np.histogram(col, bins=self.n_bins, range=(lo, hi))
            cdf = np.concatenate([[0.0], np.cumsum(counts) / n])
            self.knots_.append(edges)
            self.cdf_.append(cdf)
        self.p_min_ = 1.0 / (2.0 * n)
        self.n_features_in_ = d
        self.clamp_count_ = 0
        return self

    def transform(self, X):
        check_is_fitted(self, "knots_")
        X = check_array(X, dtype=np.float64)
        out = np.empty_like(X)
        clamped = 0
        for j in range(X.shape[1]):
            col = X[:, j]
            clamped += int(np.sum((col < self.knots_[j][0]) | (col > self.knots_[j][-1])))
            p = np.interp(col, self.knots_[j], self.cdf_[j])
            p = np.clip(p, self.p_min_, 1.0 - self.p_min_)
            out[:, j] = ndtri(p)
        if clamped:
            self.clamp_count_ += clamped
            warnings.warn(f"{clamped} queries outside the fitted support were clamped")
        return out

    def inverse_transform(self, X):
        check_is_fitted(self, "knots_")
        X = check_array(X, dtype=np.float64)
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            p = ndtr(X[:, j])
            out[:, j] = np.interp(p, self.cdf_[j], self.knots_[j])
        return out


def save_normalizer(path, norm) -> None:
    """Serialize a fitted normalizer as a CSV table with a kind header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if isinstance(norm, ZScoreNormalizer):
            check_is_fitted(norm, "mean_")
            writer.writerow(["# kind=zscore"])
            writer.writerow(["dim", "mean", "std"])
            for j in range(norm.n_features_in_):
                writer.writerow([j, repr(norm.mean_[j]), repr(norm.std_[j])])
        elif isinstance(norm, InverseCDFNormalizer):
            check_is_fitted(norm, "knots_")
            writer.writerow([f"# kind=inc p_min={norm.p_min_!r}"])
            writer.writerow(["dim", "knot", "cdf"])
            for j in range(norm.n_features_in_):
                for knot, cdf in zip(norm.knots_[j], norm.cdf_[j]):
                    writer.writerow([j, repr(float(knot)), repr(float(cdf))])
        else:
            raise ParameterError(f"cannot serialize normalizer of type {type(norm)}")


def load_normalizer(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)[0]
        if header.startswith("# kind=zscore"):
            next(reader)
            rows = sorted((int(r[0]), float(r[1]), float(r[2])) for r in reader)
            norm = ZScoreNormalizer()
            norm.mean_ = np.array([r[1] for r in rows])
            norm.std_ = np.array([r[2] for r in rows])
            norm.n_features_in_ = len(rows)
            return norm
        if header.startswith("# kind=inc"):
            p_min = float(header.split("p_min=")[1])
            next(reader)
            knots: dict[int, list] = {}
            cdfs: dict[int, list] = {}
            for r in reader:
                j = int(r[0])
                knots.setdefault(j, []).append(float(r[1]))
                cdfs.setdefault(j, []).append(float(r[2]))
            norm = InverseCDFNormalizer()
            dims = sorted(knots)
            norm.knots_ = [np.array(knots[j]) for j in dims]
            norm.cdf_ = [np.array(cdfs[j]) for j in dims]
            norm.p_min_ = p_min
            norm.n_features_in_ = len(dims)
            norm.clamp_count_ = 0
            return norm
    raise ParameterError(f"unrecognized normalizer file {path}")
