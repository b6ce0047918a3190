"""Evaluation and oracle machinery.

Empirical squared MMD (unbiased U-statistic and biased V-statistic), exact
small-n quadratic Wasserstein distance via optimal assignment, Gaussian
kernel density estimation with Silverman bandwidths, and the KDE ratio
oracle used by the energy-decay checks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

logger = logging.getLogger(__name__)

W2_SIZE_CAP = 2000
KDE_FLOOR = 1e-6


@dataclass(frozen=True)
class MetricReport:
    metric: str
    value: float
    n_x: int
    n_y: int
    params: dict

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "n_x": self.n_x,
            "n_y": self.n_y,
            "params": dict(self.params),
        }


def _pairwise_sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x2 = np.sum(x * x, axis=1)
    y2 = np.sum(y * y, axis=1)
    d2 = x2[:, None] + y2[None, :] - 2.0 * (x @ y.T)
    return np.maximum(d2, 0.0)


def median_heuristic_bandwidth(x: np.ndarray, y: np.ndarray | None = None) -> float:
    """Median pairwise distance over the pooled sample; 1.0 if degenerate."""
    pool = np.asarray(x, dtype=np.float64)
    if y is not None:
        pool = np.concatenate([pool, np.asarray(y, dtype=np.float64)], axis=0)
    d2 = _pairwise_sq_dists(pool, pool)
    upper = d2[np.triu_indices(len(pool), k=1)]
    med = float(np.sqrt(np.median(upper)))
    return med if med > 0 else 1.0


def mmd_squared(x: np.ndarray, y: np.ndarray, kernel, unbiased: bool = True) -> float:
    """Empirical squared maximum mean discrepancy under ``kernel``.

    The unbiased U-statistic drops diagonal terms and may be slightly
    negative; the biased V-statistic is exactly zero on identical samples.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    n, m = len(x), len(y)
    if n < 2 or m < 2:
        raise ValueError("need at least two points per sample")
    kxx = kernel.value(x, x)
    kyy = kernel.value(y, y)
    kxy = kernel.value(x, y)
    if unbiased:
        sxx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
        syy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    else:
        sxx = kxx.sum() / (n * n)
        syy = kyy.sum() / (m * m)
    return float(sxx + syy - 2.0 * kxy.mean())


def wasserstein2_exact(x: np.ndarray, y: np.ndarray) -> float:
    """Quadratic Wasserstein distance between equal-size empirical measures.

    Solved exactly as an assignment problem; capped at 2000 points because
    the solver is O(n^3).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if len(x) != len(y):
        raise ValueError(f"equal sample sizes required, got {len(x)} and {len(y)}")
    if len(x) > W2_SIZE_CAP:
        raise ValueError(f"size cap {W2_SIZE_CAP} exceeded ({len(x)} points)")
    cost = _pairwise_sq_dists(x, y)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def silverman_bandwidths(samples: np.ndarray) -> np.ndarray:
    """Per-dimension Silverman rule: (4/(d+2))^(1/(d+4)) n^(-1/(d+4)) sigma_j."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, d = samples.shape
    sigma = samples.std(axis=0, ddof=1)
    factor = (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))
    h = factor * sigma
    return np.where(h > 0, h, 1.0)


class GaussianKde:
    """Product-Gaussian kernel density estimate with analytic gradient."""

    def __init__(self, samples: np.ndarray, bandwidth="auto"):
        self.samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if len(self.samples) == 0:
            raise ValueError("empty sample")
        n, d = self.samples.shape
        if isinstance(bandwidth, str):
            if bandwidth != "auto":
                raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
            self.bandwidths = silverman_bandwidths(self.samples)
        else:
            bw = np.asarray(bandwidth, dtype=np.float64)
            self.bandwidths = np.full(d, float(bw)) if bw.ndim == 0 else bw
        if np.any(self.bandwidths <= 0):
            raise ValueError("bandwidths must be positive")
        self._norm = 1.0 / (len(self.samples) * np.prod(np.sqrt(2.0 * np.pi) * self.bandwidths))

    def _weights(self, query):
        query = np.atleast_2d(np.asarray(query, dtype=np.float64))
        z = (query[:, None, :] - self.samples[None, :, :]) / self.bandwidths
        return query, z, np.exp(-0.5 * np.sum(z * z, axis=2))

    def density(self, query) -> np.ndarray:
        _, _, w = self._weights(query)
        return self._norm * w.sum(axis=1)

    def density_and_grad(self, query):
        query, z, w = self._weights(query)
        dens = self._norm * w.sum(axis=1)
        grad = -self._norm * np.einsum("qs,qsd->qd", w, z / self.bandwidths)
        return dens, grad


def kde_density(samples: np.ndarray, query: np.ndarray, bandwidth="auto") -> np.ndarray:
    """Gaussian KDE of ``samples`` evaluated at ``query`` points."""
    return GaussianKde(samples, bandwidth).density(query)


class KdeRatioField:
    """Oracle ratio q/p from two KDEs, with a floored denominator.

    The numerator is the particle estimate, the denominator the target
    estimate; the floor keeps far-tail queries finite and is logged when it
    engages.  Exposes the scalar-field interface so it can drive velocities.
    """

    def __init__(self, particles, target_samples, bandwidths=("auto", "auto"), floor=KDE_FLOOR):
        self.numerator = GaussianKde(particles, bandwidths[0])
        self.denominator = GaussianKde(target_samples, bandwidths[1])
        self.floor = float(floor)

    def _floored_denominator(self, query):
        dens, grad = self.denominator.density_and_grad(query)
        hit = dens < self.floor
        n_hit = int(np.count_nonzero(hit))
        if n_hit:
            logger.debug("KDE ratio floor engaged at %d of %d queries", n_hit, len(dens))
        grad = np.where(hit[:, None], 0.0, grad)
        return np.maximum(dens, self.floor), grad

    def values(self, query) -> np.ndarray:
        num = self.numerator.density(query)
        den, _ = self._floored_denominator(query)
        return num / den

    def values_and_input_grads(self, query):
        num, num_grad = self.numerator.density_and_grad(query)
        den, den_grad = self._floored_denominator(query)
        vals = num / den
        grads = (num_grad - vals[:, None] * den_grad) / den[:, None]
        return vals, grads


def kde_ratio_oracle(particles, target_samples, query, bandwidths=("auto", "auto")) -> np.ndarray:
    """Ratio of particle KDE to target KDE at ``query``, denominator floored."""
    return KdeRatioField(particles, target_samples, bandwidths).values(query)


def diagnostics_series(record) -> list[dict]:
    """Per-iteration diagnostics of a run record as a list of plain dicts."""
    return [dict(row) for row in record.diagnostics]
