"""Reference samplers, 2D toy targets, and analytic Gaussian mixtures.

Target generators follow the conventional toy-data formulas (mixtures on a
circle, interleaved moons, alternating squares, spirals, pinwheel blades,
concentric circles).  Every sampler is a pure function of a
:class:`DatasetSpec`, drawing from a named stream, so distinct seeds give
independent but distributionally identical samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import stream

DATASET_NAMES = (
    "8gaussians",
    "pinwheel",
    "moons",
    "checkerboard",
    "2spirals",
    "circles",
    "4squares",
    "5squares",
    "small4gaussians",
    "large4gaussians",
)


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    n: int
    seed: int
    noise: float | None = None

    def __post_init__(self):
        if self.name not in DATASET_NAMES:
            raise ValueError(f"unknown dataset {self.name!r}; known: {DATASET_NAMES}")
        if self.n < 1:
            raise ValueError("need n >= 1 samples")


def sample(spec: DatasetSpec, label: str = "sample") -> np.ndarray:
    """Draw ``spec.n`` points of the named 2D target, (n, 2)."""
    rng = stream(spec.seed, "dataset", spec.name, label)
    fn = _GENERATORS[spec.name]
    return fn(spec.n, rng, spec.noise)


def reference_sample(m: int, n: int, seed: int, label: str = "reference") -> np.ndarray:
    """i.i.d. standard normal reference particles, (n, m)."""
    if m < 1:
        raise ValueError("dimension must be >= 1")
    return stream(seed, label, m).standard_normal((n, m))


def _circle_mixture(n, rng, radius, n_modes, sigma, angle0=0.0):
    angles = angle0 + 2.0 * np.pi * np.arange(n_modes) / n_modes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    which = rng.integers(0, n_modes, size=n)
    return centers[which] + sigma * rng.standard_normal((n, 2))


def _8gaussians(n, rng, noise):
    sigma = 0.2 if noise is None else noise
    return _circle_mixture(n, rng, radius=2.0, n_modes=8, sigma=sigma)


def _small4gaussians(n, rng, noise):
    sigma = 0.2 if noise is None else noise
    return _circle_mixture(n, rng, radius=1.0, n_modes=4, sigma=sigma, angle0=np.pi / 4)


def _large4gaussians(n, rng, noise):
    sigma = 0.2 if noise is None else noise
    return _circle_mixture(n, rng, radius=3.0, n_modes=4, sigma=sigma, angle0=np.pi / 4)


def _moons(n, rng, noise):
    sigma = 0.1 if noise is None else noise
    n_outer = n // 2
    t_outer = np.pi * rng.random(n_outer)
    t_inner = np.pi * rng.random(n - n_outer)
    outer = np.stack([np.cos(t_outer), np.sin(t_outer)], axis=1)
    inner = np.stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)], axis=1)
    pts = np.concatenate([outer, inner], axis=0)
    return pts + sigma * rng.standard_normal(pts.shape)


def _checkerboard(n, rng, noise):
    # Uniform over the 8 unit squares of one parity inside [-2, 2]^2.
    cells = np.array([(ix, iy) for ix in range(4) for iy in range(4) if (ix + iy) % 2 == 0])
    which = rng.integers(0, len(cells), size=n)
    corner = cells[which] - 2.0
    return corner + rng.random((n, 2))


def _2spirals(n, rng, noise):
    sigma = 0.1 if noise is None else noise
    n_half = n // 2
    t = np.sqrt(rng.random(n_half)) * 540.0 * (2.0 * np.pi) / 360.0
    dx = -np.cos(t) * t + rng.random(n_half) * 0.5
    dy = np.sin(t) * t + rng.random(n_half) * 0.5
    arm = np.stack([dx, dy], axis=1)
    pts = np.concatenate([arm, -arm[: n - n_half]], axis=0) / 3.0
    return pts + sigma * rng.standard_normal(pts.shape)


def _pinwheel(n, rng, noise):
    radial_std, tangential_std = 0.3, 0.1
    n_blades = 5
    rate = 0.25
    sigma = 1.0 if noise is None else noise
    blade = rng.integers(0, n_blades, size=n)
    feats = rng.standard_normal((n, 2)) * np.array([radial_std, tangential_std]) * sigma
    feats[:, 0] += 1.0
    angles = 2.0 * np.pi * blade / n_blades + rate * np.exp(feats[:, 0])
    cos_a, sin_a = np.cos(angles), np.sin(angles)
    x = feats[:, 0] * cos_a - feats[:, 1] * sin_a
    y = feats[:, 0] * sin_a + feats[:, 1] * cos_a
    return 2.0 * np.stack([x, y], axis=1)


def _circles(n, rng, noise):
    sigma = 0.08 if noise is None else noise
    n_outer = n // 2
    radii = np.concatenate([np.ones(n_outer), 0.5 * np.ones(n - n_outer)])
    t = 2.0 * np.pi * rng.random(n)
    pts = radii[:, None] * np.stack([np.cos(t), np.sin(t)], axis=1)
    pts += sigma * rng.standard_normal(pts.shape)
    return 3.0 * pts


def _squares(n, rng, centers, side=1.0):
    which = rng.integers(0, len(centers), size=n)
    return np.asarray(centers)[which] + side * (rng.random((n, 2)) - 0.5)


_4SQUARE_CENTERS = [(-1.5, -1.5), (-1.5, 1.5), (1.5, -1.5), (1.5, 1.5)]


def _4squares(n, rng, noise):
    return _squares(n, rng, _4SQUARE_CENTERS)


def _5squares(n, rng, noise):
    return _squares(n, rng, _4SQUARE_CENTERS + [(0.0, 0.0)])


_GENERATORS = {
    "8gaussians": _8gaussians,
    "pinwheel": _pinwheel,
    "moons": _moons,
    "checkerboard": _checkerboard,
    "2spirals": _2spirals,
    "circles": _circles,
    "4squares": _4squares,
    "5squares": _5squares,
    "small4gaussians": _small4gaussians,
    "large4gaussians": _large4gaussians,
}


class AnalyticTarget:
    """Gaussian mixture with exact density and score evaluators."""

    def __init__(self, means, covs, weights):
        self.means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        k, m = self.means.shape
        self.covs = np.asarray(covs, dtype=np.float64).reshape(k, m, m)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (k,) or not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("component weights must sum to 1")
        if not np.allclose(self.covs, np.swapaxes(self.covs, 1, 2)):
            raise ValueError("covariances must be symmetric")
        self._precisions = np.linalg.inv(self.covs)
        dets = np.linalg.det(self.covs)
        if np.any(dets <= 0):
            raise ValueError("covariances must be positive definite")
        self._norms = 1.0 / np.sqrt((2.0 * np.pi) ** m * dets)

    @classmethod
    def gaussian(cls, mean, cov) -> "AnalyticTarget":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        return cls(mean[None, :], cov[None, :, :], [1.0])

    @classmethod
    def standard_normal(cls, m: int) -> "AnalyticTarget":
        return cls.gaussian(np.zeros(m), np.eye(m))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _component_densities(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        diff = xs[:, None, :] - self.means[None, :, :]  # (n, k, m)
        quad = np.einsum("nkm,kml,nkl->nk", diff, self._precisions, diff)
        return np.exp(-0.5 * quad) * self._norms, diff

    def density(self, xs) -> np.ndarray:
        comp, _ = self._component_densities(xs)
        return comp @ self.weights

    def log_density(self, xs) -> np.ndarray:
        return np.log(self.density(xs))

    def score(self, xs) -> np.ndarray:
        """grad log p, shape (n, m)."""
        comp, diff = self._component_densities(xs)
        weighted = comp * self.weights  # (n, k)
        # grad of each component: -Sigma^{-1} (x - mu) times the component mass
        grads = -np.einsum("kml,nkl->nkm", self._precisions, diff)
        num = np.einsum("nk,nkm->nm", weighted, grads)
        return num / (weighted.sum(axis=1))[:, None]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        which = rng.choice(len(self.weights), size=n, p=self.weights)
        chols = np.linalg.cholesky(self.covs)
        eps = rng.standard_normal((n, self.dim))
        return self.means[which] + np.einsum("nml,nl->nm", chols[which], eps)


def eight_gaussians_target(sigma: float = 0.2) -> AnalyticTarget:
    """The analytic mixture matched to the 8gaussians sampler (for oracles)."""
    angles = 2.0 * np.pi * np.arange(8) / 8
    means = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    covs = np.repeat((sigma**2 * np.eye(2))[None], 8, axis=0)
    return AnalyticTarget(means, covs, np.full(8, 1.0 / 8.0))


def analytic_target_for(name: str, noise: float | None = None) -> AnalyticTarget | None:
    """Closed-form mixture for datasets that have one, else None."""
    sigma = 0.2 if noise is None else noise
    if name == "8gaussians":
        return eight_gaussians_target(sigma)
    if name in ("small4gaussians", "large4gaussians"):
        radius = 1.0 if name == "small4gaussians" else 3.0
        angles = np.pi / 4 + 2.0 * np.pi * np.arange(4) / 4
        means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        covs = np.repeat((sigma**2 * np.eye(2))[None], 4, axis=0)
        return AnalyticTarget(means, covs, np.full(4, 0.25))
    return None
