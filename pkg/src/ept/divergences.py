"""Energy functionals and the velocity fields they induce.

An f-divergence between the particle law q and the target p yields the
velocity v(x) = -f''(r(x)) * grad r(x) with r = q/p; the squared L2 norm of
the density difference d = q - p yields v(x) = -2 * grad d(x).  Velocities
are evaluated from any scalar field exposing ``values_and_input_grads``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

RATIO_CLAMP = (1e-3, 1e3)


@dataclass(frozen=True)
class FDivergence:
    """A convex f with f(1) = 0 plus its first two derivatives."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[np.ndarray], np.ndarray]
    f_double_prime: Callable[[np.ndarray], np.ndarray]


def _chi2():
    return FDivergence(
        "chi2",
        f=lambda u: 0.5 * (u - 1.0) ** 2,
        f_prime=lambda u: u - 1.0,
        f_double_prime=lambda u: np.ones_like(np.asarray(u, dtype=np.float64)),
    )


def _kl():
    return FDivergence(
        "kl",
        f=lambda u: u * np.log(u),
        f_prime=lambda u: np.log(u) + 1.0,
        f_double_prime=lambda u: 1.0 / u,
    )


def _js():
    return FDivergence(
        "js",
        f=lambda u: u * np.log(u) - (1.0 + u) * np.log((1.0 + u) / 2.0),
        f_prime=lambda u: np.log(u) - np.log((1.0 + u) / 2.0),
        f_double_prime=lambda u: 1.0 / (u * (1.0 + u)),
    )


def _logd():
    # Convex orientation: u log u - (1+u) log(1+u) + 2 log 2, so f(1) = 0 and
    # f'' = 1/(u(1+u)) > 0.  Differs from "js" only by a term linear in u,
    # which induces the same divergence and the same velocity field.
    return FDivergence(
        "logd",
        f=lambda u: u * np.log(u) - (1.0 + u) * np.log(1.0 + u) + 2.0 * np.log(2.0),
        f_prime=lambda u: np.log(u) - np.log(1.0 + u),
        f_double_prime=lambda u: 1.0 / (u * (1.0 + u)),
    )


_CATALOG = {"chi2": _chi2, "kl": _kl, "js": _js, "logd": _logd}

F_DIVERGENCE_NAMES = tuple(sorted(_CATALOG))
ENERGY_NAMES = F_DIVERGENCE_NAMES + ("l2",)


def make_f_divergence(name: str) -> FDivergence:
    try:
        return _CATALOG[name]()
    except KeyError:
        raise ValueError(f"unknown f-divergence {name!r}; known: {F_DIVERGENCE_NAMES}") from None


@dataclass(frozen=True)
class EnergyFunctional:
    """Either an f-divergence or the squared L2 density difference."""

    divergence: FDivergence | None = None  # None selects the L2 difference

    @property
    def kind(self) -> str:
        return "l2-difference" if self.divergence is None else "f-divergence"

    @property
    def name(self) -> str:
        return "l2" if self.divergence is None else self.divergence.name

    def velocity_field(self, scalar_field, provenance: str = "estimated") -> "VelocityField":
        """Bind a fitted scalar field into the induced velocity field."""
        if self.divergence is None:
            fn = lambda xs: velocity_from_difference(scalar_field, xs)
        else:
            fn = lambda xs: velocity_from_ratio(self.divergence, scalar_field, xs)
        return VelocityField(fn, provenance=provenance)


def make_energy(name: str) -> EnergyFunctional:
    if name == "l2":
        return EnergyFunctional(None)
    return EnergyFunctional(make_f_divergence(name))


@dataclass
class VelocityField:
    """Batch map (n, m) -> (n, m) with a provenance tag."""

    fn: Callable[[np.ndarray], np.ndarray]
    provenance: str = "estimated"  # estimated | oracle | kernel-baseline

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        out = np.asarray(self.fn(xs), dtype=np.float64)
        if out.shape != xs.shape:
            raise ValueError(f"velocity shape {out.shape} != input shape {xs.shape}")
        return out


def clamp_ratio(values: np.ndarray, lo: float = RATIO_CLAMP[0], hi: float = RATIO_CLAMP[1]) -> np.ndarray:
    """Clamp ratio estimates into the domain where f'' stays finite."""
    clipped = np.clip(values, lo, hi)
    n_hit = int(np.count_nonzero(clipped != values))
    if n_hit:
        logger.debug("ratio clamp engaged at %d of %d points", n_hit, values.size)
    return clipped


def velocity_rows(div: FDivergence, values: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """v_i = -f''(R(x_i)) * grad R(x_i) from precomputed field values/gradients."""
    if div.name == "chi2":
        return -grads
    weights = div.f_double_prime(clamp_ratio(values))
    return -weights[:, None] * grads


def velocity_from_ratio(div: FDivergence, scalar_field, xs: np.ndarray) -> np.ndarray:
    """Velocity of the f-divergence flow at ``xs`` under the ratio estimate.

    ``scalar_field`` must expose ``values_and_input_grads(xs) -> (values (n,),
    gradients (n, m))``.
    """
    values, grads = scalar_field.values_and_input_grads(xs)
    return velocity_rows(div, np.asarray(values), np.asarray(grads))


def velocity_from_difference(scalar_field, xs: np.ndarray) -> np.ndarray:
    """Velocity of the L2 density-difference flow: -2 * grad D(x)."""
    _, grads = scalar_field.values_and_input_grads(xs)
    return -2.0 * np.asarray(grads)
