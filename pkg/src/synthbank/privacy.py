"""Privacy parameters, Gaussian noise calibration, and budget composition.

Noise scale follows the calibration used by the spanning-tree mechanism:

    sigma = (sqrt(ln(1/delta)) + sqrt(ln(1/delta) + epsilon)) / epsilon

applied per measurement after budgets are split. Composition across
measurements is basic (linear): budgets add up exactly, keeping the
accounting auditable; tighter accountants are out of scope. Noise
application takes an explicit seeded generator so runs are reproducible
and no mutable RNG is shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PrivacyError",
    "PrivacyParams",
    "NoisyMarginal",
    "gaussian_sigma",
    "add_gaussian_noise",
    "split_budget",
]


class PrivacyError(ValueError):
    """Invalid privacy parameters or budget arithmetic."""


@dataclass(frozen=True)
class PrivacyParams:
    """An (epsilon, delta) differential-privacy budget."""

    epsilon: float
    delta: float

    def __post_init__(self) -> None:
        if not (self.epsilon > 0):
            raise PrivacyError(f"epsilon must be positive, got {self.epsilon}")
        if not (0 < self.delta < 1):
            raise PrivacyError(f"delta must lie in (0, 1), got {self.delta}")

    def scaled(self, fraction: float) -> "PrivacyParams":
        return PrivacyParams(self.epsilon * fraction, self.delta * fraction)


@dataclass(frozen=True)
class NoisyMarginal:
    """A measured contingency table: real-valued counts plus the noise scale.

    ``sigma == 0`` marks the noiseless diagnostic mode. The table shape must
    equal the product of the attribute domain sizes; that is checked by the
    mechanism that owns the attribute metadata.
    """

    attrs: tuple[int, ...]
    counts: np.ndarray
    sigma: float

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise PrivacyError("sigma must be non-negative")
        counts = np.asarray(self.counts, dtype=np.float64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "attrs", tuple(self.attrs))


def gaussian_sigma(params: PrivacyParams) -> float:
    """Per-measurement Gaussian noise scale for the given budget."""
    log_term = math.log(1.0 / params.delta)
    return (math.sqrt(log_term) + math.sqrt(log_term + params.epsilon)) / params.epsilon


def add_gaussian_noise(attrs, counts, sigma: float, rng: np.random.Generator) -> NoisyMarginal:
    """Independent N(0, sigma^2) noise on every cell of an exact marginal.

    sigma == 0 returns the counts unchanged; a fixed generator state yields
    identical output. Noisy counts are deliberately not clipped here, so the
    measurement stays unbiased; non-negativity is enforced at model fitting.
    """
    if sigma < 0:
        raise PrivacyError("sigma must be non-negative")
    counts = np.asarray(counts, dtype=np.float64)
    if sigma == 0:
        noisy = counts.copy()
    else:
        noisy = counts + rng.normal(0.0, sigma, size=counts.shape)
    return NoisyMarginal(attrs=tuple(attrs), counts=noisy, sigma=float(sigma))


def split_budget(
    params: PrivacyParams, m: int, selection_fraction: float
) -> tuple[PrivacyParams | None, PrivacyParams]:
    """Divide a budget between a selection phase and m equal measurements.

    Selection receives ``(eps*f, delta*f)``; the remainder is divided
    equally across the ``m`` measurements by basic composition. With
    ``f == 0`` there is no selection budget and ``None`` is returned for it.
    Component budgets sum exactly to the input budget by construction.
    """
    if m < 1:
        raise PrivacyError(f"measurement count must be >= 1, got {m}")
    if not (0 <= selection_fraction < 1):
        raise PrivacyError(
            f"selection fraction must lie in [0, 1), got {selection_fraction}"
        )
    selection = None
    if selection_fraction > 0:
        selection = params.scaled(selection_fraction)
    remainder = 1.0 - selection_fraction
    per_measurement = PrivacyParams(
        params.epsilon * remainder / m, params.delta * remainder / m
    )
    return selection, per_measurement
