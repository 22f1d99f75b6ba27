"""Series-level noise: accidental dark-count coincidences and imperfect entanglement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CoincidenceSeries, ParameterError, odd_mask
from .predict import epsilon_from_s


@dataclass(frozen=True)
class NoiseParams:
    r_dark: float = 0.0
    t_w: float = 10e-9
    r_coinc: float = 5.0e4
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if self.r_dark < 0:
            raise ParameterError("r_dark must be >= 0")
        if self.t_w <= 0:
            raise ParameterError("t_w must be > 0")
        if self.r_coinc <= 0:
            raise ParameterError("r_coinc must be > 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ParameterError(f"epsilon must be in [0, 1], got {self.epsilon}")

    @classmethod
    def from_s_real(cls, s_real: float, **kw) -> "NoiseParams":
        return cls(epsilon=epsilon_from_s(s_real), **kw)

    @property
    def accidentals_per_coincidence(self) -> float:
        return self.r_dark * self.r_dark * self.t_w / self.r_coinc


def _history(series: CoincidenceSeries, entry: dict) -> list:
    return list(series.meta.get("history", [])) + [entry]


def inject_dark_coincidences(series: CoincidenceSeries, noise: NoiseParams, seed: int = 0) -> CoincidenceSeries:
    """Insert accidental coincidences at uniformly random positions.

    The number inserted is Poisson with mean ``m * r_dark^2 t_w / r_coinc``;
    each accidental is one of the four outcomes with equal probability.
    """
    mean = series.m * noise.accidentals_per_coincidence
    if mean == 0.0:
        return series
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(mean))
    slots = np.sort(rng.integers(0, series.m + 1, size=n))
    values = rng.integers(0, 4, size=n, dtype=np.uint8)
    codes = np.insert(series.codes, slots, values)
    return series.with_codes(codes, history=_history(series, {
        "op": "dark_coincidences", "inserted": n, "expected": mean, "seed": int(seed),
        "r_dark": noise.r_dark, "t_w": noise.t_w, "r_coinc": noise.r_coinc,
    }))


def apply_entanglement_imperfection(series: CoincidenceSeries, epsilon: float, seed: int = 0) -> CoincidenceSeries:
    """Flip each even outcome to a random odd one with probability ``epsilon / 2``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon == 0.0:
        return series
    rng = np.random.default_rng(seed)
    codes = series.codes
    flip = (rng.random(series.m) < 0.5 * epsilon) & ~odd_mask(codes)
    new = codes.copy()
    # odd outcomes are codes 1 (+,-) and 2 (-,+)
    new[flip] = 1 + rng.integers(0, 2, size=int(flip.sum()), dtype=np.uint8)
    return series.with_codes(new, history=_history(series, {
        "op": "entanglement", "epsilon": float(epsilon), "flipped": int(flip.sum()), "seed": int(seed),
    }))


def corrupt(series: CoincidenceSeries, noise: NoiseParams, seed: int = 0) -> CoincidenceSeries:
    """Entanglement background then dark accidentals, with independent sub-seeds."""
    from .simulate import child_seed

    out = apply_entanglement_imperfection(series, noise.epsilon, child_seed(seed, 1))
    return inject_dark_coincidences(out, noise, child_seed(seed, 2))
