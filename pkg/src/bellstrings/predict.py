"""Closed-form predictions for coincidence rates, string counts and noise bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SQRT2_2, Convention, ParameterError, StringsDistribution


@dataclass(frozen=True)
class CoincidenceProbabilities:
    p_pp: float
    p_mm: float
    p_pm: float
    p_mp: float

    @property
    def odd(self) -> float:
        return self.p_pm + self.p_mp

    @property
    def even(self) -> float:
        return self.p_pp + self.p_mm

    def as_dict(self) -> dict[str, float]:
        return {"p_pp": self.p_pp, "p_mm": self.p_mm, "p_pm": self.p_pm, "p_mp": self.p_mp}


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ParameterError(f"angle must be finite, got {v}")


def coincidence_probabilities(alpha: float, beta: float) -> CoincidenceProbabilities:
    """Joint outcome probabilities for the symmetric Bell state (angles in radians)."""
    _finite(alpha, beta)
    c2 = math.cos(alpha - beta) ** 2
    s2 = 1.0 - c2
    return CoincidenceProbabilities(0.5 * c2, 0.5 * c2, 0.5 * s2, 0.5 * s2)


def odd_probability(alpha: float, beta: float) -> float:
    """phi, the probability of an odd coincidence."""
    return coincidence_probabilities(alpha, beta).odd


def phi_from_angle_deg(delta_deg: float) -> float:
    return odd_probability(0.0, math.radians(delta_deg))


def angle_deg_from_phi(phi: float) -> float:
    """|alpha - beta| in degrees (0..90) for a given odd probability."""
    if not 0.0 <= phi <= 1.0:
        raise ParameterError(f"phi must be in [0, 1], got {phi}")
    return math.degrees(math.asin(math.sqrt(phi)))


def _check_phi_open(phi: float) -> None:
    if not 0.0 < phi < 1.0:
        raise ParameterError(
            f"phi={phi}: the string distribution is only defined for 0 < phi < 1 "
            "(phi = 0 or 1 is the deterministic regime)"
        )


def k_max(m: float, phi: float) -> float:
    """Length at which the expected string count drops to one."""
    _check_phi_open(phi)
    if m * phi * phi <= 1.0:
        raise ParameterError(f"m*phi^2 = {m * phi * phi:g} <= 1: no string expected even once")
    return -math.log(m * phi * phi) / math.log1p(-phi)


def default_k_range(m: float, phi: float) -> tuple[int, int]:
    try:
        return 0, int(math.ceil(3.0 * k_max(m, phi)))
    except ParameterError:
        # fewer than one k=0 string expected; still show a few bins
        return 0, max(1, int(math.ceil(3.0 / phi)))


def expected_strings(
    m: float,
    phi: float,
    k_range: tuple[int, int] | None = None,
    convention: Convention = Convention.EvenRuns,
) -> StringsDistribution:
    """Expected number of strings of each length for i.i.d. outcomes.

    ``phi`` is the interrupter probability: the odd probability for even
    runs. ``k_range`` is inclusive and defaults to ``[0, ceil(3 k_max)]``.
    """
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    _check_phi_open(phi)
    lo, hi = k_range if k_range is not None else default_k_range(m, phi)
    if lo < 0 or hi < lo:
        raise ParameterError(f"bad k range ({lo}, {hi})")
    k = np.arange(lo, hi + 1, dtype=float)
    counts = m * phi * phi * np.exp(k * math.log1p(-phi))
    return StringsDistribution(counts, convention, int(m), None, lo)


def expected_tail(m: float, phi: float, k_from: int) -> float:
    """Expected number of strings with length >= ``k_from`` (closed-form geometric tail)."""
    _check_phi_open(phi)
    return m * phi * math.exp(k_from * math.log1p(-phi))


def expected_total_strings(m: float, phi: float) -> float:
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if not 0.0 <= phi <= 1.0:
        raise ParameterError(f"phi must be in [0, 1], got {phi}")
    return m * phi


def s_from_visibility(n_max: float, n_min: float) -> float:
    """S parameter from the visibility of a sinusoidal coincidence curve."""
    if n_max + n_min <= 0:
        raise ParameterError("n_max + n_min must be positive")
    if n_min < 0 or n_max < n_min:
        raise ParameterError(f"need n_max >= n_min >= 0, got n_max={n_max}, n_min={n_min}")
    return SQRT2_2 * (n_max - n_min) / (n_max + n_min)


def epsilon_from_s(s_real: float) -> float:
    if not 0.0 <= s_real <= SQRT2_2 * (1 + 1e-12):
        raise ParameterError(f"s_real must be in [0, 2*sqrt(2)], got {s_real}")
    return max(0.0, 1.0 - s_real / SQRT2_2)


def phi_lower_entanglement(s_real: float) -> float:
    """Raw lower bound on phi from imperfect entanglement: half the deficit epsilon."""
    return 0.5 * epsilon_from_s(s_real)


def phi_lower_noise(r_dark: float, r_coinc: float, t_w: float) -> float:
    """Raw lower bound on phi from accidental (dark-count) coincidences."""
    if r_dark < 0:
        raise ParameterError("r_dark must be >= 0")
    if r_coinc <= 0:
        raise ParameterError("r_coinc must be > 0")
    if t_w <= 0:
        raise ParameterError("t_w must be > 0")
    return 0.5 * r_dark * r_dark * t_w / r_coinc
