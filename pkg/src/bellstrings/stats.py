"""Goodness-of-fit of string histograms against the i.i.d. prediction, and
the efficiency-dependent upper limit on useful phi.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats as sps

from .core import (
    CoincidenceSeries,
    Convention,
    InsufficientDataError,
    ParameterError,
    StringsDistribution,
)
from .predict import angle_deg_from_phi
from .simulate import WqmConfig, WqmEngine, child_seed
from .strings import extract_strings

MIN_EXPECTED = 5.0


class Verdict(enum.Enum):
    Distinguishable = "distinguishable"
    Indistinguishable = "indistinguishable"


@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    p_value: float
    pooled_bins: int
    verdict: Verdict
    significance: float
    phi: float
    phi_fitted: bool = False

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"


def _check_significance(significance: float) -> None:
    if not 0.0 < significance < 0.5:
        raise ParameterError(f"significance must be in (0, 0.5), got {significance}")


def _interrupter_probability(phi: float, convention: Convention) -> float:
    return phi if convention is Convention.EvenRuns else 1.0 - phi


def _pool_geometric(observed: np.ndarray, m: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Observed/expected bins with every expected count >= 5.

    Bins run over ``k = 0, 1, ...`` while the geometric expectation stays
    >= 5; everything beyond, including the unobserved infinite tail, is one
    pooled bin. A pooled tail still below 5 is merged into its neighbour.
    """
    log1mq = math.log1p(-q)
    base = m * q * q
    # expected counts are decreasing in k; first k with expectation < 5
    if base < MIN_EXPECTED:
        cut = 0
    else:
        cut = int(math.floor(math.log(MIN_EXPECTED / base) / log1mq)) + 1
    k = np.arange(cut)
    exp = base * np.exp(k * log1mq)
    obs = np.zeros(cut)
    n = min(cut, observed.size)
    obs[:n] = observed[:n]
    tail_exp = m * q * math.exp(cut * log1mq)
    tail_obs = float(observed[cut:].sum()) if observed.size > cut else 0.0
    exp = np.append(exp, tail_exp)
    obs = np.append(obs, tail_obs)
    if exp[-1] < MIN_EXPECTED and exp.size > 1:
        exp[-2] += exp[-1]
        obs[-2] += obs[-1]
        exp, obs = exp[:-1], obs[:-1]
    return obs, exp


def gof_against_nk(
    distribution: StringsDistribution,
    m: int | None = None,
    phi: float | None = None,
    significance: float = 0.01,
    fit_phi: bool = False,
) -> GofResult:
    """Pearson chi-square of an empirical histogram against ``m phi^2 (1-phi)^k``.

    ``phi`` is the odd-outcome probability; for odd-run histograms the
    interrupter probability ``1 - phi`` is used, so relabelling even and odd
    together with the convention leaves the statistic unchanged. With
    ``fit_phi`` the interrupter probability is estimated from the histogram
    (strings per element) and one degree of freedom is removed.
    """
    _check_significance(significance)
    if distribution.k_min != 0 or distribution.counts.dtype.kind not in "iu":
        raise ParameterError("gof needs an empirical histogram starting at k = 0")
    if distribution.n_strings == 0:
        raise InsufficientDataError("insufficient data: histogram has no strings")
    m = distribution.total_elements if m is None else int(m)
    conv = distribution.convention
    if fit_phi:
        q = distribution.n_strings / m
        phi_used = q if conv is Convention.EvenRuns else 1.0 - q
    else:
        if phi is None:
            raise ParameterError("phi is required unless fit_phi=True")
        phi_used = float(phi)
        q = _interrupter_probability(phi_used, conv)
    if not 0.0 < q < 1.0:
        raise ParameterError(f"interrupter probability must be in (0, 1), got {q}")
    obs, exp = _pool_geometric(np.asarray(distribution.counts, dtype=float), m, q)
    bins = obs.size
    dof = bins - 1 - (1 if fit_phi else 0)
    if bins < 2 or dof < 1:
        raise InsufficientDataError(f"insufficient data: {bins} bin(s) after pooling")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    p = float(sps.chi2.sf(stat, dof))
    verdict = Verdict.Distinguishable if p < significance else Verdict.Indistinguishable
    return GofResult(stat, dof, p, bins, verdict, significance, phi_used, fit_phi)


def gof_two_sample(
    first: StringsDistribution, second: StringsDistribution, significance: float = 0.01
) -> GofResult:
    """Chi-square homogeneity test between two empirical histograms.

    Bins are pooled from the tail until every expected count (under the
    pooled distribution) is >= 5 in both rows. ``phi`` in the result is the
    pooled interrupter rate.
    """
    _check_significance(significance)
    if first.convention != second.convention:
        raise ParameterError("histograms must share a convention")
    n = max(first.counts.size, second.counts.size)
    table = np.zeros((2, n))
    table[0, : first.counts.size] = first.counts
    table[1, : second.counts.size] = second.counts
    totals = table.sum(axis=1)
    if np.any(totals == 0):
        raise InsufficientDataError("insufficient data: an empty histogram")
    share = totals / totals.sum()
    col = table.sum(axis=0)
    # pool from the right until each column's smaller expectation is >= 5
    bins: list[np.ndarray] = []
    acc = np.zeros(2)
    for j in range(n - 1, -1, -1):
        acc = acc + table[:, j]
        if acc.sum() * share.min() >= MIN_EXPECTED:
            bins.append(acc)
            acc = np.zeros(2)
    if acc.sum() > 0:
        if bins:
            bins[-1] = bins[-1] + acc
        else:
            bins.append(acc)
    pooled = np.array(bins[::-1]).T
    k = pooled.shape[1]
    if k < 2:
        raise InsufficientDataError(f"insufficient data: {k} bin(s) after pooling")
    expected = np.outer(share, pooled.sum(axis=0))
    stat = float(np.sum((pooled - expected) ** 2 / expected))
    dof = k - 1
    p = float(sps.chi2.sf(stat, dof))
    verdict = Verdict.Distinguishable if p < significance else Verdict.Indistinguishable
    rate = float(col.sum() / (first.total_elements + second.total_elements))
    return GofResult(stat, dof, p, k, verdict, significance, rate, True)


@dataclass(frozen=True)
class PhiEstimate:
    phi_hat: float
    stderr: float
    m: int

    def interval(self, n_sigma: float = 3.0) -> tuple[float, float]:
        return self.phi_hat - n_sigma * self.stderr, self.phi_hat + n_sigma * self.stderr


def estimate_phi_from_series(series: CoincidenceSeries) -> PhiEstimate:
    if series.m < 100:
        raise InsufficientDataError(f"need at least 100 outcomes, got {series.m}")
    phi = series.odd_count / series.m
    return PhiEstimate(phi, math.sqrt(phi * (1.0 - phi) / series.m), series.m)


# -- phi_high -----------------------------------------------------------

def _rejects(args: tuple) -> bool:
    phi, eta, m, config, significance, seed = args
    delta = math.asin(math.sqrt(phi))
    engine = WqmEngine(0.0, delta, config, eta, seed)
    series = CoincidenceSeries(engine.run(m), {"generator": "wqm"})
    dist = extract_strings(series, "auto")
    try:
        res = gof_against_nk(dist, m, phi, significance)
    except InsufficientDataError:
        return False
    return res.verdict is Verdict.Distinguishable


def reject_fraction(
    phi: float,
    eta: float,
    m: int,
    config: WqmConfig | None = None,
    significance: float = 0.01,
    trials: int = 50,
    seed: int = 0,
    jobs: int = 1,
) -> float:
    """Fraction of seeded WQM runs whose histogram is distinguishable from n(k).

    Trial ``i`` uses the same seed at every ``phi`` (common random numbers),
    which keeps the fraction smooth in ``phi``.
    """
    config = config or WqmConfig()
    tasks = [(phi, eta, m, config, significance, child_seed(seed, i)) for i in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            hits = list(pool.map(_rejects, tasks))
    else:
        hits = [_rejects(t) for t in tasks]
    return sum(hits) / trials


@dataclass
class PhiHighResult:
    phi_high: float | None
    eta: float
    m: int
    significance: float
    power: float
    trials: int
    sweep: list[tuple[float, float]] = field(default_factory=list)

    def sweep_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phi", "reject_fraction"])
        for phi, frac in sorted(self.sweep):
            w.writerow([repr(phi), repr(frac)])
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        return {
            "phi_high": self.phi_high,
            "angle_high_deg": None if self.phi_high is None else angle_deg_from_phi(self.phi_high),
            "eta": self.eta, "m": self.m, "significance": self.significance,
            "power": self.power, "trials": self.trials,
            "sweep": [list(x) for x in sorted(self.sweep)],
        }


def estimate_phi_high(
    eta: float,
    m: int,
    wqm_config: WqmConfig | None = None,
    significance: float = 0.01,
    power: float = 0.9,
    seed: int = 0,
    trials: int = 50,
    phi_range: tuple[float, float] = (1e-3, 0.5),
    resolution: float = 0.005,
    jobs: int = 1,
    fraction: Callable[[float], float] | None = None,
) -> PhiHighResult:
    """Largest phi at which WQM stays distinguishable from n(k) with the given power.

    Bisection assumes the reject fraction is non-increasing in phi. If the
    upper end already reaches ``power`` it is returned; if the lower end
    does not, ``phi_high`` is ``None``. ``fraction`` overrides the Monte Carlo
    estimator (used by tests).
    """
    if not 0.0 < eta <= 1.0:
        raise ParameterError(f"eta must be in (0, 1], got {eta}")
    if not 0.5 < power < 1.0:
        raise ParameterError(f"power must be in (0.5, 1), got {power}")
    _check_significance(significance)
    if fraction is None:
        def fraction(phi: float) -> float:
            return reject_fraction(phi, eta, m, wqm_config, significance, trials, seed, jobs)

    result = PhiHighResult(None, eta, m, significance, power, trials)

    def probe(phi: float) -> bool:
        f = fraction(phi)
        result.sweep.append((phi, f))
        return f >= power

    lo, hi = phi_range
    if probe(hi):
        result.phi_high = hi
        return result
    if not probe(lo):
        return result
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    result.phi_high = lo
    return result
