"""Extraction of string-length histograms from a coincidence series."""

from __future__ import annotations

import numpy as np

from .core import CoincidenceSeries, Convention, InsufficientDataError, StringsDistribution

AUTO = "auto"


def resolve_convention(series: CoincidenceSeries, convention: str | Convention = AUTO) -> Convention:
    """``auto`` picks odd runs only when odd outcomes are the strict majority."""
    if isinstance(convention, Convention):
        return convention
    if convention == AUTO:
        return Convention.OddRuns if 2 * series.odd_count > series.m else Convention.EvenRuns
    return Convention(convention)


def run_lengths(interrupters: np.ndarray) -> tuple[np.ndarray, int]:
    """Lengths of the runs closed by each ``True`` entry, and the trailing run length."""
    idx = np.flatnonzero(interrupters)
    n = interrupters.size
    if idx.size == 0:
        return np.zeros(0, dtype=np.int64), n
    prev = np.empty_like(idx)
    prev[0] = -1
    prev[1:] = idx[:-1]
    return idx - prev - 1, int(n - 1 - idx[-1])


def extract_strings(
    series: CoincidenceSeries, convention: str | Convention = AUTO
) -> StringsDistribution:
    """Histogram of run lengths, one string per interrupting outcome.

    With even runs a string is a maximal run of even outcomes closed by an
    odd one; adjacent odd outcomes give a ``k = 0`` string. The run after
    the last interrupter has no terminator and is reported only as
    ``trailing_run``.
    """
    if series.m == 0:
        raise InsufficientDataError("cannot extract strings from an empty series")
    conv = resolve_convention(series, convention)
    odd = series.odd
    interrupters = odd if conv is Convention.EvenRuns else ~odd
    lengths, trailing = run_lengths(interrupters)
    counts = np.bincount(lengths) if lengths.size else np.zeros(0, dtype=np.int64)
    return StringsDistribution(counts.astype(np.int64), conv, series.m, trailing)
