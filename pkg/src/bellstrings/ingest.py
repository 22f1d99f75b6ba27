"""Time-tagged detection records to coincidence series.

Time-tag files are UTF-8 text, one event per line as
``timestamp_ps<TAB>channel`` with channel one of ``A+ A- B+ B-``.
Lines starting with ``#`` are headers; ``# key=value`` entries become run
metadata (``duration_ps`` is used for rates when present). Timestamps must
not decrease.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numba
import numpy as np

from .core import (
    CoincidenceSeries,
    DataFormatError,
    Gate,
    InsufficientDataError,
    ParameterError,
)
from .predict import epsilon_from_s, s_from_visibility

PS_PER_S = 1e12


class Channel(enum.Enum):
    APlus = "A+"
    AMinus = "A-"
    BPlus = "B+"
    BMinus = "B-"

    @property
    def station(self) -> str:
        return self.value[0]

    @property
    def gate(self) -> Gate:
        return Gate.Plus if self.value[1] == "+" else Gate.Minus

    @classmethod
    def parse(cls, token: str) -> "Channel":
        try:
            return cls(token)
        except ValueError:
            pass
        try:
            return cls[token]
        except KeyError:
            raise ValueError(token) from None


CHANNELS = tuple(Channel)


@dataclass(frozen=True)
class DetectionEvent:
    timestamp: int
    channel: Channel


@dataclass
class TimeTagStreams:
    """Per-channel sorted timestamp arrays (int64 picoseconds)."""

    events: dict[Channel, np.ndarray] = field(default_factory=lambda: {c: np.zeros(0, np.int64) for c in CHANNELS})
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(sum(a.size for a in self.events.values()))

    def counts(self) -> dict[str, int]:
        return {c.value: int(self.events[c].size) for c in CHANNELS}

    def span_ps(self) -> int:
        if "duration_ps" in self.metadata:
            return int(float(self.metadata["duration_ps"]))
        nonempty = [a for a in self.events.values() if a.size]
        if not nonempty:
            return 0
        lo = min(int(a[0]) for a in nonempty)
        hi = max(int(a[-1]) for a in nonempty)
        return max(hi - lo, 1)

    def station(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Merged timestamps and gate labels of one station, time-ordered."""
        plus = self.events[Channel(name + "+")]
        minus = self.events[Channel(name + "-")]
        t = np.concatenate([plus, minus])
        g = np.concatenate([np.zeros(plus.size, np.uint8), np.ones(minus.size, np.uint8)])
        order = np.lexsort((g, t))
        return t[order], g[order]

    def iter_events(self) -> Iterable[DetectionEvent]:
        t = np.concatenate([self.events[c] for c in CHANNELS])
        ch = np.concatenate([np.full(self.events[c].size, i, np.int8) for i, c in enumerate(CHANNELS)])
        for i in np.lexsort((ch, t)):
            yield DetectionEvent(int(t[i]), CHANNELS[ch[i]])


_META = re.compile(r"^#\s*([A-Za-z_][\w.-]*)\s*=\s*(.*?)\s*$")


def parse_timetags(path: str | Path) -> TimeTagStreams:
    """Stream-parse a time-tag file; errors name the offending line."""
    buckets: dict[Channel, list[int]] = {c: [] for c in CHANNELS}
    meta: dict[str, str] = {}
    last = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                hit = _META.match(line)
                if hit:
                    meta[hit.group(1)] = hit.group(2)
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataFormatError(f"expected 'timestamp<TAB>channel', got {line!r}", line=lineno)
            try:
                ts = int(parts[0])
            except ValueError:
                raise DataFormatError(f"bad timestamp {parts[0]!r}", line=lineno) from None
            try:
                ch = Channel.parse(parts[1].strip())
            except ValueError:
                raise DataFormatError(f"unknown channel {parts[1]!r}", line=lineno) from None
            if last is not None and ts < last:
                raise DataFormatError(f"timestamp {ts} precedes previous {last} (unsorted)", line=lineno)
            last = ts
            buckets[ch].append(ts)
    return TimeTagStreams({c: np.array(v, dtype=np.int64) for c, v in buckets.items()}, meta)


def write_timetags(streams: TimeTagStreams, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(streams.metadata):
            fh.write(f"# {key}={streams.metadata[key]}\n")
        for ev in streams.iter_events():
            fh.write(f"{ev.timestamp}\t{ev.channel.value}\n")


_DURATION = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(ps|ns|us|µs|ms|s)?\s*$")
_UNIT = {"ps": 1e-12, "ns": 1e-9, "us": 1e-6, "µs": 1e-6, "ms": 1e-3, "s": 1.0, None: 1.0}


def parse_duration(text: str | float) -> float:
    """``'2ns'`` -> 2e-9 seconds; bare numbers are seconds."""
    if isinstance(text, (int, float)):
        return float(text)
    hit = _DURATION.match(text)
    if not hit:
        raise ParameterError(f"cannot parse duration {text!r} (try e.g. '2ns')")
    return float(hit.group(1)) * _UNIT[hit.group(2)]


@numba.njit(cache=True)
def _pair_kernel(ta, tb, tw):
    na, nb = ta.size, tb.size
    used = np.zeros(nb, np.bool_)
    ia = np.empty(min(na, nb), np.int64)
    ib = np.empty(min(na, nb), np.int64)
    n = 0
    j = 0
    for i in range(na):
        t = ta[i]
        while j < nb and (used[j] or tb[j] < t - tw):
            j += 1
        best = -1
        bestd = 0
        k = j
        while k < nb and tb[k] <= t + tw:
            if not used[k]:
                d = abs(tb[k] - t)
                if best < 0 or d < bestd:
                    best = k
                    bestd = d
            k += 1
        if best >= 0:
            used[best] = True
            ia[n] = i
            ib[n] = best
            n += 1
    return ia[:n], ib[:n]


@dataclass(frozen=True)
class RatesReport:
    n_coincidences: int
    duration_s: float
    r_coinc: float
    singles: dict[str, float]
    t_w: float
    r_dark: float | None = None
    accidental_rate: float | None = None
    accidental_odd_rate: float | None = None
    r_coinc_true: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_coincidences": self.n_coincidences, "duration_s": self.duration_s,
            "r_coinc": self.r_coinc, "singles": dict(self.singles), "t_w": self.t_w,
            "r_dark": self.r_dark, "accidental_rate": self.accidental_rate,
            "accidental_odd_rate": self.accidental_odd_rate, "r_coinc_true": self.r_coinc_true,
        }


def pair_coincidences(
    streams: TimeTagStreams, t_w: float, r_dark: float | None = None
) -> tuple[CoincidenceSeries, RatesReport]:
    """Pair A and B detections closer than ``t_w`` seconds.

    A events are taken in time order; each pairs with the nearest unused B
    event within the window (ties go to the earlier B). Every event is used
    at most once. Coincidences are ordered by their A timestamp.
    """
    if not t_w > 0:
        raise ParameterError(f"t_w must be > 0, got {t_w}")
    tw_ps = int(round(t_w * PS_PER_S))
    ta, ga = streams.station("A")
    tb, gb = streams.station("B")
    ia, ib = _pair_kernel(ta, tb, tw_ps)
    codes = (ga[ia] << 1) | gb[ib]
    span = streams.span_ps() / PS_PER_S
    n = int(ia.size)
    singles = {c.value: (streams.events[c].size / span if span > 0 else 0.0) for c in CHANNELS}
    r_coinc = n / span if span > 0 else 0.0
    extra: dict[str, float] = {}
    if r_dark is not None:
        acc = r_dark * r_dark * t_w
        extra = {"r_dark": float(r_dark), "accidental_rate": acc, "accidental_odd_rate": 0.5 * acc,
                 "r_coinc_true": r_coinc - acc}
    report = RatesReport(n, span, r_coinc, singles, float(t_w), **extra)
    series = CoincidenceSeries(codes, {
        "generator": "ingested", "params": {"t_w": float(t_w), "m": n},
        "source_metadata": dict(streams.metadata),
    })
    return series, report


def synthesize_timetags(
    series: CoincidenceSeries,
    pair_rate: float = 5.0e4,
    t_w: float = 2e-9,
    jitter: float | None = None,
    seed: int = 0,
    dark_rate: float = 0.0,
    dead_time: float | None = None,
) -> TimeTagStreams:
    """Detection streams whose coincidences reproduce ``series``.

    Pair start times are Poisson-spaced (rate ``pair_rate``) after a dead
    time of ``4 t_w``; station B lags A by a uniform jitter in
    ``[-jitter, jitter]`` with ``jitter < t_w / 4``. ``dark_rate`` adds
    uncorrelated singles per channel.
    """
    if pair_rate <= 0 or t_w <= 0:
        raise ParameterError("pair_rate and t_w must be > 0")
    jitter = t_w / 8 if jitter is None else jitter
    if not 0 <= jitter < t_w / 4:
        raise ParameterError("jitter must be in [0, t_w/4)")
    dead = 4 * t_w if dead_time is None else dead_time
    rng = np.random.default_rng(seed)
    m = series.m
    gaps = dead + rng.exponential(1.0 / pair_rate, size=m)
    t0 = np.round(np.cumsum(gaps) * PS_PER_S).astype(np.int64)
    jit = np.round(rng.uniform(-jitter, jitter, size=m) * PS_PER_S).astype(np.int64)
    tb = t0 + jit
    ga = series.codes >> 1
    gb = series.codes & 1
    duration = int(max(t0[-1], tb[-1]) + round(dead * PS_PER_S)) if m else 0
    events = {
        Channel.APlus: t0[ga == 0], Channel.AMinus: t0[ga == 1],
        Channel.BPlus: tb[gb == 0], Channel.BMinus: tb[gb == 1],
    }
    if dark_rate > 0 and duration > 0:
        for c in CHANNELS:
            k = int(rng.poisson(dark_rate * duration / PS_PER_S))
            extra = rng.integers(0, duration, size=k, dtype=np.int64)
            events[c] = np.concatenate([events[c], extra])
    events = {c: np.sort(v, kind="stable") for c, v in events.items()}
    meta = {"duration_ps": str(duration), "pair_rate": repr(float(pair_rate)),
            "seed": str(int(seed)), "source": "synthetic"}
    return TimeTagStreams(events, meta)


@dataclass(frozen=True)
class VisibilityReport:
    s_real: float
    s_err: float
    epsilon: float
    n_max: float
    n_min: float

    def to_dict(self) -> dict[str, float]:
        return {"s_real": self.s_real, "s_err": self.s_err, "epsilon": self.epsilon,
                "n_max": self.n_max, "n_min": self.n_min}


def visibility_report(n_max: float | Sequence[float], n_min: float | Sequence[float]) -> VisibilityReport:
    """S from maximum/minimum coincidence counts, with Poisson error propagation.

    Pass one count or several (e.g. even counts at alpha = beta and odd
    counts at 90 degrees); each side is summed.
    """
    nmax = float(np.sum(n_max))
    nmin = float(np.sum(n_min))
    if np.size(n_max) < 1 or np.size(n_min) < 1:
        raise InsufficientDataError("need at least one max and one min count")
    if nmax + nmin <= 0:
        raise InsufficientDataError("zero total counts")
    s = s_from_visibility(nmax, nmin)
    tot = nmax + nmin
    err = math.sqrt(32.0 * nmax * nmin / tot**3)
    return VisibilityReport(s, err, epsilon_from_s(s), nmax, nmin)
