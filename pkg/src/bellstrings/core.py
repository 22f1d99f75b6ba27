"""Domain types shared by every module.

A coincidence outcome is stored as a 2-bit code ``(gate_a << 1) | gate_b``
with ``Plus = 0`` and ``Minus = 1``, so ``0 = (+,+)``, ``1 = (+,-)``,
``2 = (-,+)`` and ``3 = (-,-)``. Parity is odd exactly when the two bits differ.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

SQRT2_2 = 2.0 * math.sqrt(2.0)
SERIES_MAGIC = "bellstrings-series/1"


class BellStringsError(Exception):
    """Base class for all package errors."""


class ParameterError(BellStringsError, ValueError):
    """A parameter is outside its documented range."""


class DataFormatError(BellStringsError, ValueError):
    """An input file does not match its documented format."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(BellStringsError):
    """Too little data for the requested statistic."""


class NonConvergenceError(BellStringsError):
    """A simulation step budget was exhausted."""

    def __init__(self, message: str, pair_index: int | None = None):
        self.pair_index = pair_index
        super().__init__(message)


class Gate(enum.IntEnum):
    Plus = 0
    Minus = 1

    @property
    def symbol(self) -> str:
        return "+" if self is Gate.Plus else "-"


class Parity(enum.Enum):
    Even = "even"
    Odd = "odd"


class Convention(enum.Enum):
    """Which parity forms the runs of a string (the other one terminates it)."""

    EvenRuns = "even_runs"
    OddRuns = "odd_runs"


class Limit(enum.Enum):
    Entanglement = "entanglement"
    DarkCounts = "dark_counts"


def parity_of(gate_a: Gate | int, gate_b: Gate | int) -> Parity:
    """Even iff both stations saw the same-labelled gate."""
    a, b = Gate(gate_a), Gate(gate_b)
    return Parity.Even if a == b else Parity.Odd


def code_of(gate_a: Gate | int, gate_b: Gate | int) -> int:
    return (int(Gate(gate_a)) << 1) | int(Gate(gate_b))


def odd_mask(codes: np.ndarray) -> np.ndarray:
    """Boolean mask of odd outcomes for an array of outcome codes."""
    codes = np.asarray(codes, dtype=np.uint8)
    return ((codes >> 1) ^ (codes & 1)).astype(bool)


@dataclass(frozen=True)
class Outcome:
    gate_a: Gate
    gate_b: Gate

    @property
    def parity(self) -> Parity:
        return parity_of(self.gate_a, self.gate_b)

    @property
    def code(self) -> int:
        return code_of(self.gate_a, self.gate_b)

    @classmethod
    def from_code(cls, code: int) -> "Outcome":
        if not 0 <= int(code) <= 3:
            raise ParameterError(f"outcome code must be in 0..3, got {code}")
        return cls(Gate(int(code) >> 1), Gate(int(code) & 1))

    def token(self) -> str:
        return f"A{self.gate_a.symbol} B{self.gate_b.symbol}"


def _frozen_copy(codes: np.ndarray) -> np.ndarray:
    arr = np.array(codes, dtype=np.uint8, copy=True)
    if arr.ndim != 1:
        raise ParameterError("outcome codes must be one-dimensional")
    if arr.size and int(arr.max()) > 3:
        raise ParameterError("outcome codes must be in 0..3")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CoincidenceSeries:
    """Ordered, immutable sequence of coincidence outcomes plus metadata.

    ``meta`` carries at least ``generator`` (``wqm``, ``iid`` or ``ingested``);
    generators add ``seed`` and a ``params`` snapshot.
    """

    codes: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "codes", _frozen_copy(self.codes))
        object.__setattr__(self, "meta", json.loads(json.dumps(dict(self.meta))))

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[Outcome], meta: Mapping[str, Any] | None = None):
        codes = np.fromiter((o.code for o in outcomes), dtype=np.uint8)
        return cls(codes, meta or {"generator": "manual"})

    @property
    def m(self) -> int:
        return int(self.codes.size)

    def __len__(self) -> int:
        return self.m

    def __iter__(self) -> Iterator[Outcome]:
        for c in self.codes:
            yield Outcome.from_code(int(c))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoincidenceSeries):
            return NotImplemented
        return np.array_equal(self.codes, other.codes) and dict(self.meta) == dict(other.meta)

    @property
    def odd(self) -> np.ndarray:
        return odd_mask(self.codes)

    @property
    def odd_count(self) -> int:
        return int(np.count_nonzero(self.odd))

    @property
    def odd_fraction(self) -> float:
        return self.odd_count / self.m if self.m else float("nan")

    def with_codes(self, codes: np.ndarray, **meta_updates: Any) -> "CoincidenceSeries":
        meta = dict(self.meta)
        meta.update(meta_updates)
        return CoincidenceSeries(codes, meta)

    def parity_flipped(self) -> "CoincidenceSeries":
        """Swap even and odd by relabelling station B's gates."""
        return self.with_codes(self.codes ^ np.uint8(1))


# -- serialization ---------------------------------------------------------

_TOKENS = (b"A+ B+\n", b"A+ B-\n", b"A- B+\n", b"A- B-\n")
_LINE = 6


def _header_line(meta: Mapping[str, Any], m: int) -> str:
    head = {"format": SERIES_MAGIC, "m": m, "meta": dict(meta)}
    return "#" + json.dumps(head, sort_keys=True, separators=(",", ":")) + "\n"


def dumps_series(series: CoincidenceSeries) -> bytes:
    table = np.frombuffer(b"".join(_TOKENS), dtype=np.uint8).reshape(4, _LINE)
    body = table[series.codes].tobytes()
    return _header_line(series.meta, series.m).encode("utf-8") + body


def loads_series(data: bytes) -> CoincidenceSeries:
    head_end = data.find(b"\n")
    if not data.startswith(b"#") or head_end < 0:
        raise DataFormatError("missing JSON header line", line=1)
    try:
        head = json.loads(data[1:head_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"bad JSON header: {exc}", line=1) from None
    if head.get("format") != SERIES_MAGIC:
        raise DataFormatError(f"unknown series format {head.get('format')!r}", line=1)
    body = np.frombuffer(data, dtype=np.uint8, offset=head_end + 1)
    if body.size % _LINE:
        raise DataFormatError("truncated outcome line", line=2 + body.size // _LINE)
    rows = body.reshape(-1, _LINE)
    fixed_ok = (rows[:, 0] == ord("A")) & (rows[:, 2] == ord(" ")) & (rows[:, 3] == ord("B"))
    fixed_ok &= rows[:, 5] == ord("\n")
    a_plus, a_minus = rows[:, 1] == ord("+"), rows[:, 1] == ord("-")
    b_plus, b_minus = rows[:, 4] == ord("+"), rows[:, 4] == ord("-")
    ok = fixed_ok & (a_plus | a_minus) & (b_plus | b_minus)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        text = rows[bad].tobytes().decode("utf-8", "replace").rstrip("\n")
        raise DataFormatError(f"malformed outcome {text!r}", line=bad + 2)
    codes = (a_minus.astype(np.uint8) << 1) | b_minus.astype(np.uint8)
    if head.get("m") != codes.size:
        raise DataFormatError(f"header says m={head.get('m')} but found {codes.size} outcomes")
    return CoincidenceSeries(codes, head.get("meta", {}))


def write_series(series: CoincidenceSeries, path: str | Path) -> None:
    Path(path).write_bytes(dumps_series(series))


def read_series(path: str | Path) -> CoincidenceSeries:
    return loads_series(Path(path).read_bytes())


# -- experiment parameters -------------------------------------------------

def _check_range(name: str, value: float, lo: float, hi: float, *, lo_open=False, hi_open=False):
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    below = value <= lo if lo_open else value < lo
    above = value >= hi if hi_open else value > hi
    if below or above:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise ParameterError(f"{name}={value} outside {lb}{lo}, {hi}{rb}")


@dataclass(frozen=True)
class ExperimentParams:
    """Everything the closed-form expressions consume.

    Angles are radians. ``eta`` holds the four branch efficiencies in the
    order (A+, A-, B+, B-); a scalar is broadcast. ``epsilon`` is derived
    from ``s_real`` at construction.
    """

    alpha: float = 0.0
    beta: float = 0.0
    eta: Sequence[float] | float = 1.0
    s_real: float = SQRT2_2
    r_dark: float = 100.0
    r_coinc: float = 5.0e4
    t_w: float = 10e-9
    m: int = 1_000_000
    epsilon: float = field(init=False)

    def __post_init__(self) -> None:
        _check_range("alpha", self.alpha, -math.inf, math.inf)
        _check_range("beta", self.beta, -math.inf, math.inf)
        eta = self.eta
        if isinstance(eta, (int, float)):
            eta = (float(eta),) * 4
        eta = tuple(float(e) for e in eta)
        if len(eta) != 4:
            raise ParameterError("eta needs one value or four (A+, A-, B+, B-)")
        for e in eta:
            _check_range("eta", e, 0.0, 1.0)
        object.__setattr__(self, "eta", eta)
        # round-off from 2*sqrt(2) typed as a decimal should not be fatal
        s = self.s_real
        if SQRT2_2 < s <= SQRT2_2 * (1 + 1e-12):
            s = SQRT2_2
            object.__setattr__(self, "s_real", s)
        _check_range("s_real", s, 0.0, SQRT2_2)
        _check_range("r_dark", self.r_dark, 0.0, math.inf)
        _check_range("r_coinc", self.r_coinc, 0.0, math.inf, lo_open=True)
        _check_range("t_w", self.t_w, 0.0, math.inf, lo_open=True)
        if int(self.m) != self.m or self.m < 0:
            raise ParameterError(f"m must be a non-negative integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "epsilon", min(1.0, max(0.0, 1.0 - s / SQRT2_2)))

    @classmethod
    def from_degrees(cls, alpha_deg: float = 0.0, beta_deg: float = 0.0, **kw) -> "ExperimentParams":
        return cls(alpha=math.radians(alpha_deg), beta=math.radians(beta_deg), **kw)

    @property
    def eta_mean(self) -> float:
        return float(sum(self.eta) / 4)

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha, "beta": self.beta, "eta": list(self.eta),
            "s_real": self.s_real, "epsilon": self.epsilon, "r_dark": self.r_dark,
            "r_coinc": self.r_coinc, "t_w": self.t_w, "m": self.m,
        }


# -- strings distribution ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class StringsDistribution:
    """Histogram of string lengths; ``counts[i]`` is the count at ``k = k_min + i``.

    Empirical histograms hold integer counts and a ``trailing_run`` (the
    unterminated run after the last interrupter). Predicted histograms hold
    real-valued expectations and ``trailing_run = None``.
    """

    counts: np.ndarray
    convention: Convention
    total_elements: int
    trailing_run: int | None = None
    k_min: int = 0

    def __post_init__(self) -> None:
        counts = np.array(self.counts, copy=True)
        if counts.ndim != 1:
            raise ParameterError("counts must be one-dimensional")
        if counts.size and counts.min() < 0:
            raise ParameterError("counts must be non-negative")
        k = np.arange(self.k_min, self.k_min + counts.size)
        used = float(np.sum((k + 1) * counts.astype(float))) if counts.size else 0.0
        if used > self.total_elements * (1 + 1e-9):
            raise ParameterError(f"strings need {used:g} elements but total_elements is {self.total_elements}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "convention", Convention(self.convention))

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_min + self.counts.size)

    @property
    def n_strings(self):
        total = self.counts.sum()
        return int(total) if self.counts.dtype.kind in "iu" else float(total)

    @property
    def max_length(self) -> int | None:
        nz = np.flatnonzero(self.counts)
        return int(self.k_min + nz[-1]) if nz.size else None

    def count(self, k: int):
        i = k - self.k_min
        return self.counts[i] if 0 <= i < self.counts.size else 0

    def __add__(self, other: "StringsDistribution") -> "StringsDistribution":
        if self.convention != other.convention or self.k_min != other.k_min:
            raise ParameterError("can only add histograms with equal convention and k_min")
        n = max(self.counts.size, other.counts.size)
        a = np.zeros(n, dtype=np.result_type(self.counts, other.counts))
        a[: self.counts.size] += self.counts
        a[: other.counts.size] += other.counts
        tr = None
        if self.trailing_run is not None and other.trailing_run is not None:
            tr = self.trailing_run + other.trailing_run
        return StringsDistribution(a, self.convention, self.total_elements + other.total_elements, tr)

    def meta(self) -> dict[str, Any]:
        return {
            "convention": self.convention.value, "m": self.total_elements,
            "trailing_run": self.trailing_run, "k_min": self.k_min,
            "n_strings": self.n_strings,
        }

    def to_csv(self) -> str:
        lines = ["# " + json.dumps(self.meta(), sort_keys=True), "k,count"]
        integral = self.counts.dtype.kind in "iu"
        for k, c in zip(self.k, self.counts):
            lines.append(f"{k},{int(c)}" if integral else f"{k},{float(c)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "StringsDistribution":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise DataFormatError("missing JSON meta header", line=1)
        meta = json.loads(lines[0][1:])
        if len(lines) < 2 or lines[1].strip() != "k,count":
            raise DataFormatError("expected 'k,count' column header", line=2)
        ks, vals = [], []
        for i, line in enumerate(lines[2:], start=3):
            try:
                k, c = line.split(",")
                ks.append(int(k))
                vals.append(c)
            except ValueError:
                raise DataFormatError(f"bad row {line!r}", line=i) from None
        integral = all("." not in v and "e" not in v.lower() for v in vals)
        counts = np.array([int(v) for v in vals] if integral else [float(v) for v in vals])
        if ks and ks != list(range(ks[0], ks[0] + len(ks))):
            raise DataFormatError("k values must be consecutive")
        if not integral:
            counts = counts.astype(float)
        elif not len(vals):
            counts = np.zeros(0, dtype=np.int64)
        return cls(counts, Convention(meta["convention"]), int(meta["m"]),
                   meta.get("trailing_run"), int(meta.get("k_min", ks[0] if ks else 0)))


# -- feasibility window ------------------------------------------------------

def phi_to_degrees(phi: float | None) -> float | None:
    if phi is None:
        return None
    return math.degrees(math.asin(math.sqrt(min(1.0, max(0.0, phi)))))


def degrees_to_phi(angle_deg: float) -> float:
    return math.sin(math.radians(angle_deg)) ** 2


@dataclass(frozen=True)
class FeasibilityWindow:
    """Interval ``phi_low < phi <= phi_high`` where determinism would show."""

    phi_low: float | None
    phi_high: float | None
    limiting_low: Limit
    safety_factor: float = 1.0
    phi_low_entanglement: float | None = None
    phi_low_noise: float | None = None

    @property
    def exists(self) -> bool:
        return self.phi_low is not None and self.phi_high is not None and self.phi_low < self.phi_high

    @property
    def angle_low_deg(self) -> float | None:
        return phi_to_degrees(self.phi_low)

    @property
    def angle_high_deg(self) -> float | None:
        return phi_to_degrees(self.phi_high)

    def to_dict(self) -> dict[str, Any]:
        return {
            "exists": self.exists,
            "phi_low": self.phi_low,
            "phi_high": self.phi_high,
            "angle_low_deg": self.angle_low_deg,
            "angle_high_deg": self.angle_high_deg,
            "limiting_low": self.limiting_low.value,
            "safety_factor": self.safety_factor,
            "phi_low_entanglement_raw": self.phi_low_entanglement,
            "phi_low_noise_raw": self.phi_low_noise,
        }
