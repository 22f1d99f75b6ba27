"""Series generators: the i.i.d. reference process and the WQM hidden-variable engine.

WQM model summary. Both particles of a pair carry the same transverse unit
vector V. The *source* station projects a randomly varying V on its two gate
axes every time step and adds ``|projection|**p`` to the gate memories; the
first memory to reach the threshold ``u`` fires and loses ``u``. V at the
partner station then collapses onto the axis of the fired gate and the
partner accumulates with that fixed V until one of its memories fires.
Each detection survives its branch efficiency independently; the pair is
recorded only if both survive. Stations swap roles after every pair.
Randomness enters only through V, the initial memories and the efficiency
draws.

By default a discarded source detection still collapses the partner's V.
With ``collapse_on_discard=False`` the source's survival is drawn first and,
if it is lost, the partner detects on a random V like a source does.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numba
import numpy as np

from .core import (
    CoincidenceSeries,
    NonConvergenceError,
    ParameterError,
    odd_mask,
)
from .predict import odd_probability

_CHUNK = 1 << 20

_DONE, _NEED_MORE, _STUCK = 0, 1, 2


def child_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit seed derived from a parent seed and integer keys."""
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# -- i.i.d. generator --------------------------------------------------------

def generate_iid(m: int, phi: float, seed: int = 0) -> CoincidenceSeries:
    """Independent outcomes, odd with probability ``phi``, gates split 50/50."""
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if not 0.0 <= phi <= 1.0:
        raise ParameterError(f"phi must be in [0, 1], got {phi}")
    rng = np.random.default_rng(seed)
    odd = rng.random(m) < phi
    gate_a = rng.integers(0, 2, size=m, dtype=np.uint8)
    gate_b = gate_a ^ odd.astype(np.uint8)
    codes = (gate_a << 1) | gate_b
    return CoincidenceSeries(codes, {
        "generator": "iid", "seed": int(seed), "params": {"m": int(m), "phi": float(phi)},
    })


def _eta4(eta: float | Sequence[float]) -> np.ndarray:
    arr = np.full(4, float(eta)) if np.isscalar(eta) else np.asarray(eta, dtype=float)
    if arr.shape != (4,):
        raise ParameterError("eta needs one value or four (A+, A-, B+, B-)")
    if np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise ParameterError(f"eta must be in (0, 1], got {arr.tolist()}")
    return arr


def apply_efficiency(series: CoincidenceSeries, eta: float | Sequence[float], seed: int = 0) -> CoincidenceSeries:
    """Series-level thinning: keep each coincidence if both detections survive.

    This is the right model for memoryless sources only; WQM applies
    efficiency at detection level inside the engine instead.
    """
    eta4 = _eta4(eta)
    if np.all(eta4 == 1.0):
        return series
    rng = np.random.default_rng(seed)
    u = rng.random((series.m, 2))
    codes = series.codes
    keep = (u[:, 0] < eta4[codes >> 1]) & (u[:, 1] < eta4[2 + (codes & 1)])
    history = list(series.meta.get("history", [])) + [{"op": "efficiency", "eta": eta4.tolist(), "seed": int(seed)}]
    return series.with_codes(codes[keep], history=history)


# -- WQM configuration and state -------------------------------------------

class VProcess(enum.Enum):
    RedrawUniform = "redraw_uniform"
    RandomWalk = "random_walk"


class MemoryInit(enum.Enum):
    Zero = "zero"
    UniformRandom = "uniform_random"


class Station(enum.IntEnum):
    A = 0
    B = 1


@dataclass(frozen=True)
class WqmConfig:
    threshold_u: float = 1.0
    projection_exponent: float = 2.0
    v_process: VProcess = VProcess.RedrawUniform
    walk_step: float = 0.1
    memory_init: MemoryInit = MemoryInit.UniformRandom
    nonlocal_collapse: bool = True
    collapse_on_discard: bool = True
    max_steps_per_pair: int = 1_000_000

    def __post_init__(self) -> None:
        object.__setattr__(self, "v_process", VProcess(self.v_process))
        object.__setattr__(self, "memory_init", MemoryInit(self.memory_init))
        if not (self.threshold_u > 0 and math.isfinite(self.threshold_u)):
            raise ParameterError(f"threshold_u must be > 0, got {self.threshold_u}")
        if not (self.projection_exponent > 0 and math.isfinite(self.projection_exponent)):
            raise ParameterError(f"projection_exponent must be > 0, got {self.projection_exponent}")
        if self.v_process is VProcess.RandomWalk and not self.walk_step > 0:
            raise ParameterError("random_walk needs walk_step > 0")
        if self.max_steps_per_pair < 1:
            raise ParameterError("max_steps_per_pair must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["v_process"] = self.v_process.value
        d["memory_init"] = self.memory_init.value
        d["nonlocal"] = d.pop("nonlocal_collapse")
        return d

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "WqmConfig":
        data = dict(data.get("wqm", data))
        if "nonlocal" in data:
            data["nonlocal_collapse"] = data.pop("nonlocal")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown WQM config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "WqmConfig":
        from .config import load_mapping

        return cls.from_mapping(load_mapping(path))


@dataclass
class WqmState:
    """Mutable engine state; memories are ordered (A+, A-, B+, B-)."""

    memories: np.ndarray
    v_angle: float
    source_station: Station
    threshold_u: float
    rng: np.random.Generator
    pairs_simulated: int = 0
    # resumable kernel bookkeeping
    phase: int = 0
    steps_in_pair: int = 0
    fired_source: int = 0
    fired_partner: int = 0
    pending: np.ndarray = field(default_factory=lambda: np.zeros(0))


@numba.njit(cache=True)
def _accumulate(mem, base, inc_p, inc_m, u):
    mem[base] += inc_p
    mem[base + 1] += inc_m
    if mem[base] >= u or mem[base + 1] >= u:
        gate = 0 if mem[base] >= mem[base + 1] else 1
        mem[base + gate] -= u
        return gate
    return -1


@numba.njit(cache=True)
def _increments(d, p, square):
    c = math.cos(d)
    sn = math.sin(d)
    if square:
        return c * c, sn * sn
    return abs(c) ** p, abs(sn) ** p


@numba.njit(cache=True)
def _wqm_kernel(mem, fstate, istate, ang, eta, use_eta, collapse_on_discard,
                u, p, walk, max_steps, uni, out, n_out):
    # phases: 0 source accumulates, 1 source efficiency draw (no-collapse
    # variant only), 2 partner accumulates on collapsed V, 3 efficiency
    # draws and recording, 4 partner accumulates on random V (discarded
    # source, no-collapse variant)
    theta = fstate[0]
    src = istate[0]
    phase = istate[1]
    steps = istate[2]
    g = istate[3]
    h = istate[4]
    pairs = istate[5]
    rec = istate[6]
    pos = 0
    nuni = uni.size
    half_pi = 0.5 * math.pi
    two_pi = 2.0 * math.pi
    square = p == 2.0
    early_draw = use_eta and not collapse_on_discard
    status = 0
    while rec < n_out:
        if phase == 0 or phase == 4:
            # random-V accumulation: source (phase 0) or uncollapsed partner (phase 4)
            station = src if phase == 0 else 1 - src
            fired = -1
            while fired < 0:
                if pos >= nuni:
                    status = 1
                    break
                r = uni[pos]
                pos += 1
                if walk > 0.0:
                    theta += (2.0 * r - 1.0) * walk
                else:
                    theta = two_pi * r
                inc_p, inc_m = _increments(theta - ang[station], p, square)
                fired = _accumulate(mem, 2 * station, inc_p, inc_m, u)
                steps += 1
                if fired < 0 and steps >= max_steps:
                    status = 2
                    break
            if status != 0:
                break
            if phase == 4:
                h = fired
                pairs += 1
                src = 1 - src
                phase = 0
                steps = 0
                continue
            g = fired
            phase = 1 if early_draw else 2
        if phase == 1:
            if pos >= nuni:
                status = 1
                break
            kept = uni[pos] < eta[2 * src + g]
            pos += 1
            steps = 0
            phase = 2 if kept else 4
            if not kept:
                continue
        if phase == 2:
            o = 1 - src
            inc_p, inc_m = _increments(ang[src] + g * half_pi - ang[o], p, square)
            psteps = 0
            h = -1
            while h < 0:
                h = _accumulate(mem, 2 * o, inc_p, inc_m, u)
                psteps += 1
                if h < 0 and psteps >= max_steps:
                    status = 2
                    break
            if status != 0:
                break
            phase = 3
        if phase == 3:
            keep = True
            if early_draw:
                if pos >= nuni:
                    status = 1
                    break
                keep = uni[pos] < eta[2 * (1 - src) + h]
                pos += 1
            elif use_eta:
                if pos + 2 > nuni:
                    status = 1
                    break
                keep_src = uni[pos] < eta[2 * src + g]
                keep_par = uni[pos + 1] < eta[2 * (1 - src) + h]
                pos += 2
                keep = keep_src and keep_par
            if keep:
                if src == 0:
                    out[rec] = (g << 1) | h
                else:
                    out[rec] = (h << 1) | g
                rec += 1
            pairs += 1
            src = 1 - src
            phase = 0
            steps = 0
    fstate[0] = theta
    istate[0] = src
    istate[1] = phase
    istate[2] = steps
    istate[3] = g
    istate[4] = h
    istate[5] = pairs
    istate[6] = rec
    return status, pos


class WqmEngine:
    """Stateful WQM simulator; successive ``run`` calls continue one trajectory."""

    def __init__(
        self,
        alpha: float,
        beta: float,
        config: WqmConfig | None = None,
        eta: float | Sequence[float] = 1.0,
        seed: int = 0,
    ):
        self.config = config or WqmConfig()
        if not self.config.nonlocal_collapse:
            raise ParameterError("semi-classical variant out of scope: nonlocal=false is not simulated")
        if not (math.isfinite(alpha) and math.isfinite(beta)):
            raise ParameterError("angles must be finite")
        self.alpha, self.beta = float(alpha), float(beta)
        self.eta = _eta4(eta)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        u = self.config.threshold_u
        if self.config.memory_init is MemoryInit.UniformRandom:
            mem = rng.random(4) * u
        else:
            mem = np.zeros(4)
        theta0 = 2.0 * math.pi * rng.random()
        self.state = WqmState(mem, theta0, Station.A, u, rng, pending=np.zeros(0))

    @property
    def use_eta(self) -> bool:
        return bool(np.any(self.eta < 1.0))

    def run(self, m: int) -> np.ndarray:
        """Simulate pairs until ``m`` more coincidences are recorded; return their codes."""
        if m < 1:
            raise ParameterError(f"m must be >= 1, got {m}")
        cfg, st = self.config, self.state
        out = np.empty(m, dtype=np.uint8)
        fstate = np.array([st.v_angle])
        istate = np.array([int(st.source_station), st.phase, st.steps_in_pair,
                           st.fired_source, st.fired_partner, st.pairs_simulated, 0], dtype=np.int64)
        ang = np.array([self.alpha, self.beta])
        walk = cfg.walk_step if cfg.v_process is VProcess.RandomWalk else 0.0
        uni = st.pending
        pairs_before = st.pairs_simulated
        while True:
            if uni.size == 0:
                uni = st.rng.random(_CHUNK)
            status, used = _wqm_kernel(
                st.memories, fstate, istate, ang, self.eta, self.use_eta,
                bool(cfg.collapse_on_discard), float(cfg.threshold_u), float(cfg.projection_exponent), float(walk),
                int(cfg.max_steps_per_pair), uni, out, m,
            )
            uni = uni[used:]
            if status == _DONE:
                break
            if status == _STUCK:
                raise NonConvergenceError(
                    f"no memory fired within {cfg.max_steps_per_pair} steps at pair {int(istate[5])}",
                    pair_index=int(istate[5]),
                )
            uni = np.concatenate([uni, st.rng.random(_CHUNK)])
        st.v_angle = float(fstate[0])
        st.source_station = Station(int(istate[0]))
        st.phase, st.steps_in_pair = int(istate[1]), int(istate[2])
        st.fired_source, st.fired_partner = int(istate[3]), int(istate[4])
        st.pairs_simulated = int(istate[5])
        st.pending = uni
        self.last_pairs = st.pairs_simulated - pairs_before
        return out


def wqm_generate(
    m: int,
    alpha: float,
    beta: float,
    config: WqmConfig | None = None,
    eta: float | Sequence[float] = 1.0,
    seed: int = 0,
) -> CoincidenceSeries:
    """Run the WQM engine until ``m`` coincidences are recorded (angles in radians)."""
    engine = WqmEngine(alpha, beta, config, eta, seed)
    codes = engine.run(m)
    return CoincidenceSeries(codes, {
        "generator": "wqm",
        "seed": int(seed),
        "params": {"m": int(m), "alpha": float(alpha), "beta": float(beta),
                   "eta": engine.eta.tolist(), "phi": odd_probability(alpha, beta)},
        "wqm_config": engine.config.to_dict(),
        "pairs_simulated": engine.state.pairs_simulated,
    })


def parity_stream(alpha: float, beta: float, m: int, config: WqmConfig | None = None,
                  eta: float | Sequence[float] = 1.0, seed: int = 0) -> np.ndarray:
    """Odd mask of a WQM run without building a series object (batch helper)."""
    return odd_mask(WqmEngine(alpha, beta, config, eta, seed).run(m))


# -- calibration --------------------------------------------------------------

DEFAULT_CALIBRATION_GRID = tuple(float(x) for x in np.linspace(0.0, 90.0, 10))


@dataclass(frozen=True)
class CalibrationRow:
    angle_deg: float
    expected: float
    observed: float
    sigma: float
    z: float
    passed: bool


@dataclass(frozen=True)
class CalibrationReport:
    rows: tuple[CalibrationRow, ...]
    m_per_angle: int
    n_sigma: float
    config: WqmConfig

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed, "m_per_angle": self.m_per_angle, "n_sigma": self.n_sigma,
            "config": self.config.to_dict(), "rows": [asdict(r) for r in self.rows],
        }


def wqm_calibrate(
    config: WqmConfig | None = None,
    angle_grid: Sequence[float] = DEFAULT_CALIBRATION_GRID,
    m_per_angle: int = 1_000_000,
    seed: int = 0,
    eta: float | Sequence[float] = 1.0,
    n_sigma: float = 3.0,
) -> CalibrationReport:
    """Compare simulated odd fractions with sin^2 of each |alpha - beta| (degrees)."""
    config = config or WqmConfig()
    rows = []
    for i, deg in enumerate(angle_grid):
        delta = math.radians(deg)
        expected = odd_probability(0.0, delta)
        odd = parity_stream(0.0, delta, m_per_angle, config, eta, child_seed(seed, i))
        observed = float(np.count_nonzero(odd)) / m_per_angle
        sigma = math.sqrt(expected * (1.0 - expected) / m_per_angle)
        diff = observed - expected
        if sigma > 1e-12:
            z = diff / sigma
            passed = abs(z) <= n_sigma
        else:
            z = 0.0 if abs(diff) <= 1e-12 else math.copysign(math.inf, diff)
            passed = abs(diff) <= 1e-12
        rows.append(CalibrationRow(float(deg), expected, observed, sigma, z, passed))
    return CalibrationReport(tuple(rows), int(m_per_angle), float(n_sigma), config)


def config_json(config: WqmConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n"


def with_overrides(config: WqmConfig, **overrides: Any) -> WqmConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **overrides) if overrides else config
