"""Feasibility window for observing determinism in a given setup."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Union

from .core import ExperimentParams, FeasibilityWindow, Limit, ParameterError
from .predict import phi_lower_entanglement, phi_lower_noise

DEFAULT_SAFETY_FACTOR = 10.0
TABLE_RESOURCE = "phi_high_table.json"


@dataclass(frozen=True)
class PhiHighTable:
    """Precomputed ``(m, eta) -> phi_high`` values.

    Lookup uses the tabulated ``m`` closest on a log scale and, within it,
    the largest tabulated ``eta`` not above the query. Since ``phi_high``
    does not decrease with ``eta``, this errs towards a smaller window.
    """

    entries: tuple[tuple[int, float, float | None], ...]
    meta: dict

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PhiHighTable":
        rows = tuple((int(e["m"]), float(e["eta"]), e["phi_high"]) for e in data["entries"])
        meta = {k: v for k, v in data.items() if k != "entries"}
        return cls(rows, meta)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PhiHighTable":
        if path is None:
            text = resources.files("bellstrings").joinpath("data", TABLE_RESOURCE).read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict[str, Any]:
        return {**self.meta, "entries": [
            {"m": m, "eta": eta, "phi_high": ph} for m, eta, ph in self.entries
        ]}

    def lookup(self, eta: float, m: int) -> float | None:
        if not self.entries:
            raise ParameterError("empty phi_high table")
        ms = sorted({row[0] for row in self.entries})
        m_near = min(ms, key=lambda x: abs(math.log(x) - math.log(max(m, 1))))
        rows = sorted((e, ph) for mm, e, ph in self.entries if mm == m_near)
        below = [ph for e, ph in rows if e <= eta + 1e-12]
        return below[-1] if below else None


PhiHighSource = Union[None, float, PhiHighTable, Callable[[float, int], "float | None"]]

_default_table: PhiHighTable | None = None


def default_table() -> PhiHighTable:
    global _default_table
    if _default_table is None:
        _default_table = PhiHighTable.load()
    return _default_table


def resolve_phi_high(params: ExperimentParams, source: PhiHighSource = None) -> float | None:
    eta = params.eta_mean
    if source is None:
        return default_table().lookup(eta, params.m)
    if isinstance(source, PhiHighTable):
        return source.lookup(eta, params.m)
    if callable(source):
        return source(eta, params.m)
    return float(source)


def live_source(**kwargs: Any) -> Callable[[float, int], "float | None"]:
    """phi_high source that runs the Monte Carlo estimator on demand."""
    from .stats import estimate_phi_high

    def source(eta: float, m: int) -> float | None:
        return estimate_phi_high(eta, m, **kwargs).phi_high

    return source


def compute_window(
    params: ExperimentParams,
    safety_factor: float = DEFAULT_SAFETY_FACTOR,
    phi_high_source: PhiHighSource = None,
) -> FeasibilityWindow:
    """Lower limit from entanglement and accidentals (times ``safety_factor``),
    upper limit from detector efficiency. A missing window is a normal result.
    """
    if safety_factor < 1:
        raise ParameterError(f"safety_factor must be >= 1, got {safety_factor}")
    ent = phi_lower_entanglement(params.s_real)
    noise = phi_lower_noise(params.r_dark, params.r_coinc, params.t_w)
    limiting = Limit.DarkCounts if noise > ent else Limit.Entanglement
    phi_low = safety_factor * max(ent, noise)
    phi_high = resolve_phi_high(params, phi_high_source)
    return FeasibilityWindow(phi_low, phi_high, limiting, float(safety_factor), ent, noise)


TABLE_ETAS = (0.1, 0.2, 0.33, 0.5, 0.7, 1.0)
TABLE_MS = (35_632, 1_000_000)


def build_table(
    etas: tuple[float, ...] = TABLE_ETAS,
    ms: tuple[int, ...] = TABLE_MS,
    seed: int = 0,
    progress: Callable[[str], None] | None = None,
    **kwargs: Any,
) -> tuple[PhiHighTable, list]:
    """Regenerate the phi_high table with the Monte Carlo estimator."""
    from .stats import estimate_phi_high

    entries, results = [], []
    for m in ms:
        for eta in etas:
            res = estimate_phi_high(eta, m, seed=seed, **kwargs)
            entries.append({"m": m, "eta": eta, "phi_high": res.phi_high})
            results.append(res)
            if progress:
                progress(f"m={m} eta={eta} phi_high={res.phi_high} sweep={sorted(res.sweep)}")
    meta = {
        "significance": results[0].significance if results else None,
        "power": results[0].power if results else None,
        "trials": results[0].trials if results else None,
        "seed": seed,
    }
    return PhiHighTable.from_dict({**meta, "entries": entries}), results
