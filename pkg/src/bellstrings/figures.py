"""String-length distributions for the standard panels: WQM, i.i.d. and n(k)."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CoincidenceSeries, Convention, ParameterError, StringsDistribution
from .imperfections import apply_entanglement_imperfection
from .predict import angle_deg_from_phi, epsilon_from_s, expected_strings, k_max
from .simulate import WqmConfig, child_seed, generate_iid, wqm_generate
from .strings import extract_strings
from .svg import Curve, Panel, render

DESK_M = 1_000_000
FULL_SCALE_M = 100_000_000


@dataclass(frozen=True)
class PanelDef:
    name: str
    phi: float
    eta: float = 1.0


FIGURES: dict[int, tuple[PanelDef, ...]] = {
    1: (PanelDef("a", 0.01),),
    2: (PanelDef("a", 0.1), PanelDef("b", 0.146), PanelDef("c", 0.2), PanelDef("d", 0.5)),
    3: (PanelDef("a", 0.01, 0.33), PanelDef("b", 0.046, 0.33),
        PanelDef("c", 0.1, 0.33), PanelDef("d", 0.146, 0.33)),
}

FIGURE4 = {"phi": 0.048, "eta": 0.1, "s_real": 2.66}

GREEN, BLACK, RED, BLUE = "#2ca02c", "#000000", "#d62728", "#1f77b4"


@dataclass
class PanelData:
    pdef: PanelDef
    m: int
    convention: Convention
    curves: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def _convention_for(phi: float) -> Convention:
    return Convention.EvenRuns if phi <= 0.5 else Convention.OddRuns


def _histogram_xy(dist: StringsDistribution) -> tuple[np.ndarray, np.ndarray]:
    return dist.k.astype(np.int64), np.asarray(dist.counts, dtype=float)


def _prediction_xy(m: int, phi: float, conv: Convention, k_hi: int) -> tuple[np.ndarray, np.ndarray]:
    q = phi if conv is Convention.EvenRuns else 1.0 - phi
    dist = expected_strings(m, q, (0, max(k_hi, 1)), conv)
    return _histogram_xy(dist)


def _k_hi(m: int, q: float, *observed: int) -> int:
    try:
        hi = int(math.ceil(1.5 * k_max(m, q)))
    except ParameterError:
        hi = int(math.ceil(3.0 / q))
    return max([hi, *observed])


def compute_panel(pdef: PanelDef, m: int, seed: int, config: WqmConfig | None = None) -> PanelData:
    conv = _convention_for(pdef.phi)
    delta = math.asin(math.sqrt(pdef.phi))
    wqm = extract_strings(wqm_generate(m, 0.0, delta, config, pdef.eta, child_seed(seed, 0)), conv)
    iid = extract_strings(generate_iid(m, pdef.phi, child_seed(seed, 1)), conv)
    q = pdef.phi if conv is Convention.EvenRuns else 1.0 - pdef.phi
    hi = _k_hi(m, q, (wqm.max_length or 0), (iid.max_length or 0))
    data = PanelData(pdef, m, conv)
    data.curves["wqm"] = _histogram_xy(wqm)
    data.curves["iid"] = _histogram_xy(iid)
    data.curves["n(k)"] = _prediction_xy(m, pdef.phi, conv, hi)
    return data


def _panel_task(args: tuple) -> PanelData:
    return compute_panel(*args)


def compute_figure(
    figure: int,
    m: int = DESK_M,
    seed: int = 0,
    panels: Sequence[str] | None = None,
    config: WqmConfig | None = None,
    jobs: int = 1,
) -> list[PanelData]:
    if figure not in FIGURES:
        raise ParameterError(f"figure must be one of {sorted(FIGURES)} (figure 4 needs data)")
    defs = [s for s in FIGURES[figure] if panels is None or s.name in panels]
    if not defs:
        raise ParameterError(f"no such panel(s) {list(panels or [])} in figure {figure}")
    index = {s.name: i for i, s in enumerate(FIGURES[figure])}
    tasks = [(s, m, child_seed(seed, figure, index[s.name]), config) for s in defs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_panel_task, tasks))
    return [_panel_task(t) for t in tasks]


def compute_figure4(
    data: CoincidenceSeries,
    phi: float = FIGURE4["phi"],
    eta: float = FIGURE4["eta"],
    s_real: float = FIGURE4["s_real"],
    seed: int = 0,
    config: WqmConfig | None = None,
) -> PanelData:
    """Measured series against WQM (same phi, eta and entanglement background) and n(k)."""
    m = data.m
    conv = _convention_for(phi)
    delta = math.asin(math.sqrt(phi))
    sim = wqm_generate(m, 0.0, delta, config, eta, child_seed(seed, 4, 0))
    sim = apply_entanglement_imperfection(sim, epsilon_from_s(s_real), child_seed(seed, 4, 1))
    measured = extract_strings(data, conv)
    wqm = extract_strings(sim, conv)
    q = phi if conv is Convention.EvenRuns else 1.0 - phi
    hi = _k_hi(m, q, measured.max_length or 0, wqm.max_length or 0)
    panel = PanelData(PanelDef("a", phi, eta), m, conv)
    panel.curves["measured"] = _histogram_xy(measured)
    panel.curves["wqm"] = _histogram_xy(wqm)
    panel.curves["n(k)"] = _prediction_xy(m, phi, conv, hi)
    return panel


def figure_csv(figure: int, panels: Sequence[PanelData]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["figure", "panel", "phi", "eta", "m", "convention", "curve", "k", "count"])
    for p in panels:
        for name, (k, y) in p.curves.items():
            for kk, yy in zip(k.tolist(), y.tolist()):
                w.writerow([figure, p.pdef.name, repr(p.pdef.phi), repr(p.pdef.eta), p.m,
                            p.convention.value, name, kk, repr(yy)])
    return buf.getvalue()


_COLORS = {"wqm": BLACK, "n(k)": RED, "iid": BLUE, "measured": GREEN}
_LABELS = {"wqm": "WQM", "n(k)": "n(k)", "iid": "i.i.d. simulated", "measured": "measured"}


def figure_svg(figure: int, panels: Sequence[PanelData]) -> str:
    out = []
    for p in panels:
        angle = angle_deg_from_phi(p.pdef.phi)
        title = f"({p.pdef.name}) phi={p.pdef.phi:g} ({angle:.1f} deg), eta={p.pdef.eta:g}, m={p.m:g}"
        if len(panels) == 1 and figure in (1, 4):
            title = title[4:]
        order = [n for n in ("measured", "wqm", "iid", "n(k)") if n in p.curves]
        curves = [Curve(_LABELS[n], *p.curves[n], color=_COLORS[n]) for n in order]
        xlabel = "k (even runs)" if p.convention is Convention.EvenRuns else "k (odd runs)"
        out.append(Panel(title, curves, xlabel=xlabel))
    return render(out, columns=2 if len(out) > 1 else 1)


def write_figure(figure: int, panels: Sequence[PanelData], out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = "".join(p.pdef.name for p in panels) if figure in FIGURES and len(panels) < len(FIGURES[figure]) else ""
    stem = f"figure{figure}{suffix}"
    csv_path, svg_path = out / f"{stem}.csv", out / f"{stem}.svg"
    csv_path.write_text(figure_csv(figure, panels), encoding="utf-8")
    svg_path.write_text(figure_svg(figure, panels), encoding="utf-8")
    return csv_path, svg_path
