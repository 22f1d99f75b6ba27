import xml.etree.ElementTree as ET

import numpy as np

from bellstrings.svg import Curve, Panel, render

NS = "{http://www.w3.org/2000/svg}"


def panel():
    k = np.arange(50)
    return Panel("demo", [Curve("a", k, 1e4 * 0.8**k), Curve("b", k, np.where(k < 30, 5e3 * 0.85**k, 0.0))])


def test_well_formed_and_deterministic():
    text = render([panel(), panel()])
    assert text == render([panel(), panel()])
    root = ET.fromstring(text)
    assert root.tag == NS + "svg"
    assert len(root.findall(f"{NS}g")) == 2
    assert len(root.iter(f"{NS}polyline").__next__().get("points").split()) == 50


def test_log_axis_drops_non_positive():
    root = ET.fromstring(render([panel()]))
    lines = list(root.iter(f"{NS}polyline"))
    assert len(lines[1].get("points").split()) == 30
    labels = [t.text for t in root.iter(f"{NS}text")]
    assert "1e4" in labels or "10000" in labels


def test_linear_axis():
    p = Panel("lin", [Curve("a", [0, 1, 2], [0.0, 1.0, 4.0])], log_y=False)
    assert "<polyline" in render([p])
