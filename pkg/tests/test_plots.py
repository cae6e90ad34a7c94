"""SVG rendering: validity, determinism and colour conventions."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np
from matplotlib.colors import to_hex

from mutualism import plots
from mutualism.atlas import BifCurve, Codim2Point, RegionGrid
from mutualism.continuation import branch_events
from mutualism.cycles import PeriodCurve
from mutualism.model import default_params


def _valid(svg: str):
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    return root


def test_empty_inputs_render_axes():
    for svg in (plots.operating_diagram(), plots.branch_diagram(), plots.period_diagram()):
        _valid(svg)
        assert "<path" in svg


def test_colour_mapping():
    assert plots.CURVE_COLORS["LP"] == "blue"
    assert plots.CURVE_COLORS["H"] == "red"
    assert plots.CURVE_COLORS["LPC"] == "green"
    assert plots.CURVE_COLORS["PD"] == "cyan"
    assert plots.STABLE_COLOR == "red" and plots.UNSTABLE_COLOR == "blue"


def _curves():
    s = np.linspace(2.5, 3.5, 20)
    return [BifCurve(k, s, 0.2 + 0.01 * n + 0.0 * s, label=k) for n, k in enumerate(["LP", "H", "LPC", "PD"])]


def test_curve_colours_appear_in_svg():
    svg = plots.operating_diagram(_curves())
    for k in ("LP", "H", "LPC", "PD"):
        assert to_hex(plots.CURVE_COLORS[k]) in svg


def test_byte_identical_output():
    grid = RegionGrid(np.linspace(2, 4, 5), np.linspace(0.1, 0.3, 4),
                      np.array([["J0"] * 5, ["J1^0"] * 5, ["J2^0"] * 5, ["J0"] * 5]), np.zeros((4, 5), bool))
    pts = [Codim2Point("GH", 3.0, 0.228, "test", 1e-4)]
    a = plots.operating_diagram(_curves(), pts, grid, (0, 5, 0, 0.8))
    b = plots.operating_diagram(_curves(), pts, grid, (0, 5, 0, 0.8))
    assert a == b
    _valid(a)


def test_branch_and_period_diagrams():
    br = branch_events(default_params(D=0.2))
    svg = plots.branch_diagram(br)
    _valid(svg)
    assert to_hex(plots.STABLE_COLOR) in svg and to_hex(plots.UNSTABLE_COLOR) in svg
    pc = PeriodCurve("C1", np.array([3.23, 3.232, 3.234]), np.array([9.0, 10.0, 12.0]),
                     ["stable", "stable", "unstable"])
    _valid(plots.period_diagram([pc]))


def test_write_svg(tmp_path):
    path = plots.write_svg(plots.operating_diagram(), tmp_path / "sub" / "x.svg")
    _valid(path.read_text())
