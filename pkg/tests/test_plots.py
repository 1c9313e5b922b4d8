import xml.etree.ElementTree as ET

import numpy as np
import pytest
from PIL import Image

from modules.plots import ChartLayout, LineChart, emit_plots

SVG = "{http://www.w3.org/2000/svg}"


def _legend(path):
    root = ET.parse(path).getroot()
    return [el.text for el in root.iter(f"{SVG}text") if el.get("class") == "legend"]


class TestLayout:
    def test_overlap_rejected(self):
        layout = ChartLayout(100, 100)
        layout.register_region(0, 0, 50, 50, "a")
        with pytest.raises(ValueError):
            layout.register_region(25, 25, 50, 50, "b")

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            ChartLayout(100, 100).register_region(60, 0, 50, 10, "wide")

    def test_arrange_regions_disjoint(self):
        layout = ChartLayout()
        plot = layout.arrange(["smooth regret", "smooth bound"])
        assert plot.width > 0 and plot.height > 0
        assert set(layout.regions) == {"title", "legend", "plot"}


class TestLineChart:
    def test_single_point_marker(self):
        chart = LineChart("one", "t", "y")
        chart.add_series("s", [1.0], [2.0])
        root = ET.fromstring(chart.to_svg())
        assert len(list(root.iter(f"{SVG}circle"))) == 1
        assert not list(root.iter(f"{SVG}polyline"))

    def test_nan_splits_series(self):
        chart = LineChart("gap", "t", "y")
        chart.add_series("s", [1, 2, 3, 4, 5], [1.0, 2.0, np.nan, 3.0, 4.0])
        root = ET.fromstring(chart.to_svg())
        assert len(list(root.iter(f"{SVG}polyline"))) == 2

    def test_log_axis_drops_nonpositive(self):
        chart = LineChart("log", "t", "y", log_y=True)
        chart.add_series("s", [1, 2, 3], [0.0, 10.0, 100.0])
        root = ET.fromstring(chart.to_svg())
        polyline = next(root.iter(f"{SVG}polyline"))
        assert len(polyline.get("points").split()) == 2

    def test_label_is_escaped(self):
        chart = LineChart("a < b", "t", "y")
        chart.add_series("x & y", [1, 2], [1, 2])
        ET.fromstring(chart.to_svg())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            LineChart("t", "x", "y").add_series("s", [1, 2], [1])


def _trace(T, offset=0.0):
    t = np.arange(1, T + 1)
    return {"t": t, "mse": 1.0 / t + offset, "regret": np.cumsum(np.ones(T)), "bound": 10.0 * t}


def test_two_regimes_in_mse_chart(tmp_path):
    written = emit_plots({"smooth": _trace(10), "abrupt": _trace(10, 0.5)}, tmp_path)
    assert {p.name for p in written} == {"mse.svg", "regret.svg"}
    assert _legend(tmp_path / "mse.svg") == ["smooth", "abrupt"]
    assert _legend(tmp_path / "regret.svg") == ["smooth regret", "smooth bound", "abrupt regret", "abrupt bound"]


def test_png_previews(tmp_path):
    written = emit_plots({"smooth": _trace(5)}, tmp_path, emit_png=True)
    assert {p.name for p in written} == {"mse.svg", "mse.png", "regret.svg", "regret.png"}
    with Image.open(tmp_path / "regret.png") as image:
        assert image.size == (720, 420)


def test_without_ground_truth_only_regret(tmp_path):
    trace = _trace(5)
    trace["mse"] = None
    written = emit_plots({"ingested": trace}, tmp_path)
    assert [p.name for p in written] == ["regret.svg"]


def test_empty_traces_skipped(tmp_path):
    assert emit_plots({}, tmp_path) == []
    assert list(tmp_path.iterdir()) == []
