"""
Static line charts for MSE and regret traces.

SVG is written by hand (no plotting dependency); the same chart can be
rasterised to PNG with Pillow. A small layout manager keeps the title, plot
area and legend from overlapping.
"""
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from modules.logger import get_logger

logger = get_logger(__name__)

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
FONT_CHAR_WIDTH = 7
FONT_CHAR_HEIGHT = 12


class ChartRegion:
    """Represents a rectangular region of the canvas."""

    def __init__(self, x, y, width, height, name=""):
        self.x = x
        self.y = y
        self.width = width
        self.height = height
        self.name = name

    def intersects(self, other):
        return not (
            self.x + self.width <= other.x or
            other.x + other.width <= self.x or
            self.y + self.height <= other.y or
            other.y + other.height <= self.y
        )

    def __repr__(self):
        return f"ChartRegion({self.x},{self.y},{self.width}x{self.height},'{self.name}')"


class ChartLayout:
    """
    Places the title, plot area and legend on a fixed-size canvas without overlaps.
    """

    def __init__(self, width=720, height=420, margin=12):
        self.width = width
        self.height = height
        self.margin = margin
        self.regions = {}

    def register_region(self, x, y, width, height, name):
        """
        Register a region, refusing out-of-bounds or overlapping placements.

        Returns:
            ChartRegion
        """
        if x < 0 or y < 0 or x + width > self.width or y + height > self.height:
            raise ValueError(f"Region {name} ({x},{y},{width}x{height}) exceeds canvas "
                             f"({self.width}x{self.height})")
        region = ChartRegion(x, y, width, height, name)
        for existing in self.regions.values():
            if region.intersects(existing):
                raise ValueError(f"Region {name} overlaps {existing.name}")
        self.regions[name] = region
        return region

    def arrange(self, labels):
        """Title on top, legend on the right sized to the longest label, plot in between."""
        m = self.margin
        title_h = FONT_CHAR_HEIGHT + 8
        legend_w = 24 + FONT_CHAR_WIDTH * max((len(s) for s in labels), default=0)
        axis_left, axis_bottom = 64, 36

        self.register_region(m, m, self.width - 2 * m, title_h, "title")
        self.register_region(self.width - m - legend_w, m + title_h + 4, legend_w,
                             (FONT_CHAR_HEIGHT + 6) * max(len(labels), 1), "legend")
        plot_x = m + axis_left
        plot_y = m + title_h + 4
        plot_w = self.width - m - legend_w - 8 - plot_x
        plot_h = self.height - m - axis_bottom - plot_y
        return self.register_region(plot_x, plot_y, plot_w, plot_h, "plot")


class LineChart:
    def __init__(self, title, x_label, y_label, log_y=False, width=720, height=420):
        self.title = title
        self.x_label = x_label
        self.y_label = y_label
        self.log_y = log_y
        self.width = width
        self.height = height
        self.series = []

    def add_series(self, label, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.shape != ys.shape:
            raise ValueError(f"Series {label}: x {xs.shape} and y {ys.shape} disagree")
        self.series.append((label, xs, ys))

    def _visible(self, ys):
        ok = np.isfinite(ys)
        if self.log_y:
            ok &= ys > 0
        return ok

    def _bounds(self):
        xs = [s[1][self._visible(s[2])] for s in self.series]
        ys = [s[2][self._visible(s[2])] for s in self.series]
        xs = np.concatenate(xs) if xs else np.array([])
        ys = np.concatenate(ys) if ys else np.array([])
        if xs.size == 0:
            return 0.0, 1.0, 0.0, 1.0
        if self.log_y:
            ys = np.log10(ys)
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        if x1 == x0:
            x0, x1 = x0 - 1.0, x1 + 1.0
        if y1 == y0:
            pad = abs(y0) * 0.1 or 1.0
            y0, y1 = y0 - pad, y1 + pad
        return x0, x1, y0, y1

    def _geometry(self):
        layout = ChartLayout(self.width, self.height)
        plot = layout.arrange([s[0] for s in self.series])
        x0, x1, y0, y1 = self._bounds()

        def to_px(x, y):
            if self.log_y:
                y = math.log10(y)
            px = plot.x + (x - x0) / (x1 - x0) * plot.width
            py = plot.y + plot.height - (y - y0) / (y1 - y0) * plot.height
            return round(px, 2), round(py, 2)

        return layout, plot, (x0, x1, y0, y1), to_px

    def _segments(self, xs, ys, to_px):
        """Runs of consecutive visible points, in pixel coordinates."""
        segments, current = [], []
        for x, y, ok in zip(xs, ys, self._visible(ys)):
            if ok:
                current.append(to_px(x, y))
            elif current:
                segments.append(current)
                current = []
        if current:
            segments.append(current)
        return segments

    def _ticks(self, bounds):
        x0, x1, y0, y1 = bounds
        x_ticks = np.linspace(x0, x1, 5)
        y_ticks = np.linspace(y0, y1, 5)
        y_values = 10.0 ** y_ticks if self.log_y else y_ticks
        return x_ticks, list(zip(y_ticks, y_values))

    def to_svg(self):
        layout, plot, bounds, to_px = self._geometry()
        x0, x1, y0, y1 = bounds
        x_ticks, y_ticks = self._ticks(bounds)
        title = layout.regions["title"]
        legend = layout.regions["legend"]

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
               f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">',
               f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>',
               f'<text x="{title.x + title.width / 2}" y="{title.y + FONT_CHAR_HEIGHT}" '
               f'text-anchor="middle" font-size="14">{escape(self.title)}</text>',
               f'<rect x="{plot.x}" y="{plot.y}" width="{plot.width}" height="{plot.height}" '
               f'fill="none" stroke="#444"/>']

        for xt in x_ticks:
            px = plot.x + (xt - x0) / (x1 - x0) * plot.width
            out.append(f'<line x1="{px:.2f}" y1="{plot.y + plot.height}" x2="{px:.2f}" '
                       f'y2="{plot.y + plot.height + 4}" stroke="#444"/>')
            out.append(f'<text x="{px:.2f}" y="{plot.y + plot.height + 16}" '
                       f'text-anchor="middle">{xt:.4g}</text>')
        for yt, value in y_ticks:
            py = plot.y + plot.height - (yt - y0) / (y1 - y0) * plot.height
            out.append(f'<line x1="{plot.x - 4}" y1="{py:.2f}" x2="{plot.x}" y2="{py:.2f}" stroke="#444"/>')
            out.append(f'<text x="{plot.x - 6}" y="{py + 4:.2f}" text-anchor="end">{value:.3g}</text>')
        out.append(f'<text x="{plot.x + plot.width / 2}" y="{self.height - 8}" '
                   f'text-anchor="middle">{escape(self.x_label)}</text>')
        out.append(f'<text x="14" y="{plot.y + plot.height / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {plot.y + plot.height / 2})">{escape(self.y_label)}</text>')

        for k, (label, xs, ys) in enumerate(self.series):
            color = PALETTE[k % len(PALETTE)]
            for segment in self._segments(xs, ys, to_px):
                if len(segment) == 1:
                    px, py = segment[0]
                    out.append(f'<circle cx="{px}" cy="{py}" r="3" fill="{color}"/>')
                else:
                    points = " ".join(f"{px},{py}" for px, py in segment)
                    out.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                               f'stroke-width="1.5"/>')
            ly = legend.y + k * (FONT_CHAR_HEIGHT + 6) + FONT_CHAR_HEIGHT
            out.append(f'<line x1="{legend.x}" y1="{ly - 4}" x2="{legend.x + 16}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{legend.x + 20}" y="{ly}" class="legend">{escape(label)}</text>')

        out.append("</svg>")
        return "\n".join(out) + "\n"

    def to_png(self, path):
        """Rasterise the chart with Pillow."""
        layout, plot, bounds, to_px = self._geometry()
        x0, x1, y0, y1 = bounds
        x_ticks, y_ticks = self._ticks(bounds)
        image = Image.new("RGB", (self.width, self.height), "white")
        draw = ImageDraw.Draw(image)
        font = ImageFont.load_default()

        title = layout.regions["title"]
        draw.text((title.x, title.y), self.title, font=font, fill="black")
        draw.rectangle([plot.x, plot.y, plot.x + plot.width, plot.y + plot.height], outline="#444444")
        for xt in x_ticks:
            px = plot.x + (xt - x0) / (x1 - x0) * plot.width
            draw.line([px, plot.y + plot.height, px, plot.y + plot.height + 4], fill="#444444")
            draw.text((px - 10, plot.y + plot.height + 6), f"{xt:.4g}", font=font, fill="black")
        for yt, value in y_ticks:
            py = plot.y + plot.height - (yt - y0) / (y1 - y0) * plot.height
            draw.line([plot.x - 4, py, plot.x, py], fill="#444444")
            draw.text((4, py - 5), f"{value:.3g}", font=font, fill="black")
        draw.text((plot.x + plot.width // 2 - 10, self.height - 18), self.x_label, font=font, fill="black")

        legend = layout.regions["legend"]
        for k, (label, xs, ys) in enumerate(self.series):
            color = PALETTE[k % len(PALETTE)]
            for segment in self._segments(xs, ys, to_px):
                if len(segment) == 1:
                    px, py = segment[0]
                    draw.ellipse([px - 3, py - 3, px + 3, py + 3], fill=color)
                else:
                    draw.line(segment, fill=color, width=2)
            ly = legend.y + k * (FONT_CHAR_HEIGHT + 6)
            draw.line([legend.x, ly + 6, legend.x + 16, ly + 6], fill=color, width=2)
            draw.text((legend.x + 20, ly), label, font=font, fill="black")

        image.save(path, format="PNG")


def emit_plots(traces, out_dir, emit_png=False):
    """
    Write mse.svg and regret.svg (and PNG previews) for one or more runs.

    Args:
        traces: dict label -> dict with arrays "t", "regret", "bound" (optional),
            "mse" (optional)
        out_dir: Target directory
        emit_png: Also write mse.png / regret.png

    Returns:
        list of written paths
    """
    out_dir = Path(out_dir)
    written = []
    if not traces or all(len(tr["t"]) == 0 for tr in traces.values()):
        logger.warning("No traces to plot; skipping charts")
        return written

    mse_chart = LineChart("MSE versus time", "t", "MSE")
    regret_chart = LineChart("Dynamic regret versus time", "t", "cumulative regret (log scale)",
                             log_y=True)
    for label, tr in traces.items():
        if tr.get("mse") is not None and np.any(np.isfinite(tr["mse"])):
            mse_chart.add_series(label, tr["t"], tr["mse"])
        regret_chart.add_series(f"{label} regret", tr["t"], tr["regret"])
        if tr.get("bound") is not None and np.any(np.isfinite(tr["bound"])):
            regret_chart.add_series(f"{label} bound", tr["t"], tr["bound"])

    charts = [("regret", regret_chart)]
    if mse_chart.series:
        charts.insert(0, ("mse", mse_chart))
    else:
        logger.warning("No ground truth available; mse chart skipped")

    for name, chart in charts:
        svg_path = out_dir / f"{name}.svg"
        svg_path.write_text(chart.to_svg(), encoding="utf-8")
        written.append(svg_path)
        if emit_png:
            png_path = out_dir / f"{name}.png"
            chart.to_png(png_path)
            written.append(png_path)
    return written
