"""SVG primitives: byte determinism, colormap bounds, input checking."""

import xml.dom.minidom as minidom

import numpy as np
import pytest

from qlert import render
from qlert import mesh as qm


@pytest.fixture(scope="module")
def small_mesh():
    return qm.generate_disk(1.0, 2)


class TestColormap:
    def test_table_has_256_hex_entries(self):
        assert len(render.COLOR_TABLE) == 256
        assert all(c.startswith("#") and len(c) == 7
                   for c in render.COLOR_TABLE)

    def test_endpoints_and_clamping(self):
        assert render.color_at(0.0) == render.COLOR_TABLE[0]
        assert render.color_at(1.0) == render.COLOR_TABLE[-1]
        assert render.color_at(-5.0) == render.COLOR_TABLE[0]
        assert render.color_at(7.0) == render.COLOR_TABLE[-1]
        assert render.color_at(float("nan")) == "#b0b0b0"


class TestHeatmap:
    def test_deterministic_and_well_formed(self, small_mesh):
        values = np.hypot(*qm.element_centroids(small_mesh).T)
        a = render.heatmap(small_mesh, values, title="radius", comment="c")
        b = render.heatmap(small_mesh, values, title="radius", comment="c")
        assert a == b
        minidom.parseString(a)
        assert a.count("<polygon") == small_mesh.element_count
        assert "<!-- c -->" in a

    def test_nan_values_render_gray(self, small_mesh):
        values = np.full(small_mesh.element_count, np.nan)
        values[0] = 1.0
        svg = render.heatmap(small_mesh, values)
        assert "#b0b0b0" in svg

    def test_rejects_wrong_length(self, small_mesh):
        with pytest.raises(ValueError, match="per element"):
            render.heatmap(small_mesh, np.ones(3))

    def test_comment_is_escaped(self, small_mesh):
        svg = render.heatmap(small_mesh, np.ones(small_mesh.element_count),
                             comment="a < b & c")
        minidom.parseString(svg)
        assert "a &lt; b &amp; c" in svg


class TestMaskOverlay:
    def test_fills_flagged_elements(self, small_mesh):
        mask = np.zeros(small_mesh.element_count, dtype=bool)
        mask[:5] = True
        svg = render.mask_overlay(small_mesh, mask, title="flags")
        minidom.parseString(svg)
        assert svg.count("#e8a33d") == 10  # fill + matching stroke
        with pytest.raises(ValueError, match="per element"):
            render.mask_overlay(small_mesh, mask[:-1])

    def test_true_boundary_is_stroked(self, small_mesh):
        mask = np.zeros(small_mesh.element_count, dtype=bool)
        mask[0] = True
        segs = np.array([[0.0, 0.0, 0.5, 0.5]])
        svg = render.mask_overlay(small_mesh, mask, true_boundary=segs)
        assert "#b02020" in svg


class TestLinePlot:
    def test_log_log_plot_has_decade_ticks(self):
        xs = np.geomspace(1e-4, 1.0, 9)
        svg = render.line_plot([("err", xs, xs**2)], log_x=True, log_y=True,
                               xlabel="x", ylabel="y")
        minidom.parseString(svg)
        for decade in ("0.0001", "0.001", "0.01", "0.1", "1"):
            assert f">{decade}</text>" in svg

    def test_nan_points_are_dropped(self):
        ys = np.array([1.0, np.nan, 3.0])
        svg = render.line_plot([("s", np.arange(3.0), ys)])
        assert svg.count(",") >= 2
        minidom.parseString(svg)

    def test_rejects_all_nan_series(self):
        with pytest.raises(ValueError, match="finite"):
            render.line_plot([("s", [1.0], [np.nan])])

    def test_multiple_series_get_distinct_colors(self):
        xs = np.arange(4.0)
        svg = render.line_plot([("a", xs, xs + 1), ("b", xs, xs + 2)])
        assert "#27608d" in svg and "#c03a2b" in svg
