from pathlib import Path

import pytest

from models.exceptions import RadgateValidationError
from models.feature_models import CurveSeries
from reporting.svg_plots import HIGHLIGHT, PLAIN, SvgPlot, emit_svg, fmt


def _heatmap() -> SvgPlot:
    series = CurveSeries("heatmap", "|rho|", (0.0, 1.0), (1.0, 0.25, 0.25, float("nan")), labels=("a", "b"))
    return SvgPlot("heatmap", "correlation_matrix", [series])


def test_number_format() -> None:
    assert fmt(3) == "3"
    assert fmt(0.123456789) == "0.123457"
    assert fmt(-0.0) == "0"


def test_heatmap_cells_and_colorbar() -> None:
    text = _heatmap().render()

    assert text.count('class="cell"') == 4
    colorbar = text.split('<g class="colorbar">')[1].split("</g>")[0]
    assert colorbar.count("<rect") == 10
    assert 'fill="#7b3294"' in text
    assert 'fill="#bdbdbd"' in text


def test_heatmap_frame_is_square() -> None:
    frame = _heatmap().to_frame()

    assert list(frame.columns) == ["feature", "a", "b"]
    assert frame.loc[0, "b"] == 0.25


def test_bars_are_highlighted() -> None:
    series = CurveSeries("bar", "p", (0.0, 1.0), (0.01, 0.6), highlight=(True, False), labels=("x", "y"))

    text = SvgPlot("bar", "mann_whitney", [series], threshold=0.05).render()

    assert text.count('class="bar highlight"') == 1
    assert text.count('class="bar"') == 1
    assert f'fill="{HIGHLIGHT}"' in text and f'fill="{PLAIN}"' in text
    assert 'class="threshold"' in text


def test_roc_curves_above_the_threshold_stand_out() -> None:
    strong = CurveSeries("roc", "f1", (0.0, 0.0, 1.0), (0.0, 1.0, 1.0), summary=1.0)
    weak = CurveSeries("roc", "f2", (0.0, 1.0), (0.0, 1.0), summary=0.5)

    text = SvgPlot("roc", "roc_curves", [strong, weak], threshold=0.7).render()

    assert text.count('class="curve highlight"') == 1
    assert "f1 (AUC 1)" in text
    assert 'class="chance"' in text


def test_curve_flag_wins_over_the_threshold() -> None:
    flagged = CurveSeries("roc", "f1", (0.0, 1.0), (0.0, 1.0), summary=0.5, highlight=(True,))
    unflagged = CurveSeries("roc", "f2", (0.0, 0.0, 1.0), (0.0, 1.0, 1.0), summary=1.0, highlight=(False,))

    plot = SvgPlot("roc", "roc_curves", [flagged, unflagged], threshold=0.7)

    assert plot.render().count('class="curve highlight"') == 1
    assert plot.to_frame()["highlight"].tolist() == [1, 1, 0, 0, 0]
    with pytest.raises(RadgateValidationError):
        CurveSeries("roc", "two", (0.0, 1.0), (0.0, 1.0), highlight=(True, False))


def test_labels_are_escaped() -> None:
    series = CurveSeries("pr", "<vol> & co", (0.5, 1.0), (1.0, 0.5), summary=0.75)

    text = SvgPlot("pr", "pr", [series]).render()

    assert "&lt;vol&gt; &amp; co (AP 0.75)" in text


def test_histogram_panels_per_feature() -> None:
    series = [
        CurveSeries("histogram", "0", (0.0, 1.0, 2.0), (3.0, 1.0), group="f1"),
        CurveSeries("histogram", "1", (0.0, 1.0, 2.0), (0.0, 2.0), group="f1"),
        CurveSeries("histogram", "0", (5.0, 6.0), (4.0,), group="f2"),
    ]

    plot = SvgPlot("histogram", "feature_distributions", series)

    assert plot.render().count('class="bin"') == 5
    assert list(plot.to_frame().columns) == ["group", "series", "bin_start", "bin_end", "count"]


def test_series_kind_must_match() -> None:
    with pytest.raises(RadgateValidationError):
        SvgPlot("bar", "mixed", [CurveSeries("pr", "a", (1.0,), (1.0,))])
    with pytest.raises(RadgateValidationError):
        CurveSeries("roc", "bad", (0.5, 0.2), (0.0, 1.0))


def test_rendering_is_byte_stable(tmp_path: Path) -> None:
    first = emit_svg(_heatmap(), tmp_path / "a.svg")
    second = emit_svg(_heatmap(), tmp_path / "b.svg")

    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().endswith("</svg>\n")
