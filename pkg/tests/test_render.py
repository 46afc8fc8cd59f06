import xml.etree.ElementTree as ET

import pytest
from matplotlib.colors import to_hex
from matplotlib.figure import Figure

from conftest import build_session, times_from_ikis
from tprseg.activity_units import derive_activity_units
from tprseg.hof_analysis import StateTrack
from tprseg.iki_profile import iki_distribution, TranslatorProfile
from tprseg.models import DELETION, INSERTION, SOURCE, StateAnnotation, TARGET
from tprseg.render import (
    _activity_unit_strip, AU_STRIP, GraphSpec, parse_alignment, render_distribution, render_progression_graph,
    RenderError, resolve_colors, target_word_positions,
)
from tprseg.segmentation import segment_session

SVG = "{http://www.w3.org/2000/svg}svg"
PROFILE = TranslatorProfile.from_thresholds("P01", 300, 900)


def graph_inputs():
    times = times_from_ikis([120, 150, 400, 130, 1500, 110, 160])
    texts = list("la_") + list("cas") + ["a", "sa"]
    kinds = [INSERTION] * 5 + [DELETION, INSERTION, INSERTION]
    session = build_session(times, texts=texts, kinds=kinds,
                            fixations=[(50, 200, SOURCE, 2), (900, 150, TARGET, 1)])
    tree = segment_session(session, PROFILE)
    track = StateTrack([StateAnnotation(0, 1000, "F"), StateAnnotation(1000, 4000, "H")], session.key)
    return session, tree, track, derive_activity_units(session, PROFILE)


def test_progression_graph_is_well_formed_svg():
    svg = render_progression_graph(*graph_inputs())
    assert ET.fromstring(svg).tag == SVG
    assert b"SYN/S01" in svg


def test_progression_graph_is_deterministic():
    assert render_progression_graph(*graph_inputs()) == render_progression_graph(*graph_inputs())


def test_graph_without_fixations(session_from_ikis):
    session = session_from_ikis([100, 200])
    svg = render_progression_graph(session, spec=GraphSpec(layers=frozenset({"keystrokes", "fixations"})))
    assert ET.fromstring(svg).tag == SVG


def test_time_window():
    session, tree, track, aus = graph_inputs()
    svg = render_progression_graph(session, tree, track, aus, GraphSpec(start=200, end=900))
    assert ET.fromstring(svg).tag == SVG


def test_activity_units_sit_in_a_bottom_strip():
    session, _, _, aus = graph_inputs()
    axis = Figure().add_subplot(1, 1, 1)
    colors = resolve_colors()
    boxes = _activity_unit_strip(axis, aus, session.start, session.end + 1, colors)

    assert len(boxes.get_paths()) == len(aus)
    bottom, height = AU_STRIP
    for path in boxes.get_paths():
        assert path.vertices[:, 1].min() >= bottom
        assert path.vertices[:, 1].max() <= bottom + height
    assert [to_hex(c) for c in boxes.get_facecolors()] == [colors.get(u.type, "#cccccc") for u in aus]

    assert _activity_unit_strip(axis, aus, session.end + 10, session.end + 100, colors) is None


def test_empty_time_window():
    session, tree, track, aus = graph_inputs()
    with pytest.raises(RenderError, match="empty time range"):
        render_progression_graph(session, tree, track, aus, GraphSpec(start=10_000, end=20_000))


def test_unknown_layer():
    with pytest.raises(RenderError, match="unknown layers"):
        GraphSpec(layers=frozenset({"keystrokes", "heatmap"}))


def test_resolve_colors():
    colors = resolve_colors({"T4": "gold", "tsp": "#EE82EE"})
    assert colors["T4"] == "#ffd700"
    assert colors["tsp"] == "#ee82ee"
    assert colors["T1"] == "#0000ff"
    with pytest.raises(RenderError, match="invalid colour"):
        resolve_colors({"T1": "not-a-colour"})


def test_target_word_positions():
    session = build_session([0, 100, 200, 300, 400], texts=["a", "b", "_", "c", "_"])
    assert target_word_positions(session) == [0, 0, 0, 1, 1]


def test_parse_alignment():
    links = parse_alignment("st_token\ttt_token\n0\t0\n1\t2\n1\t3\n")
    assert links == {0: 0.0, 1: 2.5}
    with pytest.raises(RenderError, match="two word indices"):
        parse_alignment("1\tx\n")


@pytest.mark.parametrize("kind", ["cdf", "density"])
def test_distribution_figure(rng, kind):
    summaries = {
        "BML12": iki_distribution(rng.gamma(2.0, 100.0, size=300), kde=kind == "density"),
        "AR20": iki_distribution(rng.gamma(2.0, 200.0, size=300), kde=kind == "density"),
    }
    svg = render_distribution(summaries, kind, max_x=2000)
    assert ET.fromstring(svg).tag == SVG
    assert svg == render_distribution(summaries, kind, max_x=2000)


def test_single_value_cdf():
    svg = render_distribution(iki_distribution([250]), "cdf")
    assert ET.fromstring(svg).tag == SVG


def test_distribution_errors():
    with pytest.raises(RenderError, match="no distribution"):
        render_distribution({})
    with pytest.raises(RenderError, match="unknown distribution kind"):
        render_distribution(iki_distribution([1, 2]), "violin")
