"""
SVG rendering of progression graphs and IKI distribution figures.

Figures are drawn on a bare matplotlib Figure (no pyplot state) with a fixed SVG hash
salt and no date metadata, so identical inputs give identical bytes.
"""

import io
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from PIL import ImageColor

from .activity_units import ActivityUnit
from .config import DEFAULT_COLORS
from .iki_profile import DistributionSummary
from .models import DataError, DELETION, SessionLog, SOURCE, TARGET
from .segmentation import SegmentationTree

logger = logging.getLogger(__name__)

LAYERS = frozenset({"keystrokes", "fixations", "aus", "tasks", "segments", "tsp", "states"})
SVG_SETTINGS = {
    "svg.hashsalt": "tprseg",
    "svg.fonttype": "none",
    "path.simplify": False,
}
MAX_TICK_LABELS = 60
AU_STRIP = (0.0, 0.04)


class RenderError(DataError):
    pass


def resolve_colors(overrides: Optional[Dict[str, str]] = None) -> Dict[str, str]:
    """Default colour map updated with overrides, every entry normalised to #rrggbb."""
    colors = dict(DEFAULT_COLORS)
    colors.update(overrides or {})
    resolved = {}
    for name, value in colors.items():
        try:
            rgb = ImageColor.getrgb(value)
        except ValueError:
            raise RenderError(f"invalid colour {value!r} for {name}")
        resolved[name] = "#{:02x}{:02x}{:02x}".format(*rgb[:3])
    return resolved


@dataclass
class GraphSpec:
    start: Optional[int] = None
    end: Optional[int] = None
    layers: FrozenSet[str] = LAYERS
    colors: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_COLORS))
    width: float = 12.0
    height: float = 6.0
    font_size: float = 9.0
    st_tokens: Optional[List[str]] = None
    tt_tokens: Optional[List[str]] = None
    alignment: Optional[Dict[int, float]] = None

    def __post_init__(self):
        unknown = set(self.layers) - LAYERS
        if unknown:
            raise RenderError(f"unknown layers: {', '.join(sorted(unknown))}")

    def window(self, session: SessionLog):
        """The requested time range intersected with the session span."""
        start = session.start if self.start is None else max(self.start, session.start)
        end = session.end if self.end is None else min(self.end, session.end)
        if end <= start:
            raise RenderError(f"empty time range [{start}, {end}] for {session.key}")
        return start, end


def parse_alignment(stream) -> Dict[int, float]:
    """`st_token<TAB>tt_token` word-index pairs -> ST index to mean aligned TT index."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    links = {}
    for line_num, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "st_token":
            continue
        try:
            st, tt = int(fields[0]), int(fields[1])
        except (ValueError, IndexError):
            raise RenderError(f"alignment line {line_num}: expected two word indices, got {line!r}")
        links.setdefault(st, []).append(tt)
    return {st: sum(tts) / len(tts) for st, tts in links.items()}


def target_word_positions(session: SessionLog) -> List[int]:
    """Word index of every keystroke in the emerging target text, replayed from the key log."""
    text = []
    positions = []
    for key in session.keys:
        cursor = min(key.cursor, len(text))
        completed = "".join(text[:cursor]).split("_")[:-1]
        positions.append(sum(1 for word in completed if word))
        if key.kind == DELETION:
            del text[cursor:cursor + len(key.text)]
        else:
            text[cursor:cursor] = list(key.text)
    return positions


def _svg_bytes(figure):
    FigureCanvasSVG(figure)
    buffer = io.BytesIO()
    figure.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def _token_ticks(axis, tokens, low, high):
    if not tokens:
        return
    visible = [i for i in range(len(tokens)) if low <= i <= high]
    if 0 < len(visible) <= MAX_TICK_LABELS:
        axis.set_yticks(visible)
        axis.set_yticklabels([tokens[i] for i in visible])


def _activity_unit_strip(axis, aus, start, end, colors):
    """One coloured box per AU along the bottom of the plot, in axes height units."""
    shown = [u for u in aus if u.end > start and u.start < end]
    if not shown:
        return None
    spans = [(max(u.start, start), min(u.end, end) - max(u.start, start)) for u in shown]
    return axis.broken_barh(spans, AU_STRIP, transform=axis.get_xaxis_transform(),
                            facecolors=[colors.get(u.type, "#cccccc") for u in shown], linewidth=0)


def render_progression_graph(session: SessionLog, tree: Optional[SegmentationTree] = None, track=None,
                             aus: Optional[Sequence[ActivityUnit]] = None, spec: Optional[GraphSpec] = None) -> bytes:
    spec = spec or GraphSpec()
    start, end = spec.window(session)
    colors = resolve_colors(spec.colors)

    def wanted(layer, available=True):
        if layer not in spec.layers:
            return False
        if not available:
            logger.info(f"{session.key}: no data for the {layer} layer, skipped")
        return available

    with matplotlib.rc_context({**SVG_SETTINGS, "font.size": spec.font_size}):
        figure = Figure(figsize=(spec.width, spec.height))
        st_axis = figure.add_subplot(1, 1, 1)
        tt_axis = st_axis.twinx()
        band = st_axis.get_xaxis_transform()

        y_values = [0]
        if wanted("keystrokes"):
            words = target_word_positions(session)
            for key, word in zip(session.keys, words):
                if start <= key.time <= end:
                    color = colors["deletion"] if key.kind == DELETION else colors["insertion"]
                    tt_axis.text(key.time, word, key.text, color=color, ha="center", va="center",
                                 fontsize=spec.font_size * 0.8)
                    y_values.append(word)

        if wanted("fixations", bool(session.fixations)):
            for window, axis, marker, color in (
                    (SOURCE, st_axis, "o", colors["fix_source"]), (TARGET, tt_axis, "D", colors["fix_target"])):
                shown = [f for f in session.fixations if f.window == window and start <= f.time <= end]
                if not shown:
                    continue
                if window == SOURCE and spec.alignment:
                    ys = [spec.alignment.get(f.token_index, f.token_index) for f in shown]
                else:
                    ys = [f.token_index for f in shown]
                axis.scatter([f.time for f in shown], ys, marker=marker, s=12, color=color, linewidths=0)
                y_values += ys

        if wanted("aus", bool(aus)):
            _activity_unit_strip(st_axis, aus, start, end, colors)

        segments = tree.segments if tree is not None else []
        if wanted("segments", tree is not None):
            for segment in segments:
                if segment.end >= start and segment.start <= end:
                    st_axis.broken_barh([(segment.start, max(segment.duration, 1))], (0.96, 0.03),
                                        transform=band, color=colors["segment"])
        if wanted("tasks", tree is not None):
            for task in tree.tasks:
                if task.end >= start and task.start <= end:
                    st_axis.broken_barh([(task.start, max(task.duration, 1))], (0.92, 0.03),
                                        transform=band, color=colors["task"])
        if wanted("tsp", tree is not None):
            for previous, segment in zip(segments, segments[1:]):
                if segment.pause is not None and segment.pause >= tree.profile.tsp \
                        and segment.start >= start and previous.end <= end:
                    st_axis.broken_barh([(previous.end, segment.start - previous.end)], (0.955, 0.04),
                                        transform=band, facecolor="none", edgecolor=colors["tsp"])

        if wanted("states", track is not None and len(track) > 0):
            st_axis.plot([0, 1], [0.86, 0.86], transform=st_axis.transAxes, linestyle="--", color="#808080",
                         linewidth=0.8)
            for annotation in track.annotations:
                if annotation.end <= start or annotation.start >= end:
                    continue
                left, right = max(annotation.start, start), min(annotation.end, end)
                st_axis.axvline(left, ymin=0.86, ymax=0.9, color="#808080", linewidth=0.8)
                st_axis.text((left + right) / 2, 0.875, annotation.state, transform=band, ha="center",
                             va="center", fontsize=spec.font_size)

        low, high = min(y_values), max(y_values)
        for axis in (st_axis, tt_axis):
            axis.set_ylim(low - 1, high + 3)
        _token_ticks(st_axis, spec.st_tokens, low, high)
        _token_ticks(tt_axis, spec.tt_tokens, low, high)

        st_axis.set_xlim(start, end)
        st_axis.set_xlabel("time (ms)")
        st_axis.set_ylabel("ST tokens")
        tt_axis.set_ylabel("TT tokens")
        st_axis.set_title(f"{session.key} ({session.source_lang}-{session.target_lang})")
        return _svg_bytes(figure)


def render_distribution(summaries, kind="cdf", spec: Optional[GraphSpec] = None, max_x=None) -> bytes:
    """Overlay one or more named DistributionSummary objects as densities or CDFs."""
    if isinstance(summaries, DistributionSummary):
        summaries = {"": summaries}
    if not summaries:
        raise RenderError("no distribution to render")
    if kind not in ("density", "cdf"):
        raise RenderError(f"unknown distribution kind {kind!r}")
    spec = spec or GraphSpec()

    with matplotlib.rc_context({**SVG_SETTINGS, "font.size": spec.font_size}):
        figure = Figure(figsize=(spec.width, spec.height))
        axis = figure.add_subplot(1, 1, 1)
        palette = matplotlib.colormaps["tab10"]

        for n, name in enumerate(sorted(summaries)):
            summary = summaries[name]
            if summary.count == 0:
                raise RenderError(f"empty distribution {name!r}")
            color = palette(n % 10)
            if kind == "cdf":
                xs = [x for x, _ in summary.cdf]
                fs = [f for _, f in summary.cdf]
                axis.step([xs[0]] + xs, [0.0] + fs, where="post", color=color, label=name or None)
            else:
                edges = [a for a, _, _ in summary.histogram] + [summary.histogram[-1][1]]
                heights = [c / (summary.count * (b - a)) for a, b, c in summary.histogram]
                axis.stairs(heights, edges, color=color, alpha=0.6, label=name or None)
                if summary.density:
                    axis.plot([x for x, _ in summary.density], [y for _, y in summary.density], color=color)
            axis.axvline(summary.mean, color=color, linestyle="-", linewidth=1)
            axis.axvline(summary.median, color=color, linestyle=":", linewidth=1)

        if max_x is not None:
            axis.set_xlim(left=min(0, axis.get_xlim()[0]), right=max_x)
        axis.set_xlabel("IKI (ms)")
        axis.set_ylabel("probability" if kind == "cdf" else "probability density")
        if any(summaries):
            axis.legend(loc="lower right" if kind == "cdf" else "upper right")
        return _svg_bytes(figure)
