"""
Activity Units (AU): a tiling of a session's span by reading/writing coordination.

    T1  source text reading            T5  production with source text gaze
    T2  target text reading            T6  production with target text gaze
    T4  production without gaze        T8  no observed activity for more than `silence` ms
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .iki_profile import TranslatorProfile
from .models import SessionLog, SOURCE, StateAnnotation, TARGET
from .report import Column, ReportTable, provenance
from .session_parser import parse_annotations, serialize_annotations

logger = logging.getLogger(__name__)

ST_READING = "T1"
TT_READING = "T2"
PRODUCTION = "T4"
ST_PRODUCTION = "T5"
TT_PRODUCTION = "T6"
IDLE = "T8"
AU_TYPES = (ST_READING, TT_READING, PRODUCTION, ST_PRODUCTION, TT_PRODUCTION, IDLE)
NON_PRODUCTION = (ST_READING, TT_READING, IDLE)


@dataclass(frozen=True)
class ActivityUnit:
    start: int
    end: int
    type: str

    @property
    def duration(self):
        return self.end - self.start

    def todict(self):
        return {"start": self.start, "end": self.end, "type": self.type}


class _Layer:
    """Merged, sorted intervals with the longest member fixation of each."""

    def __init__(self, intervals):
        starts, ends, weights = [], [], []
        for start, end, weight in sorted(intervals):
            if starts and start <= ends[-1]:
                ends[-1] = max(ends[-1], end)
                weights[-1] = max(weights[-1], weight)
            else:
                starts.append(start)
                ends.append(end)
                weights.append(weight)
        self.starts = np.array(starts, dtype=np.int64)
        self.ends = np.array(ends, dtype=np.int64)
        self.weights = np.array(weights, dtype=np.int64)

    def bounds(self):
        return np.concatenate([self.starts, self.ends])

    def weight_at(self, points):
        """Longest fixation of the interval covering each point, 0 where none does."""
        if self.starts.size == 0:
            return np.zeros(points.size, dtype=np.int64)
        idx = np.searchsorted(self.starts, points, side="right") - 1
        safe = np.clip(idx, 0, None)
        inside = (idx >= 0) & (points < self.ends[safe])
        return np.where(inside, self.weights[safe], 0)


def production_intervals(session: SessionLog, tsp):
    """Typing stretches: keystrokes joined while their gap stays below tsp; a lone key spans 1 ms."""
    times = session.key_times()
    if times.size == 0:
        return []
    starts = np.concatenate([[0], np.flatnonzero(np.diff(times) >= tsp) + 1])
    lasts = np.concatenate([starts[1:] - 1, [times.size - 1]])
    intervals = []
    for first, last in zip(starts.tolist(), lasts.tolist()):
        start, end = int(times[first]), int(times[last])
        intervals.append((start, end if end > start else start + 1, 1))
    return intervals


def _merge_equal(units):
    merged = []
    for unit in units:
        if merged and merged[-1].type == unit.type and merged[-1].end == unit.start:
            merged[-1] = ActivityUnit(merged[-1].start, unit.end, unit.type)
        else:
            merged.append(unit)
    return merged


def _absorb_idle(units, silence):
    """Long idle runs become T8, short ones extend the preceding unit."""
    out = []
    pending_start = None
    for start, end, au_type in units:
        if au_type is None and end - start <= silence:
            if out:
                out[-1] = ActivityUnit(out[-1].start, end, out[-1].type)
            elif pending_start is None:
                pending_start = start
            continue
        if pending_start is not None:
            start, pending_start = pending_start, None
        out.append(ActivityUnit(start, end, au_type or IDLE))
    if pending_start is not None:
        # the whole span was a short idle stretch
        out.append(ActivityUnit(pending_start, units[-1][1], IDLE))
    return out


def _merge_slivers(units, min_duration):
    units = list(units)
    while len(units) > 1:
        slivers = [i for i, unit in enumerate(units) if unit.duration < min_duration]
        if not slivers:
            break
        i = min(slivers, key=lambda j: (units[j].duration, j))
        left = units[i - 1] if i > 0 else None
        right = units[i + 1] if i + 1 < len(units) else None
        if right is None or (left is not None and left.duration >= right.duration):
            units[i - 1:i + 1] = [ActivityUnit(left.start, units[i].end, left.type)]
        else:
            units[i:i + 2] = [ActivityUnit(units[i].start, right.end, right.type)]
        units = _merge_equal(units)
    return units


def derive_activity_units(session: SessionLog, profile: TranslatorProfile, silence=1000,
                          min_duration=40) -> List[ActivityUnit]:
    production = _Layer(production_intervals(session, profile.tsp))
    st = _Layer((f.time, f.end, f.duration) for f in session.fixations if f.window == SOURCE)
    tt = _Layer((f.time, f.end, f.duration) for f in session.fixations if f.window == TARGET)

    bounds = np.unique(np.concatenate([production.bounds(), st.bounds(), tt.bounds()]))
    if bounds.size < 2:
        return []
    lefts, rights = bounds[:-1], bounds[1:]
    mids = (lefts + rights) / 2.0

    typing = production.weight_at(mids) > 0
    st_weight = st.weight_at(mids)
    tt_weight = tt.weight_at(mids)
    st_wins = st_weight >= tt_weight

    elementary = []
    for left, right, p, s, t, st_first in zip(
            lefts.tolist(), rights.tolist(), typing, st_weight > 0, tt_weight > 0, st_wins):
        if p and s and t:
            au_type = ST_PRODUCTION if st_first else TT_PRODUCTION
        elif p and s:
            au_type = ST_PRODUCTION
        elif p and t:
            au_type = TT_PRODUCTION
        elif p:
            au_type = PRODUCTION
        elif s and t:
            au_type = ST_READING if st_first else TT_READING
        elif s:
            au_type = ST_READING
        elif t:
            au_type = TT_READING
        else:
            au_type = None
        if elementary and elementary[-1][2] == au_type:
            elementary[-1] = (elementary[-1][0], right, au_type)
        else:
            elementary.append((left, right, au_type))

    units = _merge_equal(_absorb_idle(elementary, silence))
    units = _merge_slivers(units, min_duration)
    logger.debug(f"{session.key}: {len(units)} activity units")
    return units


def serialize_activity_units(units: Iterable[ActivityUnit]) -> str:
    return serialize_annotations(StateAnnotation(u.start, u.end, u.type) for u in units)


def parse_activity_units(stream) -> List[ActivityUnit]:
    return [ActivityUnit(a.start, a.end, a.state) for a in parse_annotations(stream, symbols=AU_TYPES)]


def activity_unit_table(units_by_session: Dict[str, Sequence[ActivityUnit]]) -> ReportTable:
    """Per session and AU type: count, total and mean duration, share of the span."""
    rows = []
    for key in sorted(units_by_session):
        units = units_by_session[key]
        span = sum(u.duration for u in units)
        by_type = defaultdict(list)
        for unit in units:
            by_type[unit.type].append(unit.duration)
        for au_type in AU_TYPES:
            durations = by_type.get(au_type)
            if not durations:
                continue
            rows.append((
                key, au_type, len(durations), sum(durations),
                float(np.mean(durations)), sum(durations) / span if span else 0.0,
            ))
    return ReportTable(
        name="activity_units",
        columns=[
            Column("session", "str"),
            Column("type", "str"),
            Column("count", "int"),
            Column("total_duration", "int", "ms"),
            Column("mean_duration", "float", "ms"),
            Column("share", "float", "fraction"),
        ],
        rows=rows,
        provenance=provenance("derive_activity_units", {}, units_by_session.keys()),
    )
