"""
Hesitation / Orientation / Flow (HOF) state analytics over segmented sessions.

Corpus-level operations take `(tree, track)` pairs, one per annotated session, and
report per target language. Trees must first be cut at state boundaries so that no
Task or TS spans two states.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .activity_units import ActivityUnit, NON_PRODUCTION, ST_READING
from .models import DataError, FLOW, HESITATION, ORIENTATION, SessionLog, StateAnnotation, STATES
from .report import Column, ReportTable, provenance
from .segmentation import KeyIndex, SegmentationTree, TASK_LABELS, TaskSegment
from .stats import StatsError, pearson_correlation

logger = logging.getLogger(__name__)

NEAREST = "nearest"
PREVIOUS = "previous"
POLICIES = (NEAREST, PREVIOUS)


class AnalysisError(DataError):
    pass


@dataclass
class StateTrack:
    annotations: List[StateAnnotation]
    session_key: str = ""
    unassigned_policy: str = NEAREST

    def __post_init__(self):
        if self.unassigned_policy not in POLICIES:
            raise AnalysisError(f"unknown unassigned-key policy {self.unassigned_policy!r}")
        for previous, current in zip(self.annotations, self.annotations[1:]):
            if current.start < previous.end:
                raise AnalysisError(f"{self.session_key}: annotations overlap or are out of order at {current.start}")
        self.starts = np.array([a.start for a in self.annotations], dtype=np.int64)
        self.ends = np.array([a.end for a in self.annotations], dtype=np.int64)

    def __len__(self):
        return len(self.annotations)

    @property
    def states(self):
        return [a.state for a in self.annotations]

    def locate(self, times):
        """Annotation index containing each time, -1 outside every annotation."""
        times = np.asarray(times, dtype=np.int64)
        if not self.annotations:
            return np.full(times.size, -1, dtype=np.int64)
        idx = np.searchsorted(self.starts, times, side="right") - 1
        safe = np.clip(idx, 0, None)
        return np.where((idx >= 0) & (times < self.ends[safe]), idx, -1)

    def assign(self, times, warn=True):
        """Like locate, but places outside times by the unassigned policy. Returns (owners, reassigned count)."""
        if not self.annotations:
            raise AnalysisError(f"{self.session_key}: empty state track")
        times = np.asarray(times, dtype=np.int64)
        owners = self.locate(times)
        outside = np.flatnonzero(owners < 0)
        if outside.size:
            t = times[outside]
            if self.unassigned_policy == PREVIOUS:
                owners[outside] = np.clip(np.searchsorted(self.starts, t, side="right") - 1, 0, None)
            else:
                before = self.starts[None, :] - t[:, None]
                after = t[:, None] - self.ends[None, :]
                distance = np.maximum(np.maximum(before, after), 0)
                owners[outside] = np.argmin(distance, axis=1)
            (logger.warning if warn else logger.debug)(
                f"{self.session_key}: {outside.size} keystroke(s) outside every state, "
                f"assigned to the {self.unassigned_policy} state"
            )
        return owners, int(outside.size)


@dataclass
class CutReport:
    session_key: str
    tasks: int = 0
    segments: int = 0
    tasks_cut: int = 0
    segments_cut: int = 0
    reassigned_keys: int = 0
    transitions: Counter = field(default_factory=Counter)

    def todict(self):
        return {
            "session": self.session_key,
            "tasks": self.tasks,
            "segments": self.segments,
            "tasks_cut": self.tasks_cut,
            "segments_cut": self.segments_cut,
            "reassigned_keys": self.reassigned_keys,
            "transitions": {f"{a}->{b}": n for (a, b), n in sorted(self.transitions.items())},
        }


def cut_at_state_boundaries(tree: SegmentationTree, track: StateTrack) -> Tuple[SegmentationTree, CutReport]:
    index = KeyIndex(tree.session.keys)
    owners, reassigned = track.assign(index.times)
    report = CutReport(
        session_key=tree.session.key,
        tasks=len(tree.tasks),
        segments=len(tree.segments),
        reassigned_keys=reassigned,
    )

    segments = []
    for segment in tree.segments:
        fragments = []
        for task in segment.tasks:
            span = owners[task.first:task.last + 1]
            cuts = (np.flatnonzero(span[1:] != span[:-1]) + task.first + 1).tolist()
            if cuts:
                report.tasks_cut += 1
            firsts = [task.first] + cuts
            lasts = [c - 1 for c in cuts] + [task.last]
            for i, (first, last) in enumerate(zip(firsts, lasts)):
                pause = task.pause if i == 0 else index.pause_before(first)
                fragments.append((int(owners[first]), index.task(first, last, pause)))

        groups = []
        for owner, task in fragments:
            if groups and groups[-1][0] == owner:
                groups[-1][1].append(task)
            else:
                groups.append((owner, [task]))

        was_cut = len(groups) > 1
        if was_cut:
            report.segments_cut += 1
            for (a, _), (b, _) in zip(groups, groups[1:]):
                report.transitions[(track.annotations[a].state, track.annotations[b].state)] += 1
        segments += [TaskSegment(tasks=tasks, pause=tasks[0].pause, cut=was_cut) for _, tasks in groups]

    if report.segments_cut:
        logger.debug(f"{tree.session.key}: cut {report.segments_cut} TS(s) and {report.tasks_cut} Task(s)")
    return replace(tree, segments=segments), report


def cut_report_table(reports: Sequence[CutReport]) -> ReportTable:
    transitions = sorted({t for r in reports for t in r.transitions})
    rows = [
        (r.session_key, r.tasks, r.tasks_cut, r.segments, r.segments_cut, r.reassigned_keys,
         *[r.transitions.get(t, 0) for t in transitions])
        for r in reports
    ]
    return ReportTable(
        name="state_cuts",
        columns=[
            Column("session", "str"),
            Column("tasks", "int"),
            Column("tasks_cut", "int"),
            Column("segments", "int"),
            Column("segments_cut", "int"),
            Column("reassigned_keys", "int"),
            *[Column(f"{a}_to_{b}", "int") for a, b in transitions],
        ],
        rows=rows,
        provenance=provenance("cut_at_state_boundaries", {}, [r.session_key for r in reports]),
    )


def _segment_owners(tree: SegmentationTree, track: StateTrack):
    """Annotation index of every TS; the tree must have been cut at state boundaries."""
    owners, _ = track.assign(tree.session.key_times(), warn=False)
    segment_owners = []
    for segment in tree.segments:
        span = owners[segment.first:segment.last + 1]
        if np.any(span != span[0]):
            raise AnalysisError(
                f"{tree.session.key}: TS at {segment.start} ms spans a state boundary, cut the tree first"
            )
        segment_owners.append(int(span[0]))
    return owners, segment_owners


@dataclass
class TransitionMatrix:
    counts: np.ndarray
    order: Tuple[str, ...] = STATES

    @classmethod
    def empty(cls, order=STATES):
        return cls(np.zeros((len(order), len(order)), dtype=np.int64), tuple(order))

    def count(self, a, b):
        return int(self.counts[self.order.index(a), self.order.index(b)])

    def fraction(self, a, b) -> Optional[Fraction]:
        row = int(self.counts[self.order.index(a)].sum())
        if row == 0:
            return None
        return Fraction(self.count(a, b), row)

    @property
    def probabilities(self):
        totals = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, self.counts / np.where(totals > 0, totals, 1), 0.0)

    @property
    def total(self):
        return int(self.counts.sum())

    def todict(self):
        return {
            a: {b: self.count(a, b) for b in self.order if b != a}
            for a in self.order
        }


def transition_matrix(track: StateTrack) -> TransitionMatrix:
    matrix = TransitionMatrix.empty()
    for previous, current in zip(track.annotations, track.annotations[1:]):
        if previous.state != current.state:
            matrix.counts[STATES.index(previous.state), STATES.index(current.state)] += 1
    if matrix.total == 0:
        logger.warning(f"{track.session_key}: no state transitions, matrix is all zeros")
    return matrix


def combine_transition_matrices(matrices: Sequence[TransitionMatrix]) -> TransitionMatrix:
    combined = TransitionMatrix.empty()
    for matrix in matrices:
        combined.counts += matrix.counts
    return combined


def transition_table(matrices: Dict[str, TransitionMatrix]) -> ReportTable:
    rows = []
    for language in sorted(matrices):
        matrix = matrices[language]
        probabilities = matrix.probabilities
        for i, a in enumerate(matrix.order):
            for j, b in enumerate(matrix.order):
                if i != j:
                    rows.append((language, a, b, int(matrix.counts[i, j]), float(probabilities[i, j])))
    return ReportTable(
        name="transitions",
        columns=[
            Column("language", "str"),
            Column("from", "str"),
            Column("to", "str"),
            Column("count", "int"),
            Column("probability", "float"),
        ],
        rows=rows,
        provenance=provenance("transition_matrix", {"order": list(STATES)}, matrices.keys()),
    )


def _by_language(pairs):
    grouped = defaultdict(list)
    for tree, track in pairs:
        grouped[tree.language].append((tree, track))
    return grouped


def _keys_of(pairs):
    return [tree.session.key for tree, _ in pairs]


def state_counts(tracks: Dict[str, Sequence[StateTrack]]) -> ReportTable:
    """Number and share of annotated state instances per language."""
    rows = []
    for language in sorted(tracks):
        counts = Counter(state for track in tracks[language] for state in track.states)
        total = sum(counts.values())
        for state in STATES:
            rows.append((language, state, counts[state], 100.0 * counts[state] / total if total else 0.0))
    return ReportTable(
        name="state_counts",
        columns=[
            Column("language", "str"),
            Column("state", "str"),
            Column("count", "int"),
            Column("pct", "float", "%"),
        ],
        rows=rows,
        provenance=provenance("state_counts", {}, [t.session_key for ts in tracks.values() for t in ts]),
    )


def _segments_by_state(pairs):
    """{language: {state: [TaskSegment, ...]}} over cut trees."""
    grouped = defaultdict(lambda: defaultdict(list))
    for tree, track in pairs:
        _, owners = _segment_owners(tree, track)
        for segment, owner in zip(tree.segments, owners):
            grouped[tree.language][track.annotations[owner].state].append(segment)
    return grouped


def task_distribution_by_state(pairs) -> ReportTable:
    grouped = _segments_by_state(pairs)
    rows = []
    for language in sorted(grouped):
        for state in STATES:
            tasks = [task for segment in grouped[language].get(state, []) for task in segment.tasks]
            if not tasks:
                logger.warning(f"Language {language}: no Tasks in state {state}, row omitted")
                continue
            counts = Counter(task.label for task in tasks)
            rows.append((language, state, len(tasks), *[counts[label] / len(tasks) for label in TASK_LABELS]))
    return ReportTable(
        name="task_distribution",
        columns=[
            Column("language", "str"),
            Column("state", "str"),
            Column("tasks", "int"),
            *[Column(label, "float", "fraction") for label in TASK_LABELS],
        ],
        rows=rows,
        provenance=provenance("task_distribution_by_state", {}, _keys_of(pairs)),
    )


def _ranked_labels(segments):
    return sorted(Counter(s.label for s in segments).items(), key=lambda item: (-item[1], item[0]))


def ts_label_ranking_by_state(pairs, k=6) -> ReportTable:
    grouped = _segments_by_state(pairs)
    rows = []
    for language in sorted(grouped):
        for state in STATES:
            segments = grouped[language].get(state, [])
            for rank, (label, count) in enumerate(_ranked_labels(segments)[:k], 1):
                rows.append((language, state, rank, label, count, count / len(segments)))
    return ReportTable(
        name="ts_label_ranking",
        columns=[
            Column("language", "str"),
            Column("state", "str"),
            Column("rank", "int"),
            Column("label", "str"),
            Column("count", "int"),
            Column("share", "float", "fraction"),
        ],
        rows=rows,
        provenance=provenance("ts_label_ranking_by_state", {"k": k}, _keys_of(pairs)),
    )


def state_label_correlation(pairs, n=20) -> ReportTable:
    """Pearson r between the label frequencies of every two (language, state) columns over the top-n labels."""
    grouped = _segments_by_state(pairs)
    columns = {
        (language, state): Counter(s.label for s in segments)
        for language, states in grouped.items()
        for state, segments in states.items()
        if state != ORIENTATION and segments
    }
    overall = Counter()
    for counts in columns.values():
        overall.update(counts)
    labels = [label for label, _ in sorted(overall.items(), key=lambda item: (-item[1], item[0]))[:n]]

    rows = []
    for a, b in combinations(sorted(columns), 2):
        x = [columns[a][label] for label in labels]
        y = [columns[b][label] for label in labels]
        try:
            result = pearson_correlation(x, y)
        except StatsError as e:
            logger.warning(f"Label frequencies {a} vs {b} skipped ({e})")
            continue
        rows.append((f"{a[1]}:{a[0]}", f"{b[1]}:{b[0]}", len(labels), result.statistic, result.p_value))
    return ReportTable(
        name="state_label_correlation",
        columns=[
            Column("column_a", "str"),
            Column("column_b", "str"),
            Column("labels", "int"),
            Column("pearson_r", "float"),
            Column("p_value", "float"),
        ],
        rows=rows,
        provenance=provenance("state_label_correlation", {"n": n}, _keys_of(pairs)),
    )


SUMMARY_MEASURES = ("duration", "keys", "segments", "tasks", "keys_per_ts", "keys_per_task")


def _session_state_means(tree, track, state):
    """Per-instance means of one state within one session, None if the state never occurs."""
    instances = [i for i, a in enumerate(track.annotations) if a.state == state]
    if not instances:
        return None
    key_owners, segment_owners = _segment_owners(tree, track)
    n = len(track)
    keys = np.bincount(key_owners, minlength=n)
    segments = np.bincount(np.array(segment_owners, dtype=np.int64), minlength=n)
    tasks = np.bincount(
        np.array(segment_owners, dtype=np.int64),
        weights=[len(s.tasks) for s in tree.segments], minlength=n,
    ) if tree.segments else np.zeros(n)

    total_keys = int(keys[instances].sum())
    total_segments = int(segments[instances].sum())
    total_tasks = int(tasks[instances].sum())
    return {
        "duration": float(np.mean([track.annotations[i].duration for i in instances])),
        "keys": total_keys / len(instances),
        "segments": total_segments / len(instances),
        "tasks": total_tasks / len(instances),
        "keys_per_ts": total_keys / total_segments if total_segments else None,
        "keys_per_task": total_keys / total_tasks if total_tasks else None,
    }


def state_summary(pairs, state) -> ReportTable:
    """Per-session means of each state measure, then min/mean/max across sessions, per language."""
    if state not in STATES:
        raise AnalysisError(f"unknown state {state!r}")
    rows = []
    for language, group in sorted(_by_language(pairs).items()):
        sessions = [m for m in (_session_state_means(tree, track, state) for tree, track in group) if m]
        if not sessions:
            continue
        for statistic, reduce in (("min", np.min), ("mean", np.mean), ("max", np.max)):
            values = []
            for measure in SUMMARY_MEASURES:
                present = [s[measure] for s in sessions if s[measure] is not None]
                values.append(float(reduce(present)) if present else None)
            rows.append((language, state, statistic, len(sessions), *values))
    if not rows:
        raise AnalysisError(f"state {state} occurs in no session")
    return ReportTable(
        name=f"state_summary_{state}",
        columns=[
            Column("language", "str"),
            Column("state", "str"),
            Column("statistic", "str"),
            Column("sessions", "int"),
            Column("duration", "float", "ms"),
            Column("keys", "float"),
            Column("segments", "float"),
            Column("tasks", "float"),
            Column("keys_per_ts", "float"),
            Column("keys_per_task", "float"),
        ],
        rows=rows,
        provenance=provenance("state_summary", {"state": state}, _keys_of(pairs)),
    )


def state_pause_time(session: SessionLog, annotation: StateAnnotation, tsp):
    """Time inside the annotation covered by inter-key gaps of at least tsp, clipped at its bounds."""
    times = session.key_times()
    gaps = np.diff(times)
    long_gaps = gaps >= tsp
    lo, hi = times[:-1][long_gaps], times[1:][long_gaps]
    overlap = np.minimum(hi, annotation.end) - np.maximum(lo, annotation.start)
    return int(np.clip(overlap, 0, None).sum())


def pause_fraction_by_state(pairs) -> ReportTable:
    totals = defaultdict(lambda: [0, 0, 0])
    for tree, track in pairs:
        for annotation in track.annotations:
            entry = totals[(tree.language, annotation.state)]
            entry[0] += annotation.duration
            entry[1] += state_pause_time(tree.session, annotation, tree.profile.tsp)
            entry[2] += 1

    rows = [
        (language, state, instances, duration, pause, pause / duration if duration else 0.0)
        for (language, state), (duration, pause, instances) in sorted(
            totals.items(), key=lambda item: (item[0][0], STATES.index(item[0][1])))
    ]
    return ReportTable(
        name="pause_fraction",
        columns=[
            Column("language", "str"),
            Column("state", "str"),
            Column("instances", "int"),
            Column("duration", "int", "ms"),
            Column("pause_time", "int", "ms"),
            Column("fraction", "float", "fraction"),
        ],
        rows=rows,
        provenance=provenance("pause_fraction_by_state", {}, _keys_of(pairs)),
    )


def _orientation_runs(aus: Sequence[ActivityUnit], orientation_min):
    runs = []
    i = 0
    while i < len(aus):
        if aus[i].type not in NON_PRODUCTION:
            i += 1
            continue
        j = i
        while j + 1 < len(aus) and aus[j + 1].type in NON_PRODUCTION:
            j += 1
        start, end = aus[i].start, aus[j].end
        reading = sum(u.duration for u in aus[i:j + 1] if u.type == ST_READING)
        share = reading / (end - start)
        if end - start >= orientation_min and share > 0.5:
            runs.append((start, end, share))
        i = j + 1
    return runs


def _pause_window_share(segments, n):
    """Deletion share of the Tasks either side of the pause that opens segments[n]."""
    window = segments[n].tasks[:1]
    if n > 0:
        window = segments[n - 1].tasks[-1:] + window
    return sum(t.deletions for t in window) / sum(t.keystrokes for t in window)


def _production_states(start, end, segments, tsp, deletion_share):
    """Split [start, end) at TS ends; each piece is H or F by the Tasks around its opening pause."""
    inside = [n for n, s in enumerate(segments) if start <= s.start < end]
    pieces = []
    cursor = start
    for k, n in enumerate(inside):
        segment = segments[n]
        stop = end if k == len(inside) - 1 else min(max(segment.end + 1, cursor), end)
        if stop <= cursor:
            continue
        deletions = _pause_window_share(segments, n)
        pause_ok = segment.pause is not None and segment.pause >= tsp
        if pause_ok and deletions >= deletion_share:
            pieces.append(StateAnnotation(cursor, stop, HESITATION, deletions))
        else:
            pieces.append(StateAnnotation(cursor, stop, FLOW, 1.0 - deletions))
        cursor = stop
    if cursor < end:
        pieces.append(StateAnnotation(cursor, end, FLOW, 0.0))
    return pieces


def _merge_states(annotations):
    merged = []
    for a in annotations:
        if merged and merged[-1].state == a.state and merged[-1].end == a.start:
            prev = merged[-1]
            weight = prev.duration + a.duration
            confidence = (prev.confidence * prev.duration + a.confidence * a.duration) / weight
            merged[-1] = StateAnnotation(prev.start, a.end, a.state, confidence)
        else:
            merged.append(a)
    return merged


def suggest_hof_states(session: SessionLog, tree: SegmentationTree, aus: Sequence[ActivityUnit],
                       orientation_min=2500, deletion_share=0.4) -> List[StateAnnotation]:
    """
    Draft a HOF track for hand correction.

    Orientation: production-free stretches of at least `orientation_min` ms dominated by
    source text reading. Hesitation: a TS opened by a TSP-class pause with at least
    `deletion_share` deletions among the Tasks just before and after that pause. Flow: the remainder.
    """
    if aus:
        span_start, span_end = aus[0].start, aus[-1].end
    else:
        span_start, span_end = session.start, session.end
    if span_end <= span_start:
        return []

    drafts = []
    cursor = span_start
    for start, end, share in _orientation_runs(aus, orientation_min):
        if start > cursor:
            drafts += _production_states(cursor, start, tree.segments, tree.profile.tsp, deletion_share)
        drafts.append(StateAnnotation(start, end, ORIENTATION, share))
        cursor = end
    if cursor < span_end:
        drafts += _production_states(cursor, span_end, tree.segments, tree.profile.tsp, deletion_share)

    drafts = _merge_states(drafts)
    return [replace(a, confidence=round(a.confidence, 4)) for a in drafts]


def annotation_agreement(suggested: Sequence[StateAnnotation], gold: Sequence[StateAnnotation]) -> float:
    """Share of the drafted span where the drafted state equals the annotated one."""
    if not suggested:
        return 0.0
    bounds = sorted({a.start for a in suggested} | {a.end for a in suggested}
                    | {a.start for a in gold} | {a.end for a in gold})
    drafted = StateTrack(list(suggested))
    annotated = StateTrack(list(gold))
    lefts = np.array(bounds[:-1], dtype=np.int64)
    widths = np.diff(np.array(bounds, dtype=np.int64))

    d = drafted.locate(lefts)
    g = annotated.locate(lefts)
    d_states = np.array([drafted.annotations[i].state if i >= 0 else "" for i in d])
    g_states = np.array([annotated.annotations[i].state if i >= 0 else "" for i in g])
    covered = d >= 0
    span = widths[covered].sum()
    if span == 0:
        return 0.0
    agree = widths[covered & (g >= 0) & (d_states == g_states)].sum()
    return float(agree / span)
