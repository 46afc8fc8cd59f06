"""
Motor programs, Tasks and Task Segments (TS).

A session's keystrokes are cut at three pause levels:

    iki <  delay_threshold          inside a motor program
    iki >= rsp                      a respite, starts a new Task
    iki >= tsp                      a task segment pause, starts a new TS

Every pause belongs to the unit that follows it; the first unit of a session has no
preceding pause (None).
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np

from .iki_profile import TranslatorProfile
from .models import DataError, KeyEvent, SessionLog, DELETION
from .report import Column, ReportTable, provenance
from .stats import KENDALL, SPEARMAN, StatsError, median, pearson_correlation, rank_correlation

logger = logging.getLogger(__name__)

INSERTION_TASK = "A"
DELETION_TASK = "D"
MIXED_TASK = "C"
TASK_LABELS = (INSERTION_TASK, DELETION_TASK, MIXED_TASK)

ALL_LANGUAGES = "all"


class SegmentationError(DataError):
    pass


@dataclass(frozen=True)
class MotorProgram:
    first: int
    last: int
    start: int
    end: int

    @property
    def keystrokes(self):
        return self.last - self.first + 1


@dataclass
class Task:
    first: int
    last: int
    start: int
    end: int
    pause: Optional[int]
    insertions: int
    deletions: int
    label: Optional[str] = None

    @property
    def keystrokes(self):
        return self.last - self.first + 1

    @property
    def duration(self):
        return self.end - self.start

    def todict(self):
        return {
            "first": self.first,
            "last": self.last,
            "start": self.start,
            "end": self.end,
            "pause": self.pause,
            "label": self.label,
            "keystrokes": self.keystrokes,
        }


@dataclass
class TaskSegment:
    tasks: List[Task]
    pause: Optional[int]
    cut: bool = False

    @property
    def label(self):
        return "".join(task.label or label_task(task) for task in self.tasks)

    @property
    def first(self):
        return self.tasks[0].first

    @property
    def last(self):
        return self.tasks[-1].last

    @property
    def start(self):
        return self.tasks[0].start

    @property
    def end(self):
        return self.tasks[-1].end

    @property
    def duration(self):
        return self.end - self.start

    @property
    def keystrokes(self):
        return self.last - self.first + 1

    @property
    def mean_iki(self):
        """Mean of the IKIs inside the segment; None for a one-key segment."""
        if self.keystrokes < 2:
            return None
        return self.duration / (self.keystrokes - 1)

    def todict(self):
        return {
            "label": self.label,
            "pause": self.pause,
            "start": self.start,
            "end": self.end,
            "keystrokes": self.keystrokes,
            "cut": self.cut,
            "tasks": [task.todict() for task in self.tasks],
        }


class KeyIndex:
    """Times and running deletion counts of a session's keystrokes, for building Tasks."""

    def __init__(self, keys: Sequence[KeyEvent]):
        if not keys:
            raise SegmentationError("no keystrokes to segment")
        self.times = np.fromiter((k.time for k in keys), dtype=np.int64, count=len(keys))
        deletions = np.fromiter((k.kind == DELETION for k in keys), dtype=np.int64, count=len(keys))
        self._deletions = np.concatenate([[0], np.cumsum(deletions)]).tolist()
        self._times = self.times.tolist()

    def __len__(self):
        return self.times.size

    @property
    def ikis(self):
        return np.diff(self.times)

    def pause_before(self, index):
        return None if index == 0 else self._times[index] - self._times[index - 1]

    def task(self, first, last, pause=None) -> Task:
        deletions = self._deletions[last + 1] - self._deletions[first]
        task = Task(
            first=first,
            last=last,
            start=self._times[first],
            end=self._times[last],
            pause=pause,
            insertions=last - first + 1 - deletions,
            deletions=deletions,
        )
        task.label = label_task(task)
        return task


def _runs(times, threshold):
    """(first, last) index pairs of the maximal runs whose internal IKIs are < threshold."""
    starts = np.concatenate([[0], np.flatnonzero(np.diff(times) >= threshold) + 1])
    lasts = np.concatenate([starts[1:] - 1, [times.size - 1]])
    return zip(starts.tolist(), lasts.tolist())


def split_motor_programs(keys: Sequence[KeyEvent], delay_threshold=200) -> List[MotorProgram]:
    index = KeyIndex(keys)
    times = index.times.tolist()
    return [
        MotorProgram(first, last, times[first], times[last])
        for first, last in _runs(index.times, delay_threshold)
    ]


def split_tasks(keys: Sequence[KeyEvent], profile: TranslatorProfile) -> List[Task]:
    if not profile.valid:
        raise SegmentationError(
            f"profile of {profile.translator_id} is invalid (TSP {profile.tsp:g} <= RSP {profile.task_threshold:g})"
        )
    index = KeyIndex(keys)
    return [
        index.task(first, last, index.pause_before(first))
        for first, last in _runs(index.times, profile.task_threshold)
    ]


def split_task_segments(tasks: Sequence[Task], profile: TranslatorProfile) -> List[TaskSegment]:
    segments = []
    for task in tasks:
        if task.label is None:
            task.label = label_task(task)
        if not segments or task.pause is None or task.pause >= profile.tsp:
            segments.append(TaskSegment(tasks=[task], pause=task.pause))
        else:
            segments[-1].tasks.append(task)
    return segments


def label_task(task: Task) -> str:
    if task.keystrokes <= 0:
        raise SegmentationError("cannot label an empty Task")
    if task.deletions == 0:
        return INSERTION_TASK
    if task.insertions == 0:
        return DELETION_TASK
    return MIXED_TASK


@dataclass
class SegmentationTree:
    session: SessionLog
    profile: TranslatorProfile
    segments: List[TaskSegment]
    motor_programs: List[MotorProgram] = field(default_factory=list)
    delay_threshold: int = 200

    @property
    def tasks(self):
        return [task for segment in self.segments for task in segment.tasks]

    @property
    def keystrokes(self):
        return sum(segment.keystrokes for segment in self.segments)

    @property
    def language(self):
        return self.session.target_lang

    @property
    def translator_id(self):
        return self.session.translator_id

    def key_owners(self):
        """Per keystroke: the index of its Task and of its TS (-1 if unowned)."""
        n = len(self.session.keys)
        task_of = np.full(n, -1, dtype=np.int64)
        segment_of = np.full(n, -1, dtype=np.int64)
        task_num = 0
        for segment_num, segment in enumerate(self.segments):
            segment_of[segment.first:segment.last + 1] = segment_num
            for task in segment.tasks:
                task_of[task.first:task.last + 1] = task_num
                task_num += 1
        return task_of, segment_of

    def task_rows(self):
        rows = []
        for segment_num, segment in enumerate(self.segments):
            for task_num, task in enumerate(segment.tasks):
                rows.append((
                    self.session.key, self.translator_id, segment_num, task_num, task.label, segment.label,
                    task.first, task.last, task.start, task.end, task.pause, task.keystrokes,
                ))
        return rows

    def todict(self):
        return {
            "session": self.session.key,
            "translator": self.translator_id,
            "language": self.language,
            "rsp": self.profile.task_threshold,
            "tsp": self.profile.tsp,
            "delay_threshold": self.delay_threshold,
            "motor_programs": len(self.motor_programs),
            "segments": [segment.todict() for segment in self.segments],
        }


TASK_COLUMNS = [
    Column("session", "str"),
    Column("translator", "str"),
    Column("segment", "int"),
    Column("task", "int"),
    Column("label", "str"),
    Column("segment_label", "str"),
    Column("first_key", "int"),
    Column("last_key", "int"),
    Column("start", "int", "ms"),
    Column("end", "int", "ms"),
    Column("pause", "int", "ms"),
    Column("keystrokes", "int"),
]


def task_table(trees: Sequence[SegmentationTree]) -> ReportTable:
    return ReportTable(
        name="tasks",
        columns=list(TASK_COLUMNS),
        rows=[row for tree in trees for row in tree.task_rows()],
        provenance=provenance("segment_session", {"trees": len(trees)}, [t.session.key for t in trees]),
    )


def segment_session(session: SessionLog, profile: TranslatorProfile, delay_threshold=200) -> SegmentationTree:
    if profile.translator_id != session.translator_id:
        raise SegmentationError(f"{session.key}: profile is for {profile.translator_id}, not {session.translator_id}")
    tasks = split_tasks(session.keys, profile)
    segments = split_task_segments(tasks, profile)
    tree = SegmentationTree(
        session=session,
        profile=profile,
        segments=segments,
        motor_programs=split_motor_programs(session.keys, delay_threshold),
        delay_threshold=delay_threshold,
    )
    logger.debug(f"Segmented {session.key}: {len(tasks)} Tasks in {len(segments)} TSs")
    return tree


def _require_trees(trees):
    trees = list(trees)
    if not trees:
        raise SegmentationError("no segmentation trees")
    return trees


def _segments_by_language(trees):
    by_language = defaultdict(list)
    for tree in trees:
        by_language[tree.language].extend(tree.segments)
    return by_language


def corpus_ts_summary(trees: Sequence[SegmentationTree]) -> ReportTable:
    """One row per TS label, most frequent first."""
    trees = _require_trees(trees)
    by_language = _segments_by_language(trees)
    languages = sorted(by_language)

    by_label = defaultdict(list)
    for tree in trees:
        for segment in tree.segments:
            by_label[segment.label].append((tree.language, segment))
    total = sum(len(entries) for entries in by_label.values())

    rows = []
    for label, entries in by_label.items():
        segments = [segment for _, segment in entries]
        per_language = Counter(language for language, _ in entries)
        internal = sum(s.keystrokes - 1 for s in segments)
        tasks = sum(len(s.tasks) for s in segments)
        rows.append((
            label,
            len(segments),
            100.0 * len(segments) / total,
            *[100.0 * per_language[language] / len(by_language[language]) for language in languages],
            float(np.mean([s.duration for s in segments])),
            sum(s.duration for s in segments) / internal if internal else None,
            sum(s.keystrokes for s in segments) / tasks,
        ))
    rows.sort(key=lambda row: (-row[1], row[0]))

    return ReportTable(
        name="ts_labels",
        columns=[
            Column("label", "str"),
            Column("count", "int"),
            Column("pct", "float", "%"),
            *[Column(f"pct_{language}", "float", "%") for language in languages],
            Column("mean_duration", "float", "ms"),
            Column("mean_iki", "float", "ms"),
            Column("keys_per_task", "float"),
        ],
        rows=rows,
        provenance=provenance("corpus_ts_summary", {"languages": languages}, [t.session.key for t in trees]),
    )


def is_a_only(label):
    return bool(label) and set(label) == {INSERTION_TASK}


@dataclass(frozen=True)
class Coverage:
    segments: int
    keystrokes: int
    a_only_segments: int
    a_only_keystrokes: int

    @property
    def segment_fraction(self):
        return self.a_only_segments / self.segments if self.segments else 0.0

    @property
    def keystroke_fraction(self):
        return self.a_only_keystrokes / self.keystrokes if self.keystrokes else 0.0

    def todict(self):
        return {
            "segments": self.segments,
            "keystrokes": self.keystrokes,
            "a_only_segments": self.a_only_segments,
            "a_only_keystrokes": self.a_only_keystrokes,
            "segment_fraction": self.segment_fraction,
            "keystroke_fraction": self.keystroke_fraction,
        }


def a_only_coverage(trees: Sequence[SegmentationTree]) -> Coverage:
    trees = _require_trees(trees)
    segments = [segment for tree in trees for segment in tree.segments]
    a_only = [segment for segment in segments if is_a_only(segment.label)]
    return Coverage(
        segments=len(segments),
        keystrokes=sum(s.keystrokes for s in segments),
        a_only_segments=len(a_only),
        a_only_keystrokes=sum(s.keystrokes for s in a_only),
    )


def coverage_table(trees: Sequence[SegmentationTree]) -> ReportTable:
    trees = _require_trees(trees)
    by_language = defaultdict(list)
    for tree in trees:
        by_language[tree.language].append(tree)
    groups = [(language, by_language[language]) for language in sorted(by_language)]
    if len(groups) > 1:
        groups.append((ALL_LANGUAGES, trees))

    rows = []
    for language, group in groups:
        coverage = a_only_coverage(group)
        rows.append((
            language, coverage.segments, coverage.a_only_segments, coverage.segment_fraction,
            coverage.keystrokes, coverage.a_only_keystrokes, coverage.keystroke_fraction,
        ))
    return ReportTable(
        name="a_only_coverage",
        columns=[
            Column("language", "str"),
            Column("segments", "int"),
            Column("a_only_segments", "int"),
            Column("segment_fraction", "float", "fraction"),
            Column("keystrokes", "int"),
            Column("a_only_keystrokes", "int"),
            Column("keystroke_fraction", "float", "fraction"),
        ],
        rows=rows,
        provenance=provenance("a_only_coverage", {}, [t.session.key for t in trees]),
    )


@dataclass
class _TranslatorTotals:
    segments: int = 0
    tasks: int = 0
    keystrokes: int = 0
    profile: Optional[TranslatorProfile] = None

    @property
    def tasks_per_ts(self):
        return self.tasks / self.segments

    @property
    def keys_per_ts(self):
        return self.keystrokes / self.segments

    @property
    def keys_per_task(self):
        return self.keystrokes / self.tasks


def _translator_totals(trees) -> Dict[str, Dict[str, _TranslatorTotals]]:
    totals = defaultdict(lambda: defaultdict(_TranslatorTotals))
    for tree in trees:
        entry = totals[tree.language][tree.translator_id]
        entry.segments += len(tree.segments)
        entry.tasks += sum(len(s.tasks) for s in tree.segments)
        entry.keystrokes += tree.keystrokes
        entry.profile = tree.profile
    return totals


HIERARCHY_PAIRS = (
    ("tasks_per_ts", "keys_per_ts"),
    ("tasks_per_ts", "keys_per_task"),
    ("rsp", "tsp"),
)


def _measure(entry, name):
    if name == "rsp":
        return entry.profile.rsp
    if name == "tsp":
        return entry.profile.tsp
    return getattr(entry, name)


def hierarchy_correlations(trees: Sequence[SegmentationTree], exact_max=10) -> ReportTable:
    """Rank correlations across translators, per language, of hierarchy sizes and of RSP vs TSP."""
    trees = _require_trees(trees)
    totals = _translator_totals(trees)

    rows = []
    for language in sorted(totals):
        entries = [totals[language][t] for t in sorted(totals[language])]
        if len(entries) < 3:
            logger.warning(f"Language {language}: {len(entries)} translator(s), correlations need 3")
            continue
        for x_name, y_name in HIERARCHY_PAIRS:
            x = [_measure(e, x_name) for e in entries]
            y = [_measure(e, y_name) for e in entries]
            for flavor in (SPEARMAN, KENDALL):
                try:
                    result = rank_correlation(x, y, flavor, exact_max=exact_max)
                except StatsError as e:
                    logger.warning(f"Language {language}: {x_name} vs {y_name} skipped ({e})")
                    break
                rows.append((
                    language, x_name, y_name, flavor, result.n, result.statistic, result.p_value, result.method,
                ))

    if not rows:
        raise SegmentationError("insufficient data for hierarchy correlations (need 3 translators per language)")

    return ReportTable(
        name="hierarchy_correlations",
        columns=[
            Column("language", "str"),
            Column("x", "str"),
            Column("y", "str"),
            Column("flavor", "str"),
            Column("translators", "int"),
            Column("coefficient", "float"),
            Column("p_value", "float"),
            Column("method", "str"),
        ],
        rows=rows,
        provenance=provenance("hierarchy_correlations", {"exact_max": exact_max}, [t.session.key for t in trees]),
    )


def translator_hierarchy_summary(trees: Sequence[SegmentationTree]) -> ReportTable:
    """Per language: min/max/mean/median of per-translator Tasks/TS, keys/TS and keys/Task."""
    trees = _require_trees(trees)
    totals = _translator_totals(trees)
    rows = []
    for language in sorted(totals):
        entries = list(totals[language].values())
        for measure in ("tasks_per_ts", "keys_per_ts", "keys_per_task"):
            values = np.array([getattr(e, measure) for e in entries])
            rows.append((
                language, measure, float(values.min()), float(values.max()),
                float(values.mean()), median(values), len(entries),
            ))
    return ReportTable(
        name="translator_hierarchy",
        columns=[
            Column("language", "str"),
            Column("measure", "str"),
            Column("min", "float"),
            Column("max", "float"),
            Column("mean", "float"),
            Column("median", "float"),
            Column("translators", "int"),
        ],
        rows=rows,
        provenance=provenance("translator_hierarchy_summary", {}, [t.session.key for t in trees]),
    )


def ts_label_statistics(trees: Sequence[SegmentationTree], rare_below=10, top_n=20, head_share=0.9) -> ReportTable:
    """Label frequency and TS size statistics, per language and over the whole corpus."""
    trees = _require_trees(trees)
    by_language = _segments_by_language(trees)
    groups = [(language, by_language[language]) for language in sorted(by_language)]
    if len(groups) > 1:
        groups.append((ALL_LANGUAGES, [s for _, segments in groups for s in segments]))

    rows = []
    for language, segments in groups:
        counts = Counter(s.label for s in segments)
        ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        total = len(segments)
        rare = [label for label, count in ranked if count < rare_below]

        head, covered = set(), 0
        for label, count in ranked:
            if covered >= head_share * total:
                break
            head.add(label)
            covered += count
        head_segments = [s for s in segments if s.label in head]

        durations = np.array([s.duration for s in segments], dtype=float)
        tasks = np.array([len(s.tasks) for s in segments], dtype=float)
        statistics = [
            ("segments", total),
            ("distinct_labels", len(counts)),
            (f"labels_below_{rare_below}", len(rare)),
            (f"labels_below_{rare_below}_share", sum(counts[label] for label in rare) / total),
            (f"top_{top_n}_share", sum(count for _, count in ranked[:top_n]) / total),
            ("mean_duration", float(durations.mean())),
            ("median_duration", median(durations)),
            ("max_duration", float(durations.max())),
            ("mean_tasks_per_ts", float(tasks.mean())),
            ("median_tasks_per_ts", median(tasks)),
            ("max_tasks_per_ts", float(tasks.max())),
            ("head_labels", len(head)),
            ("head_share", len(head_segments) / total),
            ("head_mean_duration", float(np.mean([s.duration for s in head_segments]))),
            ("head_mean_tasks_per_ts", float(np.mean([len(s.tasks) for s in head_segments]))),
        ]
        rows += [(language, name, float(value)) for name, value in statistics]

    return ReportTable(
        name="ts_label_statistics",
        columns=[Column("language", "str"), Column("statistic", "str"), Column("value", "float")],
        rows=rows,
        provenance=provenance(
            "ts_label_statistics",
            {"rare_below": rare_below, "top_n": top_n, "head_share": head_share},
            [t.session.key for t in trees],
        ),
    )


def label_share_correlation(trees: Sequence[SegmentationTree], top_n=None) -> ReportTable:
    """Pearson r between the TS-label percentages of every pair of languages."""
    trees = _require_trees(trees)
    by_language = _segments_by_language(trees)
    languages = sorted(by_language)
    if len(languages) < 2:
        raise SegmentationError("label share correlation needs at least two languages")

    overall = Counter(s.label for segments in by_language.values() for s in segments)
    labels = [label for label, _ in sorted(overall.items(), key=lambda item: (-item[1], item[0]))]
    if top_n:
        labels = labels[:top_n]

    shares = {}
    for language in languages:
        counts = Counter(s.label for s in by_language[language])
        total = len(by_language[language])
        shares[language] = [100.0 * counts[label] / total for label in labels]

    rows = []
    for a, b in combinations(languages, 2):
        try:
            result = pearson_correlation(shares[a], shares[b])
        except StatsError as e:
            logger.warning(f"Label shares {a} vs {b} skipped ({e})")
            continue
        rows.append((a, b, len(labels), result.statistic, result.p_value))

    return ReportTable(
        name="label_share_correlation",
        columns=[
            Column("language_a", "str"),
            Column("language_b", "str"),
            Column("labels", "int"),
            Column("pearson_r", "float"),
            Column("p_value", "float"),
        ],
        rows=rows,
        provenance=provenance("label_share_correlation", {"top_n": top_n}, [t.session.key for t in trees]),
    )


def task_type_summary(trees: Sequence[SegmentationTree]) -> ReportTable:
    trees = _require_trees(trees)
    by_language = defaultdict(list)
    for tree in trees:
        by_language[tree.language].extend(tree.tasks)

    rows = []
    for language in sorted(by_language):
        tasks = by_language[language]
        for label in TASK_LABELS:
            group = [t for t in tasks if t.label == label]
            if not group:
                continue
            rows.append((
                language, label, len(group), len(group) / len(tasks),
                float(np.mean([t.keystrokes for t in group])),
                float(np.mean([t.duration for t in group])),
            ))

    return ReportTable(
        name="task_types",
        columns=[
            Column("language", "str"),
            Column("label", "str"),
            Column("count", "int"),
            Column("share", "float", "fraction"),
            Column("mean_keystrokes", "float"),
            Column("mean_duration", "float", "ms"),
        ],
        rows=rows,
        provenance=provenance("task_type_summary", {}, [t.session.key for t in trees]),
    )
