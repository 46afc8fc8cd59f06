"""
Word-position keystroke classes, inter-keystroke intervals (IKIs) and
translator-relative pause thresholds.

A translator's respite threshold is RSP = 2 * median(WP) and the task segment
pause threshold is TSP = 3 * median(BP), where WP are within-word IKIs and BP the
IKIs preceding a word-initial keystroke.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.stats import gaussian_kde

from .config import DEFAULT_BOUNDARY_CHARS
from .models import DataError, SessionLog, TRANSLATION
from .report import Column, ReportTable, provenance
from .stats import median, quantiles

logger = logging.getLogger(__name__)

DELAY_CEILING = 200


class ProfileError(DataError):
    pass


class KeyClass(str, Enum):
    BOUNDARY = "boundary"
    WORD_INITIAL = "word_initial"
    WITHIN_WORD = "within_word"
    WORD_FINAL = "word_final"


@dataclass(frozen=True)
class IKIRecord:
    index: int
    iki: int
    key_class: KeyClass


@dataclass
class TranslatorProfile:
    translator_id: str
    median_wp: float
    median_bp: float
    rsp: float
    tsp: float
    n_wp: int
    n_bp: int
    rsp_floor: float = DELAY_CEILING
    warnings: List[str] = field(default_factory=list)

    @classmethod
    def from_thresholds(cls, translator_id, rsp, tsp, rsp_multiplier=2.0, tsp_multiplier=3.0,
                        rsp_floor=DELAY_CEILING, n_wp=0, n_bp=0):
        return cls(
            translator_id=translator_id,
            median_wp=rsp / rsp_multiplier,
            median_bp=tsp / tsp_multiplier,
            rsp=rsp,
            tsp=tsp,
            n_wp=n_wp,
            n_bp=n_bp,
            rsp_floor=rsp_floor,
        )

    @property
    def rsp_clamped(self):
        return self.rsp < self.rsp_floor

    @property
    def task_threshold(self):
        """The respite threshold the segmenter applies (RSP, never below the Delay ceiling)."""
        return max(self.rsp, self.rsp_floor)

    @property
    def valid(self):
        return self.tsp > self.task_threshold

    def todict(self):
        return {
            "translator": self.translator_id,
            "median_wp": self.median_wp,
            "median_bp": self.median_bp,
            "rsp": self.rsp,
            "tsp": self.tsp,
            "n_wp": self.n_wp,
            "n_bp": self.n_bp,
            "rsp_clamped": self.rsp_clamped,
            "valid": self.valid,
        }


@dataclass
class DistributionSummary:
    count: int
    mean: float
    median: float
    quantiles: Dict[float, float]
    cdf: List[tuple]
    histogram: List[tuple]
    density: Optional[List[tuple]] = None

    def fraction_below(self, x):
        """Empirical F(x-), the share of the sample strictly below x."""
        xs = np.array([p[0] for p in self.cdf])
        fs = np.array([p[1] for p in self.cdf])
        i = np.searchsorted(xs, x, side="left")
        return float(fs[i - 1]) if i > 0 else 0.0

    def todict(self):
        return {
            "count": self.count,
            "mean": self.mean,
            "median": self.median,
            "quantiles": {str(p): v for p, v in self.quantiles.items()},
            "cdf": [list(p) for p in self.cdf],
            "histogram": [list(b) for b in self.histogram],
            "density": None if self.density is None else [list(p) for p in self.density],
        }


def _is_boundary(text, boundary_chars):
    # text-only rule, overriding first-character classification: "_c" counts as a letter key
    return all(c in boundary_chars for c in text)


def classify_keystrokes(session: SessionLog, boundary_chars: Iterable[str] = DEFAULT_BOUNDARY_CHARS,
                        fold_word_final=False) -> List[KeyClass]:
    boundary_chars = frozenset(boundary_chars)
    keys = session.keys
    for i, key in enumerate(keys):
        if not key.text:
            raise ProfileError(f"{session.key}: keystroke {i} has empty text")

    is_boundary = [_is_boundary(key.text, boundary_chars) for key in keys]
    n = len(keys)
    classes = []
    for i in range(n):
        if is_boundary[i]:
            classes.append(KeyClass.BOUNDARY)
            continue
        after_boundary = i == 0 or is_boundary[i - 1]
        before_boundary = i == n - 1 or is_boundary[i + 1]
        if after_boundary:
            # one-letter words: the word-initial rule wins
            classes.append(KeyClass.WORD_INITIAL)
        elif before_boundary and not fold_word_final:
            classes.append(KeyClass.WORD_FINAL)
        else:
            classes.append(KeyClass.WITHIN_WORD)
    return classes


def compute_ikis(session: SessionLog, classes: Sequence[KeyClass]) -> List[IKIRecord]:
    if len(classes) != len(session.keys):
        raise ProfileError(f"{session.key}: {len(classes)} classes for {len(session.keys)} keystrokes")
    ikis = np.diff(session.key_times())
    return [IKIRecord(index=i + 1, iki=int(iki), key_class=classes[i + 1]) for i, iki in enumerate(ikis)]


def wp_sample(records: Iterable[IKIRecord]) -> List[int]:
    return [r.iki for r in records if r.key_class is KeyClass.WITHIN_WORD]


def bp_sample(records: Iterable[IKIRecord]) -> List[int]:
    return [r.iki for r in records if r.key_class is KeyClass.WORD_INITIAL]


def session_ikis(session, boundary_chars=DEFAULT_BOUNDARY_CHARS, fold_word_final=False):
    classes = classify_keystrokes(session, boundary_chars, fold_word_final)
    return compute_ikis(session, classes)


def build_profile(sessions: Sequence[SessionLog], boundary_chars=DEFAULT_BOUNDARY_CHARS,
                  rsp_multiplier=2.0, tsp_multiplier=3.0, rsp_floor=DELAY_CEILING,
                  fold_word_final=False) -> TranslatorProfile:
    if not sessions:
        raise ProfileError("no sessions to profile")
    translators = {s.translator_id for s in sessions}
    if len(translators) != 1:
        raise ProfileError(f"sessions of several translators: {', '.join(sorted(translators))}")
    translator_id = sessions[0].translator_id

    wp, bp = [], []
    for session in sessions:
        classes = classify_keystrokes(session, boundary_chars, fold_word_final)
        for iki, key_class in zip(np.diff(session.key_times()).tolist(), classes[1:]):
            if key_class is KeyClass.WITHIN_WORD:
                wp.append(iki)
            elif key_class is KeyClass.WORD_INITIAL:
                bp.append(iki)

    if not wp:
        raise ProfileError(f"translator {translator_id} has no within-word IKIs")
    if not bp:
        raise ProfileError(f"translator {translator_id} has no between-word IKIs")

    median_wp = median(wp)
    median_bp = median(bp)
    profile = TranslatorProfile(
        translator_id=translator_id,
        median_wp=median_wp,
        median_bp=median_bp,
        rsp=rsp_multiplier * median_wp,
        tsp=tsp_multiplier * median_bp,
        n_wp=len(wp),
        n_bp=len(bp),
        rsp_floor=rsp_floor,
    )

    if profile.rsp_clamped:
        profile.warnings.append(f"RSP {profile.rsp:g} ms below {rsp_floor} ms, clamped")
        logger.warning(f"Translator {translator_id}: RSP {profile.rsp:g} ms clamped to {rsp_floor} ms")
    if not profile.valid:
        profile.warnings.append(f"TSP {profile.tsp:g} ms not above RSP {profile.task_threshold:g} ms")
        logger.warning(f"Translator {translator_id}: TSP {profile.tsp:g} ms <= RSP, profile invalid")
    return profile


def build_profiles(sessions: Iterable[SessionLog], **options) -> Dict[str, TranslatorProfile]:
    by_translator = defaultdict(list)
    for session in sessions:
        by_translator[session.translator_id].append(session)

    profiles = {}
    for translator_id in sorted(by_translator):
        translator_sessions = by_translator[translator_id]
        from_scratch = [s for s in translator_sessions if s.mode == TRANSLATION]
        if not from_scratch:
            logger.warning(f"Translator {translator_id} has no translation sessions, profiling all sessions")
            from_scratch = translator_sessions
        profiles[translator_id] = build_profile(from_scratch, **options)
    return profiles


def iki_distribution(sample, kde=False, bin_width=25, levels=(0.25, 0.5, 0.75, 0.9),
                     kde_points=200) -> DistributionSummary:
    values = np.sort(np.asarray(sample, dtype=float))
    if values.size == 0:
        raise ProfileError("empty IKI sample")
    n = values.size

    xs = np.unique(values)
    fs = np.searchsorted(values, xs, side="right") / n
    cdf = [(float(x), float(f)) for x, f in zip(xs, fs)]

    top = values[-1]
    edges = np.arange(0.0, top + bin_width, bin_width) if top > 0 else np.array([0.0, bin_width])
    if edges[-1] < top:
        edges = np.append(edges, edges[-1] + bin_width)
    low = min(0.0, values[0])
    edges[0] = low
    counts, edges = np.histogram(values, bins=edges)
    histogram = [(float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)]

    density = None
    if kde:
        if xs.size < 2:
            logger.warning("KDE needs at least two distinct values, skipped")
        else:
            estimator = gaussian_kde(values, bw_method="silverman")
            grid = np.linspace(values[0], values[-1], kde_points)
            density = [(float(x), float(y)) for x, y in zip(grid, estimator(grid))]

    return DistributionSummary(
        count=int(n),
        mean=float(values.mean()),
        median=median(values),
        quantiles=dict(zip(levels, quantiles(values, levels))),
        cdf=cdf,
        histogram=histogram,
        density=density,
    )


def summary_table(summary: DistributionSummary, name="iki_distribution", label="") -> ReportTable:
    """One row per CDF, histogram and density point."""
    rows = [(label, "cdf", x, None, f, None) for x, f in summary.cdf]
    rows += [(label, "histogram", a, b, None, c) for a, b, c in summary.histogram]
    rows += [(label, "density", x, None, y, None) for x, y in (summary.density or [])]
    return ReportTable(
        name=name,
        columns=[
            Column("label", "str"),
            Column("series", "str"),
            Column("x", "float", "ms"),
            Column("x_right", "float", "ms"),
            Column("value", "float", "probability"),
            Column("count", "int"),
        ],
        rows=rows,
        provenance=provenance("iki_distribution", {"count": summary.count, "label": label}),
    )


def corpus_descriptors(sessions: Iterable[SessionLog]) -> ReportTable:
    """Per-study keystroke counts, durations and IKI mean/median."""
    by_study = defaultdict(list)
    for session in sessions:
        by_study[session.study_id].append(session)

    rows = []
    for study in sorted(by_study):
        study_sessions = by_study[study]
        ikis = np.concatenate([np.diff(s.key_times()) for s in study_sessions])
        duration_ms = sum(s.end - s.start for s in study_sessions)
        languages = sorted({s.target_lang for s in study_sessions})
        rows.append((
            study,
            "+".join(languages),
            sum(len(s.keys) for s in study_sessions),
            duration_ms / 3_600_000,
            len(study_sessions),
            len({s.translator_id for s in study_sessions}),
            float(ikis.mean()) if ikis.size else None,
            median(ikis) if ikis.size else None,
        ))

    return ReportTable(
        name="corpus_descriptors",
        columns=[
            Column("study", "str"),
            Column("target_lang", "str"),
            Column("keystrokes", "int"),
            Column("duration", "float", "h"),
            Column("sessions", "int"),
            Column("translators", "int"),
            Column("mean_iki", "float", "ms"),
            Column("median_iki", "float", "ms"),
        ],
        rows=rows,
        provenance=provenance("corpus_descriptors", {}, [s.key for ss in by_study.values() for s in ss]),
    )


def profile_table(profiles: Dict[str, TranslatorProfile]) -> ReportTable:
    rows = [
        (p.translator_id, p.median_wp, p.median_bp, p.rsp, p.tsp, p.n_wp, p.n_bp, p.rsp_clamped, p.valid)
        for p in (profiles[t] for t in sorted(profiles))
    ]
    return ReportTable(
        name="profiles",
        columns=[
            Column("translator", "str"),
            Column("median_wp", "float", "ms"),
            Column("median_bp", "float", "ms"),
            Column("rsp", "float", "ms"),
            Column("tsp", "float", "ms"),
            Column("n_wp", "int"),
            Column("n_bp", "int"),
            Column("rsp_clamped", "bool"),
            Column("valid", "bool"),
        ],
        rows=rows,
        provenance=provenance("build_profile", {"translators": len(profiles)}),
    )


def profiles_from_table(frame, rsp_floor=DELAY_CEILING) -> Dict[str, TranslatorProfile]:
    """Rebuild profiles from a profiles.csv frame (as written by profile_table)."""
    required = {"translator", "median_wp", "median_bp", "rsp", "tsp"}
    missing = required - set(frame.columns)
    if missing:
        raise ProfileError(f"profiles table lacks {', '.join(sorted(missing))}")
    profiles = {}
    for row in frame.itertuples(index=False):
        translator_id = str(row.translator)
        profiles[translator_id] = TranslatorProfile(
            translator_id=translator_id,
            median_wp=float(row.median_wp),
            median_bp=float(row.median_bp),
            rsp=float(row.rsp),
            tsp=float(row.tsp),
            n_wp=int(getattr(row, "n_wp", 0)),
            n_bp=int(getattr(row, "n_bp", 0)),
            rsp_floor=rsp_floor,
        )
    return profiles


def profile_summary(profiles: Dict[str, TranslatorProfile], languages: Dict[str, str]) -> ReportTable:
    """Min/max/mean/median of RSP and TSP per target language."""
    by_language = defaultdict(list)
    for translator_id, profile in profiles.items():
        by_language[languages.get(translator_id, "")].append(profile)

    rows = []
    for language in sorted(by_language):
        for threshold in ("rsp", "tsp"):
            values = np.array([getattr(p, threshold) for p in by_language[language]])
            rows.append((
                language, threshold.upper(), float(values.min()), float(values.max()),
                float(values.mean()), median(values), int(values.size),
            ))

    return ReportTable(
        name="profile_summary",
        columns=[
            Column("language", "str"),
            Column("threshold", "str"),
            Column("min", "float", "ms"),
            Column("max", "float", "ms"),
            Column("mean", "float", "ms"),
            Column("median", "float", "ms"),
            Column("translators", "int"),
        ],
        rows=rows,
        provenance=provenance("profile_summary", {"translators": len(profiles)}),
    )


def typing_speed(sessions: Iterable[SessionLog], fast_iki=250, share=0.75) -> ReportTable:
    """Per translator: share of IKIs below `fast_iki` and the IKI below which `share` of IKIs fall."""
    by_translator = defaultdict(list)
    languages = {}
    for session in sessions:
        by_translator[session.translator_id].append(np.diff(session.key_times()))
        languages[session.translator_id] = session.target_lang

    rows = []
    for translator_id in sorted(by_translator):
        ikis = np.concatenate(by_translator[translator_id])
        if ikis.size == 0:
            continue
        rows.append((
            translator_id,
            languages[translator_id],
            int(ikis.size),
            float(np.mean(ikis < fast_iki)),
            quantiles(ikis, [share])[0],
        ))

    return ReportTable(
        name="typing_speed",
        columns=[
            Column("translator", "str"),
            Column("language", "str"),
            Column("ikis", "int"),
            Column(f"share_below_{fast_iki}", "float", "fraction"),
            Column(f"iki_at_{int(share * 100)}pct", "float", "ms"),
        ],
        rows=rows,
        provenance=provenance("typing_speed", {"fast_iki": fast_iki, "share": share}),
    )
