"""
Planted-structure session generator.

Each session holds K task segments of M Tasks. IKIs are drawn strictly inside the band
of the pause they encode: (0, rsp) inside a Task, [rsp, tsp) between Tasks and
[tsp, 3 tsp] between segments, so segmenting with the planted thresholds recovers the
planted structure exactly.
"""

import logging
import string
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .iki_profile import TranslatorProfile
from .models import DELETION, FixationEvent, FLOW, HESITATION, INSERTION, KeyEvent, ORIENTATION, POSTEDIT, \
    SessionLog, SOURCE, StateAnnotation, TARGET, TRANSLATION
from .segmentation import DELETION_TASK, INSERTION_TASK, MIXED_TASK, TASK_LABELS

logger = logging.getLogger(__name__)

LETTERS = np.array(list(string.ascii_lowercase))
READING_LEAD = 3000
# share of typed word boundaries
SPACE_RATE = 0.2


@dataclass
class PlantedSession:
    session: SessionLog
    profile: TranslatorProfile
    labels: List[str]
    annotations: List[StateAnnotation]

    @property
    def tasks(self):
        return sum(len(label) for label in self.labels)


def _task_kinds(rng, label, size):
    if label == INSERTION_TASK:
        return [INSERTION] * size
    if label == DELETION_TASK:
        return [DELETION] * size
    kinds = [INSERTION] * size
    # at least one of each kind
    deletions = rng.choice(np.arange(1, size), size=int(rng.integers(1, size)), replace=False)
    for i in deletions:
        kinds[int(i)] = DELETION
    return kinds


def planted_thresholds(rng):
    rsp = int(rng.integers(200, 601))
    tsp = int(rng.integers(rsp + 50, rsp + 1501))
    return rsp, tsp


def plant_session(rng, segments, tasks_per_segment, rsp, tsp, translator_id="P01", session_id="S01",
                  study_id="SYN", source_lang="en", target_lang="es", mode=TRANSLATION,
                  max_task_keys=8) -> PlantedSession:
    if not (0 < rsp < tsp):
        raise ValueError(f"need 0 < rsp < tsp, got {rsp}, {tsp}")

    keys = []
    fixations = []
    labels = []
    time = READING_LEAD
    text_length = 0
    previous_end = 0

    for segment_num in range(segments):
        if segment_num:
            gap = int(rng.integers(tsp, 3 * tsp + 1))
            if gap > 200:
                fixations.append(FixationEvent(time=previous_end + 50, duration=min(300, gap - 100),
                                               window=SOURCE, token_index=segment_num))
            time = previous_end + gap
        segment_labels = []
        for task_num in range(tasks_per_segment):
            label = str(rng.choice(TASK_LABELS))
            size = int(rng.integers(1, max_task_keys + 1))
            if label == MIXED_TASK or segments * tasks_per_segment == 1:
                size = max(size, 2)
            if task_num:
                time += int(rng.integers(rsp, tsp))
            for n, kind in enumerate(_task_kinds(rng, label, size)):
                if n:
                    time += int(rng.integers(1, rsp))
                if kind == DELETION and text_length > 0:
                    text_length -= 1
                    cursor = text_length
                elif kind == DELETION:
                    cursor = 0
                else:
                    cursor = text_length
                    text_length += 1
                text = "_" if kind == INSERTION and rng.random() < SPACE_RATE else str(rng.choice(LETTERS))
                keys.append(KeyEvent(time=time, kind=kind, text=text, cursor=cursor))
            segment_labels.append(label)
        labels.append("".join(segment_labels))
        previous_end = time

    # source reading before the first keystroke, target reading after the last
    fixations.insert(0, FixationEvent(time=0, duration=READING_LEAD - 100, window=SOURCE, token_index=0))
    fixations.append(FixationEvent(time=previous_end + 50, duration=400, window=TARGET, token_index=0))

    session = SessionLog(
        study_id=study_id,
        session_id=session_id,
        translator_id=translator_id,
        source_lang=source_lang,
        target_lang=target_lang,
        keys=keys,
        fixations=sorted(fixations, key=lambda f: f.time),
        mode=mode,
    )
    profile = TranslatorProfile.from_thresholds(translator_id, rsp, tsp)
    return PlantedSession(session, profile, labels, planted_annotations(session, labels, tsp))


def planted_annotations(session: SessionLog, labels: Sequence[str], tsp) -> List[StateAnnotation]:
    """O before the first keystroke, then H for segments holding deletions and F otherwise."""
    times = session.key_times()
    segment_ends = []
    starts = np.concatenate([[0], np.flatnonzero(np.diff(times) >= tsp) + 1])
    lasts = np.concatenate([starts[1:] - 1, [times.size - 1]])
    for last in lasts:
        segment_ends.append(int(times[last]) + 1)

    annotations = []
    if times[0] > session.start:
        annotations.append(StateAnnotation(session.start, int(times[0]), ORIENTATION))
    cursor = int(times[0])
    for n, (label, end) in enumerate(zip(labels, segment_ends)):
        state = HESITATION if DELETION_TASK in label or MIXED_TASK in label else FLOW
        if n == len(segment_ends) - 1:
            end = max(end, session.end + 1)
        if annotations and annotations[-1].state == state:
            annotations[-1] = StateAnnotation(annotations[-1].start, end, state)
        else:
            annotations.append(StateAnnotation(cursor, end, state))
        cursor = end
    return annotations


def generate_corpus(seed, translators=4, sessions_per_translator=3, languages=("es", "ar"),
                    segments=(1, 20), tasks=(1, 6)) -> List[PlantedSession]:
    """Sessions of several translators; the last session of each translator is a post-editing one."""
    rng = np.random.default_rng(seed)
    corpus = []
    for t in range(translators):
        translator_id = f"P{t + 1:02d}"
        target_lang = languages[t % len(languages)]
        rsp, tsp = planted_thresholds(rng)
        for s in range(sessions_per_translator):
            mode = POSTEDIT if sessions_per_translator > 1 and s == sessions_per_translator - 1 else TRANSLATION
            corpus.append(plant_session(
                rng,
                segments=int(rng.integers(segments[0], segments[1] + 1)),
                tasks_per_segment=int(rng.integers(tasks[0], tasks[1] + 1)),
                rsp=rsp,
                tsp=tsp,
                translator_id=translator_id,
                session_id=f"{translator_id}_S{s + 1}",
                target_lang=target_lang,
                mode=mode,
            ))
    logger.debug(f"Generated {len(corpus)} planted session(s) with seed {seed}")
    return corpus
