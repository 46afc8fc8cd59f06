from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

INSERTION = "ins"
DELETION = "del"
KEY_KINDS = (INSERTION, DELETION)

SOURCE = "source"
TARGET = "target"
WINDOWS = (SOURCE, TARGET)

HESITATION = "H"
ORIENTATION = "O"
FLOW = "F"
# Table order used in every report
STATES = (ORIENTATION, FLOW, HESITATION)

TRANSLATION = "translation"
POSTEDIT = "postedit"
MODES = (TRANSLATION, POSTEDIT)


class DataError(Exception):
    """Base class for problems with input data or analysis preconditions."""


@dataclass(frozen=True)
class KeyEvent:
    time: int
    kind: str
    text: str
    cursor: int

    @property
    def is_insertion(self):
        return self.kind == INSERTION

    def todict(self):
        return {"time": self.time, "kind": self.kind, "text": self.text, "cursor": self.cursor}


@dataclass(frozen=True)
class FixationEvent:
    time: int
    duration: int
    window: str
    token_index: int

    @property
    def end(self):
        return self.time + self.duration

    def todict(self):
        return {
            "time": self.time,
            "duration": self.duration,
            "window": self.window,
            "token_index": self.token_index,
        }


@dataclass
class SessionLog:
    study_id: str
    session_id: str
    translator_id: str
    source_lang: str
    target_lang: str
    keys: List[KeyEvent] = field(default_factory=list)
    fixations: List[FixationEvent] = field(default_factory=list)
    mode: str = TRANSLATION
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def key(self):
        return f"{self.study_id}/{self.session_id}"

    @property
    def language(self):
        return self.target_lang

    def key_times(self):
        return np.fromiter((k.time for k in self.keys), dtype=np.int64, count=len(self.keys))

    def deletion_flags(self):
        return np.fromiter((k.kind == DELETION for k in self.keys), dtype=bool, count=len(self.keys))

    @property
    def start(self):
        """First observed event time (keystroke or fixation onset)."""
        times = [k.time for k in self.keys[:1]] + [f.time for f in self.fixations[:1]]
        return min(times) if times else 0

    @property
    def end(self):
        """Last observed event time (keystroke or fixation offset)."""
        times = [k.time for k in self.keys[-1:]] + [f.end for f in self.fixations]
        return max(times) if times else 0

    def todict(self):
        return {
            "study": self.study_id,
            "session": self.session_id,
            "translator": self.translator_id,
            "source_lang": self.source_lang,
            "target_lang": self.target_lang,
            "mode": self.mode,
            "keys": len(self.keys),
            "fixations": len(self.fixations),
        }


@dataclass(frozen=True)
class StateAnnotation:
    start: int
    end: int
    state: str
    confidence: Optional[float] = None

    @property
    def duration(self):
        return self.end - self.start

    def contains(self, t):
        return self.start <= t < self.end
