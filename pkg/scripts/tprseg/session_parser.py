"""
Reading and writing of session logs and HOF annotation tracks.

Session file (TSV, UTF-8):

    #study=BML12
    #session=P03_T5
    #translator=P03
    #source_lang=en
    #target_lang=es
    time	kind	text	pos	dur
    0	ins	U	0
    137200	del	muy	6
    137350	fixS		12	240

Annotation file (TSV): ``start<TAB>end<TAB>state[<TAB>confidence]``.
"""

import io
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

from .models import (
    DataError, FixationEvent, KEY_KINDS, KeyEvent, MODES, SessionLog,
    SOURCE, StateAnnotation, STATES, TARGET, TRANSLATION, WINDOWS,
)

logger = logging.getLogger(__name__)

MANDATORY_HEADERS = ("study", "session", "translator", "source_lang", "target_lang")
COLUMNS = ("time", "kind", "text", "pos", "dur")
FIXATION_KINDS = {"fixS": SOURCE, "fixT": TARGET}
WINDOW_KINDS = {window: kind for kind, window in FIXATION_KINDS.items()}


class SessionFormatError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str
    severity: str = "error"

    def todict(self):
        return {"code": self.code, "severity": self.severity, "message": self.message}


@dataclass
class ColumnMapping:
    """Renames external column names and kind values to the canonical ones."""
    columns: Dict[str, str] = field(default_factory=dict)
    kinds: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_config(cls, columns, kinds):
        # config stores canonical -> external, parsing needs external -> canonical
        return cls(
            columns={external: canonical for canonical, external in columns.items()},
            kinds={external: canonical for canonical, external in kinds.items()},
        )

    def column(self, name):
        return self.columns.get(name, name)

    def kind(self, value):
        return self.kinds.get(value, value)


def _lines(stream):
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _parse_int(value, what, line_num):
    try:
        return int(value)
    except ValueError:
        raise SessionFormatError(f"malformed {what} {value!r}", line_num)


def parse_session(stream, mapping: Optional[ColumnMapping] = None) -> SessionLog:
    mapping = mapping or ColumnMapping()
    headers = {}
    columns = None
    keys = []
    fixations = []
    key_lines = {}

    for line_num, raw in enumerate(_lines(stream), 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue

        if columns is None and line.startswith("#"):
            if "=" not in line:
                continue  # comment
            name, value = line[1:].split("=", 1)
            headers[name.strip()] = value.strip()
            continue

        if columns is None:
            columns = [mapping.column(name.strip()) for name in line.split("\t")]
            missing = [name for name in COLUMNS if name not in columns]
            if missing:
                raise SessionFormatError(f"column header lacks {', '.join(missing)}", line_num)
            continue

        fields = line.split("\t")
        if len(fields) > len(columns):
            raise SessionFormatError(f"malformed line: expected {len(columns)} fields, got {len(fields)}", line_num)
        # Editors tend to strip the trailing empty dur field
        fields += [""] * (len(columns) - len(fields))
        row = dict(zip(columns, fields))

        time = _parse_int(row["time"], "time", line_num)
        if time < 0:
            raise SessionFormatError(f"negative time {time}", line_num)
        kind = mapping.kind(row["kind"].strip())

        if kind in KEY_KINDS:
            if not row["text"]:
                raise SessionFormatError("empty keystroke text", line_num)
            if time in key_lines:
                raise SessionFormatError(
                    f"duplicate keystroke timestamp {time} (first seen on line {key_lines[time]})", line_num
                )
            key_lines[time] = line_num
            cursor = _parse_int(row["pos"], "cursor", line_num)
            if cursor < 0:
                raise SessionFormatError(f"negative cursor {cursor}", line_num)
            keys.append(KeyEvent(time=time, kind=kind, text=row["text"], cursor=cursor))

        elif kind in FIXATION_KINDS:
            duration = _parse_int(row["dur"], "duration", line_num)
            if duration < 0:
                raise SessionFormatError(f"negative duration {duration}", line_num)
            if duration == 0:
                raise SessionFormatError("fixation duration must be positive", line_num)
            token = _parse_int(row["pos"], "token index", line_num)
            if token < 0:
                raise SessionFormatError(f"negative token index {token}", line_num)
            fixations.append(FixationEvent(
                time=time, duration=duration, window=FIXATION_KINDS[kind], token_index=token,
            ))

        else:
            raise SessionFormatError(f"malformed line: unknown event kind {row['kind']!r}", line_num)

    if columns is None:
        raise SessionFormatError("missing column header")

    missing = [name for name in MANDATORY_HEADERS if not headers.get(name)]
    if missing:
        raise SessionFormatError(f"missing mandatory header {', '.join(missing)}")

    mode = headers.get("mode", TRANSLATION)
    if mode not in MODES:
        raise SessionFormatError(f"unknown mode {mode!r}")

    session = SessionLog(
        study_id=headers["study"],
        session_id=headers["session"],
        translator_id=headers["translator"],
        source_lang=headers["source_lang"],
        target_lang=headers["target_lang"],
        keys=sorted(keys, key=lambda k: k.time),
        fixations=sorted(fixations, key=lambda f: f.time),
        mode=mode,
        meta={
            name: value for name, value in headers.items()
            if name not in MANDATORY_HEADERS and name != "mode"
        },
    )

    errors = [issue for issue in validate_session(session) if issue.severity == "error"]
    if errors:
        raise SessionFormatError("; ".join(f"{issue.code}: {issue.message}" for issue in errors))

    logger.debug(f"Parsed {session.key}: {len(session.keys)} keys, {len(session.fixations)} fixations")
    return session


def serialize_session(session: SessionLog) -> str:
    """
    Canonical TSV: mandatory headers in fixed order, `#mode` only for non-translation
    sessions, optional headers sorted, rows by time with keys before fixations.
    Files already in that form are reproduced byte for byte.
    """
    out = io.StringIO()
    out.write(f"#study={session.study_id}\n")
    out.write(f"#session={session.session_id}\n")
    out.write(f"#translator={session.translator_id}\n")
    out.write(f"#source_lang={session.source_lang}\n")
    out.write(f"#target_lang={session.target_lang}\n")
    if session.mode != TRANSLATION:
        out.write(f"#mode={session.mode}\n")
    for name in sorted(session.meta):
        out.write(f"#{name}={session.meta[name]}\n")
    out.write("\t".join(COLUMNS) + "\n")

    rows = [(k.time, 0, f"{k.time}\t{k.kind}\t{k.text}\t{k.cursor}\t") for k in session.keys]
    rows += [
        (f.time, 1, f"{f.time}\t{WINDOW_KINDS[f.window]}\t\t{f.token_index}\t{f.duration}")
        for f in session.fixations
    ]
    for _, _, row in sorted(rows, key=lambda r: (r[0], r[1])):
        out.write(row + "\n")
    return out.getvalue()


def validate_session(session: SessionLog) -> List[ValidationIssue]:
    issues = []

    for name in ("study_id", "session_id", "translator_id", "source_lang", "target_lang"):
        if not getattr(session, name):
            issues.append(ValidationIssue("MISSING_METADATA", f"{name} is empty"))
    if session.mode not in MODES:
        issues.append(ValidationIssue("MISSING_METADATA", f"unknown mode {session.mode!r}"))

    if len(session.keys) < 2:
        issues.append(ValidationIssue("NO_IKI", f"{len(session.keys)} keystroke(s), at least 2 are needed"))

    previous = None
    for i, key in enumerate(session.keys):
        if key.time < 0:
            issues.append(ValidationIssue("NEGATIVE_TIME", f"keystroke {i} at {key.time} ms"))
        if key.kind not in KEY_KINDS:
            issues.append(ValidationIssue("BAD_KIND", f"keystroke {i} has kind {key.kind!r}"))
        if not key.text:
            issues.append(ValidationIssue("EMPTY_TEXT", f"keystroke {i} has no text"))
        if key.cursor < 0:
            issues.append(ValidationIssue("NEGATIVE_POSITION", f"keystroke {i} has cursor {key.cursor}"))
        if previous is not None:
            if key.time == previous.time:
                issues.append(ValidationIssue("DUPLICATE_KEY_TIME", f"duplicate keystroke timestamp {key.time}"))
            elif key.time < previous.time:
                issues.append(ValidationIssue(
                    "KEYS_UNORDERED", f"keystroke {i} at {key.time} ms precedes {previous.time} ms"
                ))
        previous = key

    previous = None
    for i, fixation in enumerate(session.fixations):
        if fixation.time < 0:
            issues.append(ValidationIssue("NEGATIVE_TIME", f"fixation {i} at {fixation.time} ms"))
        if fixation.duration <= 0:
            issues.append(ValidationIssue("BAD_DURATION", f"fixation {i} has duration {fixation.duration}"))
        if fixation.window not in WINDOWS:
            issues.append(ValidationIssue("BAD_WINDOW", f"fixation {i} has window {fixation.window!r}"))
        if fixation.token_index < 0:
            issues.append(ValidationIssue("NEGATIVE_POSITION", f"fixation {i} has token {fixation.token_index}"))
        if previous is not None and fixation.time < previous.time:
            issues.append(ValidationIssue("FIXATIONS_UNORDERED", f"fixation {i} at {fixation.time} ms"))
        previous = fixation

    return issues


def parse_annotations(stream, symbols: Iterable[str] = STATES) -> List[StateAnnotation]:
    symbols = set(symbols)
    annotations = []
    for line_num, raw in enumerate(_lines(stream), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "start":
            continue
        if len(fields) not in (3, 4):
            raise SessionFormatError(f"malformed annotation: expected 3 or 4 fields, got {len(fields)}", line_num)

        start = _parse_int(fields[0], "start", line_num)
        end = _parse_int(fields[1], "end", line_num)
        state = fields[2].strip()
        if end <= start:
            raise SessionFormatError(f"annotation end {end} not after start {start}", line_num)
        if state not in symbols:
            raise SessionFormatError(f"unknown state symbol {state!r}", line_num)

        confidence = None
        if len(fields) == 4 and fields[3]:
            try:
                confidence = float(fields[3])
            except ValueError:
                raise SessionFormatError(f"malformed confidence {fields[3]!r}", line_num)

        annotations.append(StateAnnotation(start, end, state, confidence))

    annotations.sort(key=lambda a: a.start)
    for previous, current in zip(annotations, annotations[1:]):
        if current.start < previous.end:
            raise SessionFormatError(
                f"overlapping annotations [{previous.start}, {previous.end}) and [{current.start}, {current.end})"
            )
    return annotations


def serialize_annotations(annotations: Iterable[StateAnnotation]) -> str:
    annotations = list(annotations)
    with_confidence = any(a.confidence is not None for a in annotations)
    out = io.StringIO()
    out.write("start\tend\tstate" + ("\tconfidence" if with_confidence else "") + "\n")
    for a in annotations:
        row = f"{a.start}\t{a.end}\t{a.state}"
        if with_confidence:
            row += "\t" + ("" if a.confidence is None else format(a.confidence, ".4g"))
        out.write(row + "\n")
    return out.getvalue()
