"""
Import of Translog-II XML logging files.

Only keystroke insertions/deletions and fixations on the source (Win=1) or target
(Win=2) window are kept. Fixated character offsets are mapped to word indices when the
file carries the source/final text character tables.
"""

import logging
import re
from xml.etree.ElementTree import ParseError

import declxml as xml

from .models import DELETION, FixationEvent, INSERTION, KeyEvent, SessionLog, SOURCE, TARGET, TRANSLATION
from .session_parser import SessionFormatError, validate_session

logger = logging.getLogger(__name__)

KEY_TYPES = {"insert": INSERTION, "delete": DELETION}
WINDOWS = {1: SOURCE, 2: TARGET}
BLANK = re.compile(r"\s")


def _char_table(name):
    return xml.array(
        xml.dictionary(f"{name}/CharPos", [
            xml.integer(".", attribute="Cursor", alias="cursor"),
            xml.string(".", attribute="Value", required=False, default="", alias="value"),
        ], required=False),
        alias=name,
    )


logfile_processor = xml.dictionary("LogFile", [
    xml.dictionary("Project/Languages", [
        xml.string(".", attribute="source", required=False, default="", alias="source"),
        xml.string(".", attribute="target", required=False, default="", alias="target"),
    ], required=False, alias="languages"),
    xml.array(
        xml.dictionary("Events/Key", [
            xml.integer(".", attribute="Time", alias="time"),
            xml.integer(".", attribute="Cursor", required=False, default=0, alias="cursor"),
            xml.string(".", attribute="Type", required=False, default="", alias="type"),
            xml.string(".", attribute="Value", required=False, default="", alias="value"),
            xml.string(".", attribute="Text", required=False, default="", alias="text"),
        ], required=False),
        alias="keys",
    ),
    xml.array(
        xml.dictionary("Events/Fix", [
            xml.integer(".", attribute="Time", alias="time"),
            xml.integer(".", attribute="Win", required=False, default=0, alias="window"),
            xml.integer(".", attribute="Dur", required=False, default=0, alias="duration"),
            xml.integer(".", attribute="Cursor", required=False, default=0, alias="cursor"),
        ], required=False),
        alias="fixations",
    ),
    _char_table("SourceTextChar"),
    _char_table("FinalTextChar"),
])


def word_index_map(chars):
    """Character offset -> word index, counting blanks before each offset."""
    mapping = {}
    word = 0
    previous_blank = True
    for char in sorted(chars or [], key=lambda c: c["cursor"]):
        blank = not char["value"] or BLANK.match(char["value"]) is not None
        if not blank and previous_blank and mapping:
            word += 1
        mapping[char["cursor"]] = word
        previous_blank = blank
    return mapping


def load_translog_xml(stream, study, session, translator, mode=TRANSLATION, source_lang=None,
                      target_lang=None) -> SessionLog:
    data = stream if isinstance(stream, str) else stream.read()
    try:
        log = xml.parse_from_string(logfile_processor, data)
    except (xml.XmlError, ParseError) as e:
        raise SessionFormatError(f"not a Translog-II log: {e}")

    languages = log.get("languages") or {}
    source_lang = source_lang or languages.get("source")
    target_lang = target_lang or languages.get("target")
    if not source_lang or not target_lang:
        raise SessionFormatError("languages missing from the log, pass them explicitly")

    keys = []
    for key in log.get("keys") or []:
        kind = KEY_TYPES.get(key["type"])
        if kind is None:
            continue
        text = key["value"] if kind == INSERTION else (key["text"] or key["value"])
        text = BLANK.sub("_", text)
        if not text:
            logger.warning(f"Skipping {key['type']} keystroke at {key['time']} ms without text")
            continue
        keys.append(KeyEvent(time=key["time"], kind=kind, text=text, cursor=max(key["cursor"], 0)))

    words = {
        SOURCE: word_index_map(log.get("SourceTextChar")),
        TARGET: word_index_map(log.get("FinalTextChar")),
    }
    fixations = []
    skipped = 0
    for fix in log.get("fixations") or []:
        window = WINDOWS.get(fix["window"])
        if window is None or fix["duration"] <= 0:
            skipped += 1
            continue
        token = words[window].get(fix["cursor"], fix["cursor"])
        fixations.append(FixationEvent(time=fix["time"], duration=fix["duration"], window=window,
                                       token_index=max(token, 0)))
    if skipped:
        logger.info(f"Skipped {skipped} fixation(s) outside the source/target windows")

    session_log = SessionLog(
        study_id=study,
        session_id=session,
        translator_id=translator,
        source_lang=source_lang,
        target_lang=target_lang,
        keys=sorted(keys, key=lambda k: k.time),
        fixations=sorted(fixations, key=lambda f: f.time),
        mode=mode,
    )
    errors = [issue for issue in validate_session(session_log) if issue.severity == "error"]
    if errors:
        raise SessionFormatError("; ".join(f"{issue.code}: {issue.message}" for issue in errors))
    return session_log
