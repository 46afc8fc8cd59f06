"""
Corpus discovery, loading and output manifests.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from .models import DataError, SessionLog, StateAnnotation
from .session_parser import ColumnMapping, parse_annotations, parse_session, SessionFormatError

logger = logging.getLogger(__name__)

SESSION_SUFFIX = ".session.tsv"


class CorpusError(DataError):
    pass


def discover_sessions(paths: Iterable, glob="**/*.session.tsv") -> List[Path]:
    """Session files named directly or found under the given directories, sorted and deduplicated."""
    found = set()
    for path in map(Path, paths):
        if path.is_dir():
            found.update(p for p in path.glob(glob) if p.is_file())
        elif path.is_file():
            found.add(path)
        else:
            raise CorpusError(f"cannot read {path}")
    return sorted(found)


def session_stem(path: Path) -> str:
    name = path.name
    return name[:-len(SESSION_SUFFIX)] if name.endswith(SESSION_SUFFIX) else path.stem


def load_session(path: Path, mapping: Optional[ColumnMapping] = None) -> SessionLog:
    with open(path, "r", encoding="utf-8") as f:
        try:
            return parse_session(f, mapping)
        except DataError as e:
            raise type(e)(f"{path}: {e}") from e
        except UnicodeDecodeError as e:
            raise SessionFormatError(f"{path}: not valid UTF-8 at byte {e.start}") from e


def load_corpus(paths, glob="**/*.session.tsv", mapping: Optional[ColumnMapping] = None) -> Dict[Path, SessionLog]:
    files = discover_sessions(paths, glob)
    sessions = {}
    seen = {}
    for path in files:
        session = load_session(path, mapping)
        if session.key in seen:
            raise CorpusError(f"{path}: session {session.key} already loaded from {seen[session.key]}")
        seen[session.key] = path
        sessions[path] = session
    logger.info(f"Loaded {len(sessions)} session(s)")
    return sessions


def find_annotations(session_path: Path, suffix=".hof.tsv", directory: Optional[Path] = None) -> Optional[Path]:
    """The annotation file sharing the session's stem, next to it or in `directory`."""
    name = session_stem(session_path) + suffix
    for candidate in ([Path(directory) / name] if directory else []) + [session_path.with_name(name)]:
        if candidate.is_file():
            return candidate
    return None


def load_annotations(path: Path) -> List[StateAnnotation]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            return parse_annotations(f)
        except DataError as e:
            raise type(e)(f"{path}: {e}") from e
        except UnicodeDecodeError as e:
            raise SessionFormatError(f"{path}: not valid UTF-8 at byte {e.start}") from e


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, command: str, inputs: Iterable, config, outputs: Iterable = ()) -> Path:
    """manifest.json with input digests and the config hash; contains no timestamps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_digest": config.digest(),
        "inputs": {str(path): file_digest(path) for path in sorted(map(Path, inputs))},
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
