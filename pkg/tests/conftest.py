import sys
from pathlib import Path

import numpy as np
import pytest

# Add the scripts directory to the path so tests import tprseg like the entry scripts do
scripts_dir = Path(__file__).parent.parent / "scripts"
sys.path.insert(0, str(scripts_dir))

from tprseg.models import FixationEvent, INSERTION, KeyEvent, SessionLog, TRANSLATION  # noqa: E402


def build_session(times, texts=None, kinds=None, fixations=(), translator="P01", session_id="S01",
                  study="SYN", target_lang="es", mode=TRANSLATION):
    texts = texts or ["a"] * len(times)
    kinds = kinds or [INSERTION] * len(times)
    keys = [
        KeyEvent(time=int(t), kind=k, text=x, cursor=i)
        for i, (t, k, x) in enumerate(zip(times, kinds, texts))
    ]
    return SessionLog(
        study_id=study,
        session_id=session_id,
        translator_id=translator,
        source_lang="en",
        target_lang=target_lang,
        keys=keys,
        fixations=[FixationEvent(*f) for f in fixations],
        mode=mode,
    )


def times_from_ikis(ikis, start=0):
    return np.concatenate([[start], start + np.cumsum(ikis)]).astype(int).tolist()


@pytest.fixture
def make_session():
    return build_session


@pytest.fixture
def session_from_ikis():
    def build(ikis, start=0, **kwargs):
        return build_session(times_from_ikis(ikis, start), **kwargs)
    return build


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)

