import logging
from fractions import Fraction

import numpy as np
import pytest

from conftest import build_session, times_from_ikis
from tprseg.activity_units import derive_activity_units
from tprseg.hof_analysis import (
    AnalysisError, annotation_agreement, combine_transition_matrices, cut_at_state_boundaries, cut_report_table,
    pause_fraction_by_state, state_counts, state_label_correlation, state_summary, StateTrack,
    suggest_hof_states, task_distribution_by_state, transition_matrix, transition_table, ts_label_ranking_by_state,
)
from tprseg.iki_profile import TranslatorProfile
from tprseg.models import DELETION, FLOW, HESITATION, INSERTION, ORIENTATION, SOURCE, StateAnnotation
from tprseg.segmentation import segment_session

PROFILE = TranslatorProfile.from_thresholds("P01", 300, 900)


def track_of(*spans, key="SYN/S01", **kwargs):
    return StateTrack([StateAnnotation(start, end, state) for start, end, state in spans], key, **kwargs)


def tree_of(times, **kwargs):
    return segment_session(build_session(times, **kwargs), PROFILE)


def cut_pair(tree, track):
    cut, _ = cut_at_state_boundaries(tree, track)
    return cut, track


def test_transition_matrix():
    track = track_of((0, 10, "O"), (10, 20, "F"), (20, 30, "O"), (30, 40, "F"), (40, 50, "H"))
    matrix = transition_matrix(track)
    assert matrix.fraction(ORIENTATION, FLOW) == 1
    assert matrix.fraction(FLOW, ORIENTATION) == Fraction(1, 2)
    assert matrix.fraction(FLOW, HESITATION) == Fraction(1, 2)
    assert matrix.fraction(HESITATION, FLOW) is None
    assert matrix.total == 4
    assert matrix.todict()[FLOW] == {ORIENTATION: 1, HESITATION: 1}


def test_single_state_track_gives_zero_matrix(caplog):
    with caplog.at_level(logging.WARNING):
        matrix = transition_matrix(track_of((0, 10, "F"), (20, 30, "F")))
    assert matrix.total == 0
    assert np.all(matrix.probabilities == 0)
    assert "no state transitions" in caplog.text


def test_transition_table_combines_sessions():
    first = transition_matrix(track_of((0, 10, "O"), (10, 20, "F")))
    second = transition_matrix(track_of((0, 10, "O"), (10, 20, "H")))
    combined = combine_transition_matrices([first, second])
    assert combined.fraction(ORIENTATION, FLOW) == Fraction(1, 2)
    rows = transition_table({"es": combined}).validate().records()
    assert len(rows) == 6
    assert {(r["from"], r["to"]): r["probability"] for r in rows}[(ORIENTATION, HESITATION)] == 0.5


def test_overlapping_track_is_rejected():
    with pytest.raises(AnalysisError, match="overlap"):
        track_of((0, 10, "O"), (5, 20, "F"))


def test_assign_policies():
    spans = ((0, 100, "O"), (200, 300, "F"), (1000, 1100, "H"))
    times = [50, 150, 190, 600, 2000]
    owners, reassigned = track_of(*spans).assign(times)
    assert owners.tolist() == [0, 0, 1, 1, 2]
    assert reassigned == 4
    owners, _ = track_of(*spans, unassigned_policy="previous").assign(times)
    assert owners.tolist() == [0, 0, 0, 1, 2]


def test_segment_inside_one_state_is_unchanged():
    tree = tree_of([100, 200, 300])
    cut, report = cut_at_state_boundaries(tree, track_of((0, 1000, "F")))
    assert [s.label for s in cut.segments] == ["A"]
    assert report.segments_cut == 0
    assert not cut.segments[0].cut


def test_segment_across_boundary_is_cut():
    tree = tree_of([900, 1100])
    assert len(tree.segments) == 1
    cut, report = cut_at_state_boundaries(tree, track_of((0, 1000, "F"), (1000, 2000, "H")))
    assert [s.keystrokes for s in cut.segments] == [1, 1]
    assert [s.pause for s in cut.segments] == [None, 200]
    assert all(s.cut for s in cut.segments)
    assert (report.segments_cut, report.tasks_cut) == (1, 1)
    assert report.transitions == {(FLOW, HESITATION): 1}
    # the input tree is left as it was
    assert len(tree.segments) == 1

    row = cut_report_table([report]).validate().records()[0]
    assert row["F_to_H"] == 1


def test_cut_trees_never_span_states(rng):
    for _ in range(300):
        times = times_from_ikis(rng.choice([50, 150, 350, 1200], size=int(rng.integers(1, 60))))
        tree = tree_of(times)
        bounds = np.sort(rng.choice(np.arange(1, times[-1] + 2), size=int(rng.integers(1, 6)), replace=False))
        edges = [0] + bounds.tolist() + [times[-1] + 10]
        states = rng.choice(["O", "F", "H"], size=len(edges) - 1).tolist()
        track = track_of(*[(a, b, s) for a, b, s in zip(edges, edges[1:], states) if b > a])

        cut, report = cut_at_state_boundaries(tree, track)
        owners = track.assign(times, warn=False)[0]
        for segment in cut.segments:
            assert len(set(owners[segment.first:segment.last + 1].tolist())) == 1
        assert sum(s.keystrokes for s in cut.segments) == len(times)
        assert len(cut.segments) >= len(tree.segments)
        assert report.segments_cut == sum(1 for s in tree.segments
                                          if len(set(owners[s.first:s.last + 1].tolist())) > 1)


def test_uncut_tree_is_rejected():
    tree = tree_of([900, 1100])
    with pytest.raises(AnalysisError, match="spans a state boundary"):
        task_distribution_by_state([(tree, track_of((0, 1000, "F"), (1000, 2000, "H")))])


def test_task_distribution_in_flow(caplog):
    times = times_from_ikis([100, 400, 100, 400])
    kinds = [INSERTION] * 4 + [DELETION]
    pair = cut_pair(tree_of(times, kinds=kinds), track_of((0, 5000, "F")))
    with caplog.at_level(logging.WARNING):
        rows = task_distribution_by_state([pair]).validate().records()
    assert rows == [{"language": "es", "state": FLOW, "tasks": 3, "A": 2 / 3, "D": 1 / 3, "C": 0.0}]
    assert "no Tasks in state O" in caplog.text


def test_ts_label_ranking_ties():
    # TS labels in Flow: A, AA, A, AA, AAA
    times = times_from_ikis([1000, 100, 400, 1000, 1000, 400, 1000, 400, 400])
    pair = cut_pair(tree_of(times), track_of((0, 20000, "F")))
    rows = ts_label_ranking_by_state([pair], k=2).validate().records()
    assert [(r["rank"], r["label"], r["count"]) for r in rows] == [(1, "A", 2), (2, "AA", 2)]
    assert rows[0]["share"] == 0.4


def test_pause_fraction():
    tree = tree_of([1000, 1100, 6500, 6600])
    pair = cut_pair(tree, track_of((0, 10000, "H"), (10000, 12000, "F")))
    rows = {r["state"]: r for r in pause_fraction_by_state([pair]).validate().records()}
    assert rows[HESITATION]["pause_time"] == 5400
    assert rows[HESITATION]["fraction"] == pytest.approx(0.54)
    assert rows[FLOW]["fraction"] == 0.0


def test_state_summary_single_session():
    tree = tree_of(times_from_ikis([100] * 9, start=1000))
    pair = cut_pair(tree, track_of((0, 5000, "F")))
    rows = state_summary([pair], FLOW).validate().records()
    assert [r["statistic"] for r in rows] == ["min", "mean", "max"]
    for row in rows:
        assert (row["duration"], row["keys"], row["segments"], row["keys_per_ts"]) == (5000, 10, 1, 10)


def test_state_summary_missing_state():
    pair = cut_pair(tree_of([0, 100]), track_of((0, 5000, "F")))
    with pytest.raises(AnalysisError, match="occurs in no session"):
        state_summary([pair], HESITATION)


def test_state_counts():
    tracks = {"es": [track_of((0, 10, "O"), (10, 20, "F"), (20, 30, "H"), (30, 40, "F"))]}
    rows = state_counts(tracks).validate().records()
    assert [(r["state"], r["count"], r["pct"]) for r in rows] == [("O", 1, 25.0), ("F", 2, 50.0), ("H", 1, 25.0)]


def test_state_label_correlation_runs():
    times = times_from_ikis([100, 1000, 100, 400, 100, 1000, 1000, 400, 100, 1000, 400, 400, 1000, 100])
    kinds = [INSERTION] * 10 + [DELETION] * 5
    tree = tree_of(times, kinds=kinds)
    pair = cut_pair(tree, track_of((0, times[8] + 1, "F"), (times[8] + 1, times[-1] + 1, "H")))
    table = state_label_correlation([pair]).validate()
    assert table.column_names[:2] == ["column_a", "column_b"]


def drafting_session():
    times = times_from_ikis([100] * 4 + [2000] + [100] * 4, start=3000)
    kinds = [INSERTION] * 5 + [DELETION] * 5
    return build_session(times, kinds=kinds, fixations=[(0, 3000, SOURCE, 0)])


def test_suggest_hof_states():
    session = drafting_session()
    tree = segment_session(session, PROFILE)
    aus = derive_activity_units(session, PROFILE)
    draft = suggest_hof_states(session, tree, aus)
    assert [(a.start, a.end, a.state) for a in draft] == [
        (0, 3000, ORIENTATION), (3000, 3401, FLOW), (3401, 5800, HESITATION),
    ]
    # the H window holds the inserting Task before the pause and the deleting Task after it
    assert [a.confidence for a in draft] == [1.0, 1.0, 0.5]


def test_hesitation_looks_only_at_tasks_around_the_pause():
    # TS 2 is two thirds deletions overall, but the Tasks flanking its opening pause insert
    times = times_from_ikis([100] * 4 + [2000] + [100] * 4 + [400] + [100] * 9)
    kinds = [INSERTION] * 10 + [DELETION] * 10
    session = build_session(times, kinds=kinds)
    tree = segment_session(session, PROFILE)
    assert [len(s.tasks) for s in tree.segments] == [1, 2]

    draft = suggest_hof_states(session, tree, derive_activity_units(session, PROFILE))
    assert [a.state for a in draft] == [FLOW]


def test_suggest_without_reading_is_production_only():
    session = build_session(times_from_ikis([100] * 5))
    tree = segment_session(session, PROFILE)
    draft = suggest_hof_states(session, tree, derive_activity_units(session, PROFILE))
    assert [a.state for a in draft] == [FLOW]


def test_annotation_agreement():
    session = drafting_session()
    tree = segment_session(session, PROFILE)
    draft = suggest_hof_states(session, tree, derive_activity_units(session, PROFILE))
    assert annotation_agreement(draft, draft) == 1.0
    gold = [StateAnnotation(0, 3000, ORIENTATION), StateAnnotation(3000, 6000, FLOW)]
    assert annotation_agreement(draft, gold) == pytest.approx(3401 / 5800)
    assert annotation_agreement([], gold) == 0.0
