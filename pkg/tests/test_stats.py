import math
from fractions import Fraction
from itertools import combinations, permutations, product

import numpy as np
import pytest
from scipy.stats import kendalltau, ks_2samp, spearmanr

from tprseg.models import POSTEDIT
from tprseg.stats import (
    _ks_exact_p, ASYMPTOTIC, build_pairing_plan, CONVENTIONAL, decide, DIFFERENT, DIFFERENT_TRANSLATOR, EXACT,
    INVERTED, identification_experiment, KENDALL, ks2_test, median, PairSpec, parse_pairing_plan, pearson_correlation,
    PlanError, quantiles, rank_correlation, SAME, SAME_POSTEDIT, SAME_TRANSLATION, serialize_pairing_plan,
    SPEARMAN, StatsError,
)


def ks_distance(a, b):
    """Exact D as a fraction, straight from the empirical CDFs."""
    n, m = len(a), len(b)
    return max(
        abs(Fraction(sum(1 for v in a if v <= x), n) - Fraction(sum(1 for v in b if v <= x), m))
        for x in list(a) + list(b)
    )


def ks_enumerated_p(a, b):
    pooled = list(a) + list(b)
    observed = ks_distance(a, b)
    hits = total = 0
    for chosen in combinations(range(len(pooled)), len(a)):
        first = [pooled[i] for i in chosen]
        rest = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        hits += ks_distance(first, rest) >= observed
        total += 1
    return hits / total


def test_ks_identical_samples():
    result = ks2_test([1, 2, 3], [1, 2, 3])
    assert result.statistic == 0
    assert result.p_value == 1.0


def test_ks_disjoint_samples():
    result = ks2_test([1, 2, 3, 4], [5, 6, 7, 8])
    assert result.statistic == 1.0
    assert result.p_value == pytest.approx(2 / math.comb(8, 4))
    assert result.method == EXACT


def test_ks_exact_p_matches_enumeration():
    a, b = [1, 2, 3], [1.5, 2.5, 3.5]
    result = ks2_test(a, b)
    assert result.statistic == pytest.approx(float(ks_distance(a, b)))
    assert result.p_value == pytest.approx(ks_enumerated_p(a, b), abs=1e-12)


def assignment_matrix(n, m):
    """One row per way of drawing the first sample's n positions out of the pooled n + m."""
    rows = np.zeros((math.comb(n + m, n), n + m), dtype=np.int64)
    for row, chosen in enumerate(combinations(range(n + m), n)):
        rows[row, list(chosen)] = 1
    return rows


def ks_numerators(first_counts, n, m, group_ends):
    second_counts = np.arange(1, n + m + 1) - first_counts
    return np.abs(first_counts * m - second_counts * n)[..., group_ends].max(axis=-1)


@pytest.mark.parametrize("ties", [False, True])
def test_ks_exact_p_matches_enumeration_for_all_small_sizes(rng, ties):
    for n, m in product(range(1, 9), repeat=2):
        if ties:
            a, b = rng.integers(0, 4, size=n), rng.integers(0, 4, size=m)
        else:
            values = rng.permutation(n + m)
            a, b = values[:n], values[n:]
        pooled = np.sort(np.concatenate([a, b]))
        group_ends = np.append(pooled[1:] != pooled[:-1], True)

        observed = ks_numerators(np.array([np.count_nonzero(a <= x) for x in pooled]), n, m, group_ends)
        permuted = ks_numerators(np.cumsum(assignment_matrix(n, m), axis=1), n, m, group_ends)
        expected = float(Fraction(int(np.count_nonzero(permuted >= observed)), permuted.size))

        assert _ks_exact_p(n, m, pooled.tolist(), int(observed)) == expected, (n, m)
        result = ks2_test(a, b)
        assert result.statistic == pytest.approx(observed / (n * m))
        assert result.p_value == expected, (a.tolist(), b.tolist())


def test_ks_exact_agrees_with_scipy_without_ties(rng):
    a = rng.normal(size=10)
    b = rng.normal(0.5, size=12)
    result = ks2_test(a, b)
    reference = ks_2samp(a, b, method="exact")
    assert result.statistic == pytest.approx(reference.statistic)
    assert result.p_value == pytest.approx(reference.pvalue, rel=1e-6)


def test_ks_is_symmetric_and_rank_invariant(rng):
    a = rng.gamma(2.0, 150.0, size=15)
    b = rng.gamma(2.0, 190.0, size=9)
    forward = ks2_test(a, b)
    backward = ks2_test(b, a)
    assert forward.statistic == backward.statistic
    assert forward.p_value == pytest.approx(backward.p_value)
    logged = ks2_test(np.log(a), np.log(b))
    assert logged.statistic == forward.statistic
    assert logged.p_value == pytest.approx(forward.p_value)


def test_ks_asymptotic_for_large_samples(rng):
    a = rng.gamma(2.0, 100.0, size=400)
    b = rng.gamma(2.0, 300.0, size=300)
    result = ks2_test(a, b)
    assert result.method == ASYMPTOTIC
    assert result.statistic == pytest.approx(ks_2samp(a, b).statistic)
    assert 0.0 <= result.p_value < 1e-6


def test_ks_empty_sample():
    with pytest.raises(StatsError, match="empty"):
        ks2_test([], [1, 2])


@pytest.mark.parametrize("flavor", [SPEARMAN, KENDALL])
def test_rank_correlation_monotone(flavor):
    x = [1, 2, 3, 4, 5, 6]
    assert rank_correlation(x, x, flavor).statistic == pytest.approx(1.0)
    assert rank_correlation(x, [-v for v in x], flavor).statistic == pytest.approx(-1.0)


@pytest.mark.parametrize("flavor, reference", [(SPEARMAN, spearmanr), (KENDALL, kendalltau)])
def test_rank_correlation_exact_p_matches_permutations(rng, flavor, reference):
    x = rng.normal(size=5)
    y = x + rng.normal(scale=0.8, size=5)
    observed = abs(reference(x, y)[0])
    expected = np.mean([abs(reference(x, y[list(p)])[0]) >= observed - 1e-12 for p in permutations(range(5))])
    result = rank_correlation(x, y, flavor)
    assert result.method == EXACT
    assert result.p_value == pytest.approx(expected)


def test_rank_correlation_asymptotic_above_exact_max(rng):
    x = rng.normal(size=40)
    y = x + rng.normal(size=40)
    result = rank_correlation(x, y, SPEARMAN)
    assert result.method == ASYMPTOTIC
    assert result.statistic == pytest.approx(spearmanr(x, y)[0])
    assert result.p_value == pytest.approx(spearmanr(x, y)[1])


@pytest.mark.parametrize("x, y, message", [
    ([1, 2, 3], [1, 2], "length mismatch"),
    ([1, 2], [1, 2], "at least 3 pairs"),
    ([1, 1, 1], [1, 2, 3], "constant series"),
])
def test_correlation_errors(x, y, message):
    with pytest.raises(StatsError, match=message):
        rank_correlation(x, y)


def test_unknown_flavor():
    with pytest.raises(StatsError, match="unknown correlation flavor"):
        rank_correlation([1, 2, 3], [3, 1, 2], "pearson")


def test_pearson_linear():
    x = [1.0, 2.0, 4.0, 7.0]
    assert pearson_correlation(x, [2 * v + 1 for v in x]).statistic == pytest.approx(1.0)


def test_quantiles_examples():
    assert median([1, 2, 3, 4]) == 2.5
    assert quantiles([5], [0.0, 0.3, 1.0]) == [5.0, 5.0, 5.0]


def test_quantiles_match_sort_oracle(rng):
    values = rng.gamma(2.0, 150.0, size=1000)
    levels = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 0.999, 1.0]
    ordered = sorted(values)

    def oracle(p):
        h = (len(ordered) - 1) * p
        low = math.floor(h)
        high = min(low + 1, len(ordered) - 1)
        return ordered[low] + (h - low) * (ordered[high] - ordered[low])

    assert quantiles(values, levels) == pytest.approx([oracle(p) for p in levels], rel=1e-12)


def test_quantiles_reject_bad_level():
    with pytest.raises(StatsError):
        quantiles([1, 2], [1.5])


def test_decide_rules():
    assert decide(0.5, CONVENTIONAL) == SAME
    assert decide(0.01, CONVENTIONAL) == DIFFERENT
    assert decide(0.5, INVERTED) == DIFFERENT
    assert decide(0.01, INVERTED) == SAME
    with pytest.raises(StatsError):
        decide(0.5, "coin")


def test_identification_self_pairs_are_same(rng):
    samples = {
        f"SYN/S{i}": {"all": rng.gamma(2.0, 150.0, size=80).tolist(), "within_word": [100, 120, 140]}
        for i in range(3)
    }
    plan = [PairSpec(key, key, SAME_TRANSLATION) for key in samples]
    table, outcomes = identification_experiment(samples, plan)
    assert [o.decision for o in outcomes] == [SAME] * 3
    assert all(o.correct for o in outcomes)

    rows = table.records()
    assert [(r["rule"], r["comparison"]) for r in rows] == [
        (CONVENTIONAL, SAME_TRANSLATION), (INVERTED, SAME_TRANSLATION),
    ]
    assert rows[0]["same_pct"] == 100.0
    assert rows[1]["same_pct"] == 0.0


def test_identification_different_speeds_are_different(rng):
    samples = {}
    for i in range(4):
        scale = 100.0 if i % 2 else 600.0
        samples[f"SYN/P{i}"] = {"all": rng.gamma(2.0, scale, size=150).tolist(), "within_word": []}
    plan = [PairSpec(f"SYN/P{i}", f"SYN/P{j}", DIFFERENT_TRANSLATOR) for i, j in ((0, 1), (1, 2), (2, 3))]
    table, outcomes = identification_experiment(samples, plan, rule=INVERTED)
    assert [o.rule for o in outcomes] == [INVERTED] * 3
    assert table.records()[0]["rule"] == INVERTED
    conventional = [r for r in table.records() if r["rule"] == CONVENTIONAL][0]
    assert conventional["different_pct"] == 100.0
    assert conventional["correct_pct"] == 100.0


def test_identification_skips_empty_samples():
    samples = {"a": {"all": [1, 2, 3], "within_word": []}, "b": {"all": [1, 2, 3], "within_word": []}}
    table, outcomes = identification_experiment(samples, [PairSpec("a", "b", SAME_POSTEDIT)])
    assert outcomes == []
    assert table.rows == []


def test_identification_missing_session():
    with pytest.raises(PlanError, match="missing session"):
        identification_experiment({"a": {"all": [1], "within_word": [1]}}, [PairSpec("a", "b", SAME_TRANSLATION)])


def test_parse_pairing_plan():
    text = "# hand-made plan\nfirst\tsecond\tclass\nA/1\tA/2\ttranslation\nA/1\tA/3\tpostedit\n\nA/1\tB/1\tdifferent\n"
    plan = parse_pairing_plan(text)
    assert [p.comparison for p in plan] == [SAME_TRANSLATION, SAME_POSTEDIT, DIFFERENT_TRANSLATOR]
    assert [p.truth for p in plan] == [SAME, SAME, DIFFERENT]
    assert parse_pairing_plan(serialize_pairing_plan(plan)) == plan


@pytest.mark.parametrize("text, message", [
    ("", "empty"),
    ("A/1\tA/2\n", "expected first<TAB>second<TAB>class"),
    ("A/1\tA/2\tcousins\n", "unknown comparison class"),
])
def test_parse_pairing_plan_errors(text, message):
    with pytest.raises(PlanError, match=message):
        parse_pairing_plan(text)


def test_build_pairing_plan(make_session):
    sessions = [
        make_session([0, 100], translator="P01", session_id="P01_T1"),
        make_session([0, 100], translator="P01", session_id="P01_T2"),
        make_session([0, 100], translator="P01", session_id="P01_P3", mode=POSTEDIT),
        make_session([0, 100], translator="P02", session_id="P02_T1"),
        make_session([0, 100], translator="P03", session_id="P03_T1", target_lang="ar"),
    ]
    plan = build_pairing_plan(sessions)
    by_class = {c: [(p.first, p.second) for p in plan if p.comparison == c] for c in
                (SAME_TRANSLATION, SAME_POSTEDIT, DIFFERENT_TRANSLATOR)}
    assert by_class[SAME_TRANSLATION] == [("SYN/P01_T1", "SYN/P01_T2")]
    assert by_class[SAME_POSTEDIT] == [("SYN/P01_T1", "SYN/P01_P3"), ("SYN/P01_T2", "SYN/P01_P3")]
    assert by_class[DIFFERENT_TRANSLATOR] == [("SYN/P01_T1", "SYN/P02_T1"), ("SYN/P01_T2", "SYN/P02_T1")]
