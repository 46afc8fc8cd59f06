"""
Statistical kernel: order-statistics quantiles, the two-sample Kolmogorov-Smirnov
test, rank and linear correlations, and the translator identification experiment.
"""

import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, islice, permutations, product
from typing import Dict, Iterable, List, Sequence

import numpy as np
from scipy.stats import kendalltau, kstwobign, pearsonr, rankdata, spearmanr

from .models import DataError, POSTEDIT, TRANSLATION
from .report import Column, ReportTable, provenance

logger = logging.getLogger(__name__)

EXACT = "exact"
ASYMPTOTIC = "asymptotic"

SPEARMAN = "spearman_rho"
KENDALL = "kendall_tau"

CONVENTIONAL = "conventional"
INVERTED = "inverted"
RULES = (CONVENTIONAL, INVERTED)

SAME = "same"
DIFFERENT = "different"
# comparison classes of the identification experiment
SAME_TRANSLATION = "translation"
SAME_POSTEDIT = "postedit"
DIFFERENT_TRANSLATOR = "different"
COMPARISONS = (SAME_TRANSLATION, SAME_POSTEDIT, DIFFERENT_TRANSLATOR)

PERMUTATION_CHUNK = 40_000


class StatsError(DataError):
    pass


class PlanError(DataError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: int
    m: int
    method: str
    name: str = ""
    metadata: Dict[str, object] = field(default_factory=dict, compare=False)

    def todict(self):
        return {
            "name": self.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n": self.n,
            "m": self.m,
            "method": self.method,
            "metadata": dict(self.metadata),
        }


def _sample(values, what="sample"):
    array = np.asarray(values, dtype=float).ravel()
    if array.size == 0:
        raise StatsError(f"empty {what}")
    return array


def quantiles(sample, levels) -> List[float]:
    values = _sample(sample)
    levels = np.asarray(list(levels), dtype=float)
    if np.any((levels < 0) | (levels > 1)):
        raise StatsError("quantile levels must lie in [0, 1]")
    return [float(q) for q in np.quantile(values, levels, method="linear")]


def median(sample) -> float:
    return float(np.median(_sample(sample)))


# --- Kolmogorov-Smirnov ---------------------------------------------------------------

def _ks_exact_p(n, m, pooled, d_num):
    """
    P(D >= d) under random assignment of the pooled values to the two samples.

    Counts monotone lattice paths (i values of the first sample, j of the second)
    that keep |i*m - j*n| < d_num at every point where a complete group of tied
    values has been consumed. Integer arithmetic throughout.
    """
    if d_num == 0:
        return 1.0
    # the condition is symmetric in (i, n) <-> (j, m): keep the short side in the inner loop
    if n > m:
        n, m = m, n
    total_n = n + m
    checkpoint = [False] * (total_n + 1)
    for k in range(1, total_n):
        checkpoint[k] = pooled[k - 1] != pooled[k]
    checkpoint[total_n] = True

    column = [0] * (n + 1)
    for j in range(m + 1):
        for i in range(n + 1):
            if i == 0 and j == 0:
                column[0] = 1
                continue
            count = column[i] + (column[i - 1] if i else 0)
            if checkpoint[i + j] and abs(i * m - j * n) >= d_num:
                count = 0
            column[i] = count

    inside = column[n]
    total = math.comb(total_n, n)
    return float(Fraction(total - inside, total))


def ks2_test(a, b, exact_max=25) -> TestResult:
    a = np.sort(_sample(a, "first sample"))
    b = np.sort(_sample(b, "second sample"))
    n, m = a.size, b.size

    pooled = np.sort(np.concatenate([a, b]))
    values = np.unique(pooled)
    counts_a = np.searchsorted(a, values, side="right").astype(np.int64)
    counts_b = np.searchsorted(b, values, side="right").astype(np.int64)
    d_num = int(np.max(np.abs(counts_a * m - counts_b * n)))
    statistic = d_num / (n * m)

    if min(n, m) <= exact_max:
        p_value = _ks_exact_p(n, m, pooled.tolist(), d_num)
        method = EXACT
    else:
        en = math.sqrt(n * m / (n + m))
        p_value = float(kstwobign.sf(en * statistic))
        method = ASYMPTOTIC

    return TestResult(
        statistic=statistic,
        p_value=min(1.0, max(0.0, p_value)),
        n=n,
        m=m,
        method=method,
        name="ks2",
        metadata={"exact_max": exact_max},
    )


# --- correlations -----------------------------------------------------------------------

def _paired(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise StatsError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise StatsError(f"need at least 3 pairs, got {x.size}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise StatsError("correlation undefined for a constant series")
    return x, y


def _rank_statistic_factory(x, y, flavor):
    """Returns (observed, statistic_of(permutation_chunk)) on ranks of x and y."""
    rx = rankdata(x)
    ry = rankdata(y)

    if flavor == SPEARMAN:
        cx = rx - rx.mean()
        cy = ry - ry.mean()
        denominator = math.sqrt(float(cx @ cx) * float(cy @ cy))

        def statistic(perms):
            return (cy[perms] @ cx) / denominator

    else:
        i, j = np.triu_indices(rx.size, k=1)
        sx = np.sign(rx[i] - rx[j])
        # tau-b: tie corrections do not change under permutation
        denominator = math.sqrt(float(np.count_nonzero(sx)) * float(np.count_nonzero(np.sign(ry[i] - ry[j]))))

        def statistic(perms):
            permuted = ry[perms]
            return (np.sign(permuted[:, i] - permuted[:, j]) @ sx) / denominator

    observed = float(statistic(np.arange(rx.size)[None, :])[0])
    return observed, statistic


def _permutation_p(x, y, flavor):
    observed, statistic = _rank_statistic_factory(x, y, flavor)
    threshold = abs(observed) - 1e-12
    hits = 0
    total = 0
    perms = permutations(range(x.size))
    while True:
        chunk = np.array(list(islice(perms, PERMUTATION_CHUNK)), dtype=np.intp)
        if chunk.size == 0:
            break
        hits += int(np.count_nonzero(np.abs(statistic(chunk)) >= threshold))
        total += chunk.shape[0]
    return hits / total


def rank_correlation(x, y, flavor=SPEARMAN, exact_max=10) -> TestResult:
    x, y = _paired(x, y)
    if flavor == SPEARMAN:
        result = spearmanr(x, y)
    elif flavor == KENDALL:
        result = kendalltau(x, y)
    else:
        raise StatsError(f"unknown correlation flavor {flavor!r}")
    coefficient, p_value = float(result[0]), float(result[1])

    method = ASYMPTOTIC
    if x.size <= exact_max:
        p_value = _permutation_p(x, y, flavor)
        method = EXACT

    return TestResult(
        statistic=min(1.0, max(-1.0, coefficient)),
        p_value=min(1.0, max(0.0, p_value)),
        n=int(x.size),
        m=int(y.size),
        method=method,
        name=flavor,
    )


def pearson_correlation(x, y) -> TestResult:
    x, y = _paired(x, y)
    r, p_value = pearsonr(x, y)
    return TestResult(
        statistic=min(1.0, max(-1.0, float(r))),
        p_value=min(1.0, max(0.0, float(p_value))),
        n=int(x.size),
        m=int(y.size),
        method=ASYMPTOTIC,
        name="pearson_r",
    )


# --- translator identification ------------------------------------------------------------

@dataclass(frozen=True)
class PairSpec:
    first: str
    second: str
    comparison: str

    @property
    def truth(self):
        return DIFFERENT if self.comparison == DIFFERENT_TRANSLATOR else SAME


@dataclass(frozen=True)
class IdentificationOutcome:
    pair: PairSpec
    decision: str
    p_value: float
    statistic: float
    rule: str

    @property
    def comparison(self):
        return self.pair.comparison

    @property
    def truth(self):
        return self.pair.truth

    @property
    def correct(self):
        return self.decision == self.truth


def decide(p_value, rule=CONVENTIONAL, alpha=0.05):
    """Conventional: same population unless the KS test rejects. Inverted: same iff p < alpha."""
    if rule == CONVENTIONAL:
        return SAME if p_value >= alpha else DIFFERENT
    if rule == INVERTED:
        return SAME if p_value < alpha else DIFFERENT
    raise StatsError(f"unknown decision rule {rule!r}")


def parse_pairing_plan(stream) -> List[PairSpec]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    plan = []
    for line_num, raw in enumerate(stream, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "first":
            continue
        if len(fields) != 3:
            raise PlanError(f"line {line_num}: expected first<TAB>second<TAB>class, got {len(fields)} fields")
        first, second, comparison = (f.strip() for f in fields)
        if comparison not in COMPARISONS:
            raise PlanError(f"line {line_num}: unknown comparison class {comparison!r}")
        plan.append(PairSpec(first, second, comparison))
    if not plan:
        raise PlanError("pairing plan is empty")
    return plan


def serialize_pairing_plan(plan: Iterable[PairSpec]) -> str:
    lines = ["first\tsecond\tclass"]
    lines += [f"{p.first}\t{p.second}\t{p.comparison}" for p in plan]
    return "\n".join(lines) + "\n"


def build_pairing_plan(sessions) -> List[PairSpec]:
    """
    Same-translator translation pairs, translation x post-editing pairs of a
    translator, and different-translator translation pairs within one target
    language (restricted to the same source text when sessions carry a `text` header).
    """
    by_translator = defaultdict(lambda: {TRANSLATION: [], POSTEDIT: []})
    for session in sorted(sessions, key=lambda s: s.key):
        by_translator[session.translator_id][session.mode].append(session)

    plan = []
    for translator_id in sorted(by_translator):
        modes = by_translator[translator_id]
        for first, second in combinations(modes[TRANSLATION], 2):
            plan.append(PairSpec(first.key, second.key, SAME_TRANSLATION))
        for first, second in product(modes[TRANSLATION], modes[POSTEDIT]):
            plan.append(PairSpec(first.key, second.key, SAME_POSTEDIT))

    translations = [s for t in sorted(by_translator) for s in by_translator[t][TRANSLATION]]
    for first, second in combinations(translations, 2):
        if first.translator_id == second.translator_id or first.target_lang != second.target_lang:
            continue
        text_a, text_b = first.meta.get("text"), second.meta.get("text")
        if text_a is not None and text_b is not None and text_a != text_b:
            continue
        plan.append(PairSpec(first.key, second.key, DIFFERENT_TRANSLATOR))
    return plan


def identification_experiment(samples: Dict[str, Dict[str, Sequence[float]]], plan: Sequence[PairSpec],
                              rule=CONVENTIONAL, alpha=0.05, sample_choice=None, exact_max=25):
    """
    Run KS2 on every planned pair and tabulate same/different decisions per comparison class.

    `samples` maps a session key to {"all": IKIs, "within_word": WP IKIs}. The table holds
    the requested rule first and the other rule after it.
    Returns (ReportTable, outcomes for the requested rule).
    """
    if rule not in RULES:
        raise StatsError(f"unknown decision rule {rule!r}")
    sample_choice = sample_choice or {
        SAME_TRANSLATION: "all", SAME_POSTEDIT: "within_word", DIFFERENT_TRANSLATOR: "all",
    }

    tests = []
    for pair in plan:
        for key in (pair.first, pair.second):
            if key not in samples:
                raise PlanError(f"pair {pair.first} / {pair.second}: missing session {key}")
        choice = sample_choice[pair.comparison]
        a, b = samples[pair.first][choice], samples[pair.second][choice]
        if len(a) == 0 or len(b) == 0:
            logger.warning(f"Skipping pair {pair.first} / {pair.second}: no {choice} IKIs")
            continue
        tests.append((pair, ks2_test(a, b, exact_max=exact_max)))

    rules = [rule] + [r for r in RULES if r != rule]
    outcomes = {
        r: [IdentificationOutcome(pair, decide(t.p_value, r, alpha), t.p_value, t.statistic, r) for pair, t in tests]
        for r in rules
    }

    rows = []
    for r in rules:
        for comparison in COMPARISONS:
            group = [o for o in outcomes[r] if o.comparison == comparison]
            if not group:
                continue
            total = len(group)
            same = sum(1 for o in group if o.decision == SAME)
            correct = sum(1 for o in group if o.correct)
            rows.append((
                r, comparison, sample_choice[comparison], total,
                same, 100.0 * same / total, total - same, 100.0 * (total - same) / total,
                100.0 * correct / total,
            ))

    table = ReportTable(
        name="identification",
        columns=[
            Column("rule", "str"),
            Column("comparison", "str"),
            Column("sample", "str"),
            Column("total", "int"),
            Column("same", "int"),
            Column("same_pct", "float", "%"),
            Column("different", "int"),
            Column("different_pct", "float", "%"),
            Column("correct_pct", "float", "%"),
        ],
        rows=rows,
        provenance=provenance(
            "identification_experiment",
            {"rule": rule, "alpha": alpha, "sample_choice": sample_choice, "exact_max": exact_max},
            [f"{p.first}|{p.second}|{p.comparison}" for p in plan],
        ),
    )
    return table, outcomes[rule]
