import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from repchain.codec import TxType
from repchain.reputation import (
    INITIAL_REPUTATION,
    PairHistory,
    ReputationError,
    ReputationLedger,
    TransactionRecord,
    WeightTable,
    fuse,
    pairwise_score,
    timeliness,
    trim,
)


def rec(q, w, t):
    return TransactionRecord(q, w, t)


def ledger_from(priors, histories):
    ledger = ReputationLedger()
    for node, score in priors.items():
        ledger.admit_node(node)
        ledger.scores[node] = score
    for (rater, subject), recs in histories.items():
        for q, w, t in recs:
            ledger.add_record(rater, subject, rec(q, w, t))
    return ledger


# -- worked examples


@pytest.mark.parametrize("now,done,expected", [(10, 9, 1.0), (10, 5, 0.2)])
def test_timeliness_examples(now, done, expected):
    assert timeliness(now, done) == expected


@pytest.mark.parametrize("done", [10, 11])
def test_timeliness_rejects_same_or_future_tick(done):
    with pytest.raises(ReputationError):
        timeliness(10, done)


def test_pairwise_examples():
    assert pairwise_score([rec(80, 2, 9)], 10) == 80.0
    assert pairwise_score([rec(100, 1, 9), rec(50, 1, 9)], 10) == 75.0
    assert pairwise_score([rec(100, 1, 9), rec(100, 3, 8)], 10) == 62.5


def test_pairwise_empty_is_sentinel_not_zero():
    assert pairwise_score([], 10) is None
    assert pairwise_score([rec(100, 1, 10)], 10) is None  # not completed before now


def test_pair_history_counts_only_past_records():
    h = PairHistory(1, 2)
    for t in (7, 3, 9, 3):
        h.add(rec(100, 1, t))
    assert [r.completed_at for r in h.records] == [3, 3, 7, 9]
    assert h.count_before(7) == 2
    assert pairwise_score(h, 8) == pytest.approx((100 / 5 + 100 / 5 + 100 / 1) / 3)


@pytest.mark.parametrize("scores,expected", [
    ([100, 80, 90], [90]),
    ([50, 50, 50], [50]),
    ([70, 80], [70, 80]),
])
def test_trim_examples(scores, expected):
    assert [s for _, s in trim(list(enumerate(scores, start=1)))] == expected


def test_trim_ties_drop_lowest_rater_id():
    assert trim([(3, 50), (1, 50), (2, 50)]) == [(3, 50)]
    assert trim([(1, 10), (2, 90), (3, 90), (4, 10)]) == [(3, 90), (4, 10)]


def test_fuse_examples():
    assert fuse({7: 30}, [(7, 90)]) == 90
    assert fuse({1: 100, 2: 50}, [(1, 90), (2, 60)]) == 80.0
    assert fuse({1: 10, 2: 10, 3: 10}, trim([(1, 42), (2, 42), (3, 42)])) == 42
    assert fuse({1: 0, 2: 0}, [(1, 90), (2, 60)]) == 75.0
    assert fuse({}, []) is None


def test_fuse_requires_priors():
    with pytest.raises(ReputationError, match="prior"):
        fuse({1: 50}, [(2, 10)])


def test_halving_examples():
    ledger = ReputationLedger()
    ledger.halve_all()
    assert ledger.scores == {}
    for n in ("A", "B"):
        ledger.admit_node(n)
    ledger.scores["B"] = 60.0
    ledger.halve_all()
    assert ledger.scores == {"A": 50.0, "B": 30.0}
    ledger.halve_all()
    assert ledger.scores == {"A": 25.0, "B": 15.0}


def test_admission_rules():
    ledger = ReputationLedger()
    ledger.admit_node(1)
    assert ledger.scores == {1: INITIAL_REPUTATION} == {1: 100.0}
    with pytest.raises(ReputationError, match="already"):
        ledger.admit_node(1)
    ledger.admit_node(2)
    ledger.mark_isolated([2], at=4)
    with pytest.raises(ReputationError, match="isolated"):
        ledger.admit_node(2)
    assert ledger.is_isolated(2) and ledger.is_isolated(2, at=4) and not ledger.is_isolated(2, at=3)


def test_refresh_examples():
    ledger = ReputationLedger()
    for n in range(5):
        ledger.admit_node(n)
    assert ledger.record_and_refresh(10, 0) == 100.0  # no raters: prior kept
    for rater, q in ((1, 80), (2, 90), (3, 100)):
        ledger.add_record(rater, 0, rec(q, 1, 9))
    assert ledger.record_and_refresh(10, 0) == 90.0
    ledger.add_record(1, 4, rec(70, 1, 9))
    assert ledger.record_and_refresh(10, 4) == 70.0


def test_refresh_ignores_isolated_raters_and_refuses_isolated_subject():
    ledger = ReputationLedger()
    for n in range(4):
        ledger.admit_node(n)
    ledger.add_record(1, 0, rec(100, 1, 9))
    ledger.add_record(2, 0, rec(0, 1, 9))
    ledger.mark_isolated([2])
    assert ledger.record_and_refresh(10, 0) == 100.0
    with pytest.raises(ReputationError):
        ledger.record_and_refresh(10, 2)


def test_preview_matches_refresh_without_mutating():
    ledger = ReputationLedger()
    for n in range(4):
        ledger.admit_node(n)
    ledger.rate(1, 0, 100, TxType.REPLY, 3)
    before = ledger.snapshot()
    extra = [(2, 0, rec(0, 1.0, 5)), (3, 0, rec(100, 2.0, 6))]
    projected = ledger.preview(8, extra)
    assert ledger.snapshot() == before
    for rater, subject, r in extra:
        ledger.add_record(rater, subject, r)
    assert projected == {0: ledger.record_and_refresh(8, 0)}


def test_weight_table_validation():
    assert WeightTable()[TxType.ASSERT] == 3.0
    with pytest.raises(ReputationError, match="missing"):
        WeightTable({TxType.QUERY: 1.0})
    with pytest.raises(ReputationError, match="positive"):
        WeightTable({t: 0.0 for t in TxType})


@pytest.mark.parametrize("kwargs", [dict(quality=101, weight=1, completed_at=0),
                                    dict(quality=50, weight=0, completed_at=0),
                                    dict(quality=50, weight=1, completed_at=-1)])
def test_record_validation(kwargs):
    with pytest.raises(ReputationError):
        TransactionRecord(**kwargs)


# -- oracle agreement and properties


def test_refresh_matches_oracle_on_random_histories():
    rng = random.Random("reputation-unit")
    for _ in range(200):
        priors, histories, subject, now = oracles.random_history(rng)
        ledger = ledger_from(priors, histories)
        assert abs(ledger.record_and_refresh(now, subject) - oracles.refresh(priors, histories, subject, now)) <= 1e-9


records = st.lists(st.tuples(st.floats(0, 100), st.sampled_from([1.0, 2.0, 3.0, 0.5]), st.integers(0, 99)),
                   min_size=1, max_size=20)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 10_000))
def test_timeliness_decreasing_and_bounded(done, age):
    s = timeliness(done + age, done)
    assert 0 < s <= 1
    assert timeliness(done + age + 1, done) < s


@settings(max_examples=200, deadline=None)
@given(records, st.floats(0.01, 1000))
def test_pairwise_weight_scale_invariance(recs, k):
    a = pairwise_score([rec(q, w, t) for q, w, t in recs], 100)
    b = pairwise_score([rec(q, w * k, t) for q, w, t in recs], 100)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 100), st.lists(st.sampled_from([1.0, 2.0, 3.0]), min_size=1, max_size=10))
def test_pairwise_constant_quality_unit_age(q, weights):
    assert pairwise_score([rec(q, w, 9) for w in weights], 10) == pytest.approx(q, abs=1e-9)


priors_scores = st.dictionaries(st.integers(0, 255), st.tuples(st.floats(0.0, 100), st.floats(0, 100)),
                                min_size=1, max_size=10)


@settings(max_examples=300, deadline=None)
@given(priors_scores, st.floats(0.01, 100))
def test_fuse_prior_scale_invariance_and_bounds(data, k):
    priors = {r: p for r, (p, _) in data.items()}
    pw = trim([(r, s) for r, (_, s) in data.items()])
    fused = fuse(priors, pw)
    assert min(s for _, s in pw) - 1e-9 <= fused <= max(s for _, s in pw) + 1e-9
    assert fuse({r: p * k for r, p in priors.items()}, pw) == pytest.approx(fused, rel=1e-9, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(priors_scores, st.sampled_from(["min", "max"]))
def test_outlier_replacement_is_trimmed(data, end):
    assume(len(data) >= 3)
    priors = {r: p for r, (p, _) in data.items()}
    scores = [(r, s) for r, (_, s) in data.items()]
    lo, hi = oracles.trimmed_extremes(dict(scores))
    victim, extreme = (lo, 0.0) if end == "min" else (hi, 100.0)
    replaced = [(r, extreme if r == victim else s) for r, s in scores]
    assert fuse(priors, trim(replaced)) == fuse(priors, trim(scores))


@settings(max_examples=300, deadline=None)
@given(st.dictionaries(st.integers(0, 255), st.floats(0, 100), max_size=20), st.integers(1, 6))
def test_halving_is_exact(scores, times):
    ledger = ReputationLedger()
    ledger.scores = dict(scores)
    for _ in range(times):
        ledger.halve_all()
    for n, s in scores.items():
        assert ledger.scores[n] == s / (2 ** times)
        assert ledger.scores[n] * (2 ** times) == s or s < 1e-300


def test_fused_scores_stay_in_range():
    rng = random.Random("range")
    for _ in range(300):
        priors, histories, subject, now = oracles.random_history(rng)
        fused = ledger_from(priors, histories).record_and_refresh(now, subject)
        assert 0.0 <= fused <= 100.0
