"""Reputation evaluation: per-pair histories, time-decayed pairwise scores,
extreme trimming and reputation-weighted fusion.

Everything lives on a single 0-100 scale: interaction quality, pairwise
scores and fused node reputation. New nodes start at 100.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .codec import TxType

logger = logging.getLogger(__name__)

INITIAL_REPUTATION = 100.0
MAX_REPUTATION = 100.0

# "no score" is None throughout; 0.0 is a real (very bad) score.
NO_SCORE = None


class ReputationError(ValueError):
    pass


@dataclass(frozen=True)
class TransactionRecord:
    quality: float
    weight: float
    completed_at: int

    def __post_init__(self):
        if not 0.0 <= self.quality <= MAX_REPUTATION:
            raise ReputationError(f"quality {self.quality} outside [0, 100]")
        if not self.weight > 0:
            raise ReputationError(f"weight must be positive, got {self.weight}")
        if self.completed_at < 0:
            raise ReputationError(f"completion tick must be >= 0, got {self.completed_at}")


@dataclass
class PairHistory:
    rater: int
    subject: int
    records: list[TransactionRecord] = field(default_factory=list)

    def add(self, record: TransactionRecord) -> None:
        # insort after equal keys keeps arrival order among same-tick records
        bisect.insort_right(self.records, record, key=lambda r: r.completed_at)

    def count_before(self, now: int) -> int:
        """C(u, v, now): records completed strictly before ``now``."""
        return bisect.bisect_left(self.records, now, key=lambda r: r.completed_at)


DEFAULT_WEIGHTS = {
    TxType.QUERY: 1.0,
    TxType.REPLY: 1.0,
    TxType.UPDATE: 1.0,
    TxType.RATE: 2.0,
    TxType.ASSERT: 3.0,
}


@dataclass(frozen=True)
class WeightTable:
    """Significance coefficient per transaction type."""

    weights: Mapping[TxType, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        missing = [t.name for t in TxType if t not in self.weights]
        if missing:
            raise ReputationError(f"weight table missing {', '.join(missing)}")
        bad = [t.name for t in TxType if not self.weights[t] > 0]
        if bad:
            raise ReputationError(f"weights must be positive: {', '.join(bad)}")

    def __getitem__(self, tx_type: TxType) -> float:
        return self.weights[TxType(tx_type)]


def timeliness(now: int, completed_at: int) -> float:
    """Age decay 1 / (now - completed_at); only defined for records in the past."""
    age = now - completed_at
    if age <= 0:
        raise ReputationError(f"record completed at {completed_at} is not before {now}")
    return 1.0 / age


def pairwise_score(history: PairHistory | Sequence[TransactionRecord], now: int) -> Optional[float]:
    """Rater's evaluation of the subject at ``now``.

    Sum of timeliness * quality * weight over the records completed before
    ``now``, divided by the sum of their weights. Decay only enters the
    numerator, so even perfect histories lose value as they age. Returns
    ``None`` when no record qualifies.
    """
    if isinstance(history, PairHistory):
        records = history.records[: history.count_before(now)]
    else:
        records = [r for r in history if r.completed_at < now]
    num = 0.0
    den = 0.0
    for rec in records:
        # inlined timeliness(); same operation order keeps results bit-identical
        num += (1.0 / (now - rec.completed_at)) * rec.quality * rec.weight
        den += rec.weight
    if den == 0.0:
        return NO_SCORE
    return num / den


def trim(scores: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
    """Drop one minimal and one maximal entry (first by rater id on ties).

    Fewer than three entries are returned unchanged, ordered by rater id.
    """
    ordered = sorted(scores, key=lambda item: item[0])
    if len(ordered) < 3:
        return ordered
    lo = min(range(len(ordered)), key=lambda i: ordered[i][1])
    rest = ordered[:lo] + ordered[lo + 1:]
    hi = max(range(len(rest)), key=lambda i: (rest[i][1], -i))
    return rest[:hi] + rest[hi + 1:]


def fuse(prior: Mapping[int, float], pairwise: Sequence[tuple[int, float]]) -> Optional[float]:
    """Reputation-weighted mean of post-trim pairwise scores.

    Each rater's weight is its own prior reputation normalised over the
    raters present. All-zero priors degrade to a plain mean.
    """
    if not pairwise:
        return NO_SCORE
    missing = [r for r, _ in pairwise if r not in prior]
    if missing:
        raise ReputationError(f"raters without a prior reputation: {missing}")
    total = sum(prior[r] for r, _ in pairwise)
    if total == 0:
        return sum(s for _, s in pairwise) / len(pairwise)
    return sum((prior[r] / total) * s for r, s in pairwise)


class ReputationLedger:
    """Fused scores, pair histories and the isolation list for one domain."""

    def __init__(self, weights: WeightTable | None = None):
        self.weights = weights or WeightTable()
        self.scores: dict[int, float] = {}
        self.histories: dict[tuple[int, int], PairHistory] = {}
        self.isolated: set[int] = set()
        self.isolated_at: dict[int, int] = {}
        self._raters: dict[int, set[int]] = {}

    def __contains__(self, node: int) -> bool:
        return node in self.scores

    def score(self, node: int) -> float:
        return self.scores[node]

    def is_isolated(self, node: int, at: int | None = None) -> bool:
        """Whether ``node`` is isolated (optionally: was already isolated at tick ``at``)."""
        if node not in self.isolated:
            return False
        return at is None or self.isolated_at.get(node, 0) <= at

    def admit_node(self, node: int) -> None:
        if node in self.isolated:
            raise ReputationError(f"node {node} is isolated and cannot be readmitted")
        if node in self.scores:
            raise ReputationError(f"node {node} already admitted")
        self.scores[node] = INITIAL_REPUTATION

    def add_record(self, rater: int, subject: int, record: TransactionRecord) -> None:
        key = (rater, subject)
        hist = self.histories.get(key)
        if hist is None:
            hist = self.histories[key] = PairHistory(rater, subject)
            self._raters.setdefault(subject, set()).add(rater)
        hist.add(record)

    def rate(self, rater: int, subject: int, quality: float, rated_type: TxType, completed_at: int) -> None:
        self.add_record(rater, subject, TransactionRecord(quality, self.weights[rated_type], completed_at))

    def pairwise_scores(self, now: int, subject: int) -> list[tuple[int, float]]:
        out = []
        for rater in sorted(self._raters.get(subject, ())):
            if rater == subject or rater in self.isolated or rater not in self.scores:
                continue
            s = pairwise_score(self.histories[(rater, subject)], now)
            if s is not NO_SCORE:
                out.append((rater, s))
        return out

    def record_and_refresh(self, now: int, subject: int) -> float:
        """Recompute and store the subject's fused score; unchanged without raters."""
        if subject in self.isolated:
            raise ReputationError(f"node {subject} is isolated")
        fused = fuse(self.scores, trim(self.pairwise_scores(now, subject)))
        if fused is NO_SCORE:
            return self.scores[subject]
        self.scores[subject] = fused
        return fused

    def preview(self, now: int, extra: Iterable[tuple[int, int, TransactionRecord]]) -> dict[int, float]:
        """Scores each rated subject would get if ``extra`` records were added now (no mutation)."""
        pending: dict[tuple[int, int], list[TransactionRecord]] = {}
        for rater, subject, rec in extra:
            pending.setdefault((rater, subject), []).append(rec)
        out = {}
        for v in sorted({s for _, s in pending}):
            if v in self.isolated or v not in self.scores:
                continue
            raters = set(self._raters.get(v, ())) | {r for r, s in pending if s == v}
            pw = []
            for r in sorted(raters):
                if r == v or r in self.isolated or r not in self.scores:
                    continue
                hist = self.histories.get((r, v))
                recs = (hist.records if hist else []) + pending.get((r, v), [])
                s = pairwise_score(recs, now)
                if s is not NO_SCORE:
                    pw.append((r, s))
            fused = fuse(self.scores, trim(pw))
            out[v] = self.scores[v] if fused is NO_SCORE else fused
        return out

    def halve_all(self) -> None:
        for node in self.scores:
            if node not in self.isolated:
                self.scores[node] = self.scores[node] / 2

    def mark_isolated(self, nodes: Iterable[int], at: int = 0) -> set[int]:
        fresh = set(nodes) - self.isolated
        for node in sorted(fresh):
            self.isolated.add(node)
            self.isolated_at[node] = at
            logger.info("node %d isolated at tick %d", node, at)
        return fresh

    def snapshot(self) -> dict[int, float]:
        return dict(self.scores)
