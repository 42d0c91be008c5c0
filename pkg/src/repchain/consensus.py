"""Sub-chain miner scheduling.

Two strategies are combined by an epoch machine:

* Strategy 2 (steady state): rank nodes by reputation, take the top
  ``n_candidates`` as S and the first ``k_exec`` online members of S as E;
  members of E mine in turn and E is re-elected after every full rotation.
* Strategy 1 (fallback): a random online node mines each round, with edge and
  cloud nodes preferred over terminals.

An epoch runs ``T1 + 1`` rotations under Strategy 2 while timer beta2 counts
ticks. Finishing within ``T2`` ticks just starts a new epoch. Overrunning
halves every reputation and switches to Strategy 1 for ``T3`` ticks, after
which every node scoring below ``T4`` is isolated for good.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .reputation import ReputationLedger


class Role(str, enum.Enum):
    TERMINAL = "terminal"
    EDGE = "edge"
    CLOUD = "cloud"


class Phase(str, enum.Enum):
    STRATEGY2_EPOCH = "strategy2"
    STRATEGY1_FALLBACK = "strategy1"


class ConsensusError(RuntimeError):
    """No eligible miner could be found (everyone isolated or offline)."""


@dataclass(frozen=True)
class ConsensusParams:
    T1: int
    T2: int
    T3: int
    T4: float
    n_candidates: int = 5
    k_exec: int = 3
    edge_preference: float = 3.0
    round_ticks: int = 1

    def __post_init__(self):
        if self.T1 < 1:
            raise ValueError("T1 must be >= 1")
        if self.T2 <= 0 or self.T3 <= 0:
            raise ValueError("T2 and T3 must be positive")
        if not 0 <= self.T4 <= 100:
            raise ValueError("T4 must lie in [0, 100]")
        if not 1 <= self.k_exec <= self.n_candidates:
            raise ValueError("need 1 <= k_exec <= n_candidates")
        if self.edge_preference <= 0:
            raise ValueError("edge_preference must be positive")
        if self.round_ticks < 1:
            raise ValueError("round_ticks must be >= 1")


@dataclass(frozen=True)
class MinerDecision:
    miner: int
    strategy_used: str  # "S1" or "S2"
    round: int


# actions emitted by consensus_tick, in the order they happen


@dataclass(frozen=True)
class Elected:
    S: tuple[int, ...]
    E: tuple[int, ...]
    reason: str


@dataclass(frozen=True)
class EpochEnded:
    beta1: int
    beta2: int
    overran: bool


@dataclass(frozen=True)
class Halved:
    pass


@dataclass(frozen=True)
class PhaseChanged:
    phase: Phase


@dataclass(frozen=True)
class Isolated:
    nodes: tuple[int, ...]


@dataclass(frozen=True)
class MinerChosen:
    decision: MinerDecision


@dataclass
class ConsensusState:
    phase: Phase = Phase.STRATEGY2_EPOCH
    beta1: int = 0
    timer_start: Optional[int] = None
    beta2: int = 0
    S: tuple[int, ...] = ()
    E: tuple[int, ...] = ()
    next_in_E: int = 0
    needs_election: bool = True
    round: int = 0
    rng: random.Random = field(default_factory=lambda: random.Random(0), repr=False)

    @classmethod
    def seeded(cls, seed: int) -> "ConsensusState":
        return cls(rng=random.Random(seed))


def strategy1_pick(online: Mapping[int, Role], rng: random.Random, edge_preference: float = 3.0,
                   isolated: Iterable[int] = (), round: int = 0) -> MinerDecision:
    """Sample one online, non-isolated node; edge and cloud nodes weigh ``edge_preference``."""
    banned = set(isolated)
    pool = sorted(n for n in online if n not in banned)
    if not pool:
        raise ConsensusError("no online, non-isolated node available for Strategy 1")
    weights = [1.0 if Role(online[n]) is Role.TERMINAL else edge_preference for n in pool]
    miner = rng.choices(pool, weights=weights)[0]
    return MinerDecision(miner, "S1", round)


def strategy2_elect(scores: Mapping[int, float], online: Iterable[int], params: ConsensusParams,
                    isolated: Iterable[int] = ()) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Top-n candidates by reputation (ties: lower id first) and the first k online among them."""
    banned = set(isolated)
    ranked = sorted((n for n in scores if n not in banned), key=lambda n: (-scores[n], n))
    S = tuple(ranked[: params.n_candidates])
    if not S:
        raise ConsensusError("candidate set S is empty")
    up = set(online)
    E = tuple(n for n in S if n in up)[: params.k_exec]
    return S, E


def isolate(ledger: ReputationLedger, threshold: float, scores: Mapping[int, float] | None = None,
            at: int = 0) -> set[int]:
    """Isolate every node scoring strictly below ``threshold``; returns the newly isolated."""
    view = ledger.scores if scores is None else scores
    return ledger.mark_isolated((n for n, s in view.items() if s < threshold), at=at)


def next_miner(state: ConsensusState) -> tuple[MinerDecision, bool]:
    """Take the next member of E. The flag is True when the rotation just wrapped."""
    if state.phase is not Phase.STRATEGY2_EPOCH:
        raise ConsensusError("next_miner called outside a Strategy-2 epoch")
    if not state.E:
        raise ConsensusError("executive set E is empty")
    miner = state.E[state.next_in_E]
    state.next_in_E += 1
    wrapped = state.next_in_E == len(state.E)
    if wrapped:
        state.next_in_E = 0
        state.beta1 += 1
        state.needs_election = True
    state.round += 1
    return MinerDecision(miner, "S2", state.round), wrapped


def _elect(state: ConsensusState, params: ConsensusParams, scores: Mapping[int, float],
           online: Iterable[int], isolated: Iterable[int], reason: str) -> Elected:
    state.S, state.E = strategy2_elect(scores, online, params, isolated)
    state.next_in_E = 0
    state.needs_election = False
    return Elected(state.S, state.E, reason)


def on_fork_detected(state: ConsensusState, params: ConsensusParams, scores: Mapping[int, float],
                     online: Iterable[int], isolated: Iterable[int] = ()) -> Elected:
    """Discard S and E and re-elect from current reputations."""
    return _elect(state, params, scores, online, isolated, "fork")


def consensus_tick(state: ConsensusState, params: ConsensusParams, ledger: ReputationLedger, now: int,
                   online: Mapping[int, Role], scores: Mapping[int, float] | None = None
                   ) -> tuple[ConsensusState, list]:
    """Advance the epoch machine by one mining round and pick that round's miner.

    ``scores`` is the reputation view used for ranking and isolation (defaults
    to the ledger's fused scores). Halving always acts on the ledger.
    """
    view = ledger.scores if scores is None else scores
    actions: list = []

    if state.timer_start is None:
        state.timer_start = now
    state.beta2 = now - state.timer_start

    if state.phase is Phase.STRATEGY2_EPOCH and state.beta1 > params.T1:
        state.timer_start = None  # stop beta2
        overran = state.beta2 > params.T2
        actions.append(EpochEnded(state.beta1, state.beta2, overran))
        if overran:
            ledger.halve_all()
            actions.append(Halved())
            state.timer_start, state.beta2 = now, 0
            state.phase = Phase.STRATEGY1_FALLBACK
            actions.append(PhaseChanged(state.phase))
        else:
            state.beta1 = 0
            state.timer_start, state.beta2 = now, 0
            state.needs_election = True

    if state.phase is Phase.STRATEGY1_FALLBACK and state.beta2 > params.T3:
        state.timer_start = None
        fresh = isolate(ledger, params.T4, view, at=now)
        actions.append(Isolated(tuple(sorted(fresh))))
        state.beta1 = 0
        state.phase = Phase.STRATEGY2_EPOCH
        actions.append(PhaseChanged(state.phase))
        state.timer_start, state.beta2 = now, 0
        state.needs_election = True

    isolated = ledger.isolated
    up = {n: r for n, r in online.items() if n not in isolated}

    if state.phase is Phase.STRATEGY1_FALLBACK:
        state.round += 1
        decision = strategy1_pick(up, state.rng, params.edge_preference, isolated, state.round)
        actions.append(MinerChosen(decision))
        return state, actions

    if not state.needs_election and state.E and state.E[state.next_in_E] in isolated:
        state.needs_election = True
        reason = "isolation"
    else:
        reason = "rotation"
    if state.needs_election or not state.E:
        actions.append(_elect(state, params, view, up, isolated, reason))
    if not state.E:
        # nobody in S is online: keep the chain alive with a Strategy-1 draw
        state.round += 1
        decision = strategy1_pick(up, state.rng, params.edge_preference, isolated, state.round)
        state.beta1 += 1
        state.needs_election = True
        actions.append(MinerChosen(decision))
        return state, actions
    decision, _ = next_miner(state)
    actions.append(MinerChosen(decision))
    return state, actions
