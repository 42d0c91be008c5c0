import random
from collections import Counter

import pytest

from repchain.consensus import (
    ConsensusError,
    ConsensusParams,
    ConsensusState,
    Elected,
    EpochEnded,
    Halved,
    Isolated,
    MinerChosen,
    MinerDecision,
    Phase,
    PhaseChanged,
    Role,
    consensus_tick,
    on_fork_detected,
    strategy1_pick,
    strategy2_elect,
)
from repchain.reputation import ReputationLedger

ROLES = {1: Role.CLOUD, 2: Role.EDGE, 3: Role.EDGE, 4: Role.TERMINAL}
START = {1: 90.0, 2: 80.0, 3: 70.0, 4: 60.0}


def make_ledger(scores=START):
    ledger = ReputationLedger()
    for n, s in scores.items():
        ledger.admit_node(n)
        ledger.scores[n] = s
    return ledger


def run_trace(params, ledger, ticks, online=ROLES, seed=11):
    state = ConsensusState.seeded(seed)
    trace = []
    for now in ticks:
        _, actions = consensus_tick(state, params, ledger, now, online)
        trace.append((now, actions))
    return state, trace


def s1_draws(seed, n):
    """Independent replay of the Strategy-1 draw: weights 3 for cloud/edge, 1 for terminal."""
    rng = random.Random(seed)
    return [rng.choices([1, 2, 3, 4], weights=[3, 3, 3, 1])[0] for _ in range(n)]


S2 = "S2"


def test_healthy_epoch_trace():
    params = ConsensusParams(T1=1, T2=100, T3=10, T4=40, n_candidates=3, k_exec=2)
    ledger = make_ledger()
    state, trace = run_trace(params, ledger, range(6))
    elect = Elected((1, 2, 3), (1, 2), "rotation")
    assert trace == [
        (0, [elect, MinerChosen(MinerDecision(1, S2, 1))]),
        (1, [MinerChosen(MinerDecision(2, S2, 2))]),
        (2, [elect, MinerChosen(MinerDecision(1, S2, 3))]),
        (3, [MinerChosen(MinerDecision(2, S2, 4))]),
        # beta1 = 2 > T1 with beta2 = 4 <= T2: epoch closes cleanly
        (4, [EpochEnded(2, 4, False), elect, MinerChosen(MinerDecision(1, S2, 5))]),
        (5, [MinerChosen(MinerDecision(2, S2, 6))]),
    ]
    assert ledger.scores == START
    assert state.phase is Phase.STRATEGY2_EPOCH


def test_overrun_halving_and_fallback_trace():
    params = ConsensusParams(T1=1, T2=3, T3=4, T4=40, n_candidates=3, k_exec=2)
    ledger = make_ledger()
    before = dict(ledger.scores)
    state, trace = run_trace(params, ledger, range(0, 14, 2), seed=5)
    elect = Elected((1, 2, 3), (1, 2), "rotation")
    draws = s1_draws(5, 3)
    assert trace == [
        (0, [elect, MinerChosen(MinerDecision(1, S2, 1))]),
        (2, [MinerChosen(MinerDecision(2, S2, 2))]),
        (4, [elect, MinerChosen(MinerDecision(1, S2, 3))]),
        (6, [MinerChosen(MinerDecision(2, S2, 4))]),
        # beta2 = 8 > T2 = 3: halve, switch to Strategy 1 with the timer restarted
        (8, [EpochEnded(2, 8, True), Halved(), PhaseChanged(Phase.STRATEGY1_FALLBACK),
             MinerChosen(MinerDecision(draws[0], "S1", 5))]),
        (10, [MinerChosen(MinerDecision(draws[1], "S1", 6))]),
        (12, [MinerChosen(MinerDecision(draws[2], "S1", 7))]),
    ]
    for n, s in before.items():
        assert ledger.scores[n] == s / 2  # bitwise
        assert ledger.scores[n] * 2 == s
    assert state.phase is Phase.STRATEGY1_FALLBACK


def test_fallback_timeout_isolates_exactly_the_low_scorers():
    params = ConsensusParams(T1=1, T2=3, T3=4, T4=40, n_candidates=3, k_exec=2)
    ledger = make_ledger()
    state, trace = run_trace(params, ledger, range(0, 18, 2), seed=5)
    draws = s1_draws(5, 3)
    assert trace[4:] == [
        (8, [EpochEnded(2, 8, True), Halved(), PhaseChanged(Phase.STRATEGY1_FALLBACK),
             MinerChosen(MinerDecision(draws[0], "S1", 5))]),
        (10, [MinerChosen(MinerDecision(draws[1], "S1", 6))]),
        (12, [MinerChosen(MinerDecision(draws[2], "S1", 7))]),  # beta2 = 4, not yet past T3
        # beta2 = 6 > T3: isolate R < 40 ({3: 35, 4: 30}); node 2 sits exactly on T4 and stays
        (14, [Isolated((3, 4)), PhaseChanged(Phase.STRATEGY2_EPOCH),
              Elected((1, 2), (1, 2), "rotation"), MinerChosen(MinerDecision(1, S2, 8))]),
        (16, [MinerChosen(MinerDecision(2, S2, 9))]),
    ]
    assert ledger.isolated == {3, 4}
    assert ledger.scores == {1: 45.0, 2: 40.0, 3: 35.0, 4: 30.0}
    assert state.phase is Phase.STRATEGY2_EPOCH


def test_isolated_nodes_never_scheduled_again():
    params = ConsensusParams(T1=1, T2=3, T3=4, T4=40, n_candidates=4, k_exec=4)
    ledger = make_ledger()
    _, trace = run_trace(params, ledger, range(0, 30, 2), seed=3)
    isolated_at = None
    for now, actions in trace:
        for a in actions:
            if isinstance(a, Isolated) and a.nodes:
                isolated_at = now if isolated_at is None else isolated_at
            if isolated_at is not None and now >= isolated_at:
                if isinstance(a, Elected):
                    assert not set(a.S + a.E) & ledger.isolated
                if isinstance(a, MinerChosen):
                    assert a.decision.miner not in ledger.isolated
    assert isolated_at is not None
    assert ledger.isolated == {3, 4}


def test_everyone_isolated_is_an_error():
    # every epoch overruns, so halving eventually pushes all nodes under T4
    params = ConsensusParams(T1=1, T2=3, T3=4, T4=40, n_candidates=4, k_exec=4)
    with pytest.raises(ConsensusError, match="empty"):
        run_trace(params, make_ledger(), range(0, 400, 2), seed=3)


def test_offline_candidates_skipped_in_E():
    params = ConsensusParams(T1=1, T2=100, T3=10, T4=40, n_candidates=3, k_exec=2)
    online = {n: r for n, r in ROLES.items() if n != 1}
    _, trace = run_trace(params, make_ledger(), [0, 1], online=online)
    assert trace[0][1][0] == Elected((1, 2, 3), (2, 3), "rotation")
    assert [a.decision.miner for _, acts in trace for a in acts if isinstance(a, MinerChosen)] == [2, 3]


def test_no_online_candidate_falls_back_to_a_random_draw():
    params = ConsensusParams(T1=1, T2=100, T3=10, T4=40, n_candidates=1, k_exec=1)
    _, trace = run_trace(params, make_ledger(), [0], online={4: Role.TERMINAL})
    assert trace[0][1][-1] == MinerChosen(MinerDecision(4, "S1", 1))


def test_fork_triggers_fresh_election():
    params = ConsensusParams(T1=2, T2=100, T3=10, T4=40, n_candidates=2, k_exec=2)
    ledger = make_ledger()
    state, _ = run_trace(params, ledger, [0])
    ledger.scores[4] = 99.0
    assert on_fork_detected(state, params, ledger.scores, ROLES) == Elected((4, 1), (4, 1), "fork")
    assert state.next_in_E == 0


def test_strategy2_ties_break_on_node_id():
    params = ConsensusParams(T1=1, T2=1, T3=1, T4=0, n_candidates=3, k_exec=2)
    S, E = strategy2_elect({9: 50.0, 3: 50.0, 5: 70.0, 1: 10.0}, [3, 9], params)
    assert S == (5, 3, 9) and E == (3, 9)
    with pytest.raises(ConsensusError):
        strategy2_elect({1: 10.0}, [1], params, isolated=[1])


def test_strategy1_prefers_edge_and_cloud():
    rng = random.Random(0)
    counts = Counter(strategy1_pick(ROLES, rng, 3.0).miner for _ in range(20_000))
    # weights 3:3:3:1 -> terminal share 0.1
    assert abs(counts[4] / 20_000 - 0.1) < 0.01
    assert all(abs(counts[n] / 20_000 - 0.3) < 0.015 for n in (1, 2, 3))
    with pytest.raises(ConsensusError):
        strategy1_pick(ROLES, rng, isolated=ROLES)


@pytest.mark.parametrize("kwargs", [dict(T1=0), dict(T2=0), dict(T4=101), dict(k_exec=6), dict(round_ticks=0),
                                    dict(edge_preference=0)])
def test_params_validation(kwargs):
    base = dict(T1=1, T2=5, T3=5, T4=10, n_candidates=5, k_exec=3)
    base.update(kwargs)
    with pytest.raises(ValueError):
        ConsensusParams(**base)
