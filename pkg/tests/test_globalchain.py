import dataclasses
import math
import random
from collections import Counter

import pytest

from helpers import block_on, keyring, signed_tx
from repchain.codec import TxType, hash80, merkle_proof
from repchain.globalchain import (
    CloudStake,
    GlobalChain,
    RelayMessage,
    StakeError,
    build_global_block,
    relay,
    relay_transaction,
    select_proposer,
)
from repchain.ledger import Chain, RejectReason
from repchain.reputation import ReputationLedger


def test_single_domain_always_selected():
    rng = random.Random(1)
    assert {select_proposer([CloudStake(4, 10.0)], rng, r) for r in range(100)} == {4}


def test_stake_proportional_frequency():
    rng = random.Random(2)
    stakes = [CloudStake(0, 75.0), CloudStake(1, 25.0), CloudStake(2, 0.0)]
    n = 10_000
    counts = Counter(select_proposer(stakes, rng, r) for r in range(n))
    assert abs(counts[0] / n - 0.75) <= 0.02
    assert abs(counts[0] / n - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / n)
    assert counts[2] == 0


def test_selection_is_deterministic_given_rng_state():
    stakes = [CloudStake(0, 3.0), CloudStake(1, 5.0)]
    a = [select_proposer(stakes, random.Random(9), r) for r in range(5)]
    b = [select_proposer(list(reversed(stakes)), random.Random(9), r) for r in range(5)]
    assert a == b


def test_invalid_stakes():
    with pytest.raises(StakeError):
        select_proposer([CloudStake(0, 0.0)], random.Random(0))
    with pytest.raises(StakeError):
        select_proposer([], random.Random(0))
    with pytest.raises(StakeError):
        CloudStake(0, -1.0)


@pytest.fixture
def anchored():
    """A relay request committed in a source-domain block, plus that domain's chain."""
    ring, ids = keyring("src-cloud", "src-terminal", "dst-edge")
    chain = Chain()
    txs = [signed_tx(ring, ids["src-terminal"], ids["src-cloud"], TxType.UPDATE, b"R-payload-%d" % i)
           for i in range(3)]
    block = block_on(ring, chain.tip_hash, 1, ids["src-cloud"], txs)
    chain.append(block)
    msg = RelayMessage((0, ids["src-terminal"]), (1, ids["dst-edge"]), b"hello", block.header,
                       merkle_proof(txs, 1), txs[1])
    known = lambda h: chain.header_by_hash(h.current_hash) == h  # noqa: E731
    return ring, ids, chain, msg, known


def test_anchored_relay_accepted(anchored):
    _, _, _, msg, known = anchored
    assert relay(msg, known)


def test_forged_proof_rejected(anchored):
    _, _, _, msg, known = anchored
    forged = dataclasses.replace(msg, proof=merkle_proof([msg.origin_tx], 0) + msg.proof[1:])
    assert relay(forged, known).reason is RejectReason.BAD_ANCHOR
    other_tx = dataclasses.replace(msg.origin_tx, add=b"x" * 128)
    assert relay(dataclasses.replace(msg, origin_tx=other_tx), known).reason is RejectReason.BAD_ANCHOR


def test_unknown_header_rejected(anchored):
    _, _, _, msg, known = anchored
    stray = dataclasses.replace(msg.header, current_hash=hash80(b"never committed"))
    assert relay(dataclasses.replace(msg, header=stray), known).reason is RejectReason.BAD_ANCHOR


def test_sender_mismatch_rejected(anchored):
    _, ids, _, msg, known = anchored
    assert relay(dataclasses.replace(msg, source=(0, ids["src-cloud"])), known).reason is RejectReason.BAD_ANCHOR


def test_isolated_sender_rejected(anchored):
    _, ids, _, msg, known = anchored
    ledger = ReputationLedger()
    ledger.admit_node(ids["src-terminal"])
    ledger.mark_isolated([ids["src-terminal"]])
    assert relay(msg, known, ledger).reason is RejectReason.ISOLATED_SENDER


def test_payload_limit():
    with pytest.raises(ValueError):
        RelayMessage((0, 1), (1, 2), b"x" * 129, None, (), None)


def test_global_chain_accepts_in_order_and_longest_wins(anchored):
    _, ids, _, msg, _ = anchored
    cloud_ids = {0: ids["src-cloud"], 1: 77}
    a, b = GlobalChain(), GlobalChain()
    g1 = build_global_block(a.tip_hash, 5, [msg], 0, cloud_ids)
    assert g1.block.transactions == (relay_transaction(msg, ids["src-cloud"]),)
    assert a.accept(g1) and a.height == 1
    assert not a.accept(g1)  # no longer extends the tip
    g2 = build_global_block(a.tip_hash, 10, [], 1, cloud_ids)
    assert a.accept(g2)
    tampered = dataclasses.replace(g1, relays=(dataclasses.replace(msg, payload=b"other"),))
    assert not b.accept(tampered)
    assert b.adopt_if_longer(a) and b.tip_hash == a.tip_hash
    assert not a.adopt_if_longer(b)
