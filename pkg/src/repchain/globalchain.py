"""Inter-domain chain kept by cloud nodes.

Cloud nodes take turns proposing global blocks, sampled in proportion to
stake (by default each cloud's fused reputation in its own sub-chain). A
global block carries relay messages; each relay must be anchored by a Merkle
proof to a block the source domain has committed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .codec import (
    ADD_BYTES,
    Block,
    BlockHeader,
    Hash80,
    ProofStep,
    Transaction,
    TxType,
    genesis_block,
    make_header,
)
from .ledger import ACCEPT, RejectReason, Verdict, reject, spv_verify
from .reputation import ReputationLedger

DomainId = int


class StakeError(ValueError):
    pass


@dataclass(frozen=True)
class CloudStake:
    domain: DomainId
    stake: float

    def __post_init__(self):
        if self.stake < 0:
            raise StakeError(f"negative stake for domain {self.domain}")


@dataclass(frozen=True)
class RelayMessage:
    source: tuple[DomainId, int]
    target: tuple[DomainId, int]
    payload: bytes
    header: BlockHeader
    proof: tuple[ProofStep, ...]
    origin_tx: Transaction

    def __post_init__(self):
        if len(self.payload) > ADD_BYTES:
            raise ValueError("relay payload exceeds 1024 bits")


def select_proposer(stakes: Sequence[CloudStake], rng: random.Random, round: int = 0) -> DomainId:
    """Sample a domain with probability stake / total stake."""
    total = sum(s.stake for s in stakes)
    if not stakes or total <= 0:
        raise StakeError(f"round {round}: total stake must be positive")
    ordered = sorted(stakes, key=lambda s: s.domain)
    return rng.choices([s.domain for s in ordered], weights=[s.stake for s in ordered])[0]


def relay(msg: RelayMessage, header_known: Callable[[BlockHeader], bool],
          source_ledger: Optional[ReputationLedger] = None) -> Verdict:
    """Check a relay's anchor against headers known to the source domain's cloud."""
    if source_ledger is not None and source_ledger.is_isolated(msg.source[1]):
        return reject(RejectReason.ISOLATED_SENDER, f"node {msg.source[1]}")
    if msg.origin_tx.id_from != msg.source[1]:
        return reject(RejectReason.BAD_ANCHOR, "origin transaction sender mismatch")
    if not header_known(msg.header):
        return reject(RejectReason.BAD_ANCHOR, "anchor header unknown to source domain")
    if not spv_verify(msg.header, msg.origin_tx, msg.proof):
        return reject(RejectReason.BAD_ANCHOR, "Merkle proof does not verify")
    return ACCEPT


def relay_transaction(msg: RelayMessage, cloud_id: int) -> Transaction:
    """Global-chain transaction carrying the relay payload in ADD (unsigned)."""
    return Transaction(TxType.UPDATE, cloud_id, msg.target[1], add=msg.payload.ljust(ADD_BYTES, b"\0"))


@dataclass(frozen=True)
class GlobalBlock:
    block: Block
    relays: tuple[RelayMessage, ...]
    proposer: DomainId

    @property
    def hash(self) -> Hash80:
        return self.block.hash


def build_global_block(parent: Hash80, tick: int, relays: Sequence[RelayMessage], proposer: DomainId,
                       cloud_ids: dict[DomainId, int]) -> GlobalBlock:
    txs = tuple(relay_transaction(m, cloud_ids[m.source[0]]) for m in relays)
    header = make_header(parent, tick, txs)
    return GlobalBlock(Block(header, txs, (), cloud_ids[proposer]), tuple(relays), proposer)


class GlobalChain:
    """One cloud node's replica; longest chain wins."""

    def __init__(self):
        self.blocks: list[GlobalBlock] = []
        self._genesis = genesis_block()

    @property
    def tip_hash(self) -> Hash80:
        return self.blocks[-1].hash if self.blocks else self._genesis.hash

    @property
    def height(self) -> int:
        return len(self.blocks)

    def accept(self, gblock: GlobalBlock) -> bool:
        b = gblock.block
        if b.header.pre_hash != self.tip_hash:
            return False
        if b.computed_hash != b.header.current_hash or b.computed_root_trans != b.header.root_trans:
            return False
        expected = tuple(relay_transaction(m, tx.id_from) for m, tx in zip(gblock.relays, b.transactions))
        if expected != b.transactions:
            return False
        self.blocks.append(gblock)
        return True

    def adopt_if_longer(self, other: "GlobalChain") -> bool:
        if other.height > self.height:
            self.blocks = list(other.blocks)
            return True
        return False
