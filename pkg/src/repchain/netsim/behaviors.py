"""What each simulated device does in one tick.

Honest devices query random peers, answer queries, publish periodic
readings, rate every completed interaction and validate blocks. Adversaries
deviate from that script in the ways listed in :class:`~repchain.config.Behavior`.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from ..codec import Block, ReputationDelta, Transaction, TxType, make_header
from ..config import Behavior
from ..consensus import Role
from ..ledger import RejectReason, detect_fork, validate_block, validate_transaction
from ..reputation import TransactionRecord
from . import payloads as pl

if TYPE_CHECKING:  # pragma: no cover
    from .world import DomainRuntime, Message, SimNode, SimWorld


def active(node: "SimNode", behavior: Behavior, now: int) -> bool:
    """Whether ``node`` currently misbehaves as ``behavior``."""
    return node.spec.behavior is behavior and now >= node.spec.onset


def honest_at(node: "SimNode", now: int) -> bool:
    return node.spec.behavior is Behavior.HONEST or now < node.spec.onset


# --------------------------------------------------------------------------
# outgoing traffic
# --------------------------------------------------------------------------


def send_tx(world: "SimWorld", dom: "DomainRuntime", node: "SimNode", tx_type: TxType, target: int,
            add: bytes, now: int) -> None:
    tx = world.keyring.sign_transaction(Transaction(tx_type, node.id, target, add=add))
    if node.spec.behavior is Behavior.SELECTIVE_FORWARDER and not node.rng.random() < node.spec.fraction:
        world.metrics.count("messages_dropped_by_sender")
        return
    node.pool.setdefault(tx.leaf, tx)
    world.broadcast(dom, node, "tx", tx, now)


def _rate(world, dom, node, subject: int, quality: int, rated: TxType, now: int) -> None:
    send_tx(world, dom, node, TxType.RATE, subject, pl.rate(quality, rated, now), now)


def _opinion(node: "SimNode", dom: "DomainRuntime", peer: int, honest_quality: int, now: int) -> int:
    """Quality ``node`` reports about ``peer`` given the interaction's true outcome."""
    if active(node, Behavior.FALSE_INFO, now):
        return 0
    if active(node, Behavior.COLLUDER, now):
        return 100 if dom.group_of.get(peer) == node.spec.group else 0
    return honest_quality


def _reading(node: "SimNode", dom: "DomainRuntime", asker: int | None, now: int) -> int:
    value = pl.truth(node.id, now)
    if active(node, Behavior.FALSE_INFO, now):
        return value ^ 0x5A5A
    if active(node, Behavior.COLLUDER, now) and asker is not None and dom.group_of.get(asker) != node.spec.group:
        return value ^ 0x5A5A
    return value


def originate(world: "SimWorld", dom: "DomainRuntime", node: "SimNode", now: int) -> None:
    """Periodic queries and readings, plus query timeouts."""
    if active(node, Behavior.DROPPER, now) or active(node, Behavior.FLOODER, now):
        return
    traffic = dom.spec.traffic
    if node.pending:
        for qid, (peer, sent) in list(node.pending.items()):
            if now - sent > traffic.query_timeout:
                del node.pending[qid]
                _rate(world, dom, node, peer, _opinion(node, dom, peer, 0, now), TxType.QUERY, now)
    if (now + node.phase) % traffic.query_interval == 0:
        peers = [n for n in dom.node_ids if n != node.id and not dom.ledger.is_isolated(n)]
        if peers:
            peer = node.rng.choice(peers)
            node.next_qid += 1
            node.pending[node.next_qid] = (peer, now)
            send_tx(world, dom, node, TxType.QUERY, peer, pl.query(node.next_qid, now), now)
    if (now + node.phase) % traffic.update_interval == 0:
        send_tx(world, dom, node, TxType.UPDATE, dom.cloud_id, pl.update(now, _reading(node, dom, None, now)), now)


def flood(world: "SimWorld", dom: "DomainRuntime", node: "SimNode", now: int) -> None:
    """FLOODER: ``rate`` self-signed blocks on the local tip, every tick."""
    if not active(node, Behavior.FLOODER, now):
        return
    for _ in range(node.spec.rate):
        node.flood_seq += 1
        tx = world.keyring.sign_transaction(
            Transaction(TxType.ASSERT, node.id, node.id, add=pl.flood(node.flood_seq, now)))
        header = make_header(node.chain.tip_hash, now, (tx,))
        block = world.keyring.sign_block(Block(header, (tx,), (), node.id))
        world.broadcast_block(dom, node, block, now)


def build_block(world: "SimWorld", dom: "DomainRuntime", node: "SimNode", now: int) -> Block:
    """Package the pool into a block on the local tip, with projected reputations."""
    ledger = dom.ledger
    txs = []
    for tx in node.pool.values():
        if ledger.is_isolated(tx.id_from) or tx.leaf in node.committed:
            continue
        txs.append(tx)
        if len(txs) == dom.spec.traffic.max_block_txs:
            break
    extra = []
    for tx in txs:
        r = pl.parse_rate(tx.add) if tx.tx_type is TxType.RATE else None
        if r is not None and tx.id_target in ledger and tx.id_from != tx.id_target:
            extra.append((tx.id_from, tx.id_target, TransactionRecord(r.quality, ledger.weights[r.rated], r.completed_at)))
    deltas = tuple(ReputationDelta(n, s) for n, s in sorted(ledger.preview(now, extra).items()))
    header = make_header(node.chain.tip_hash, now, txs, deltas)
    return world.keyring.sign_block(Block(header, tuple(txs), deltas, node.id))


def mine(world: "SimWorld", dom: "DomainRuntime", node: "SimNode", now: int) -> None:
    """Scheduled miner's turn: exactly one block, unless the behaviour withholds it."""
    if active(node, Behavior.DROPPER, now) or active(node, Behavior.FLOODER, now):
        return
    block = build_block(world, dom, node, now)
    if node.spec.behavior is Behavior.SELECTIVE_FORWARDER and not node.rng.random() < node.spec.fraction:
        world.metrics.count("messages_dropped_by_sender")
        return
    world.accept_block(dom, node, block, now)
    world.broadcast_block(dom, node, block, now)


# --------------------------------------------------------------------------
# incoming traffic
# --------------------------------------------------------------------------


def receive_tx(world: "SimWorld", dom: "DomainRuntime", node: "SimNode", tx: Transaction, now: int) -> None:
    if tx.id_from in dom.ledger.isolated or not world.keyring.verify_transaction(tx):
        verdict = validate_transaction(tx, world.keyring, dom.ledger)
        if node.honest:
            world.metrics.count(f"txs_rejected.{verdict.reason.value}")
        return
    leaf = tx.leaf
    if leaf not in node.committed:
        node.pool.setdefault(leaf, tx)
    # most traffic is gossip this node only stores for mining
    if tx.id_target != node.id and tx.tx_type is not TxType.UPDATE:
        return
    if tx.id_from == node.id or active(node, Behavior.DROPPER, now):
        return
    tag = pl.tag(tx.add)
    if tx.tx_type is TxType.QUERY and tx.id_target == node.id and tag == pl.QUERY:
        if active(node, Behavior.FLOODER, now):
            return
        qid, _ = pl.parse_query(tx.add)
        send_tx(world, dom, node, TxType.REPLY, tx.id_from, pl.reply(qid, now, _reading(node, dom, tx.id_from, now)), now)
    elif tx.tx_type is TxType.REPLY and tx.id_target == node.id and tag == pl.REPLY:
        qid, tick, value = pl.parse_reply(tx.add)
        pending = node.pending.pop(qid, None)
        if pending is None or pending[0] != tx.id_from:
            return
        good = 100 if value == pl.truth(tx.id_from, tick) else 0
        _rate(world, dom, node, tx.id_from, _opinion(node, dom, tx.id_from, good, now), TxType.REPLY, now)
    elif tx.tx_type is TxType.UPDATE and tag == pl.UPDATE and not active(node, Behavior.FLOODER, now):
        tick, value = pl.parse_update(tx.add)
        good = 100 if value == pl.truth(tx.id_from, tick) else 0
        _rate(world, dom, node, tx.id_from, _opinion(node, dom, tx.id_from, good, now), TxType.UPDATE, now)
    elif tx.tx_type is TxType.UPDATE and tag == pl.RELAYED and tx.id_target == node.id:
        world.record_relay_delivery(dom, node, tx, now)


def receive_block(world: "SimWorld", dom: "DomainRuntime", node: "SimNode", block: Block, now: int) -> None:
    chain = node.chain
    if block.hash in chain:
        return  # idempotent
    if detect_fork(chain, block):
        if block.hash not in chain.side:
            verdict = validate_block(block, chain, world.keyring, dom.ledger, dom.schedule.get,
                                     parent_hash=block.header.pre_hash)
            if verdict:
                chain.record_side(block)
                world.fork_seen(dom, node, block, now)
            elif node.honest:
                world.metrics.count(f"blocks_rejected.{verdict.reason.value}")
        return
    if (block.header.pre_hash != chain.tip_hash and block.header.pre_hash not in chain
            and node is not dom.cloud and block.header.pre_hash in dom.cloud.chain):
        world.catch_up(dom, node, now)
    verdict = validate_block(block, chain, world.keyring, dom.ledger, dom.schedule.get)
    if not verdict:
        if node.honest:
            world.metrics.count(f"blocks_rejected.{verdict.reason.value}")
            if verdict.reason is RejectReason.BAD_PARENT:
                world.event(now, "reject", node=node.id, block=block.hash.hex(), reason=verdict.reason.value)
        return
    world.accept_block(dom, node, block, now)


def step(world: "SimWorld", dom: "DomainRuntime", node: "SimNode", inbox: list["Message"], now: int) -> None:
    """One tick for an online node: drain the inbox, then originate traffic."""
    for msg in inbox:
        if msg.kind == "block":
            receive_block(world, dom, node, msg.payload, now)
        elif msg.kind == "tx":
            receive_tx(world, dom, node, msg.payload, now)
        elif msg.kind == "global" and node.spec.role is Role.CLOUD:
            world.receive_global(dom, node, msg.payload, now)
    flood(world, dom, node, now)
    originate(world, dom, node, now)
