"""Deterministic discrete-event world.

Every run is a pure function of (scenario, seed). Events sit in a heap keyed
by (tick, insertion counter). Within one tick the order is:

1. deliveries, node toggles and relay spawns due this tick;
2. every online node drains its inbox and originates traffic (config order);
3. per-domain checkpoint release, if one is due and the honest nodes agree;
4. consensus ticks (miner selection and mining), then global-chain rounds;
5. broadcast-budget refunds, the random-mode walk and metric sampling.

Messages sent at tick t are delivered at t + 1.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional

from ..codec import Block, Hash80, Transaction, TxType, merkle_proof
from ..config import Behavior, Mode, NodeSpec, ScenarioConfig
from ..consensus import (
    ConsensusError,
    ConsensusState,
    Elected,
    EpochEnded,
    Halved,
    Isolated,
    MinerChosen,
    PhaseChanged,
    Role,
    consensus_tick,
    on_fork_detected,
)
from ..crypto import KeyPair, KeyRing
from ..globalchain import (
    CloudStake,
    GlobalBlock,
    GlobalChain,
    RelayMessage,
    StakeError,
    build_global_block,
    relay,
    select_proposer,
)
from ..ledger import Archive, Chain, ChainMode, ReleaseRefused, checkpoint_release, spv_verify
from ..reputation import INITIAL_REPUTATION, MAX_REPUTATION, ReputationLedger
from . import behaviors
from . import payloads as pl
from .dos import DoSBudget, charge_block_broadcast
from .metrics import MetricsLog

logger = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """A run could not continue, or broke one of the harness invariants."""


# event kinds
DELIVER = "deliver"
NODE_TOGGLE = "toggle"
RELAY_SPAWN = "relay-spawn"
TICK_CONSENSUS = "consensus"
GLOBAL_ROUND = "global-round"


@dataclass(frozen=True)
class Message:
    kind: str  # "tx" | "block" | "global"
    sender: int
    payload: Any


@dataclass(frozen=True)
class SimEvent:
    at: int
    seq: int
    kind: str
    target: Any = None  # DELIVER: tuple of recipient ids
    payload: Any = None


class Delivery(NamedTuple):
    """One entry of the delivery log."""

    tick: int
    kind: str
    sender: int
    recipient: int
    sender_domain: int
    recipient_domain: int
    sender_role: Role
    recipient_role: Role
    ref: bytes  # block hash or transaction leaf


@dataclass(frozen=True)
class RelayDelivery:
    tick: int
    domain: int
    node: int
    message: RelayMessage


@dataclass
class SimNode:
    spec: NodeSpec
    id: int
    domain: int
    chain: Chain
    rng: random.Random
    phase: int
    online: bool = True
    pool: dict[Hash80, Transaction] = field(default_factory=dict)
    committed: set[Hash80] = field(default_factory=set)
    pending: dict[int, tuple[int, int]] = field(default_factory=dict)
    inbox: list[Message] = field(default_factory=list)
    archive: Archive = field(default_factory=Archive)
    next_qid: int = 0
    flood_seq: int = 0

    def __post_init__(self):
        self.role: Role = self.spec.role
        self.honest: bool = self.spec.behavior is Behavior.HONEST


@dataclass
class DomainRuntime:
    """Shared per-domain state: reputation engine, consensus machine, budget, schedule."""

    spec: Any
    nodes: list[SimNode]
    ledger: ReputationLedger
    state: ConsensusState
    budget: DoSBudget
    walk: dict[int, float]
    walk_rng: random.Random
    gchain: GlobalChain = field(default_factory=GlobalChain)
    archive: Archive = field(default_factory=Archive)
    schedule: dict[int, int] = field(default_factory=dict)
    filled_slots: set[int] = field(default_factory=set)
    last_slot: Optional[int] = None
    waited: bool = False
    fork_pending: bool = False
    fork_hashes: set[Hash80] = field(default_factory=set)
    broadcast_blocks: dict[int, list[Hash80]] = field(default_factory=dict)

    def __post_init__(self):
        self.id = self.spec.id
        self.params = self.spec.consensus.params()
        self.by_id = {n.id: n for n in self.nodes}
        self.node_ids = [n.id for n in self.nodes]
        self.cloud = next(n for n in self.nodes if n.role is Role.CLOUD)
        self.cloud_id = self.cloud.id
        self.group_of = {n.id: n.spec.group for n in self.nodes if n.spec.behavior is Behavior.COLLUDER}

    def online_roles(self) -> dict[int, Role]:
        return {n.id: n.role for n in self.nodes if n.online}

    def honest_full(self) -> list[SimNode]:
        return [n for n in self.nodes if n.online and n.honest and n.chain.mode is ChainMode.FULL]

    @property
    def byzantine_count(self) -> int:
        return sum(not n.honest for n in self.nodes)


def _stream(seed: int, *labels: Any) -> random.Random:
    return random.Random(":".join(str(x) for x in (seed, *labels)))


class SimWorld:
    def __init__(self, scenario: ScenarioConfig, seed: int, log_events: bool = False):
        self.scenario = scenario
        self.seed = seed
        self.mode = Mode(scenario.mode)
        self.metrics = MetricsLog(self.mode.value, events=[] if log_events else None)
        self.keyring = KeyRing()
        self.now = 0
        self._queue: list[tuple[int, int, SimEvent]] = []
        self._seq = itertools.count()
        self.delivery_log: list[Delivery] = []
        self.relay_pool: list[RelayMessage] = []
        self.relay_deliveries: list[RelayDelivery] = []
        self.relays_requested = 0
        self._injected: dict[Hash80, RelayMessage] = {}
        self._delivered_relays: set[tuple[Hash80, int]] = set()
        self.global_rng = _stream(seed, "global")
        self.global_round = 0
        # monitor state, fed only by consensus actions and acceptance events
        self.isolated_since: dict[int, int] = {}
        self.hygiene_violations: list[str] = []
        self.agreement_checks = 0

        self.domains: list[DomainRuntime] = []
        self.domain_of: dict[int, DomainRuntime] = {}
        self.node_of: dict[int, SimNode] = {}
        self.names: dict[int, str] = {}
        for d in scenario.domains:
            self.domains.append(self._build_domain(d))
        for dom in self.domains:
            for n in dom.nodes:
                self.domain_of[n.id] = dom
                self.node_of[n.id] = n
                self.names[n.id] = n.spec.name
        self.metrics.names = dict(self.names)
        self._schedule_initial()

    # ------------------------------------------------------------------ setup

    def _build_domain(self, d) -> DomainRuntime:
        nodes = []
        for idx, spec in enumerate(d.nodes):
            keys = KeyPair.from_name(spec.name)
            nid = self.keyring.register(keys)
            mode = ChainMode.HEADERS_ONLY if spec.role is Role.TERMINAL else ChainMode.FULL
            nodes.append(SimNode(spec, nid, d.id, Chain(mode), _stream(self.seed, "node", spec.name), phase=idx))
        ledger = ReputationLedger(d.weight_table())
        for n in nodes:
            ledger.admit_node(n.id)
        dos = d.dos
        budget = DoSBudget(
            cost_per_block=dos.cost_per_block,
            low_bound=dos.low_bound,
            initial=dos.initial_budget,
            refund=dos.cost_per_block if dos.refund is None else dos.refund,
            refund_interval=dos.refund_interval or d.consensus.round_ticks,
        )
        budget.enroll(n.id for n in nodes)
        return DomainRuntime(
            spec=d,
            nodes=nodes,
            ledger=ledger,
            state=ConsensusState(rng=_stream(self.seed, "consensus", d.id)),
            budget=budget,
            walk={n.id: INITIAL_REPUTATION for n in nodes},
            walk_rng=_stream(self.seed, "walk", d.id),
        )

    def push(self, at: int, kind: str, target: Any = None, payload: Any = None) -> None:
        seq = next(self._seq)
        heapq.heappush(self._queue, (at, seq, SimEvent(at, seq, kind, target, payload)))

    def _schedule_initial(self) -> None:
        by_name = {n.spec.name: n for dom in self.domains for n in dom.nodes}
        for t in self.scenario.toggles:
            self.push(t.at, NODE_TOGGLE, by_name[t.node].id)
        for k, r in enumerate(self.scenario.relays):
            for i in range(r.count):
                self.push(r.start + i * r.interval, RELAY_SPAWN, k, i)
        for dom in self.domains:
            self.push(1, TICK_CONSENSUS, dom.id)
        if self.scenario.relays:
            self.push(self.scenario.global_chain.round_ticks, GLOBAL_ROUND)

    # ------------------------------------------------------------ reputation views

    def view(self, dom: DomainRuntime) -> dict[int, float]:
        """Reputation under the active mode; drives ranking, isolation, stake and sampling."""
        if self.mode is Mode.PROPOSED:
            return dom.ledger.scores
        if self.mode is Mode.CONSTANT:
            return {n: INITIAL_REPUTATION for n in dom.node_ids}
        return dom.walk

    # ------------------------------------------------------------ messaging

    def event(self, tick: int, kind: str, **data) -> None:
        self.metrics.event(tick, kind, **data)

    def broadcast(self, dom: DomainRuntime, sender: SimNode, kind: str, payload: Any, now: int) -> None:
        msg = Message(kind, sender.id, payload)
        self.push(now + 1, DELIVER, tuple(n.id for n in dom.nodes if n is not sender), msg)

    def broadcast_block(self, dom: DomainRuntime, sender: SimNode, block: Block, now: int) -> None:
        if not charge_block_broadcast(dom.budget, sender.id):
            self.metrics.count("dos_discarded")
            self.event(now, "dos-discard", node=sender.id, block=block.hash.hex())
            return
        dom.broadcast_blocks.setdefault(sender.id, []).append(block.hash)
        self.broadcast(dom, sender, "block", block, now)

    def _deliver(self, recipients: tuple[int, ...], msg: Message, now: int) -> None:
        src = self.node_of[msg.sender]
        ref = msg.payload.leaf if msg.kind == "tx" else msg.payload.hash
        for rid in recipients:
            node = self.node_of[rid]
            if not node.online:
                self.metrics.count("messages_lost_offline")
                continue
            self.delivery_log.append(Delivery(now, msg.kind, msg.sender, rid, src.domain, node.domain,
                                              src.role, node.role, ref))
            node.inbox.append(msg)

    # ------------------------------------------------------------ chain updates

    def accept_block(self, dom: DomainRuntime, node: SimNode, block: Block, now: int) -> None:
        node.chain.append(block)
        for tx in block.transactions:
            node.pool.pop(tx.leaf, None)
            node.committed.add(tx.leaf)
        if node.honest:
            self.metrics.count("blocks_accepted")
            self._check_hygiene(node, block, now)
        if node is dom.cloud:
            self._commit(dom, block, now)

    def _commit(self, dom: DomainRuntime, block: Block, now: int) -> None:
        """Cloud-side effects of a newly appended block: ratings, relays, slot bookkeeping."""
        dom.filled_slots.add(block.header.tmp)
        self.metrics.count("blocks_committed")
        ledger = dom.ledger
        subjects = set()
        for i, tx in enumerate(block.transactions):
            if tx.tx_type is TxType.RATE:
                r = pl.parse_rate(tx.add)
                if (r is None or tx.id_target not in ledger or tx.id_from == tx.id_target
                        or ledger.is_isolated(tx.id_from) or ledger.is_isolated(tx.id_target)):
                    continue
                ledger.rate(tx.id_from, tx.id_target, r.quality, r.rated, r.completed_at)
                subjects.add(tx.id_target)
            elif tx.tx_type is TxType.UPDATE and pl.tag(tx.add) == pl.RELAY_REQUEST and tx.id_from != dom.cloud_id:
                tdom, tnode, payload = pl.parse_relay(tx.add)
                msg = RelayMessage((dom.id, tx.id_from), (tdom, tnode), payload, block.header,
                                   merkle_proof(block.transactions, i), tx)
                self.relay_pool.append(msg)
                self.event(now, "relay-queued", source=tx.id_from, target=tnode, anchor=block.hash.hex())
        for s in sorted(subjects):
            ledger.record_and_refresh(now, s)

    def fork_seen(self, dom: DomainRuntime, node: SimNode, block: Block, now: int) -> None:
        for tx in block.transactions:
            if tx.leaf not in node.committed:
                node.pool.setdefault(tx.leaf, tx)
        if block.hash not in dom.fork_hashes:
            dom.fork_hashes.add(block.hash)
            dom.fork_pending = True
            self.metrics.count("forks")
            self.event(now, "fork", domain=dom.id, block=block.hash.hex(), miner=block.miner)

    def catch_up(self, dom: DomainRuntime, node: SimNode, now: int) -> None:
        """Resynchronise a lagging node from its domain's cloud."""
        added = node.chain.sync_from(dom.cloud.chain)
        node.committed = set(dom.cloud.committed)
        for leaf in [lf for lf in node.pool if lf in node.committed]:
            del node.pool[leaf]
        if added:
            self.metrics.count("resyncs")

    def _check_hygiene(self, node: SimNode, block: Block, now: int) -> None:
        banned = self.isolated_since
        if block.miner in banned:
            self.hygiene_violations.append(f"tick {now}: node {node.id} accepted block from isolated {block.miner}")
        for tx in block.transactions:
            if tx.id_from in banned:
                self.hygiene_violations.append(f"tick {now}: node {node.id} accepted tx from isolated {tx.id_from}")

    # ------------------------------------------------------------ consensus

    def _consensus(self, dom: DomainRuntime, now: int) -> None:
        p = dom.spec.consensus
        if dom.last_slot is not None and dom.last_slot not in dom.filled_slots and not dom.waited:
            # the scheduled block never arrived: wait out the slot timeout once
            dom.waited = True
            self.metrics.count("missed_slots")
            self.push(now + p.slot_timeout, TICK_CONSENSUS, dom.id)
            return
        dom.waited = False
        view = self.view(dom)
        try:
            if dom.fork_pending:
                dom.fork_pending = False
                online_ids = [n for n, _ in dom.online_roles().items() if not dom.ledger.is_isolated(n)]
                self._on_actions(dom, [on_fork_detected(dom.state, dom.params, view, online_ids, dom.ledger.isolated)], now)
            _, actions = consensus_tick(dom.state, dom.params, dom.ledger, now, dom.online_roles(), scores=view)
        except ConsensusError as exc:
            raise SimulationError(f"domain {dom.id} at tick {now}: {exc}") from exc
        self._on_actions(dom, actions, now)
        self.push(now + p.round_ticks, TICK_CONSENSUS, dom.id)

    def _on_actions(self, dom: DomainRuntime, actions: list, now: int) -> None:
        for act in actions:
            if isinstance(act, EpochEnded):
                self.metrics.count("epochs")
                if act.overran:
                    self.metrics.count("epoch_overruns")
                self._check_agreement(dom, now)
            elif isinstance(act, Halved):
                self.metrics.count("halvings")
                self.event(now, "halved", domain=dom.id)
            elif isinstance(act, PhaseChanged):
                self.event(now, "phase", domain=dom.id, phase=act.phase.value)
            elif isinstance(act, Isolated):
                for n in act.nodes:
                    self.isolated_since.setdefault(n, now)
                    self.metrics.count("isolations")
                    self.event(now, "isolated", domain=dom.id, node=n)
                self._purge(dom, set(act.nodes))
            elif isinstance(act, Elected):
                bad = [n for n in act.S + act.E if n in self.isolated_since]
                if bad:
                    self.hygiene_violations.append(f"tick {now}: isolated {bad} elected")
                self.event(now, "elected", domain=dom.id, S=list(act.S), E=list(act.E), reason=act.reason)
            elif isinstance(act, MinerChosen):
                self._schedule_miner(dom, act.decision.miner, act.decision.strategy_used, now)

    def _schedule_miner(self, dom: DomainRuntime, miner: int, strategy: str, now: int) -> None:
        if miner in self.isolated_since:
            self.hygiene_violations.append(f"tick {now}: isolated {miner} drawn as miner")
        dom.schedule[now] = miner
        dom.last_slot = now
        self.metrics.count(f"rounds_{strategy}")
        node = dom.by_id[miner]
        if node.online:
            behaviors.mine(self, dom, node, now)

    def _purge(self, dom: DomainRuntime, banned: set[int]) -> None:
        for n in dom.nodes:
            for leaf in [lf for lf, tx in n.pool.items() if tx.id_from in banned]:
                del n.pool[leaf]

    def _check_agreement(self, dom: DomainRuntime, now: int) -> None:
        self.agreement_checks += 1
        prints = {n.chain.fingerprint() for n in dom.honest_full()}
        if len(prints) > 1:
            self.metrics.count("agreement_violations")
            self.event(now, "disagreement", domain=dom.id, chains=len(prints))

    # ------------------------------------------------------------ release

    def _maybe_release(self, dom: DomainRuntime, now: int) -> None:
        cloud = dom.cloud.chain
        if cloud.height - cloud.base_height < dom.spec.release_interval:
            return
        tips = [n.chain.tip_hash for n in dom.nodes if n.online and n.honest]
        try:
            checkpoint_release(cloud, dom.archive, tips)
        except ReleaseRefused:
            self.metrics.count("releases_refused")
            return
        for n in dom.nodes:
            if n is not dom.cloud and n.online and n.chain.tip_hash == cloud.tip_hash:
                n.chain.release(n.archive)
        self.metrics.count("releases")
        self.event(now, "release", domain=dom.id, height=cloud.height)

    # ------------------------------------------------------------ global chain

    def _global_round(self, now: int) -> None:
        self.push(now + self.scenario.global_chain.round_ticks, GLOBAL_ROUND)
        if not self.relay_pool:
            return
        self.global_round += 1
        stakes = [CloudStake(d.id, self.view(d)[d.cloud_id]) for d in self.domains]
        try:
            proposer = select_proposer(stakes, self.global_rng, self.global_round)
        except StakeError:
            self.metrics.count("global_rounds_skipped")
            return
        accepted = []
        for msg in self.relay_pool:
            src = self.domain_of.get(msg.source[1])
            verdict = relay(msg, self._header_known(src), src.ledger if src else None)
            if verdict:
                accepted.append(msg)
            else:
                self.metrics.count(f"relays_rejected.{verdict.reason.value}")
        self.relay_pool = []
        if not accepted:
            return
        pdom = next(d for d in self.domains if d.id == proposer)
        cloud_ids = {d.id: d.cloud_id for d in self.domains}
        gblock = build_global_block(pdom.gchain.tip_hash, now, accepted, proposer, cloud_ids)
        self.metrics.count("global_blocks")
        self.receive_global(pdom, pdom.cloud, gblock, now)
        others = tuple(d.cloud_id for d in self.domains if d is not pdom)
        if others:
            self.push(now + 1, DELIVER, others, Message("global", pdom.cloud_id, gblock))

    def _header_known(self, src: Optional[DomainRuntime]):
        def known(header) -> bool:
            if src is None:
                return False
            return (src.cloud.chain.header_by_hash(header.current_hash) == header
                    or src.archive.contains_hash(header.current_hash))
        return known

    def receive_global(self, dom: DomainRuntime, node: SimNode, gblock: GlobalBlock, now: int) -> None:
        if not dom.gchain.accept(gblock):
            self.metrics.count("global_blocks_rejected")
            return
        for m in gblock.relays:
            if m.target[0] != dom.id:
                continue
            add = pl.relayed(m.source[0], m.source[1], m.payload)
            tx = self.keyring.sign_transaction(Transaction(TxType.UPDATE, dom.cloud_id, m.target[1], add=add))
            self._injected[tx.leaf] = m
            behaviors.send_tx(self, dom, dom.cloud, TxType.UPDATE, m.target[1], add, now)

    def record_relay_delivery(self, dom: DomainRuntime, node: SimNode, tx: Transaction, now: int) -> None:
        m = self._injected.get(tx.leaf)
        key = (tx.leaf, node.id)
        if m is None or key in self._delivered_relays:
            return
        self._delivered_relays.add(key)
        self.relay_deliveries.append(RelayDelivery(now, dom.id, node.id, m))
        self.metrics.count("relay_deliveries")
        self.event(now, "relay-delivered", node=node.id, source=m.source[1], anchor=m.header.current_hash.hex())

    def _spawn_relay(self, k: int, i: int, now: int) -> None:
        spec = self.scenario.relays[k]
        src = next(n for d in self.domains for n in d.nodes if n.spec.name == spec.source)
        tgt = next(n for d in self.domains for n in d.nodes if n.spec.name == spec.target)
        dom = self.domain_of[src.id]
        if not src.online or dom.ledger.is_isolated(src.id):
            self.metrics.count("relays_skipped")
            return
        self.relays_requested += 1
        add = pl.relay_request(tgt.domain, tgt.id, f"relay:{k}:{i}".encode())
        behaviors.send_tx(self, dom, src, TxType.UPDATE, dom.cloud_id, add, now)

    # ------------------------------------------------------------ toggles

    def _toggle(self, node_id: int, now: int) -> None:
        node = self.node_of[node_id]
        dom = self.domain_of[node_id]
        node.online = not node.online
        self.event(now, "toggle", node=node_id, online=node.online)
        if node.online:
            self.catch_up(dom, node, now)
            behaviors.send_tx(self, dom, node, TxType.ASSERT, node.id, pl.assertion(1, now), now)
        else:
            node.inbox.clear()

    # ------------------------------------------------------------ sampling

    def _sample(self, now: int) -> None:
        if self.mode is Mode.RANDOM and now > 0:
            step = self.scenario.random_step
            for dom in self.domains:
                for nid in dom.node_ids:
                    v = dom.walk[nid] + dom.walk_rng.uniform(-step, step)
                    dom.walk[nid] = min(MAX_REPUTATION, max(0.0, v))
        for dom in self.domains:
            view = self.view(dom)
            for nid in dom.node_ids:
                self.metrics.sample(now, nid, view[nid])

    # ------------------------------------------------------------ main loop

    def run(self) -> MetricsLog:
        horizon = self.scenario.horizon
        self._sample(0)
        for t in range(1, horizon + 1):
            self.now = t
            controls: list[SimEvent] = []
            while self._queue and self._queue[0][0] <= t:
                ev = heapq.heappop(self._queue)[2]
                if ev.kind == DELIVER:
                    self._deliver(ev.target, ev.payload, t)
                elif ev.kind == NODE_TOGGLE:
                    self._toggle(ev.target, t)
                elif ev.kind == RELAY_SPAWN:
                    self._spawn_relay(ev.target, ev.payload, t)
                else:
                    controls.append(ev)
            for dom in self.domains:
                for node in dom.nodes:
                    if node.online:
                        inbox, node.inbox = node.inbox, []
                        behaviors.step(self, dom, node, inbox, t)
            for dom in self.domains:
                self._maybe_release(dom, t)
            for ev in controls:
                if ev.kind == TICK_CONSENSUS:
                    self._consensus(next(d for d in self.domains if d.id == ev.target), t)
                elif ev.kind == GLOBAL_ROUND:
                    self._global_round(t)
            for dom in self.domains:
                if t % dom.budget.refund_interval == 0:
                    dom.budget.refund_all()
            if t % self.scenario.sampling_interval == 0:
                self._sample(t)
        self._finish()
        return self.metrics

    def _finish(self) -> None:
        m = self.metrics
        unresolved = 0
        for dom in self.domains:
            unresolved += self.competing_tips(dom) - 1
            view = self.view(dom)
            for nid in dom.node_ids:
                m.final_reputation[nid] = view[nid]
            for nid in dom.node_ids:
                if dom.budget.accepted[nid] > dom.budget.bound(nid):
                    m.count("dos_bound_violations")
        m.counters["unresolved_forks"] = unresolved
        m.counters["hygiene_violations"] = len(self.hygiene_violations)
        m.counters["locality_violations"] = len(self.locality_violations())
        m.counters["relay_trace_failures"] = len(self.untraceable_relays())
        m.isolated = sorted(n for d in self.domains for n in d.ledger.isolated)

    # ------------------------------------------------------------ post-run checks

    def competing_tips(self, dom: DomainRuntime) -> int:
        """Distinct branch heads among online honest FULL nodes.

        A tip that is an ancestor on some other honest chain is a node lagging
        behind an in-flight block, not a competing branch.
        """
        nodes = dom.honest_full()
        tips = {n.chain.tip_hash for n in nodes}
        heads = {t for t in tips if not any(t in n.chain and n.chain.tip_hash != t for n in nodes)}
        return max(1, len(heads))

    def locality_violations(self) -> list[Delivery]:
        """Deliveries that crossed a domain boundary without being cloud-to-cloud."""
        return [d for d in self.delivery_log
                if d.sender_domain != d.recipient_domain
                and not (d.sender_role is Role.CLOUD and d.recipient_role is Role.CLOUD)]

    def untraceable_relays(self) -> list[RelayDelivery]:
        """Relay deliveries whose anchor is not a committed source-domain block."""
        bad = []
        for rd in self.relay_deliveries:
            m = rd.message
            src = self.domain_of.get(m.source[1])
            ok = (src is not None and self._header_known(src)(m.header)
                  and spv_verify(m.header, m.origin_tx, m.proof)
                  and pl.parse_relay(m.origin_tx.add) == (rd.domain, rd.node, m.payload))
            if not ok:
                bad.append(rd)
        return bad

    def strict_failures(self) -> list[str]:
        """Invariant breaches that should abort a run (exit code 2 from the CLI)."""
        out = list(self.hygiene_violations)
        c = self.metrics.counters
        if c.get("dos_bound_violations"):
            out.append(f"{c['dos_bound_violations']} broadcast-budget bound violations")
        if c.get("locality_violations"):
            out.append(f"{c['locality_violations']} cross-domain deliveries bypassed the clouds")
        if c.get("relay_trace_failures"):
            out.append(f"{c['relay_trace_failures']} relay deliveries without a committed anchor")
        honest_majority = all(2 * d.byzantine_count < len(d.nodes) for d in self.domains)
        if honest_majority and c.get("agreement_violations"):
            out.append(f"{c['agreement_violations']} epoch boundaries with diverging honest chains")
        return out


def simulate(scenario: ScenarioConfig, seed: int, log_events: bool = False) -> SimWorld:
    """Run to the horizon and return the finished world (for inspection in tests)."""
    world = SimWorld(scenario, seed, log_events)
    world.run()
    return world


def run(scenario: ScenarioConfig, seed: int, log_events: bool = False, strict: bool = False) -> MetricsLog:
    """Run ``scenario`` with ``seed``; identical inputs give identical logs.

    With ``strict`` any harness invariant breach raises :class:`SimulationError`.
    """
    world = simulate(scenario, seed, log_events)
    if strict:
        failures = world.strict_failures()
        if failures:
            raise SimulationError("; ".join(failures[:5]))
    return world.metrics
