"""Per-node chain storage and validation.

A :class:`Chain` is one node's replica. FULL chains keep bodies; terminal
devices run HEADERS_ONLY chains and check inclusion with Merkle proofs.
Periodic release moves settled history into an :class:`Archive` and replaces
it with a :class:`CheckpointBlock` that acts as the new genesis.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

from .codec import (
    HASH_BYTES,
    Block,
    BlockHeader,
    Hash80,
    ProofStep,
    Transaction,
    genesis_block,
    hash80,
    verify_proof,
)
from .crypto import Verifier
from .reputation import ReputationLedger


class ChainMode(str, enum.Enum):
    FULL = "full"
    HEADERS_ONLY = "headers_only"


class GenesisKind(str, enum.Enum):
    ORIGINAL = "original"
    CONSENSUS_CHECKPOINT = "checkpoint"


class RejectReason(str, enum.Enum):
    BAD_SIGNATURE = "bad-signature"
    ISOLATED_SENDER = "isolated-sender"
    BAD_PARENT = "bad-parent"
    BAD_HASH = "bad-hash"
    BAD_ROOT_TRANS = "bad-root-trans"
    BAD_ROOT_REP = "bad-root-rep"
    BAD_MINER_SIGNATURE = "bad-miner-signature"
    ISOLATED_PROPOSER = "isolated-proposer"
    WRONG_PROPOSER = "wrong-proposer"
    EXHAUSTED = "reputation-exhausted"
    INVALID_TX = "invalid-tx"
    BAD_ANCHOR = "bad-anchor"


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Optional[RejectReason] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = Verdict(True)


def reject(reason: RejectReason, detail: str = "") -> Verdict:
    return Verdict(False, reason, detail)


class ChainError(RuntimeError):
    """Programming error: e.g. appending a block that does not extend the tip."""


class ReleaseRefused(RuntimeError):
    pass


# --------------------------------------------------------------------------
# checkpoints and archive
# --------------------------------------------------------------------------

_CHECKPOINT_FMT = ">10s10sIIQ"


@dataclass(frozen=True)
class CheckpointBlock:
    summary_hash: Hash80
    released_count: int
    archived_to: int
    anchor_hash: Hash80  # current_hash of the last released block
    height: int  # height of the last released block

    @property
    def current_hash(self) -> Hash80:
        return self.anchor_hash

    def encode(self) -> bytes:
        return struct.pack(_CHECKPOINT_FMT, self.summary_hash, self.anchor_hash, self.released_count,
                           self.archived_to, self.height)


class Archive:
    """Append-only store of released records, grouped by release index."""

    def __init__(self):
        self._releases: list[list[tuple[int, bytes]]] = []

    def __len__(self) -> int:
        return sum(len(r) for r in self._releases)

    @property
    def release_count(self) -> int:
        return len(self._releases)

    def append_release(self, records: Sequence[tuple[int, bytes]]) -> int:
        self._releases.append(list(records))
        return len(self._releases) - 1

    def records(self, release_index: int) -> list[tuple[int, bytes]]:
        return list(self._releases[release_index])

    def summary_hash(self, release_index: int) -> Hash80:
        return hash80(b"".join(rec for _, rec in self._releases[release_index]))

    def audit(self, checkpoint: CheckpointBlock) -> bool:
        recs = self._releases[checkpoint.archived_to]
        return len(recs) == checkpoint.released_count and self.summary_hash(checkpoint.archived_to) == checkpoint.summary_hash

    def contains_hash(self, block_hash: Hash80) -> bool:
        return any(rec[:HASH_BYTES] == block_hash for rel in self._releases for _, rec in rel if len(rec) == 43)

    def tamper(self, release_index: int, position: int, record: bytes) -> None:
        """Overwrite one record in place. Only meant for audit tests."""
        height, _ = self._releases[release_index][position]
        self._releases[release_index][position] = (height, record)

    def export(self, out_dir: Union[str, Path]) -> list[Path]:
        """Write one file per release: one hex-encoded record per line."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for idx, recs in enumerate(self._releases):
            path = out / f"release_{idx:04d}.hex"
            path.write_text("".join(f"{rec.hex()}\n" for _, rec in recs))
            paths.append(path)
        return paths


# --------------------------------------------------------------------------
# chain
# --------------------------------------------------------------------------

Entry = Union[Block, BlockHeader]


def _header(entry: Entry) -> BlockHeader:
    return entry.header if isinstance(entry, Block) else entry


class Chain:
    def __init__(self, mode: ChainMode = ChainMode.FULL, genesis: Block | None = None):
        self.mode = ChainMode(mode)
        self.genesis_kind = GenesisKind.ORIGINAL
        self.checkpoint: Optional[CheckpointBlock] = None
        self._entries: list[Entry] = []
        self._offset = 0  # height of _entries[0]
        self._index: dict[Hash80, int] = {}
        self._by_parent: dict[Hash80, Hash80] = {}
        self.side: dict[Hash80, Block] = {}  # fork siblings seen but not on the main chain
        self._push(genesis or genesis_block())

    # -- inspection

    def __len__(self) -> int:
        return len(self._entries) + (1 if self.checkpoint else 0)

    def __contains__(self, block_hash: Hash80) -> bool:
        return block_hash in self._index

    @property
    def tip(self) -> BlockHeader:
        return _header(self._entries[-1])

    @property
    def tip_hash(self) -> Hash80:
        return self.tip.current_hash

    @property
    def height(self) -> int:
        return self._offset + len(self._entries) - 1

    @property
    def base_height(self) -> int:
        return self._offset

    def headers(self) -> list[BlockHeader]:
        return [_header(e) for e in self._entries]

    def blocks(self) -> list[Block]:
        if self.mode is not ChainMode.FULL:
            raise ChainError("headers-only chain keeps no bodies")
        return list(self._entries)

    def entry_at(self, height: int) -> Entry:
        return self._entries[height - self._offset]

    def header_at(self, height: int) -> BlockHeader:
        return _header(self.entry_at(height))

    def height_of(self, block_hash: Hash80) -> Optional[int]:
        return self._index.get(block_hash)

    def header_by_hash(self, block_hash: Hash80) -> Optional[BlockHeader]:
        h = self._index.get(block_hash)
        return None if h is None else self.header_at(h)

    def fingerprint(self) -> tuple[Hash80, ...]:
        return tuple(h.current_hash for h in self.headers())

    # -- mutation

    def _push(self, block: Block) -> None:
        entry: Entry = block if self.mode is ChainMode.FULL else block.header
        height = self._offset + len(self._entries)
        self._entries.append(entry)
        self._index[block.hash] = height
        self._by_parent[block.header.pre_hash] = block.hash

    def append(self, block: Block) -> None:
        """Extend the tip with an already-validated block."""
        if block.header.pre_hash != self.tip_hash:
            raise ChainError("block does not extend the current tip")
        if block.hash in self._index:
            raise ChainError("block already on chain")
        self.side.pop(block.hash, None)
        self._push(block)

    def record_side(self, block: Block) -> None:
        self.side[block.hash] = block

    def pop_tip(self) -> Entry:
        if len(self._entries) <= 1:
            raise ChainError("cannot pop the chain base")
        entry = self._entries.pop()
        head = _header(entry)
        del self._index[head.current_hash]
        if self._by_parent.get(head.pre_hash) == head.current_hash:
            del self._by_parent[head.pre_hash]
        return entry

    def reorg_onto(self, side_hash: Hash80) -> list[Entry]:
        """Replace the tip with its stored sibling ``side_hash``; returns the displaced entries."""
        sib = self.side[side_hash]
        if self.tip.pre_hash != sib.header.pre_hash:
            raise ChainError("side block is not a sibling of the tip")
        dropped = [self.pop_tip()]
        if isinstance(dropped[0], Block):
            self.side[dropped[0].hash] = dropped[0]
        self.append(sib)
        return dropped

    def release(self, archive: Archive) -> CheckpointBlock:
        """Archive everything below the tip and install a checkpoint as the new genesis."""
        tip = self._entries[-1]
        tip_height = self.height
        records: list[tuple[int, bytes]] = []
        if self.checkpoint is not None:
            records.append((self.checkpoint.height, self.checkpoint.encode()))
        for i, entry in enumerate(self._entries[:-1]):
            records.append((self._offset + i, _header(entry).encoded.to_bytes()))
        idx = archive.append_release(records)
        cp = CheckpointBlock(
            summary_hash=archive.summary_hash(idx),
            released_count=len(records),
            archived_to=idx,
            anchor_hash=_header(tip).pre_hash,
            height=tip_height - 1,
        )
        for entry in self._entries[:-1]:
            head = _header(entry)
            self._index.pop(head.current_hash, None)
            self._by_parent.pop(head.pre_hash, None)
        self._entries = [tip]
        self._offset = tip_height
        self.checkpoint = cp
        self.genesis_kind = GenesisKind.CONSENSUS_CHECKPOINT
        self.side.clear()
        return cp

    def sync_from(self, other: "Chain") -> int:
        """Catch up from a FULL peer; returns how many entries were added or replaced."""
        if other.mode is not ChainMode.FULL:
            raise ChainError("can only sync from a FULL chain")
        start = other.height_of(self.tip_hash)
        if start is not None:
            added = 0
            for height in range(start + 1, other.height + 1):
                self._push(other.entry_at(height))
                added += 1
            return added
        # our history was released or diverged: adopt the peer's state wholesale
        self.checkpoint = other.checkpoint
        self.genesis_kind = other.genesis_kind
        self._entries = []
        self._offset = other.base_height
        self._index = {}
        self._by_parent = {}
        self.side = {}
        for height in range(other.base_height, other.height + 1):
            self._push(other.entry_at(height))
        return len(self._entries)

    def sibling_of(self, block: Block) -> Optional[Hash80]:
        """Hash of a stored main-chain block sharing ``block``'s parent, if any."""
        existing = self._by_parent.get(block.header.pre_hash)
        if existing is None or existing == block.hash:
            return None
        return existing

    def verify_integrity(self) -> bool:
        """Recompute every link, hash and (FULL mode) both roots."""
        prev: Optional[Hash80] = self.checkpoint.anchor_hash if self.checkpoint else None
        for entry in self._entries:
            head = _header(entry)
            if prev is not None and head.pre_hash != prev:
                return False
            if isinstance(entry, Block):
                if entry.computed_hash != head.current_hash:
                    return False
                if entry.computed_root_trans != head.root_trans or entry.computed_root_rep != head.root_rep:
                    return False
            prev = head.current_hash
        return True


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


def validate_transaction(tx: Transaction, verifier: Verifier, ledger: ReputationLedger | None = None) -> Verdict:
    check = getattr(verifier, "verify_transaction", None)
    ok = check(tx) if check is not None else verifier.verify(tx.id_from, tx.signing_bytes(), tx.sig)
    if not ok:
        return reject(RejectReason.BAD_SIGNATURE, f"from node {tx.id_from}")
    if ledger is not None and ledger.is_isolated(tx.id_from):
        return reject(RejectReason.ISOLATED_SENDER, f"node {tx.id_from}")
    return ACCEPT


def validate_block(block: Block, chain: Chain, verifier: Verifier, ledger: ReputationLedger | None = None,
                   expected_miner: Callable[[int], Optional[int]] | None = None,
                   exhausted: Callable[[int], bool] | None = None,
                   parent_hash: Hash80 | None = None) -> Verdict:
    """Full block check against ``parent_hash`` (default: the chain tip).

    ``expected_miner`` maps a header timestamp to the scheduled proposer;
    ``exhausted`` reports proposers whose broadcast budget is spent.
    """
    head = block.header
    parent = chain.tip_hash if parent_hash is None else parent_hash
    if head.pre_hash != parent:
        return reject(RejectReason.BAD_PARENT)
    if block.computed_hash != head.current_hash:
        return reject(RejectReason.BAD_HASH)
    if block.computed_root_trans != head.root_trans:
        return reject(RejectReason.BAD_ROOT_TRANS)
    if block.computed_root_rep != head.root_rep:
        return reject(RejectReason.BAD_ROOT_REP)
    if not verifier.verify(block.miner, head.encoded.to_bytes(), block.miner_sig):
        return reject(RejectReason.BAD_MINER_SIGNATURE, f"miner {block.miner}")
    if ledger is not None and ledger.is_isolated(block.miner):
        return reject(RejectReason.ISOLATED_PROPOSER, f"miner {block.miner}")
    if expected_miner is not None and expected_miner(head.tmp) != block.miner:
        return reject(RejectReason.WRONG_PROPOSER, f"miner {block.miner} at tmp {head.tmp}")
    if exhausted is not None and exhausted(block.miner):
        return reject(RejectReason.EXHAUSTED, f"miner {block.miner}")
    check = getattr(verifier, "verify_transaction", None)
    banned = ledger.isolated if ledger is not None else ()
    for i, tx in enumerate(block.transactions):
        # fast path for the common all-valid case; the slow path names the reason
        if check is not None and tx.id_from not in banned and check(tx):
            continue
        verdict = validate_transaction(tx, verifier, ledger)
        if not verdict:
            return reject(RejectReason.INVALID_TX, f"tx {i}: {verdict.reason.value}")
    return ACCEPT


def append(chain: Chain, block: Block) -> Chain:
    chain.append(block)
    return chain


def detect_fork(chain: Chain, incoming: Block) -> bool:
    """True when ``incoming`` competes with a stored block for the same parent."""
    if incoming.hash in chain:
        return False
    return chain.sibling_of(incoming) is not None


def checkpoint_release(chain: Chain, archive: Archive, peer_tips: Iterable[Hash80] = ()) -> CheckpointBlock:
    """Release settled history; refused unless every peer reports the same tip."""
    tips = set(peer_tips)
    if tips and tips != {chain.tip_hash}:
        raise ReleaseRefused(f"nodes disagree on the tip ({len(tips | {chain.tip_hash})} distinct tips)")
    return chain.release(archive)


def spv_verify(header: BlockHeader, tx: Transaction, proof: Sequence[ProofStep]) -> bool:
    return verify_proof(header.root_trans, tx.leaf, proof)
