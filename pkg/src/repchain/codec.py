"""Bit-exact wire format for sub-chain blocks and transactions.

Layouts (MSB-first, fields in order, no padding)::

    header       CURRENT_HASH 80 | PRE_HASH 80 | TMP 24 | ROOT_REP 80 | ROOT_TRANS 80   = 344 bits
    transaction  TYPE 4 | ID_FROM 8 | ID_TARGET 8 | SIG 1024 | ADD 1024                 = 2068 bits

Hashes are 80-bit truncations of a Keccak-family digest (SHA3-256 by default).
The digest is swappable through :func:`set_digest` so a lighter sponge can be
dropped in without touching callers.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Callable, Iterable, Sequence

HASH_BITS = 80
HASH_BYTES = HASH_BITS // 8
HEADER_BITS = 344
TX_BITS = 2068
SIG_BITS = 1024
ADD_BITS = 1024
SIG_BYTES = SIG_BITS // 8
ADD_BYTES = ADD_BITS // 8
TMP_BITS = 24
TMP_MOD = 1 << TMP_BITS

Hash80 = bytes


class CodecError(ValueError):
    """Raised for malformed encodings or out-of-range fields."""


# --------------------------------------------------------------------------
# bit strings
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bits:
    """An immutable bit string stored as (integer value, bit length)."""

    value: int
    length: int

    def __post_init__(self):
        if self.length < 0 or self.value < 0 or self.value >> self.length:
            raise CodecError(f"value does not fit in {self.length} bits")

    def __len__(self) -> int:
        return self.length

    def __add__(self, other: "Bits") -> "Bits":
        return Bits((self.value << other.length) | other.value, self.length + other.length)

    def to_bytes(self) -> bytes:
        """Pack MSB-first, zero-padding the final byte on the right."""
        pad = -self.length % 8
        return (self.value << pad).to_bytes((self.length + pad) // 8, "big")

    @classmethod
    def from_bytes(cls, data: bytes, length: int | None = None) -> "Bits":
        total = len(data) * 8
        if length is None:
            length = total
        if len(data) != (length + 7) // 8:
            raise CodecError(f"{len(data)} bytes cannot hold exactly {length} bits")
        pad = total - length
        raw = int.from_bytes(data, "big")
        if raw & ((1 << pad) - 1):
            raise CodecError("non-zero padding bits")
        return cls(raw >> pad, length)

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_hex(cls, text: str, length: int) -> "Bits":
        return cls.from_bytes(bytes.fromhex(text), length)

    def flip(self, index: int) -> "Bits":
        """Return a copy with bit ``index`` (0 = most significant) inverted."""
        if not 0 <= index < self.length:
            raise IndexError(index)
        return Bits(self.value ^ (1 << (self.length - 1 - index)), self.length)


class _BitWriter:
    def __init__(self):
        self.value = 0
        self.length = 0

    def put(self, name: str, value: int, width: int) -> None:
        if not 0 <= value < (1 << width):
            raise CodecError(f"field {name} does not fit in {width} bits: {value!r}")
        self.value = (self.value << width) | value
        self.length += width

    def bits(self) -> Bits:
        return Bits(self.value, self.length)


class _BitReader:
    def __init__(self, bits: Bits):
        self._bits = bits
        self._pos = 0

    def take(self, width: int) -> int:
        shift = self._bits.length - self._pos - width
        self._pos += width
        return (self._bits.value >> shift) & ((1 << width) - 1)


# --------------------------------------------------------------------------
# hashing
# --------------------------------------------------------------------------

_digest: Callable[[bytes], bytes] = lambda data: hashlib.sha3_256(data).digest()


def set_digest(fn: Callable[[bytes], bytes] | None) -> None:
    """Swap the underlying digest (must return >= 10 bytes). ``None`` restores SHA3-256."""
    global _digest
    _digest = fn if fn is not None else (lambda data: hashlib.sha3_256(data).digest())


def hash80(data: bytes) -> Hash80:
    return _digest(bytes(data))[:HASH_BYTES]


EMPTY_HASH = hash80(b"")
ZERO_HASH = bytes(HASH_BYTES)


def node_id_from_key(public_key: bytes) -> int:
    """8-bit node id: first byte of the 80-bit key digest."""
    return hash80(public_key)[0]


# --------------------------------------------------------------------------
# transactions
# --------------------------------------------------------------------------


class TxType(IntEnum):
    QUERY = 0
    REPLY = 1
    UPDATE = 2
    RATE = 3
    ASSERT = 4


def _as_field(name: str, data: bytes, nbytes: int) -> int:
    if not isinstance(data, (bytes, bytearray)) or len(data) != nbytes:
        raise CodecError(f"field {name} must be exactly {nbytes * 8} bits")
    return int.from_bytes(data, "big")


@dataclass(frozen=True)
class Transaction:
    tx_type: TxType
    id_from: int
    id_target: int
    sig: bytes = bytes(SIG_BYTES)
    add: bytes = bytes(ADD_BYTES)

    @cached_property
    def encoded(self) -> Bits:
        return encode_transaction(self)

    @cached_property
    def leaf(self) -> Hash80:
        """hash80 of the packed 2068-bit encoding (Merkle leaf)."""
        return hash80(self.encoded.to_bytes())

    @cached_property
    def _signing(self) -> bytes:
        return signing_payload(self)

    def signing_bytes(self) -> bytes:
        return self._signing


def encode_transaction(tx: Transaction) -> Bits:
    w = _BitWriter()
    w.put("TYPE", int(tx.tx_type), 4)
    w.put("ID_FROM", tx.id_from, 8)
    w.put("ID_TARGET", tx.id_target, 8)
    w.put("SIG", _as_field("SIG", tx.sig, SIG_BYTES), SIG_BITS)
    w.put("ADD", _as_field("ADD", tx.add, ADD_BYTES), ADD_BITS)
    return w.bits()


def decode_transaction(bits: Bits) -> Transaction:
    if len(bits) != TX_BITS:
        raise CodecError(f"transaction must be {TX_BITS} bits, got {len(bits)}")
    r = _BitReader(bits)
    tag = r.take(4)
    try:
        tx_type = TxType(tag)
    except ValueError:
        raise CodecError(f"undefined transaction type tag {tag}") from None
    id_from = r.take(8)
    id_target = r.take(8)
    sig = r.take(SIG_BITS).to_bytes(SIG_BYTES, "big")
    add = r.take(ADD_BITS).to_bytes(ADD_BYTES, "big")
    return Transaction(tx_type, id_from, id_target, sig, add)


def signing_payload(tx: Transaction) -> bytes:
    """Bytes covered by the sender signature: every field except SIG."""
    w = _BitWriter()
    w.put("TYPE", int(tx.tx_type), 4)
    w.put("ID_FROM", tx.id_from, 8)
    w.put("ID_TARGET", tx.id_target, 8)
    w.put("ADD", _as_field("ADD", tx.add, ADD_BYTES), ADD_BITS)
    return w.bits().to_bytes()


# --------------------------------------------------------------------------
# headers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockHeader:
    current_hash: Hash80
    pre_hash: Hash80
    tmp: int
    root_rep: Hash80
    root_trans: Hash80

    @cached_property
    def encoded(self) -> Bits:
        return encode_header(self)


def _hash_field(name: str, value: bytes) -> int:
    return _as_field(name, value, HASH_BYTES)


def encode_header(h: BlockHeader) -> Bits:
    w = _BitWriter()
    w.put("CURRENT_HASH", _hash_field("CURRENT_HASH", h.current_hash), HASH_BITS)
    w.put("PRE_HASH", _hash_field("PRE_HASH", h.pre_hash), HASH_BITS)
    w.put("TMP", h.tmp, TMP_BITS)
    w.put("ROOT_REP", _hash_field("ROOT_REP", h.root_rep), HASH_BITS)
    w.put("ROOT_TRANS", _hash_field("ROOT_TRANS", h.root_trans), HASH_BITS)
    return w.bits()


def decode_header(bits: Bits) -> BlockHeader:
    if len(bits) != HEADER_BITS:
        raise CodecError(f"header must be {HEADER_BITS} bits, got {len(bits)}")
    r = _BitReader(bits)
    as_hash = lambda v: v.to_bytes(HASH_BYTES, "big")  # noqa: E731
    return BlockHeader(
        current_hash=as_hash(r.take(HASH_BITS)),
        pre_hash=as_hash(r.take(HASH_BITS)),
        tmp=r.take(TMP_BITS),
        root_rep=as_hash(r.take(HASH_BITS)),
        root_trans=as_hash(r.take(HASH_BITS)),
    )


def block_hash(pre_hash: Hash80, tmp: int, root_rep: Hash80, root_trans: Hash80) -> Hash80:
    """current_hash = hash80(PRE_HASH | TMP | ROOT_REP | ROOT_TRANS); the hash excludes itself."""
    w = _BitWriter()
    w.put("PRE_HASH", _hash_field("PRE_HASH", pre_hash), HASH_BITS)
    w.put("TMP", tmp, TMP_BITS)
    w.put("ROOT_REP", _hash_field("ROOT_REP", root_rep), HASH_BITS)
    w.put("ROOT_TRANS", _hash_field("ROOT_TRANS", root_trans), HASH_BITS)
    return hash80(w.bits().to_bytes())


# --------------------------------------------------------------------------
# Merkle tree over transactions
# --------------------------------------------------------------------------


def _merkle_parent(left: Hash80, right: Hash80) -> Hash80:
    return hash80(left + right)


def merkle_root_of_leaves(leaves: Sequence[Hash80]) -> Hash80:
    if not leaves:
        return EMPTY_HASH
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [_merkle_parent(level[i], level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def merkle_root(txs: Sequence[Transaction]) -> Hash80:
    """Binary Merkle root; a lone leaf is its own root, odd levels repeat the last node."""
    return merkle_root_of_leaves([tx.leaf for tx in txs])


@dataclass(frozen=True)
class ProofStep:
    sibling: Hash80
    sibling_on_left: bool


def merkle_proof(txs: Sequence[Transaction], index: int) -> tuple[ProofStep, ...]:
    if not 0 <= index < len(txs):
        raise IndexError(f"transaction index {index} out of range for {len(txs)} leaves")
    level = [tx.leaf for tx in txs]
    steps = []
    idx = index
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        if idx % 2:
            steps.append(ProofStep(level[idx - 1], True))
        else:
            steps.append(ProofStep(level[idx + 1], False))
        level = [_merkle_parent(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        idx //= 2
    return tuple(steps)


def verify_proof(root: Hash80, leaf: Hash80, proof: Iterable[ProofStep]) -> bool:
    node = leaf
    for step in proof:
        node = _merkle_parent(step.sibling, node) if step.sibling_on_left else _merkle_parent(node, step.sibling)
    return node == root


# --------------------------------------------------------------------------
# reputation trie
# --------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class ReputationDelta:
    node: int
    new_score: float

    def leaf(self) -> Hash80:
        if not 0 <= self.node < 256:
            raise CodecError(f"node id {self.node} does not fit in 8 bits")
        return hash80(bytes([self.node]) + struct.pack(">d", float(self.new_score)))


def _trie_hash(entries: list[tuple[tuple[int, ...], Hash80]], depth: int) -> Hash80:
    if len(entries) == 1:
        path, leaf = entries[0]
        # collapsed single-leaf subtree keeps the remaining key nibbles
        return hash80(b"L" + bytes(path[depth:]) + leaf)
    slots: dict[int, list] = {}
    for path, leaf in entries:
        slots.setdefault(path[depth], []).append((path, leaf))
    bitmap = 0
    children = b""
    for nibble in sorted(slots):
        bitmap |= 1 << nibble
        children += _trie_hash(slots[nibble], depth + 1)
    return hash80(b"B" + bitmap.to_bytes(2, "big") + children)


def reputation_root(deltas: Iterable[ReputationDelta]) -> Hash80:
    """Root of a hex-radix trie keyed by the two nibbles of each 8-bit node id."""
    entries = {}
    for d in deltas:
        if d.node in entries:
            raise CodecError(f"duplicate reputation delta for node {d.node}")
        entries[d.node] = d.leaf()
    if not entries:
        return EMPTY_HASH
    keyed = [((node >> 4, node & 0xF), leaf) for node, leaf in sorted(entries.items())]
    return _trie_hash(keyed, 0)


# --------------------------------------------------------------------------
# blocks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """A header plus its body.

    ``miner`` and ``miner_sig`` travel with the block as an envelope; they are
    not part of the 344-bit header but let receivers authenticate the proposer.
    """

    header: BlockHeader
    transactions: tuple[Transaction, ...] = ()
    rep_deltas: tuple[ReputationDelta, ...] = ()
    miner: int = 0
    miner_sig: bytes = field(default=bytes(SIG_BYTES), repr=False)

    @property
    def hash(self) -> Hash80:
        return self.header.current_hash

    @cached_property
    def computed_root_trans(self) -> Hash80:
        return merkle_root(self.transactions)

    @cached_property
    def computed_root_rep(self) -> Hash80:
        return reputation_root(self.rep_deltas)

    @cached_property
    def computed_hash(self) -> Hash80:
        h = self.header
        return block_hash(h.pre_hash, h.tmp, h.root_rep, h.root_trans)


def make_header(pre_hash: Hash80, tmp: int, transactions: Sequence[Transaction],
                rep_deltas: Iterable[ReputationDelta] = ()) -> BlockHeader:
    tmp %= TMP_MOD
    root_rep = reputation_root(rep_deltas)
    root_trans = merkle_root(transactions)
    return BlockHeader(block_hash(pre_hash, tmp, root_rep, root_trans), pre_hash, tmp, root_rep, root_trans)


def genesis_block() -> Block:
    return Block(make_header(ZERO_HASH, 0, ()))
