"""ADD-field layouts used by simulated devices (first byte tags the layout)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from ..codec import ADD_BYTES, TxType

QUERY = b"Q"
REPLY = b"P"
UPDATE = b"U"
RATE = b"T"
ASSERT = b"A"
FLOOD = b"F"
RELAY_REQUEST = b"R"
RELAYED = b"D"

MAX_RELAY_PAYLOAD = ADD_BYTES - 4


def _pad(raw: bytes) -> bytes:
    return raw.ljust(ADD_BYTES, b"\0")


def truth(node: int, tick: int) -> int:
    """Ground-truth device reading honest nodes report and peers can corroborate."""
    return (node * 1_000_003 + tick * 7_919 + 12_345) & 0xFFFFFFFF


def query(qid: int, tick: int) -> bytes:
    return _pad(struct.pack(">cII", QUERY, qid, tick))


def reply(qid: int, tick: int, value: int) -> bytes:
    return _pad(struct.pack(">cIII", REPLY, qid, tick, value))


def update(tick: int, value: int) -> bytes:
    return _pad(struct.pack(">cII", UPDATE, tick, value))


def rate(quality: int, rated: TxType, completed_at: int) -> bytes:
    return _pad(struct.pack(">cBBI", RATE, quality, int(rated), completed_at))


def assertion(code: int, tick: int) -> bytes:
    return _pad(struct.pack(">cII", ASSERT, code, tick))


def flood(seq: int, tick: int) -> bytes:
    return _pad(struct.pack(">cII", FLOOD, seq, tick))


def relay_request(target_domain: int, target_node: int, payload: bytes) -> bytes:
    if len(payload) > MAX_RELAY_PAYLOAD:
        raise ValueError("relay payload too long")
    return _pad(struct.pack(">cBBB", RELAY_REQUEST, target_domain, target_node, len(payload)) + payload)


def relayed(source_domain: int, source_node: int, payload: bytes) -> bytes:
    return _pad(struct.pack(">cBBB", RELAYED, source_domain, source_node, len(payload)) + payload)


def tag(add: bytes) -> bytes:
    return add[:1]


@dataclass(frozen=True)
class Rating:
    quality: int
    rated: TxType
    completed_at: int


def parse_rate(add: bytes) -> Optional[Rating]:
    if tag(add) != RATE:
        return None
    _, q, rated, done = struct.unpack_from(">cBBI", add)
    if q > 100 or rated > max(TxType):
        return None
    return Rating(q, TxType(rated), done)


def parse_query(add: bytes) -> tuple[int, int]:
    _, qid, tick = struct.unpack_from(">cII", add)
    return qid, tick


def parse_reply(add: bytes) -> tuple[int, int, int]:
    _, qid, tick, value = struct.unpack_from(">cIII", add)
    return qid, tick, value


def parse_update(add: bytes) -> tuple[int, int]:
    _, tick, value = struct.unpack_from(">cII", add)
    return tick, value


def parse_relay(add: bytes) -> tuple[int, int, bytes]:
    """(domain, node, payload) of a RELAY_REQUEST or RELAYED record."""
    _, dom, node, n = struct.unpack_from(">cBBB", add)
    return dom, node, add[4:4 + n]
