"""Pluggable signing for simulated nodes.

The default scheme is a deterministic keyed hash (SHAKE-256 over secret and
message) stretched to exactly 1024 bits. It authenticates within a simulation
where the verifier holds every node's secret; it is not public-key crypto.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol

from .codec import SIG_BYTES, Block, Transaction, node_id_from_key


@dataclass(frozen=True)
class KeyPair:
    secret: bytes
    public: bytes

    @property
    def node_id(self) -> int:
        return node_id_from_key(self.public)

    @classmethod
    def from_name(cls, name: str) -> "KeyPair":
        secret = hashlib.sha3_256(b"repchain-secret:" + name.encode()).digest()
        return cls(secret, hashlib.sha3_256(b"repchain-public:" + secret).digest())


def keyed_signature(secret: bytes, message: bytes) -> bytes:
    return hashlib.shake_256(secret + message).digest(SIG_BYTES)


class Verifier(Protocol):
    def verify(self, node_id: int, message: bytes, sig: bytes) -> bool: ...


class KeyRing:
    """Registry of simulated keys; signs on behalf of and verifies for node ids."""

    def __init__(self, cache_size: int = 1 << 16):
        self._keys: dict[int, KeyPair] = {}
        self._cache: dict[tuple[int, bytes, bytes], bool] = {}
        self._cache_size = cache_size
        self._tx_cache: dict[tuple[int, bytes], bool] = {}

    def register(self, keys: KeyPair) -> int:
        nid = keys.node_id
        if nid in self._keys and self._keys[nid] != keys:
            raise ValueError(f"node id {nid} already registered to a different key")
        self._keys[nid] = keys
        return nid

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._keys

    def sign(self, node_id: int, message: bytes) -> bytes:
        return keyed_signature(self._keys[node_id].secret, message)

    def verify(self, node_id: int, message: bytes, sig: bytes) -> bool:
        keys = self._keys.get(node_id)
        if keys is None:
            return False
        key = (node_id, message, sig)
        hit = self._cache.get(key)
        if hit is None:
            if len(self._cache) >= self._cache_size:
                self._cache.clear()
            hit = self._cache[key] = keyed_signature(keys.secret, message) == sig
        return hit

    # convenience wrappers for ledger objects

    def sign_transaction(self, tx: Transaction) -> Transaction:
        payload = tx.signing_bytes()
        signed = Transaction(tx.tx_type, tx.id_from, tx.id_target, self.sign(tx.id_from, payload), tx.add)
        signed.__dict__["_signing"] = payload  # same non-SIG fields, same payload
        return signed

    def verify_transaction(self, tx: Transaction) -> bool:
        # the leaf hash covers every field including SIG, so it identifies the check
        key = (tx.id_from, tx.leaf)
        hit = self._tx_cache.get(key)
        if hit is None:
            if len(self._tx_cache) >= self._cache_size:
                self._tx_cache.clear()
            hit = self._tx_cache[key] = self.verify(tx.id_from, tx.signing_bytes(), tx.sig)
        return hit

    def sign_block(self, block: Block) -> Block:
        sig = self.sign(block.miner, block.header.encoded.to_bytes())
        return Block(block.header, block.transactions, block.rep_deltas, block.miner, sig)

    def verify_block(self, block: Block) -> bool:
        return self.verify(block.miner, block.header.encoded.to_bytes(), block.miner_sig)
