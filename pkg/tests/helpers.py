"""Small builders shared by the ledger, global-chain and acceptance tests."""

from repchain.codec import Block, ReputationDelta, Transaction, TxType, make_header
from repchain.crypto import KeyPair, KeyRing


def keyring(*names):
    """A KeyRing with one key per name; returns (ring, {name: node_id})."""
    ring = KeyRing()
    ids = {name: ring.register(KeyPair.from_name(name)) for name in names}
    assert len(set(ids.values())) == len(ids), "node id collision in test fixture"
    return ring, ids


def signed_tx(ring, sender, target, tx_type=TxType.ASSERT, add=b""):
    return ring.sign_transaction(Transaction(tx_type, sender, target, add=add.ljust(128, b"\0")))


def block_on(ring, parent, tmp, miner, txs=(), deltas=()):
    deltas = tuple(ReputationDelta(n, s) for n, s in deltas)
    header = make_header(parent, tmp, tuple(txs), deltas)
    return ring.sign_block(Block(header, tuple(txs), deltas, miner))


def grow(chain, ring, miner, count, start_tmp=1, txs_per_block=2, target=None):
    """Append ``count`` valid blocks to ``chain``; returns them."""
    out = []
    for i in range(count):
        tmp = start_tmp + i
        txs = [signed_tx(ring, miner, miner if target is None else target, add=f"{tmp}:{k}".encode())
               for k in range(txs_per_block)]
        block = block_on(ring, chain.tip_hash, tmp, miner, txs, [(miner, 50.0 + (tmp % 7))])
        chain.append(block)
        out.append(block)
    return out
