"""Bitcoin chain-state commitment and the private UTXO reserve relation.

A chain-state dump is normalized into a sorted snapshot, every UTXO becomes a
leaf of a padded Merkle tree, and the published root is what reserve proofs
are checked against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, List, Sequence

from . import merkle
from .merkle import EmptyInput, MerklePath, MerkleTree
from .relation import (
    ACCEPT, ParseError, RelationVerdict, as_uint, canonical_json, field, hexb,
    reject, unhex,
)

RELATION = "btc-reserve-v1"
MAX_SCRIPT = 0xFFFF


class DuplicateOutpoint(ValueError):
    pass


class MalformedRecord(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Utxo:
    txid: bytes  # internal byte order
    vout: int
    amount: int
    script_pubkey: bytes

    def leaf_bytes(self) -> bytes:
        return (self.txid + self.vout.to_bytes(4, "little") + self.amount.to_bytes(8, "little")
                + len(self.script_pubkey).to_bytes(2, "little") + self.script_pubkey)

    def to_dict(self) -> dict:
        return {"txid": hexb(self.txid), "vout": self.vout, "amount": str(self.amount),
                "script": hexb(self.script_pubkey)}

    @classmethod
    def from_dict(cls, obj: dict) -> "Utxo":
        return cls(unhex(field(obj, "txid"), 32, "txid"), as_uint(field(obj, "vout"), "vout", 32),
                   as_uint(field(obj, "amount"), "amount", 64), unhex(field(obj, "script"), what="script"))


@dataclass(frozen=True)
class UtxoSnapshot:
    block_hash: bytes
    utxos: tuple

    def __len__(self):
        return len(self.utxos)


@dataclass(frozen=True)
class UtxoTree:
    tree: MerkleTree
    snapshot_block: bytes
    utxo_count: int

    @property
    def root(self) -> bytes:
        return self.tree.root


def parse_record(obj) -> Utxo:
    """One dump line. txid_hex is in the usual display (reversed) order."""
    try:
        txid = unhex(field(obj, "txid_hex"), 32, "txid_hex")[::-1]
        vout = as_uint(field(obj, "vout"), "vout", 32)
        amount = as_uint(field(obj, "amount_sats"), "amount_sats", 64)
        script = unhex(field(obj, "script_hex"), what="script_hex")
    except ParseError as exc:
        raise MalformedRecord(str(exc)) from exc
    if len(script) > MAX_SCRIPT:
        raise MalformedRecord("script longer than 65535 bytes")
    return Utxo(txid, vout, amount, script)


def ingest_chainstate(records: Iterable, block_hash: bytes) -> UtxoSnapshot:
    utxos = [r if isinstance(r, Utxo) else parse_record(r) for r in records]
    utxos.sort(key=lambda u: (u.txid, u.vout))
    for prev, cur in zip(utxos, utxos[1:]):
        if (prev.txid, prev.vout) == (cur.txid, cur.vout):
            raise DuplicateOutpoint(f"outpoint {cur.txid[::-1].hex()}:{cur.vout} appears twice")
    return UtxoSnapshot(bytes(block_hash), tuple(utxos))


def read_dump(lines: Iterable[str]) -> UtxoSnapshot:
    """Parse a dump file: a {block_hash_hex} preamble line, then one record per line."""
    it = (line for line in lines if line.strip())
    try:
        preamble = json.loads(next(it))
        block_hash = unhex(field(preamble, "block_hash_hex"), 32, "block_hash_hex")
    except StopIteration:
        raise MalformedRecord("dump is missing its preamble line") from None
    except (ValueError, ParseError) as exc:
        raise MalformedRecord(f"bad preamble: {exc}") from exc
    records = []
    for n, line in enumerate(it, 2):
        try:
            records.append(json.loads(line))
        except ValueError as exc:
            raise MalformedRecord(f"line {n}: {exc}") from exc
    return ingest_chainstate(records, block_hash)


def write_dump(snapshot: UtxoSnapshot) -> str:
    lines = [json.dumps({"block_hash_hex": hexb(snapshot.block_hash)})]
    for u in snapshot.utxos:
        lines.append(json.dumps({"txid_hex": u.txid[::-1].hex(), "vout": u.vout,
                                 "amount_sats": u.amount, "script_hex": hexb(u.script_pubkey)}))
    return "\n".join(lines) + "\n"


def build_utxo_tree(snapshot: UtxoSnapshot) -> UtxoTree:
    if not snapshot.utxos:
        raise EmptyInput("snapshot has no UTXOs")
    tree = merkle.build_tree([u.leaf_bytes() for u in snapshot.utxos])
    return UtxoTree(tree, snapshot.block_hash, len(snapshot.utxos))


def owned_utxos(snapshot: UtxoSnapshot, script: bytes) -> List[int]:
    return [i for i, u in enumerate(snapshot.utxos) if u.script_pubkey == script]


# -- relation ----------------------------------------------------------------

@dataclass(frozen=True)
class BtcReserveStatement:
    utxo_root: bytes
    snapshot_block: bytes
    min_amount: int

    def to_bytes(self) -> bytes:
        return canonical_json({"relation": RELATION, "utxo_root": hexb(self.utxo_root),
                               "snapshot_block": hexb(self.snapshot_block), "min_amount": str(self.min_amount)})

    @classmethod
    def from_obj(cls, obj: dict) -> "BtcReserveStatement":
        if field(obj, "relation") != RELATION:
            raise ParseError("statement is for another relation")
        return cls(unhex(field(obj, "utxo_root"), 32, "utxo_root"),
                   unhex(field(obj, "snapshot_block"), 32, "snapshot_block"),
                   as_uint(field(obj, "min_amount"), "min_amount"))


@dataclass(frozen=True)
class BtcReserveWitness:
    utxos: tuple
    paths: tuple
    script_template: bytes

    def to_bytes(self) -> bytes:
        return canonical_json({"utxos": [u.to_dict() for u in self.utxos],
                               "paths": [p.to_dict() for p in self.paths],
                               "script_template": hexb(self.script_template)})

    @classmethod
    def from_obj(cls, obj: dict) -> "BtcReserveWitness":
        utxos, paths = field(obj, "utxos"), field(obj, "paths")
        if not isinstance(utxos, list) or not isinstance(paths, list):
            raise ParseError("utxos and paths must be lists")
        return cls(tuple(Utxo.from_dict(u) for u in utxos), tuple(MerklePath.from_dict(p) for p in paths),
                   unhex(field(obj, "script_template"), what="script_template"))


def make_reserve_witness(tree: UtxoTree, snapshot: UtxoSnapshot, script: bytes,
                         indices: Sequence[int] | None = None) -> BtcReserveWitness:
    if indices is None:
        indices = owned_utxos(snapshot, script)
    return BtcReserveWitness(tuple(snapshot.utxos[i] for i in indices),
                             tuple(merkle.prove_inclusion(tree.tree, i) for i in indices), bytes(script))


def check_btc_reserve_relation(statement: BtcReserveStatement, witness: BtcReserveWitness) -> RelationVerdict:
    if not witness.utxos or len(witness.utxos) != len(witness.paths):
        return reject("MalformedWitness", "utxos and paths must be non-empty and of equal length")
    for n, (utxo, path) in enumerate(zip(witness.utxos, witness.paths)):
        if not merkle.verify_inclusion(statement.utxo_root, utxo.leaf_bytes(), path):
            return reject("BadPath", f"witness entry {n} does not verify against the UTXO root")
    if any(u.script_pubkey != witness.script_template for u in witness.utxos):
        return reject("MixedScripts", "not every UTXO is locked by the witness script")
    indices = [p.leaf_index for p in witness.paths]
    if len(set(indices)) != len(indices):
        return reject("DuplicateLeaf", "a UTXO leaf is counted more than once")
    if sum(u.amount for u in witness.utxos) < statement.min_amount:
        return reject("InsufficientBalance", "owned UTXOs sum below the public minimum")
    return ACCEPT
