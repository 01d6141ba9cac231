"""Address ownership signatures and the combined solvency relation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Optional

import coincurve

from . import btcstate, ethstate, merkle
from .hashcodec import hash160, keccak256, sha256d
from .liabilities import AssetId, SumLeaf, ZERO_ASSET
from .merkle import MerklePath
from .relation import (
    ACCEPT, ParseError, RelationVerdict, as_uint, canonical_json, field, hexb,
    reject, unhex,
)

RELATION = "solvency-v1"
PROTOCOL_TAG = b"PPOS-v1"
ETH_SCHEME = "EthKeccak"
BTC_SCHEME = "BtcSha256d"
SCHEMES = (ETH_SCHEME, BTC_SCHEME)

# inner relation name -> (statement parser, witness parser, checker, required scheme)
INNER = {
    ethstate.ETH_RELATION: (ethstate.EthReserveStatement.from_obj, ethstate.parse_eth_witness,
                            ethstate.check_eth_min_balance_relation, ETH_SCHEME),
    ethstate.ERC20_RELATION: (ethstate.Erc20ReserveStatement.from_obj, ethstate.Erc20Witness.from_obj,
                              ethstate.check_erc20_min_balance_relation, ETH_SCHEME),
    btcstate.RELATION: (btcstate.BtcReserveStatement.from_obj, btcstate.BtcReserveWitness.from_obj,
                        btcstate.check_btc_reserve_relation, BTC_SCHEME),
}


# -- ownership -------------------------------------------------------------------

def ownership_message(round_id: int, liabilities_root: bytes, chain_tag: str) -> bytes:
    tag = chain_tag.encode()
    if len(tag) > 255:
        raise ValueError("chain tag longer than 255 bytes")
    if len(liabilities_root) != 32:
        raise ValueError("liabilities root must be 32 bytes")
    return PROTOCOL_TAG + round_id.to_bytes(8, "big") + bytes(liabilities_root) + bytes([len(tag)]) + tag


def message_digest(message: bytes, scheme: str) -> bytes:
    if scheme == ETH_SCHEME:
        return keccak256(message)
    if scheme == BTC_SCHEME:
        return sha256d(message)
    raise ValueError(f"unknown signature scheme {scheme!r}")


@dataclass(frozen=True)
class OwnershipSignature:
    signature: bytes  # r || s || recovery id
    scheme: str

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "signature_hex": hexb(self.signature)}

    @classmethod
    def from_dict(cls, obj: dict) -> "OwnershipSignature":
        scheme = field(obj, "scheme")
        if scheme not in SCHEMES:
            raise ParseError(f"unknown signature scheme {scheme!r}")
        return cls(unhex(field(obj, "signature_hex"), 65, "signature_hex"), scheme)


def eth_address(public_key: coincurve.PublicKey) -> bytes:
    return keccak256(public_key.format(compressed=False)[1:])[-20:]


def p2pkh_script(public_key: coincurve.PublicKey) -> bytes:
    return b"\x76\xa9\x14" + hash160(public_key.format(compressed=True)) + b"\x88\xac"


def owner_of(private_key: bytes, scheme: str) -> bytes:
    """The address (ETH) or locking script (BTC) a key controls."""
    pub = coincurve.PrivateKey(private_key).public_key
    return eth_address(pub) if scheme == ETH_SCHEME else p2pkh_script(pub)


def sign_ownership(private_key: bytes, message: bytes, scheme: str) -> OwnershipSignature:
    digest = message_digest(message, scheme)
    sig = coincurve.PrivateKey(private_key).sign_recoverable(digest, hasher=None)
    return OwnershipSignature(sig, scheme)


def verify_ownership(claimed: bytes, sig: OwnershipSignature, message: bytes) -> bool:
    try:
        digest = message_digest(message, sig.scheme)
        pub = coincurve.PublicKey.from_signature_and_message(sig.signature, digest, hasher=None)
    except Exception:  # noqa: BLE001 - any recovery failure means "not verified"
        return False
    if sig.scheme == ETH_SCHEME:
        return eth_address(pub) == bytes(claimed)
    return p2pkh_script(pub) == bytes(claimed)


# -- statement / witness -------------------------------------------------------------

def _opt_hex(obj: dict, key: str) -> Optional[bytes]:
    value = field(obj, key)
    return None if value is None else unhex(value, 32, key)


@dataclass(frozen=True)
class SolvencyStatement:
    round_id: int
    liabilities_root: bytes
    liabilities_sum_leaf_index: int
    eth_block_hash: Optional[bytes] = None
    btc_utxo_root: Optional[bytes] = None
    btc_snapshot_block: Optional[bytes] = None

    def to_bytes(self) -> bytes:
        opt = lambda v: None if v is None else hexb(v)  # noqa: E731
        return canonical_json({
            "relation": RELATION, "round_id": self.round_id,
            "liabilities_root": hexb(self.liabilities_root),
            "liabilities_sum_leaf_index": self.liabilities_sum_leaf_index,
            "eth_block_hash": opt(self.eth_block_hash),
            "btc_utxo_root": opt(self.btc_utxo_root),
            "btc_snapshot_block": opt(self.btc_snapshot_block),
        })

    @classmethod
    def from_obj(cls, obj: dict) -> "SolvencyStatement":
        if field(obj, "relation") != RELATION:
            raise ParseError("statement is for another relation")
        stmt = cls(as_uint(field(obj, "round_id"), "round_id", 64),
                   unhex(field(obj, "liabilities_root"), 32, "liabilities_root"),
                   as_uint(field(obj, "liabilities_sum_leaf_index"), "liabilities_sum_leaf_index", 64),
                   _opt_hex(obj, "eth_block_hash"), _opt_hex(obj, "btc_utxo_root"),
                   _opt_hex(obj, "btc_snapshot_block"))
        if (stmt.btc_utxo_root is None) != (stmt.btc_snapshot_block is None):
            raise ParseError("btc_utxo_root and btc_snapshot_block go together")
        return stmt


@dataclass(frozen=True)
class ReserveClaim:
    asset: AssetId
    relation: str
    statement: object
    witness: object
    ownership: OwnershipSignature

    @property
    def amount(self) -> int:
        return self.statement.min_amount

    @property
    def owner(self) -> bytes:
        """The private address or script the claim is about."""
        if self.relation == ethstate.ETH_RELATION:
            return self.witness.address
        if self.relation == ethstate.ERC20_RELATION:
            return self.witness.holder
        return self.witness.script_template

    def to_dict(self) -> dict:
        return {"asset": self.asset.to_dict(), "relation": self.relation,
                "statement": json.loads(self.statement.to_bytes()),
                "witness": json.loads(_witness_bytes(self.witness)),
                "ownership": self.ownership.to_dict()}

    @classmethod
    def from_dict(cls, obj: dict) -> "ReserveClaim":
        relation = field(obj, "relation")
        if relation not in INNER:
            raise ParseError(f"unknown reserve relation {relation!r}")
        parse_stmt, parse_wit, _, _ = INNER[relation]
        return cls(AssetId.from_dict(field(obj, "asset")), relation, parse_stmt(field(obj, "statement")),
                   parse_wit(field(obj, "witness")), OwnershipSignature.from_dict(field(obj, "ownership")))


def _witness_bytes(witness) -> bytes:
    if isinstance(witness, ethstate.AccountProofBundle):
        return ethstate.eth_witness_bytes(witness)
    return witness.to_bytes()


@dataclass(frozen=True)
class SolvencyWitness:
    sum_leaf: SumLeaf
    sum_leaf_path: MerklePath
    claims: tuple

    def to_bytes(self) -> bytes:
        return canonical_json({"sum_leaf": self.sum_leaf.to_dict(), "sum_leaf_path": self.sum_leaf_path.to_dict(),
                               "claims": [c.to_dict() for c in self.claims]})

    @classmethod
    def from_obj(cls, obj: dict) -> "SolvencyWitness":
        claims = field(obj, "claims")
        if not isinstance(claims, list):
            raise ParseError("claims must be a list")
        return cls(SumLeaf.from_dict(field(obj, "sum_leaf")), MerklePath.from_dict(field(obj, "sum_leaf_path")),
                   tuple(ReserveClaim.from_dict(c) for c in claims))


# -- relation ------------------------------------------------------------------

def _claim_binding(statement: SolvencyStatement, claim: ReserveClaim) -> Optional[str]:
    inner = claim.statement
    if claim.relation == btcstate.RELATION:
        if statement.btc_utxo_root is None:
            return "statement carries no Bitcoin commitment"
        if (inner.utxo_root, inner.snapshot_block) != (statement.btc_utxo_root, statement.btc_snapshot_block):
            return "claim is bound to a different UTXO commitment"
        if claim.asset.asset != ZERO_ASSET:
            return "Bitcoin claims are for the native asset"
        return None
    if statement.eth_block_hash is None:
        return "statement carries no Ethereum block commitment"
    if inner.block_hash != statement.eth_block_hash:
        return "claim is bound to a different block hash"
    expected_asset = ZERO_ASSET if claim.relation == ethstate.ETH_RELATION else inner.token_contract
    if claim.asset.asset != expected_asset:
        return "claim asset does not match the proven token"
    return None


def _claim_identity(claim: ReserveClaim):
    """Key under which two claims would be counting the same funds."""
    if claim.relation == btcstate.RELATION:
        return [("btc", claim.statement.utxo_root, p.leaf_index) for p in claim.witness.paths]
    if claim.relation == ethstate.ERC20_RELATION:
        return [("erc20", claim.statement.token_contract, claim.witness.holder)]
    return [("eth", claim.witness.address)]


def check_solvency_relation(statement: SolvencyStatement, witness: SolvencyWitness) -> RelationVerdict:
    path = witness.sum_leaf_path
    if path.leaf_index != statement.liabilities_sum_leaf_index or not merkle.verify_inclusion(
            statement.liabilities_root, witness.sum_leaf.to_bytes(), path):
        return reject("BadSumLeafPath", "sum leaf is not at the stated position under the liabilities root")

    for n, claim in enumerate(witness.claims):
        problem = _claim_binding(statement, claim)
        if problem:
            return reject("InnerRelationFailed", f"claim {n}: {problem}")
        verdict = INNER[claim.relation][2](claim.statement, claim.witness)
        if not verdict:
            return reject("InnerRelationFailed", f"claim {n}: {verdict.reason}: {verdict.detail}")

    for n, claim in enumerate(witness.claims):
        required = INNER[claim.relation][3]
        message = ownership_message(statement.round_id, statement.liabilities_root, claim.asset.network)
        if claim.ownership.scheme != required or not verify_ownership(claim.owner, claim.ownership, message):
            return reject("BadOwnership", f"claim {n}: ownership signature does not verify")

    seen = set()
    for n, claim in enumerate(witness.claims):
        for key in _claim_identity(claim):
            if key in seen:
                return reject("DuplicateClaim", f"claim {n} counts funds already claimed")
            seen.add(key)

    reserves: Dict[AssetId, int] = {}
    for claim in witness.claims:
        reserves[claim.asset] = reserves.get(claim.asset, 0) + claim.amount
    for asset, owed in sorted(witness.sum_leaf.totals.items(), key=lambda kv: kv[0].sort_key):
        if reserves.get(asset, 0) < owed:
            return reject("AssetShortfall", f"reserves for {asset.network}/{asset.asset.hex()} fall short")
    return ACCEPT
