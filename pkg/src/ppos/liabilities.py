"""Proof-of-liabilities commitment: user leaves, the sum leaf, and the
liability-correctness relation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

from . import merkle
from .hashcodec import keccak256
from .merkle import EmptyInput, IndexOutOfRange, MerklePath, MerkleTree
from .relation import (
    ACCEPT, ParseError, RelationVerdict, as_uint, canonical_json, field, hexb,
    reject, unhex,
)

RELATION = "liability-v1"
USER_TAG = b"L"
SUM_TAG = b"S"
AMOUNT_BYTES = 32
MAX_AMOUNT = (1 << 256) - 1
ZERO_ASSET = bytes(20)


class InvalidAmount(ValueError):
    pass


class DuplicateAsset(ValueError):
    pass


class SumOverflow(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AssetId:
    network: str
    asset: bytes = ZERO_ASSET

    def __post_init__(self):
        if not self.network:
            raise ValueError("network identifier must be non-empty")
        if len(self.network.encode()) > 255:
            raise ValueError("network identifier longer than 255 bytes")
        if len(self.asset) != 20:
            raise ValueError("asset identifier must be 20 bytes")

    @property
    def sort_key(self):
        return (self.network.encode(), self.asset)

    def to_dict(self) -> dict:
        return {"network": self.network, "asset": hexb(self.asset)}

    @classmethod
    def from_dict(cls, obj: dict) -> "AssetId":
        network = field(obj, "network")
        if not isinstance(network, str):
            raise ParseError("network must be a string")
        try:
            return cls(network, unhex(field(obj, "asset"), 20, "asset"))
        except ValueError as exc:
            raise ParseError(str(exc)) from exc


def check_amount(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidAmount(f"amount must be an integer, got {value!r}")
    if value < 0 or value > MAX_AMOUNT:
        raise InvalidAmount(f"amount {value} not representable in 32 bytes")
    return value


def amount_bytes(value: int) -> bytes:
    return check_amount(value).to_bytes(AMOUNT_BYTES, "big")


def _encode_entries(balances: Mapping[AssetId, int]) -> bytes:
    items = sorted(balances.items(), key=lambda kv: kv[0].sort_key)
    if len(items) > 0xFFFF:
        raise ValueError("too many assets in one leaf")
    out = [len(items).to_bytes(2, "big")]
    for asset, value in items:
        net = asset.network.encode()
        out.append(bytes([len(net)]) + net + asset.asset + amount_bytes(value))
    return b"".join(out)


def _decode_entries(data: bytes, pos: int) -> Tuple[Dict[AssetId, int], int]:
    if pos + 2 > len(data):
        raise ParseError("truncated entry count")
    count = int.from_bytes(data[pos:pos + 2], "big")
    pos += 2
    balances: Dict[AssetId, int] = {}
    for _ in range(count):
        if pos >= len(data):
            raise ParseError("truncated entry")
        nlen = data[pos]
        end = pos + 1 + nlen + 20 + AMOUNT_BYTES
        if end > len(data):
            raise ParseError("truncated entry")
        network = data[pos + 1:pos + 1 + nlen].decode()
        asset = AssetId(network, data[pos + 1 + nlen:pos + 21 + nlen])
        if asset in balances:
            raise ParseError("duplicate asset in leaf")
        balances[asset] = int.from_bytes(data[end - AMOUNT_BYTES:end], "big")
        pos = end
    return balances, pos


def _balances_from_pairs(pairs) -> Dict[AssetId, int]:
    if isinstance(pairs, Mapping):
        pairs = pairs.items()
    out: Dict[AssetId, int] = {}
    for asset, value in pairs:
        if asset in out:
            raise DuplicateAsset(f"asset {asset} listed twice")
        out[asset] = check_amount(value)
    return out


@dataclass(frozen=True)
class UserLeaf:
    user_id_commitment: bytes
    balances: Dict[AssetId, int]
    salt: bytes = dc_field(default=b"", compare=False)

    def to_bytes(self) -> bytes:
        return USER_TAG + self.user_id_commitment + _encode_entries(self.balances)


@dataclass(frozen=True)
class SumLeaf:
    totals: Dict[AssetId, int]

    def to_bytes(self) -> bytes:
        return SUM_TAG + _encode_entries(self.totals)

    def to_dict(self) -> dict:
        return {"totals": _entries_to_list(self.totals)}

    @classmethod
    def from_dict(cls, obj: dict) -> "SumLeaf":
        entries = _raw_entries(field(obj, "totals"))
        totals = {}
        for asset, raw in entries:
            if asset in totals:
                raise ParseError("duplicate asset in sum leaf")
            if len(raw) != AMOUNT_BYTES:
                raise ParseError("sum leaf amount must be 32 bytes")
            totals[asset] = int.from_bytes(raw, "big")
        return cls(totals)


def parse_user_leaf(leaf_bytes: bytes) -> Tuple[bytes, Dict[AssetId, int]]:
    """Inverse of UserLeaf.to_bytes: returns (commitment, balances)."""
    if leaf_bytes[:1] != USER_TAG or len(leaf_bytes) < 35:
        raise ParseError("not a user leaf")
    balances, end = _decode_entries(leaf_bytes, 33)
    if end != len(leaf_bytes):
        raise ParseError("trailing bytes after user leaf")
    return leaf_bytes[1:33], balances


def parse_sum_leaf(leaf_bytes: bytes) -> SumLeaf:
    if leaf_bytes[:1] != SUM_TAG:
        raise ParseError("not a sum leaf")
    totals, end = _decode_entries(leaf_bytes, 1)
    if end != len(leaf_bytes):
        raise ParseError("trailing bytes after sum leaf")
    return SumLeaf(totals)


def commit_user_id(user_id: bytes, salt: bytes) -> bytes:
    return keccak256(bytes(user_id) + bytes(salt))


def make_user_leaf(user_id: bytes, balances, salt: bytes) -> UserLeaf:
    if not user_id:
        raise ValueError("user_id must be non-empty")
    if len(salt) != 32:
        raise ValueError("salt must be 32 bytes")
    return UserLeaf(commit_user_id(user_id, salt), _balances_from_pairs(balances), bytes(salt))


def sum_balances(leaves: Iterable[Mapping[AssetId, int]]) -> Dict[AssetId, int]:
    totals: Dict[AssetId, int] = {}
    for balances in leaves:
        for asset, value in balances.items():
            totals[asset] = totals.get(asset, 0) + value
    return totals


@dataclass(frozen=True)
class LiabilityTree:
    tree: MerkleTree
    user_leaves: tuple
    sum_leaf: SumLeaf

    @property
    def root(self) -> bytes:
        return self.tree.root

    @property
    def sum_leaf_index(self) -> int:
        return len(self.user_leaves)

    def statement(self) -> "LiabilityStatement":
        return LiabilityStatement(self.root, self.sum_leaf_index)

    def witness(self) -> "LiabilityWitness":
        return LiabilityWitness(
            user_leaves=[(u.user_id_commitment, _raw_from_balances(u.balances)) for u in self.user_leaves],
            sum_leaf=_raw_from_balances(self.sum_leaf.totals),
            levels=[list(level) for level in self.tree.levels],
        )

    def sum_leaf_path(self) -> MerklePath:
        return merkle.prove_inclusion(self.tree, self.sum_leaf_index)


def build_liability_tree(user_leaves: Sequence[UserLeaf]) -> LiabilityTree:
    if not user_leaves:
        raise EmptyInput("no user leaves")
    totals = sum_balances(u.balances for u in user_leaves)
    for asset, total in totals.items():
        if total > MAX_AMOUNT:
            raise SumOverflow(f"total for {asset} exceeds 32 bytes")
    sum_leaf = SumLeaf(totals)
    leaves = [u.to_bytes() for u in user_leaves] + [sum_leaf.to_bytes()]
    return LiabilityTree(merkle.build_tree(leaves), tuple(user_leaves), sum_leaf)


# -- user inclusion proofs -----------------------------------------------------

@dataclass(frozen=True)
class UserProofBundle:
    leaf: bytes
    salt: bytes
    path: MerklePath
    root: bytes

    def to_dict(self) -> dict:
        return {"leaf_hex": hexb(self.leaf), "salt_hex": hexb(self.salt),
                "path": self.path.to_dict(), "root_hex": hexb(self.root)}

    @classmethod
    def from_dict(cls, obj: dict) -> "UserProofBundle":
        return cls(unhex(field(obj, "leaf_hex"), what="leaf_hex"),
                   unhex(field(obj, "salt_hex"), 32, "salt_hex"),
                   MerklePath.from_dict(field(obj, "path")),
                   unhex(field(obj, "root_hex"), 32, "root_hex"))


def export_user_proof(tree: LiabilityTree, user_index: int) -> UserProofBundle:
    if not 0 <= user_index < len(tree.user_leaves):
        raise IndexOutOfRange(f"user index {user_index} out of range (sum leaf is at {tree.sum_leaf_index})")
    leaf = tree.user_leaves[user_index]
    return UserProofBundle(leaf.to_bytes(), leaf.salt, merkle.prove_inclusion(tree.tree, user_index), tree.root)


def verify_user_proof(bundle: UserProofBundle, user_id: bytes | None = None,
                      expected_root: bytes | None = None) -> RelationVerdict:
    """What a user runs: inclusion against the root, plus their own id binding."""
    if expected_root is not None and bundle.root != expected_root:
        return reject("RootMismatch", "bundle root differs from the published root")
    if not merkle.verify_inclusion(bundle.root, bundle.leaf, bundle.path):
        return reject("BadPath", "leaf does not verify against root")
    try:
        commitment, _ = parse_user_leaf(bundle.leaf)
    except (ParseError, UnicodeDecodeError, ValueError) as exc:
        return reject("MalformedLeaf", str(exc))
    if user_id is not None and commit_user_id(user_id, bundle.salt) != commitment:
        return reject("UserMismatch", "leaf is not bound to this user id")
    return ACCEPT


# -- relation ----------------------------------------------------------------

RawEntries = List[Tuple[AssetId, bytes]]


def _raw_from_balances(balances: Mapping[AssetId, int]) -> RawEntries:
    return [(a, amount_bytes(v)) for a, v in sorted(balances.items(), key=lambda kv: kv[0].sort_key)]


def _entries_to_list(balances: Union[Mapping[AssetId, int], RawEntries]) -> list:
    raw = _raw_from_balances(balances) if isinstance(balances, Mapping) else balances
    return [{**a.to_dict(), "amount": hexb(v)} for a, v in raw]


def _raw_entries(obj) -> RawEntries:
    if not isinstance(obj, list):
        raise ParseError("entries must be a list")
    return [(AssetId.from_dict(e), unhex(field(e, "amount"), what="amount")) for e in obj]


@dataclass(frozen=True)
class LiabilityStatement:
    root: bytes
    sum_leaf_index: int

    def to_bytes(self) -> bytes:
        return canonical_json({"relation": RELATION, "root": hexb(self.root),
                               "sum_leaf_index": self.sum_leaf_index})

    @classmethod
    def from_obj(cls, obj: dict) -> "LiabilityStatement":
        if field(obj, "relation") != RELATION:
            raise ParseError("statement is for another relation")
        return cls(unhex(field(obj, "root"), 32, "root"),
                   as_uint(field(obj, "sum_leaf_index"), "sum_leaf_index", 64))


@dataclass
class LiabilityWitness:
    """Amounts are carried raw so malformed widths reach the relation."""

    user_leaves: List[Tuple[bytes, RawEntries]]
    sum_leaf: RawEntries
    levels: List[List[bytes]]

    def to_bytes(self) -> bytes:
        return canonical_json({
            "user_leaves": [{"commitment": hexb(c), "balances": _entries_to_list(e)} for c, e in self.user_leaves],
            "sum_leaf": {"totals": _entries_to_list(self.sum_leaf)},
            "levels": [[hexb(d) for d in level] for level in self.levels],
        })

    @classmethod
    def from_obj(cls, obj: dict) -> "LiabilityWitness":
        users = field(obj, "user_leaves")
        levels = field(obj, "levels")
        if not isinstance(users, list) or not isinstance(levels, list):
            raise ParseError("user_leaves and levels must be lists")
        return cls(
            user_leaves=[(unhex(field(u, "commitment"), 32, "commitment"), _raw_entries(field(u, "balances")))
                         for u in users],
            sum_leaf=_raw_entries(field(field(obj, "sum_leaf"), "totals")),
            levels=[[unhex(d, 32, "level digest") for d in level] for level in levels],
        )


def _validated(entries: RawEntries) -> Dict[AssetId, int]:
    out: Dict[AssetId, int] = {}
    for asset, raw in entries:
        if len(raw) != AMOUNT_BYTES:
            raise InvalidAmount(f"amount for {asset.network}/{asset.asset.hex()} is {len(raw)} bytes")
        if asset in out:
            raise DuplicateAsset(f"asset {asset.network}/{asset.asset.hex()} repeated")
        out[asset] = int.from_bytes(raw, "big")
    return out


def check_liability_relation(statement: LiabilityStatement, witness: LiabilityWitness) -> RelationVerdict:
    try:
        users = [UserLeaf(c, _validated(e)) for c, e in witness.user_leaves]
        sum_leaf = SumLeaf(_validated(witness.sum_leaf))
    except InvalidAmount as exc:
        return reject("InvalidAmount", str(exc))
    except DuplicateAsset as exc:
        return reject("DuplicateAsset", str(exc))

    if not users:
        return reject("EmptyInput", "no user leaves")
    if statement.sum_leaf_index != len(users):
        return reject("SumIndexMismatch",
                      f"sum leaf index {statement.sum_leaf_index} but {len(users)} user leaves")

    expected = sum_balances(u.balances for u in users)
    if any(v > MAX_AMOUNT for v in expected.values()):
        return reject("SumOverflow", "a per-asset total exceeds 32 bytes")
    if expected != sum_leaf.totals:
        bad = [a for a in expected.keys() | sum_leaf.totals.keys() if expected.get(a) != sum_leaf.totals.get(a)]
        return reject("SumMismatch", f"sum leaf disagrees for {len(bad)} asset(s)")

    tree = merkle.build_tree([u.to_bytes() for u in users] + [sum_leaf.to_bytes()])
    if tree.root != statement.root:
        return reject("RootMismatch", "recomputed root differs from the statement root")
    if [list(level) for level in tree.levels] != [list(level) for level in witness.levels]:
        return reject("RootMismatch", "witness tree levels are inconsistent with its leaves")
    return ACCEPT


# -- input file ----------------------------------------------------------------

def parse_liability_record(obj: dict) -> Tuple[bytes, Dict[AssetId, int]]:
    """One line of the liability input file."""
    user_id = field(obj, "user_id")
    if not isinstance(user_id, str) or not user_id:
        raise ParseError("user_id must be a non-empty string")
    pairs = []
    for entry in field(obj, "balances"):
        asset = AssetId.from_dict({"network": field(entry, "network"), "asset": field(entry, "asset_hex")})
        pairs.append((asset, as_uint(field(entry, "amount_decimal"), "amount_decimal")))
    return user_id.encode(), _balances_from_pairs(pairs)


def read_liability_input(lines: Iterable[str]) -> List[Tuple[bytes, Dict[AssetId, int]]]:
    out = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            out.append(parse_liability_record(json.loads(line)))
        except (ValueError, TypeError) as exc:
            raise ParseError(f"line {n}: {exc}") from exc
    return out
