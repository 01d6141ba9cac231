"""Ethereum state verification: Merkle Patricia Trie proofs, accounts, headers,
and the ETH / ERC20 minimum-balance relations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .hashcodec import (
    EMPTY_KECCAK, EMPTY_TRIE_ROOT, MalformedRlp, be_to_int, int_to_be, keccak256,
    rlp_decode, rlp_encode,
)
from .relation import (
    ACCEPT, ParseError, RelationVerdict, as_uint, canonical_json, field, hexb,
    reject, unhex,
)

ETH_RELATION = "eth-reserve-v1"
ERC20_RELATION = "erc20-reserve-v1"
STATE_ROOT_INDEX = 3
MIN_HEADER_ITEMS = 15


class InvalidProof(ValueError):
    pass


class MalformedAccount(ValueError):
    pass


class MalformedHeader(ValueError):
    pass


# -- accounts ------------------------------------------------------------------

@dataclass(frozen=True)
class AccountState:
    nonce: int = 0
    balance: int = 0
    storage_root: bytes = EMPTY_TRIE_ROOT
    code_hash: bytes = EMPTY_KECCAK

    def to_rlp(self) -> bytes:
        return rlp_encode([int_to_be(self.nonce), int_to_be(self.balance),
                           self.storage_root, self.code_hash])

    def to_dict(self) -> dict:
        return {"nonce": str(self.nonce), "balance": str(self.balance),
                "storage_root": hexb(self.storage_root), "code_hash": hexb(self.code_hash)}

    @classmethod
    def from_dict(cls, obj: dict) -> "AccountState":
        return cls(as_uint(field(obj, "nonce"), "nonce", 64), as_uint(field(obj, "balance"), "balance"),
                   unhex(field(obj, "storage_root"), 32, "storage_root"),
                   unhex(field(obj, "code_hash"), 32, "code_hash"))


def decode_account(data: bytes) -> AccountState:
    try:
        item = rlp_decode(data)
    except MalformedRlp as exc:
        raise MalformedAccount(str(exc)) from exc
    if not isinstance(item, list) or len(item) != 4:
        raise MalformedAccount("account must be a 4-item list")
    if not all(isinstance(x, bytes) for x in item):
        raise MalformedAccount("account fields must be byte strings")
    nonce, balance, storage_root, code_hash = item
    try:
        nonce_v = be_to_int(nonce, 8)
        balance_v = be_to_int(balance)
    except MalformedRlp as exc:
        raise MalformedAccount(str(exc)) from exc
    if len(storage_root) != 32 or len(code_hash) != 32:
        raise MalformedAccount("storage root and code hash must be 32 bytes")
    return AccountState(nonce_v, balance_v, storage_root, code_hash)


# -- trie proofs -----------------------------------------------------------------

def to_nibbles(data: bytes) -> bytes:
    out = bytearray()
    for b in data:
        out += bytes((b >> 4, b & 0x0F))
    return bytes(out)


def _hp_decode(encoded) -> tuple:
    """Hex-prefix decode -> (nibbles, is_leaf)."""
    if not isinstance(encoded, bytes) or not encoded:
        raise InvalidProof("bad hex-prefix path")
    nibbles = to_nibbles(encoded)
    flag = nibbles[0]
    if flag > 3:
        raise InvalidProof("bad hex-prefix flag")
    if flag & 1:
        return nibbles[1:], bool(flag & 2)
    if nibbles[1] != 0:
        raise InvalidProof("even-length path must pad with a zero nibble")
    return nibbles[2:], bool(flag & 2)


def _child_ref(item):
    if isinstance(item, list):
        if len(rlp_encode(item)) >= 32:
            raise InvalidProof("inlined node of 32+ bytes must be referenced by hash")
        return item
    if isinstance(item, bytes) and len(item) == 32:
        return item
    raise InvalidProof("child reference is neither a hash nor an inlined node")


def walk_trie(root: bytes, path: bytes, proof_nodes: Sequence[bytes]) -> Optional[bytes]:
    """Follow a nibble path from root through proof nodes.

    Returns the value, or None when the proof demonstrates absence. Every node
    reached by hash must be present in order; leftover nodes are an error.
    """
    nodes = [bytes(n) for n in proof_nodes]
    if not nodes:
        if root == EMPTY_TRIE_ROOT:
            return None
        raise InvalidProof("empty proof for a non-empty trie")

    used = 0
    ref = root
    pos = 0
    while True:
        if isinstance(ref, bytes):
            if used == len(nodes):
                raise InvalidProof("proof ends before the path resolves")
            raw = nodes[used]
            if keccak256(raw) != ref:
                raise InvalidProof(f"node {used} does not hash to its reference")
            used += 1
            try:
                node = rlp_decode(raw)
            except MalformedRlp as exc:
                raise InvalidProof(f"node {used - 1}: {exc}") from exc
        else:
            node = ref

        if node == b"" and used == 1:
            value = None  # the empty trie
            break
        if not isinstance(node, list):
            raise InvalidProof("trie node must be a list")

        if len(node) == 17:
            if pos == len(path):
                if not isinstance(node[16], bytes):
                    raise InvalidProof("branch value must be a byte string")
                value = node[16] or None
                break
            child = node[path[pos]]
            pos += 1
            if child == b"":
                value = None
                break
            ref = _child_ref(child)
        elif len(node) == 2:
            nibbles, is_leaf = _hp_decode(node[0])
            if is_leaf:
                if not isinstance(node[1], bytes) or not node[1]:
                    raise InvalidProof("leaf value must be a non-empty byte string")
                value = node[1] if path[pos:] == nibbles else None
                break
            if not nibbles:
                raise InvalidProof("extension with empty path")
            if path[pos:pos + len(nibbles)] != nibbles:
                value = None
                break
            pos += len(nibbles)
            ref = _child_ref(node[1])
        else:
            raise InvalidProof(f"trie node with {len(node)} items")

    if used != len(nodes):
        raise InvalidProof(f"{len(nodes) - used} unused trailing proof nodes")
    return value


def verify_mpt_proof(expected_root: bytes, key: bytes, proof_nodes: Sequence[bytes]) -> Optional[bytes]:
    """Secure-trie lookup: the path is the nibbles of keccak256(key).

    Returns the proven value bytes, or None if the key is proven absent.
    """
    if not key:
        raise ValueError("key must be non-empty")
    return walk_trie(expected_root, to_nibbles(keccak256(key)), proof_nodes)


# -- headers -------------------------------------------------------------------

class HeaderBinding(NamedTuple):
    block_hash: bytes
    state_root: bytes


def header_hash(header_rlp: bytes) -> HeaderBinding:
    try:
        items = rlp_decode(header_rlp)
    except MalformedRlp as exc:
        raise MalformedHeader(str(exc)) from exc
    if not isinstance(items, list) or len(items) < MIN_HEADER_ITEMS:
        raise MalformedHeader("header must be a list of at least 15 items")
    state_root = items[STATE_ROOT_INDEX]
    if not isinstance(state_root, bytes) or len(state_root) != 32:
        raise MalformedHeader("state root must be 32 bytes")
    return HeaderBinding(keccak256(header_rlp), state_root)


def storage_slot_key(holder: bytes, mapping_slot: int) -> bytes:
    if len(holder) != 20:
        raise ValueError("holder must be a 20-byte address")
    if not 0 <= mapping_slot < 1 << 256:
        raise ValueError("mapping slot out of range")
    return keccak256(bytes(12) + bytes(holder) + mapping_slot.to_bytes(32, "big"))


# -- proof bundles -----------------------------------------------------------------

@dataclass(frozen=True)
class StorageProof:
    key: bytes
    value: int
    proof_nodes: tuple

    def to_dict(self) -> dict:
        return {"key_hex": hexb(self.key), "value_hex": hexb(int_to_be(self.value)),
                "proof": [hexb(n) for n in self.proof_nodes]}

    @classmethod
    def from_dict(cls, obj: dict) -> "StorageProof":
        value = unhex(field(obj, "value_hex"), what="value_hex")
        if len(value) > 32:
            raise ParseError("storage value wider than 32 bytes")
        return cls(unhex(field(obj, "key_hex"), 32, "key_hex"), int.from_bytes(value, "big"),
                   tuple(unhex(n, what="proof node") for n in _list(field(obj, "proof"))))


def _list(value) -> list:
    if not isinstance(value, list):
        raise ParseError("expected a list")
    return value


@dataclass(frozen=True)
class AccountProofBundle:
    header_rlp: bytes
    proof_nodes: tuple
    address: bytes
    account: AccountState
    storage_proofs: tuple = ()

    @property
    def block_hash(self) -> bytes:
        return keccak256(self.header_rlp)

    def witness_dict(self) -> dict:
        return {
            "header_rlp_hex": hexb(self.header_rlp),
            "address_hex": hexb(self.address),
            "account": self.account.to_dict(),
            "account_proof": [hexb(n) for n in self.proof_nodes],
            "storage_proofs": [s.to_dict() for s in self.storage_proofs],
        }

    def to_fixture_dict(self) -> dict:
        return {"block_hash_hex": hexb(self.block_hash), **self.witness_dict()}

    @classmethod
    def from_dict(cls, obj: dict) -> "AccountProofBundle":
        bundle = cls(
            header_rlp=unhex(field(obj, "header_rlp_hex"), what="header_rlp_hex"),
            proof_nodes=tuple(unhex(n, what="proof node") for n in _list(field(obj, "account_proof"))),
            address=unhex(field(obj, "address_hex"), 20, "address_hex"),
            account=AccountState.from_dict(field(obj, "account")),
            storage_proofs=tuple(StorageProof.from_dict(s) for s in _list(obj.get("storage_proofs", []))),
        )
        if "block_hash_hex" in obj and unhex(obj["block_hash_hex"], 32, "block_hash_hex") != bundle.block_hash:
            raise ParseError("block_hash_hex does not match the header")
        return bundle


# -- relations -------------------------------------------------------------------

@dataclass(frozen=True)
class EthReserveStatement:
    min_amount: int
    block_hash: bytes

    def to_bytes(self) -> bytes:
        return canonical_json({"relation": ETH_RELATION, "min_amount": str(self.min_amount),
                               "block_hash": hexb(self.block_hash)})

    @classmethod
    def from_obj(cls, obj: dict) -> "EthReserveStatement":
        if field(obj, "relation") != ETH_RELATION:
            raise ParseError("statement is for another relation")
        return cls(as_uint(field(obj, "min_amount"), "min_amount"), unhex(field(obj, "block_hash"), 32, "block_hash"))


@dataclass(frozen=True)
class Erc20ReserveStatement:
    min_amount: int
    block_hash: bytes
    token_contract: bytes
    mapping_slot: int

    def to_bytes(self) -> bytes:
        return canonical_json({"relation": ERC20_RELATION, "min_amount": str(self.min_amount),
                               "block_hash": hexb(self.block_hash), "token_contract": hexb(self.token_contract),
                               "mapping_slot": str(self.mapping_slot)})

    @classmethod
    def from_obj(cls, obj: dict) -> "Erc20ReserveStatement":
        if field(obj, "relation") != ERC20_RELATION:
            raise ParseError("statement is for another relation")
        return cls(as_uint(field(obj, "min_amount"), "min_amount"), unhex(field(obj, "block_hash"), 32, "block_hash"),
                   unhex(field(obj, "token_contract"), 20, "token_contract"),
                   as_uint(field(obj, "mapping_slot"), "mapping_slot"))


def eth_witness_bytes(bundle: AccountProofBundle) -> bytes:
    return canonical_json(bundle.witness_dict())


def parse_eth_witness(obj: dict) -> AccountProofBundle:
    return AccountProofBundle.from_dict(obj)


@dataclass(frozen=True)
class Erc20Witness:
    bundle: AccountProofBundle
    holder: bytes

    def to_bytes(self) -> bytes:
        return canonical_json({"bundle": self.bundle.witness_dict(), "holder": hexb(self.holder)})

    @classmethod
    def from_obj(cls, obj: dict) -> "Erc20Witness":
        return cls(AccountProofBundle.from_dict(field(obj, "bundle")), unhex(field(obj, "holder"), 20, "holder"))


def _verify_account(block_hash: bytes, bundle: AccountProofBundle) -> RelationVerdict:
    """Steps shared by both relations: header binding and the account proof."""
    try:
        binding = header_hash(bundle.header_rlp)
    except MalformedHeader as exc:
        return reject("BadHeader", str(exc))
    if binding.block_hash != block_hash:
        return reject("BadHeader", "header does not hash to the statement block hash")
    try:
        value = verify_mpt_proof(binding.state_root, bundle.address, bundle.proof_nodes)
    except InvalidProof as exc:
        return reject("BadProof", str(exc))
    if value is None:
        return reject("AccountMismatch", "account is proven absent from the state trie")
    if value != bundle.account.to_rlp():
        return reject("AccountMismatch", "proven account differs from the witness account")
    return ACCEPT


def check_eth_min_balance_relation(statement: EthReserveStatement, witness: AccountProofBundle) -> RelationVerdict:
    verdict = _verify_account(statement.block_hash, witness)
    if not verdict:
        return verdict
    if witness.account.balance < statement.min_amount:
        return reject("InsufficientBalance", "balance below the public minimum")
    return ACCEPT


def proven_storage_value(storage_root: bytes, proof: StorageProof) -> int:
    """Walk a storage proof and return the proven scalar (0 when absent)."""
    value = verify_mpt_proof(storage_root, proof.key, proof.proof_nodes)
    if value is None:
        return 0
    try:
        item = rlp_decode(value)
        if not isinstance(item, bytes) or not item:
            raise InvalidProof("storage value must be a non-zero RLP scalar")
        return be_to_int(item)
    except MalformedRlp as exc:
        raise InvalidProof(f"storage value: {exc}") from exc


def check_erc20_min_balance_relation(statement: Erc20ReserveStatement, witness: Erc20Witness) -> RelationVerdict:
    bundle = witness.bundle
    if bundle.address != statement.token_contract:
        return reject("AccountMismatch", "account proof is not for the token contract")
    if len(bundle.storage_proofs) != 1:
        return reject("BadStorageProof", "exactly one storage proof is required")
    verdict = _verify_account(statement.block_hash, bundle)
    if not verdict:
        return verdict

    proof = bundle.storage_proofs[0]
    if proof.key != storage_slot_key(witness.holder, statement.mapping_slot):
        return reject("BadStorageProof", "storage key is not the holder's balance slot")
    try:
        value = proven_storage_value(bundle.account.storage_root, proof)
    except InvalidProof as exc:
        return reject("BadStorageProof", str(exc))
    if value != proof.value:
        return reject("BadStorageProof", "proven storage value differs from the witness value")
    if value < statement.min_amount:
        return reject("InsufficientBalance", "token balance below the public minimum")
    return ACCEPT
