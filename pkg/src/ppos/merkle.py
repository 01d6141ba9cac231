"""Padded binary Merkle tree with 0x00/0x01 domain-separated Keccak hashing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

from .hashcodec import keccak256
from .relation import ParseError, field, hexb, unhex

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
EMPTY_LEAF = keccak256(LEAF_PREFIX)


class EmptyInput(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


def hash_leaf(leaf: bytes) -> bytes:
    return keccak256(LEAF_PREFIX + bytes(leaf))


def hash_node(left: bytes, right: bytes) -> bytes:
    return keccak256(NODE_PREFIX + left + right)


@dataclass(frozen=True)
class MerklePath:
    leaf_index: int
    siblings: tuple  # bottom-up digests

    def to_dict(self) -> dict:
        return {"leaf_index": self.leaf_index, "siblings": [hexb(s) for s in self.siblings]}

    @classmethod
    def from_dict(cls, obj: dict) -> "MerklePath":
        index = field(obj, "leaf_index")
        sibs = field(obj, "siblings")
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            raise ParseError("leaf_index must be a non-negative integer")
        if not isinstance(sibs, list):
            raise ParseError("siblings must be a list")
        return cls(index, tuple(unhex(s, 32, "sibling") for s in sibs))


@dataclass(frozen=True)
class MerkleTree:
    levels: tuple  # levels[0] = leaf digests (padded), levels[-1] = (root,)
    real_leaf_count: int

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @property
    def leaf_digests(self) -> tuple:
        return self.levels[0]

    @property
    def width(self) -> int:
        return len(self.levels[0])


def _padded_width(n: int) -> int:
    width = 1
    while width < n:
        width *= 2
    return width


def build_from_digests(digests: Sequence[bytes]) -> MerkleTree:
    if not digests:
        raise EmptyInput("cannot build a tree with no leaves")
    width = _padded_width(len(digests))
    level: List[bytes] = list(digests) + [EMPTY_LEAF] * (width - len(digests))
    levels = [tuple(level)]
    while len(level) > 1:
        level = [hash_node(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        levels.append(tuple(level))
    return MerkleTree(tuple(levels), len(digests))


def build_tree(leaves: Sequence[bytes]) -> MerkleTree:
    return build_from_digests([hash_leaf(leaf) for leaf in leaves])


def prove_inclusion(tree: MerkleTree, index: int) -> MerklePath:
    if not 0 <= index < tree.width:
        raise IndexOutOfRange(f"leaf index {index} outside tree of width {tree.width}")
    siblings = []
    pos = index
    for level in tree.levels[:-1]:
        siblings.append(level[pos ^ 1])
        pos >>= 1
    return MerklePath(index, tuple(siblings))


def root_from_path(leaf_digest: bytes, path: MerklePath) -> bytes:
    node = leaf_digest
    pos = path.leaf_index
    for sibling in path.siblings:
        node = hash_node(sibling, node) if pos & 1 else hash_node(node, sibling)
        pos >>= 1
    return node


def verify_inclusion(root: bytes, leaf_bytes: bytes, path: MerklePath) -> bool:
    if path.leaf_index < 0 or path.leaf_index >> len(path.siblings):
        return False
    return root_from_path(hash_leaf(leaf_bytes), path) == root
