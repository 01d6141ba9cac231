import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppos.merkle import (
    EMPTY_LEAF, EmptyInput, IndexOutOfRange, MerklePath, build_tree, hash_leaf, hash_node,
    prove_inclusion, verify_inclusion,
)
from tests.oracles import keccak256_ref


def naive_root(leaves):
    """Recursive reference: pad to a power of two and fold with the reference Keccak."""
    level = [keccak256_ref(b"\x00" + x) for x in leaves]
    width = 1
    while width < len(level):
        width *= 2
    level += [keccak256_ref(b"\x00")] * (width - len(level))
    while len(level) > 1:
        level = [keccak256_ref(b"\x01" + level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def test_single_leaf():
    tree = build_tree([b"L"])
    assert tree.depth == 0
    assert tree.root == hash_leaf(b"L") == keccak256_ref(b"\x00L")
    assert prove_inclusion(tree, 0).siblings == ()


def test_two_leaves():
    tree = build_tree([b"a", b"b"])
    assert tree.root == keccak256_ref(b"\x01" + keccak256_ref(b"\x00a") + keccak256_ref(b"\x00b"))
    assert prove_inclusion(tree, 0).siblings == (hash_leaf(b"b"),)


def test_three_leaves_padded():
    tree = build_tree([b"a", b"b", b"c"])
    assert tree.depth == 2
    assert tree.leaf_digests[3] == EMPTY_LEAF == keccak256_ref(b"\x00")
    assert tree.real_leaf_count == 3


def test_empty_input():
    with pytest.raises(EmptyInput):
        build_tree([])


def test_index_range():
    tree = build_tree([b"a", b"b", b"c"])
    # padding is the leaf hash of the empty string; real leaf formats are never empty
    assert verify_inclusion(tree.root, b"", prove_inclusion(tree, 3))
    with pytest.raises(IndexOutOfRange):
        prove_inclusion(tree, 4)
    with pytest.raises(IndexOutOfRange):
        prove_inclusion(tree, -1)


@given(st.lists(st.binary(max_size=40), min_size=1, max_size=70))
def test_root_matches_naive_reference(leaves):
    assert build_tree(leaves).root == naive_root(leaves)


def test_every_path_in_1024_leaf_tree():
    leaves = [i.to_bytes(4, "big") * 3 for i in range(1024)]
    tree = build_tree(leaves)
    assert tree.depth == 10
    for i, leaf in enumerate(leaves):
        assert verify_inclusion(tree.root, leaf, prove_inclusion(tree, i))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2048), st.integers(0, 2**32))
def test_roundtrip_random_sizes(n, seed):
    rng = random.Random(seed)
    leaves = [rng.randbytes(rng.randrange(1, 50)) for _ in range(n)]
    tree = build_tree(leaves)
    for i in rng.sample(range(n), min(n, 20)):
        assert verify_inclusion(tree.root, leaves[i], prove_inclusion(tree, i))


def test_sibling_index_does_not_verify():
    leaves = [b"x%d" % i for i in range(8)]
    tree = build_tree(leaves)
    path = prove_inclusion(tree, 4)
    moved = MerklePath(5, path.siblings)
    assert not verify_inclusion(tree.root, leaves[4], moved)
    assert not verify_inclusion(tree.root, leaves[4], MerklePath(4 + 8, path.siblings))


def test_tamper_detection_sampled():
    rng = random.Random(11)
    leaves = [rng.randbytes(24) for _ in range(37)]
    tree = build_tree(leaves)
    for _ in range(300):
        i = rng.randrange(len(leaves))
        path = prove_inclusion(tree, i)
        kind = rng.choice(["leaf", "sibling", "root"])
        leaf, sibs, root = bytearray(leaves[i]), [bytearray(s) for s in path.siblings], bytearray(tree.root)
        target = {"leaf": leaf, "sibling": rng.choice(sibs), "root": root}[kind]
        bit = rng.randrange(len(target) * 8)
        target[bit // 8] ^= 1 << (bit % 8)
        assert not verify_inclusion(bytes(root), bytes(leaf), MerklePath(i, tuple(bytes(s) for s in sibs)))


def test_order_sensitivity():
    rng = random.Random(5)
    leaves = [b"leaf-%d" % i for i in range(9)]
    root = build_tree(leaves).root
    for _ in range(50):
        perm = leaves[:]
        rng.shuffle(perm)
        if perm != leaves:
            assert build_tree(perm).root != root


def test_domain_separation():
    tree = build_tree([b"a", b"b", b"c", b"d"])
    left, right = tree.levels[1]
    preimage = left + right  # 64 bytes hashed under the node prefix
    assert hash_node(left, right) == tree.root
    # presenting the node preimage as a one-leaf "tree" must not reproduce the root
    assert not verify_inclusion(tree.root, preimage, MerklePath(0, ()))
    assert not verify_inclusion(tree.root, b"\x01" + preimage, MerklePath(0, ()))


def test_path_serialization_roundtrip():
    tree = build_tree([b"a", b"b", b"c"])
    path = prove_inclusion(tree, 2)
    d = path.to_dict()
    assert set(d) == {"leaf_index", "siblings"}
    assert MerklePath.from_dict(d) == path
