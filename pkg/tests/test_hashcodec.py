import json
import os
import random
import threading

import pytest
import rlp as pyrlp
from hypothesis import given, settings
from hypothesis import strategies as st

from ppos.hashcodec import (
    EMPTY_KECCAK, EMPTY_TRIE_ROOT, MalformedRlp, be_to_int, int_to_be, keccak256,
    rlp_decode, rlp_encode, sha256, sha256d,
)
from tests.conftest import FIXTURES
from tests.oracles import keccak256_ref, sha256d_ref

BTC_GENESIS_HEADER = bytes.fromhex(
    "0100000000000000000000000000000000000000000000000000000000000000000000003ba3edfd7a7b12b27ac72c3e67"
    "768f617fc81bc3888a51323a9fb8aa4b1e5e4a29ab5f49ffff001d1dac2b7c")


def rlp_items(max_leaves=40):
    return st.recursive(st.binary(max_size=80), lambda kids: st.lists(kids, max_size=6), max_leaves=max_leaves)


def _vector_item(x):
    if isinstance(x, list):
        return [_vector_item(i) for i in x]
    if isinstance(x, int):
        return int_to_be(x)
    if x.startswith("#"):
        return int_to_be(int(x[1:]))
    return x.encode()


def test_keccak_known_vectors():
    assert keccak256(b"").hex() == "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
    assert keccak256(b"\x80").hex() == "56e81f171bcc55a6ff8345e692c0f86e5b48e01b996cadc001622fb5e363b421"
    assert EMPTY_KECCAK == keccak256_ref(b"")
    assert EMPTY_TRIE_ROOT == keccak256_ref(b"\x80")


@given(st.binary(max_size=600))
def test_keccak_matches_reference_permutation(data):
    assert keccak256(data) == keccak256_ref(data)


def test_keccak_is_not_sha3():
    import hashlib
    assert keccak256(b"") != hashlib.sha3_256(b"").digest()


def test_keccak_large_input():
    assert len(keccak256(os.urandom(1 << 20))) == 32


def test_sha256d_vectors():
    assert sha256d(b"").hex() == "5df6e0e2761359d30a8275058e299fcc0381534545f55cf43e41983f5d4c9456"
    assert sha256d(BTC_GENESIS_HEADER)[::-1].hex() == \
        "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f"


@given(st.binary(max_size=300))
def test_sha256d_composition(data):
    assert sha256d(data) == sha256(sha256(data)) == sha256d_ref(data)


def test_hashes_agree_across_threads():
    data = [os.urandom(n) for n in range(0, 2000, 37)]
    expected = [keccak256(d) + sha256d(d) for d in data]
    results = []

    def work():
        results.append([keccak256(d) + sha256d(d) for d in data])

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == expected for r in results)


def test_rlp_basic_rules():
    assert rlp_encode(b"") == b"\x80"
    assert rlp_encode(b"\x42") == b"\x42"
    assert rlp_encode([]) == b"\xc0"
    assert rlp_decode(b"\xc0") == []
    assert rlp_decode(b"\x80") == b""


def test_rlp_harvested_vectors():
    vectors = json.loads((FIXTURES / "data" / "rlp_vectors.json").read_text())["vectors"]
    assert len(vectors) >= 5
    for v in vectors:
        item = _vector_item(v["in"])
        assert rlp_encode(item).hex() == v["out"], v["name"]
        assert rlp_decode(bytes.fromhex(v["out"])) == item, v["name"]


@pytest.mark.parametrize("bad", [
    "b800",            # long form for a zero-length string
    "b837" + "61" * 55,  # long form for a 55-byte payload
    "8100",            # single byte below 0x80 wrapped in a prefix
    "817f",
    "b90038" + "61" * 56,  # length with a leading zero byte
    "f800",
    "83646f",          # truncated
    "83646f6700",      # trailing byte
    "c3836f",          # list payload truncated
    "",
])
def test_rlp_rejects_non_canonical(bad):
    with pytest.raises(MalformedRlp):
        rlp_decode(bytes.fromhex(bad))


def test_reference_codec_also_rejects_long_form_zero():
    with pytest.raises(pyrlp.exceptions.DecodingError):
        pyrlp.decode(bytes.fromhex("b800"))


@given(rlp_items())
def test_rlp_roundtrip(item):
    assert rlp_decode(rlp_encode(item)) == item


@given(rlp_items())
def test_rlp_matches_reference_codec(item):
    assert rlp_encode(item) == pyrlp.encode(item)


@settings(max_examples=300)
@given(rlp_items(), rlp_items())
def test_rlp_injective_on_samples(a, b):
    if a != b:
        assert rlp_encode(a) != rlp_encode(b)


def test_scalar_helpers():
    assert int_to_be(0) == b""
    assert int_to_be(1024) == b"\x04\x00"
    assert be_to_int(b"") == 0
    with pytest.raises(ValueError):
        be_to_int(b"\x00\x01")
    with pytest.raises(ValueError):
        be_to_int(b"\x01" * 33)


def deep_item(rng, depth):
    if depth and rng.random() < 0.5:
        return [deep_item(rng, depth - 1) for _ in range(rng.randrange(4))]
    return rng.randbytes(rng.choice([0, 1, 55, 56, 300, 1024]))


def test_rlp_roundtrip_deep_and_wide():
    rng = random.Random(6)
    for _ in range(500):
        item = deep_item(rng, 6)
        assert rlp_decode(rlp_encode(item)) == item


def test_rlp_injective_ten_thousand_pairs():
    rng = random.Random(7)
    pool = [deep_item(rng, 3) for _ in range(2000)]
    encoded = {}
    for _ in range(10_000):
        a, b = rng.choice(pool), rng.choice(pool)
        if a != b:
            assert rlp_encode(a) != rlp_encode(b)
    for item in pool:
        enc = rlp_encode(item)
        assert encoded.setdefault(enc, item) == item
