import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppos import btcstate as B
from ppos import liabilities as L
from ppos import solvency as S
from tests.oracles import eth_address_ref, keccak256_ref, sha256d_ref
from tests.mutations import mutate
from tests.worlds import ETH, World, load_keys


# -- ownership ----------------------------------------------------------------

def test_message_layout():
    root = bytes(range(32))
    msg = S.ownership_message(7, root, "eth-mainnet")
    assert msg == b"PPOS-v1" + (7).to_bytes(8, "big") + root + b"\x0beth-mainnet"
    assert S.ownership_message(7, root, "eth-mainnet") == msg
    assert S.ownership_message(8, root, "eth-mainnet") != msg
    other = S.ownership_message(7, bytes(32), "eth-mainnet")
    for scheme in S.SCHEMES:
        assert S.message_digest(other, scheme) != S.message_digest(msg, scheme)
    with pytest.raises(ValueError):
        S.ownership_message(7, root[:31], "eth-mainnet")


def test_message_digests():
    msg = b"hello"
    assert S.message_digest(msg, S.ETH_SCHEME) == keccak256_ref(msg)
    assert S.message_digest(msg, S.BTC_SCHEME) == sha256d_ref(msg)
    with pytest.raises(ValueError):
        S.message_digest(msg, "Ed25519")


def test_key_one_addresses():
    one = (1).to_bytes(32, "big")
    assert S.owner_of(one, S.ETH_SCHEME).hex() == "7e5f4552091a69125d5dfcb7b8c2659029395bdf"
    assert S.owner_of(one, S.BTC_SCHEME).hex() == "76a914751e76e8199196d454941c45d1b3a323f1433bd688ac"


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2**256 - 2**130))
def test_eth_address_matches_reference_curve(k):
    assert S.owner_of(k.to_bytes(32, "big"), S.ETH_SCHEME) == eth_address_ref(k)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2**255), st.sampled_from(S.SCHEMES), st.binary(min_size=1, max_size=100))
def test_sign_verify_roundtrip(k, scheme, msg):
    key = k.to_bytes(32, "big")
    sig = S.sign_ownership(key, msg, scheme)
    assert S.verify_ownership(S.owner_of(key, scheme), sig, msg)
    assert not S.verify_ownership(S.owner_of(key, scheme), sig, msg + b"!")
    other = ((k % (2**255)) + 1).to_bytes(32, "big")
    assert not S.verify_ownership(S.owner_of(other, scheme), sig, msg)


def test_wrong_scheme_does_not_verify():
    key = (12345).to_bytes(32, "big")
    sig = S.sign_ownership(key, b"m", S.ETH_SCHEME)
    assert not S.verify_ownership(S.owner_of(key, S.BTC_SCHEME), replace(sig, scheme=S.BTC_SCHEME), b"m")
    assert not S.verify_ownership(S.owner_of(key, S.ETH_SCHEME), replace(sig, signature=bytes(65)), b"m")


@pytest.fixture
def world(e2e_keys):
    return World(e2e_keys)


def test_reserves_cover_liabilities(world):
    assert world.tree.sum_leaf.totals == {ETH: 60}
    assert S.check_solvency_relation(world.statement(), world.witness(world.eth_claim(100)))
    assert S.check_solvency_relation(world.statement(), world.witness(world.eth_claim(60)))


def test_one_unit_short(world):
    verdict = S.check_solvency_relation(world.statement(), world.witness(world.eth_claim(59)))
    assert verdict.reason == "AssetShortfall"


def test_comparison_is_per_asset(e2e_keys):
    w = World(e2e_keys, eth_amounts=(10,), btc_amounts=(1,))
    assert S.check_solvency_relation(w.statement(), w.witness(w.eth_claim(100))).reason == "AssetShortfall"
    assert S.check_solvency_relation(w.statement(), w.witness(w.eth_claim(100), w.btc_claim(1)))


def test_excess_in_one_asset_cannot_cover_another(e2e_keys):
    w = World(e2e_keys, eth_amounts=(10,), btc_amounts=(50_000_000,))
    claims = (w.eth_claim(10**18), w.btc_claim(49_999_999))
    assert S.check_solvency_relation(w.statement(), w.witness(*claims)).reason == "AssetShortfall"


def test_inner_claim_must_hold(world):
    too_much = world.eth_claim(world.eth_bundle.account.balance + 1)
    verdict = S.check_solvency_relation(world.statement(), world.witness(too_much))
    assert verdict.reason == "InnerRelationFailed" and "InsufficientBalance" in verdict.detail


def test_claim_bound_to_statement_commitments(world):
    claim = world.eth_claim(100)
    stmt = world.statement(eth_block_hash=bytes(32))
    assert S.check_solvency_relation(stmt, world.witness(claim)).reason == "InnerRelationFailed"
    assert S.check_solvency_relation(world.statement(eth_block_hash=None),
                                     world.witness(claim)).reason == "InnerRelationFailed"


def test_sum_leaf_path_checked(world):
    stmt = world.statement(liabilities_sum_leaf_index=0)
    assert S.check_solvency_relation(stmt, world.witness(world.eth_claim(100))).reason == "BadSumLeafPath"
    w = world.witness(world.eth_claim(100))
    lowered = replace(w, sum_leaf=L.SumLeaf({ETH: 1}))
    assert S.check_solvency_relation(world.statement(), lowered).reason == "BadSumLeafPath"


def test_signature_replayed_from_previous_round(world):
    stale = world.eth_claim(100, round_id=world.round_id - 1)
    verdict = S.check_solvency_relation(world.statement(), world.witness(stale))
    assert verdict.reason == "BadOwnership"


def test_signature_for_other_liabilities_root(world):
    stale = world.eth_claim(100, root=keccak256_ref(b"another round's root"))
    assert S.check_solvency_relation(world.statement(), world.witness(stale)).reason == "BadOwnership"


def test_signature_by_unrelated_key(world):
    claim = world.eth_claim(100)
    forged = replace(claim, ownership=world.sign(world.keys["eth-1"], S.ETH_SCHEME, ETH.network))
    assert S.check_solvency_relation(world.statement(), world.witness(forged)).reason == "BadOwnership"


def test_same_funds_claimed_twice(world):
    claim = world.eth_claim(30)
    assert S.check_solvency_relation(world.statement(), world.witness(claim, claim)).reason == "DuplicateClaim"


def test_btc_claims_with_overlapping_utxos(e2e_keys):
    w = World(e2e_keys, eth_amounts=(), btc_amounts=(100_000_000,))
    owned = B.owned_utxos(w.snap, S.owner_of(e2e_keys["btc-0"], S.BTC_SCHEME))
    a = w.btc_claim(50_000_000, indices=owned[:2])
    b = w.btc_claim(50_000_000, indices=owned[1:])
    assert S.check_solvency_relation(w.statement(), w.witness(a, b)).reason == "DuplicateClaim"


def test_statement_roundtrip_and_shape(world):
    stmt = world.statement()
    data = stmt.to_bytes()
    assert S.SolvencyStatement.from_obj(json.loads(data)) == stmt
    assert set(json.loads(data)) == {"relation", "round_id", "liabilities_root", "liabilities_sum_leaf_index",
                                     "eth_block_hash", "btc_utxo_root", "btc_snapshot_block"}
    assert world.eth_bundle.address.hex().encode() not in data


def test_witness_roundtrip(e2e_keys):
    w = World(e2e_keys, eth_amounts=(10,), btc_amounts=(1,))
    wit = w.witness(w.eth_claim(100), w.btc_claim(1))
    again = S.SolvencyWitness.from_obj(json.loads(wit.to_bytes()))
    assert again.to_bytes() == wit.to_bytes()
    assert S.check_solvency_relation(w.statement(), again)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.integers(0, 10**20), min_size=1, max_size=6), st.integers(0, 10**21))
def test_threshold_property(amounts, claimed):
    w = World(load_keys(), eth_amounts=amounts)
    claimed = min(claimed, w.eth_bundle.account.balance)
    verdict = S.check_solvency_relation(w.statement(), w.witness(w.eth_claim(claimed)))
    assert bool(verdict) == (claimed >= sum(amounts))
    if not verdict:
        assert verdict.reason == "AssetShortfall"


def test_random_claim_removal_detected(e2e_keys):
    rng = random.Random(3)
    owned = [250_000_000, 99_999]
    w = World(e2e_keys, eth_amounts=(5,), btc_amounts=(sum(owned),))
    claims = [w.eth_claim(5), w.btc_claim(sum(owned), key="btc-1")]
    assert S.check_solvency_relation(w.statement(), w.witness(*claims))
    del claims[rng.randrange(2)]
    assert S.check_solvency_relation(w.statement(), w.witness(*claims)).reason == "AssetShortfall"


def test_inner_witness_mutations_rejected(e2e_keys):
    w = World(e2e_keys, eth_amounts=(10,), btc_amounts=(1,))
    eth, btc = w.eth_claim(100), w.btc_claim(1)
    stmt = w.statement()
    assert S.check_solvency_relation(stmt, w.witness(eth, btc))
    rng = random.Random(11)
    for _ in range(100):
        where, bundle = mutate(eth.witness, rng)
        if bundle is not None:
            assert not S.check_solvency_relation(stmt, w.witness(replace(eth, witness=bundle), btc)), where
    for _ in range(100):
        k = rng.randrange(len(btc.witness.utxos))
        u = btc.witness.utxos[k]
        leaf = bytearray(u.leaf_bytes())
        # bytes 44-45 are the script length, derived from the script itself
        pos = rng.choice([i for i in range(len(leaf)) if i not in (44, 45)])
        leaf[pos] ^= rng.randrange(1, 256)
        if pos < 32:
            u = replace(u, txid=bytes(leaf[:32]))
        elif pos < 36:
            u = replace(u, vout=int.from_bytes(leaf[32:36], "little"))
        elif pos < 44:
            u = replace(u, amount=int.from_bytes(leaf[36:44], "little"))
        else:
            u = replace(u, script_pubkey=bytes(leaf[46:]))
        utxos = btc.witness.utxos[:k] + (u,) + btc.witness.utxos[k + 1:]
        mutated = replace(btc, witness=replace(btc.witness, utxos=utxos))
        assert not S.check_solvency_relation(stmt, w.witness(eth, mutated))
