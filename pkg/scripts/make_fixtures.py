#!/usr/bin/env python3
"""Regenerate the pinned fixtures under tests/fixtures/.

* Mainnet genesis account proofs: the genesis allocation is rebuilt into a
  state trie with py-trie, the root and block hash are checked against the
  published mainnet values, and proofs for three real genesis accounts are
  recorded through ppos.rpcclient against a local node serving that trie.
* A synthetic Cancun-era block with ETH accounts and an ERC20 contract, used
  for the token fixture and the end-to-end scenario.
* The end-to-end dataset: liabilities input, UTXO dump, and test keys. The
  liabilities are chosen so each asset's total equals the provable reserves
  exactly, which makes the one-unit boundary checks meaningful.

Output is deterministic; rerunning rewrites identical files.
"""

import argparse
import gzip
import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))
sys.path.insert(0, str(ROOT / "src"))

from ppos import rpcclient  # noqa: E402
from ppos.solvency import BTC_SCHEME, ETH_SCHEME, owner_of  # noqa: E402
from tests.mocknode import EMPTY_ROOT, Account, Chain, MockNode, header_hash_ref  # noqa: E402
from tests.oracles import build_secure_trie, keccak256_ref, secure_proof, sha256d_ref  # noqa: E402

FIX = ROOT / "tests" / "fixtures"
RECORDED_AT = "2026-10-16T00:00:00Z"
GENESIS_STATE_ROOT = "0xd7f8974fb5ac78d9ac099b9ad5018bedc2ce0a72dad1827a1709da30580f0544"
GENESIS_HASH = "0xd4e56740f876aef8c010b86a40d5f56745a118d0906a34e69aec8c0db1cb8fa3"
EMPTY_UNCLES = "0x1dcc4de8dec75d7aab85b567b6ccd41ad312451b948a7413f0a142fd40d49347"
TOKEN_SLOT = 0
ETH_NET, BTC_NET = "eth-mainnet", "btc-mainnet"


def h(b: bytes) -> str:
    return "0x" + b.hex()


def load_genesis():
    data = json.loads(gzip.decompress((FIX / "data" / "mainnet_genesis.json.gz").read_bytes()))
    accounts = {bytes.fromhex(a[2:]): Account(balance=int(b, 16)) for a, b in data["alloc"].items()}
    g = data["header"]
    header = {
        "parentHash": g["parentHash"], "sha3Uncles": EMPTY_UNCLES, "miner": g["coinbase"],
        "stateRoot": None, "transactionsRoot": h(EMPTY_ROOT), "receiptsRoot": h(EMPTY_ROOT),
        "logsBloom": "0x" + "00" * 256, "difficulty": g["difficulty"], "number": "0x0",
        "gasLimit": g["gasLimit"], "gasUsed": "0x0", "timestamp": g["timestamp"],
        "extraData": g["extraData"], "mixHash": g["mixHash"], "nonce": "0x" + int(g["nonce"], 16).to_bytes(8, "big").hex(),
    }
    return header, accounts


def genesis_chain() -> Chain:
    header, accounts = load_genesis()
    state = build_secure_trie({a: acct.rlp() for a, acct in accounts.items()})
    header["stateRoot"] = h(state.root_hash)
    assert header["stateRoot"] == GENESIS_STATE_ROOT, header["stateRoot"]
    header["hash"] = header_hash_ref(header)
    assert header["hash"] == GENESIS_HASH, header["hash"]
    return Chain(header, accounts)


def test_key(label: str) -> bytes:
    return keccak256_ref(b"ppos-test-key/" + label.encode())


def slot_key(holder: bytes, slot: int) -> bytes:
    return keccak256_ref(bytes(12) + holder + slot.to_bytes(32, "big"))


def synthetic_header(rng: random.Random, state_root: bytes, number: int, prague: bool = False) -> dict:
    rb = lambda n: h(rng.randbytes(n))  # noqa: E731
    header = {
        "parentHash": rb(32), "sha3Uncles": EMPTY_UNCLES, "miner": rb(20), "stateRoot": h(state_root),
        "transactionsRoot": rb(32), "receiptsRoot": rb(32), "logsBloom": rb(256), "difficulty": "0x0",
        "number": hex(number), "gasLimit": hex(30_000_000), "gasUsed": hex(rng.randrange(30_000_000)),
        "timestamp": hex(1_760_000_000 + number), "extraData": h(b"ppos synthetic"), "mixHash": rb(32),
        "nonce": "0x0000000000000000", "baseFeePerGas": hex(rng.randrange(1, 10**11)),
        "withdrawalsRoot": rb(32), "blobGasUsed": hex(131072), "excessBlobGas": "0x0",
        "parentBeaconBlockRoot": rb(32),
    }
    if prague:
        header["requestsHash"] = rb(32)
    header["hash"] = header_hash_ref(header)
    return header


def synthetic_chain(rng: random.Random, keys: dict, amounts: dict) -> Chain:
    accounts = {}
    for _ in range(300):
        accounts[rng.randbytes(20)] = Account(nonce=rng.randrange(50), balance=rng.randrange(10**21))
    for label, bal in zip(("eth-0", "eth-1"), amounts["eth"]):
        accounts[owner_of(keys[label], ETH_SCHEME)] = Account(nonce=7, balance=bal)
    token_store = {slot_key(rng.randbytes(20), TOKEN_SLOT): rng.randrange(1, 10**24) for _ in range(60)}
    token_store[slot_key(owner_of(keys["erc20-0"], ETH_SCHEME), TOKEN_SLOT)] = amounts["token"]
    token = rng.randbytes(20)
    accounts[token] = Account(nonce=1, code_hash=keccak256_ref(b"synthetic ERC20 runtime"), storage=token_store)
    state = build_secure_trie({a: acct.rlp() for a, acct in accounts.items()})
    chain = Chain(synthetic_header(rng, state.root_hash, 21_000_000), accounts)
    chain.token = token
    return chain


def record(node_url: str, address: bytes, keys, block, path: Path) -> None:
    client = rpcclient.RpcClient(rpcclient.RpcEndpoint(node_url, timeout=5, max_retries=0))
    bundle = rpcclient.fetch_account_proof(client, address, keys, block)
    rpcclient.record_fixture(bundle, path, client.exchanges, RECORDED_AT)
    print(f"recorded {path.relative_to(ROOT)}")


def split_total(rng: random.Random, total: int, parts: int) -> list:
    cuts = sorted(rng.randrange(total + 1) for _ in range(parts - 1))
    return [b - a for a, b in zip([0] + cuts, cuts + [total])]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--skip-genesis", action="store_true", help="skip the (slow) genesis trie rebuild")
    args = ap.parse_args(argv)
    rng = random.Random(20261016)

    (FIX / "eth").mkdir(parents=True, exist_ok=True)
    e2e = FIX / "e2e"
    e2e.mkdir(parents=True, exist_ok=True)

    keys = {label: test_key(label) for label in ("eth-0", "eth-1", "erc20-0", "btc-0", "btc-1")}
    amounts = {"eth": [12_345_678_901_234_567_890, 9_876_543_210_987_654_321],
               "token": 424_242_424_242_424_242_424_242}
    chain = synthetic_chain(rng, keys, amounts)
    modern_prague = synthetic_header(rng, bytes.fromhex(chain.header["stateRoot"][2:]), 22_500_000, prague=True)

    chains = [chain]
    if not args.skip_genesis:
        chains.append(genesis_chain())

    with MockNode(chains) as node:
        if not args.skip_genesis:
            gen = chains[1]
            by_balance = sorted(gen.accounts, key=lambda a: -gen.accounts[a].balance)
            picks = {"largest": by_balance[0], "first": sorted(gen.accounts)[0], "median": by_balance[len(by_balance) // 2]}
            for label, addr in picks.items():
                record(node.url, addr, [], 0, FIX / "eth" / f"mainnet_genesis_{label}.json")
            # an address outside the genesis allocation: a real-state exclusion proof
            absent = keccak256_ref(b"ppos absent probe")[:20]
            assert absent not in gen.accounts
            (FIX / "eth" / "mainnet_genesis_exclusion.json").write_text(json.dumps({
                "state_root": gen.header["stateRoot"], "block_hash": gen.header["hash"],
                "address": h(absent), "proof": [h(n) for n in secure_proof(gen.state, absent)]},
                indent=1, sort_keys=True) + "\n")
        holder = owner_of(keys["erc20-0"], ETH_SCHEME)
        record(node.url, chain.token, [slot_key(holder, TOKEN_SLOT)], int(chain.header["number"], 16),
               FIX / "eth" / "synthetic_erc20.json")
        for label in ("eth-0", "eth-1"):
            record(node.url, owner_of(keys[label], ETH_SCHEME), [], chain.header["hash"], e2e / f"{label}.json")

    (FIX / "data" / "synthetic_headers.json").write_text(json.dumps(
        {"source": "synthetic, generated by scripts/make_fixtures.py",
         "cancun": chain.header, "prague": modern_prague}, indent=1, sort_keys=True) + "\n")

    # -- Bitcoin chain-state dump ---------------------------------------------------------
    btc_scripts = {label: owner_of(keys[label], BTC_SCHEME) for label in ("btc-0", "btc-1")}
    owned = {"btc-0": [50_000_000, 70_000_000, 1_234_567], "btc-1": [250_000_000, 99_999]}
    records = []
    for _ in range(2000):
        script = b"\x76\xa9\x14" + rng.randbytes(20) + b"\x88\xac" if rng.random() < 0.8 else b"\x00\x14" + rng.randbytes(20)
        records.append({"txid_hex": rng.randbytes(32).hex(), "vout": rng.randrange(8),
                        "amount_sats": rng.randrange(1, 10**9), "script_hex": script.hex()})
    for label, values in owned.items():
        for v in values:
            records.append({"txid_hex": rng.randbytes(32).hex(), "vout": rng.randrange(4),
                            "amount_sats": v, "script_hex": btc_scripts[label].hex()})
    rng.shuffle(records)
    snapshot_block = sha256d_ref(b"ppos synthetic chain-state snapshot")[::-1]
    lines = [json.dumps({"block_hash_hex": snapshot_block.hex()})] + [json.dumps(r, sort_keys=True) for r in records]
    (e2e / "utxo_dump.jsonl").write_text("\n".join(lines) + "\n")

    # -- liabilities: per-asset totals equal provable reserves ----------------------------------
    eth_asset = {"network": ETH_NET, "asset_hex": "00" * 20}
    token_asset = {"network": ETH_NET, "asset_hex": chain.token.hex()}
    btc_asset = {"network": BTC_NET, "asset_hex": "00" * 20}
    n_users = 40
    totals = [(eth_asset, sum(amounts["eth"])), (token_asset, amounts["token"]),
              (btc_asset, sum(sum(v) for v in owned.values()))]
    per_user = [[] for _ in range(n_users)]
    for asset, total in totals:
        holders = sorted(rng.sample(range(n_users), 25))
        for i, amt in zip(holders, split_total(rng, total, len(holders))):
            per_user[i].append({**asset, "amount_decimal": str(amt)})
    users = [json.dumps({"user_id": f"user-{i:03d}@example.test", "balances": b}, sort_keys=True)
             for i, b in enumerate(per_user)]
    (e2e / "users.jsonl").write_text("\n".join(users) + "\n")

    (e2e / "keys.json").write_text(json.dumps(
        {"note": "TEST KEYS ONLY - derived from public labels, never use for real funds",
         **{k: v.hex() for k, v in keys.items()}}, indent=1, sort_keys=True) + "\n")
    (e2e / "params.json").write_text(json.dumps({
        "eth_network": ETH_NET, "btc_network": BTC_NET, "token_contract": chain.token.hex(),
        "mapping_slot": TOKEN_SLOT, "eth_block_hash": chain.header["hash"][2:],
        "btc_snapshot_block": snapshot_block.hex(),
        "eth_amounts": [str(a) for a in amounts["eth"]], "token_amount": str(amounts["token"]),
        "btc_owned": {k: [str(x) for x in v] for k, v in owned.items()},
    }, indent=1, sort_keys=True) + "\n")
    print("wrote e2e dataset")


if __name__ == "__main__":
    main()
