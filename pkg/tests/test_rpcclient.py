import json
import random
import socket
from dataclasses import replace

import pytest
import rlp as pyrlp

from ppos import ethstate as E
from ppos import rpcclient as C
from tests.conftest import ERC20_FIXTURE, FIXTURES
from tests.mocknode import Account, Chain, MockNode, header_hash_ref

HEADERS = json.loads((FIXTURES / "data" / "synthetic_headers.json").read_text())
TOKEN = bytes.fromhex("11" * 20)
HOLDER = bytes.fromhex("22" * 20)
RICH = bytes.fromhex("33" * 20)


def small_chain(seed=1, number=0x1406F40):
    rng = random.Random(seed)
    accounts = {rng.randbytes(20): Account(rng.randrange(5), rng.randrange(10**20)) for _ in range(40)}
    accounts[RICH] = Account(1, 10**21)
    accounts[TOKEN] = Account(1, 0, b"\x42" * 32, {E.storage_slot_key(HOLDER, 0): 777,
                                                   E.storage_slot_key(RICH, 0): 5})
    chain = Chain(HEADERS["cancun"], accounts)
    header = dict(HEADERS["cancun"], stateRoot="0x" + chain.state.root_hash.hex(), number=hex(number))
    header["hash"] = header_hash_ref(header)
    chain.header = header
    return chain


def client_for(url, **kw):
    kw.setdefault("backoff", 0.01)
    return C.RpcClient(C.RpcEndpoint(url, timeout=5, **kw))


def test_fetch_and_self_validate():
    chain = small_chain()
    with MockNode([chain]) as node:
        client = client_for(node.url)
        bundle = C.fetch_account_proof(client, RICH, [], 0x1406F40)
    assert bundle.address == RICH and bundle.account.balance == 10**21
    assert "0x" + bundle.block_hash.hex() == chain.block_hash
    assert [e["method"] for e in client.exchanges] == ["eth_getBlockByNumber", "eth_getProof"]
    # the proof request is pinned to the validated header
    assert node.requests[1]["params"][2] == {"blockHash": chain.block_hash}


def test_fetch_by_hash_with_storage():
    chain = small_chain()
    key = E.storage_slot_key(HOLDER, 0)
    with MockNode([chain]) as node:
        bundle = C.fetch_account_proof(client_for(node.url), TOKEN, [key], bytes.fromhex(chain.block_hash[2:]))
    assert bundle.storage_proofs[0].value == 777
    stmt = E.Erc20ReserveStatement(777, bundle.block_hash, TOKEN, 0)
    assert E.check_erc20_min_balance_relation(stmt, E.Erc20Witness(bundle, HOLDER))


def test_retries_then_succeeds():
    with MockNode([small_chain()], fail_first=2) as node:
        bundle = C.fetch_account_proof(client_for(node.url, max_retries=3), RICH, [], 0x1406F40)
        assert len(node.requests) == 4
    assert bundle.account.balance == 10**21


def test_retries_exhausted():
    with MockNode([small_chain()], fail_first=10) as node:
        with pytest.raises(C.Transport):
            C.fetch_block_header(client_for(node.url, max_retries=2), 1)
        assert len(node.requests) == 3


def test_connection_refused():
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    with pytest.raises(C.Transport):
        client_for(f"http://127.0.0.1:{port}", max_retries=1).call("eth_chainId", [])


def test_rpc_errors():
    with MockNode([small_chain()]) as node:
        client = client_for(node.url)
        with pytest.raises(C.RpcError) as info:
            client.call("eth_chainId", [])
        assert info.value.code == -32601
        with pytest.raises(C.RpcError, match="block not found"):
            C.fetch_block_header(client, 5)


def test_tampered_balance_fails_validation():
    def tamper(method, result):
        if method == "eth_getProof":
            result["balance"] = hex(int(result["balance"], 16) + 1)
        return result

    with MockNode([small_chain()], tamper=tamper) as node:
        with pytest.raises(C.SelfValidationFailed, match="AccountMismatch"):
            C.fetch_account_proof(client_for(node.url), RICH, [], 0x1406F40)


def test_tampered_proof_node_fails_validation():
    def tamper(method, result):
        if method == "eth_getProof":
            node = bytearray.fromhex(result["accountProof"][-1][2:])
            node[-1] ^= 1
            result["accountProof"][-1] = "0x" + node.hex()
        return result

    with MockNode([small_chain()], tamper=tamper) as node:
        with pytest.raises(C.SelfValidationFailed):
            C.fetch_account_proof(client_for(node.url), RICH, [], 0x1406F40)


def test_tampered_storage_value_fails_validation():
    def tamper(method, result):
        if method == "eth_getProof":
            result["storageProof"][0]["value"] = hex(778)
        return result

    with MockNode([small_chain()], tamper=tamper) as node:
        with pytest.raises(C.SelfValidationFailed, match="storage"):
            C.fetch_account_proof(client_for(node.url), TOKEN, [E.storage_slot_key(HOLDER, 0)], 0x1406F40)


def test_malformed_proof_response():
    def tamper(method, result):
        if method == "eth_getProof":
            del result["storageHash"]
        return result

    with MockNode([small_chain()], tamper=tamper) as node:
        with pytest.raises(C.SelfValidationFailed, match="malformed"):
            C.fetch_account_proof(client_for(node.url), RICH, [], 0x1406F40)


def test_header_field_tamper_detected():
    def tamper(method, result):
        if method.startswith("eth_getBlock"):
            result = dict(result, gasUsed=hex(int(result["gasUsed"], 16) + 1))
        return result

    with MockNode([small_chain()], tamper=tamper) as node:
        with pytest.raises(C.HeaderReencodeMismatch):
            C.fetch_block_header(client_for(node.url), 0x1406F40)


@pytest.mark.parametrize("fork,count", [("cancun", 20), ("prague", 21)])
def test_fork_headers(fork, count):
    fields = HEADERS[fork]
    header_rlp = C.header_from_response(fields)
    assert len(pyrlp.decode(header_rlp)) == count
    assert "0x" + E.header_hash(header_rlp).block_hash.hex() == header_hash_ref(fields) == fields["hash"]


def test_unknown_newer_field_is_a_mismatch():
    # a node that omits a field the block actually commits to cannot be re-encoded
    fields = dict(HEADERS["prague"])
    del fields["requestsHash"]
    with pytest.raises(C.HeaderReencodeMismatch):
        C.header_from_response(fields)
    partial = dict(HEADERS["cancun"])
    del partial["stateRoot"]
    with pytest.raises(C.HeaderReencodeMismatch, match="stateRoot"):
        C.encode_header(partial)


def test_fixture_roundtrip(tmp_path):
    chain = small_chain()
    with MockNode([chain]) as node:
        client = client_for(node.url)
        bundle = C.fetch_account_proof(client, TOKEN, [E.storage_slot_key(HOLDER, 0)], 0x1406F40)
    path = tmp_path / "f.json"
    C.record_fixture(bundle, path, client.exchanges, "2026-01-01T00:00:00Z")
    assert C.load_fixture(path) == bundle
    assert C.load_fixture_dict(path)["recorded_at"] == "2026-01-01T00:00:00Z"


def test_fixture_corruption(tmp_path):
    obj = json.loads(ERC20_FIXTURE.read_text())
    path = tmp_path / "f.json"
    edited = dict(obj, account=dict(obj["account"], balance="1"))
    path.write_text(json.dumps(edited))
    with pytest.raises(C.FixtureCorrupt):
        C.load_fixture(path)
    path.write_text("{")
    with pytest.raises(C.FixtureCorrupt):
        C.load_fixture(path)


def test_fixture_with_valid_digest_but_bad_proof(tmp_path):
    bundle = C.load_fixture(ERC20_FIXTURE)
    nodes = list(bundle.proof_nodes)
    nodes[0] = nodes[0][:-1] + bytes([nodes[0][-1] ^ 1])
    bad = replace(bundle, proof_nodes=tuple(nodes))
    path = tmp_path / "bad.json"
    C.record_fixture(bad, path)
    assert C.load_fixture(path, validate=False) == bad
    with pytest.raises(C.SelfValidationFailed):
        C.load_fixture(path)


class ReplaySession:
    """Answers from recorded exchanges instead of the network."""

    def __init__(self, exchanges):
        self.exchanges = exchanges

    def post(self, url, json, timeout):
        match = next(e for e in self.exchanges if e["method"] == json["method"] and e["params"] == json["params"])
        body = {"jsonrpc": "2.0", "id": json["id"], "result": match["result"]}

        class Resp:
            def raise_for_status(self):
                pass

            def json(self):
                return body
        return Resp()


def test_replaying_recorded_exchanges():
    obj = json.loads(ERC20_FIXTURE.read_text())
    bundle = C.load_fixture(ERC20_FIXTURE)
    client = C.RpcClient(C.RpcEndpoint("replay://"), session=ReplaySession(obj["exchanges"]))
    keys = [bytes.fromhex(k[2:]) for k in obj["exchanges"][1]["params"][1]]
    block = obj["exchanges"][0]["params"][0]
    assert C.fetch_account_proof(client, bundle.address, keys, int(block, 16)) == bundle


def test_endpoint_config(tmp_path):
    cfg = tmp_path / "ppos.json"
    cfg.write_text(json.dumps({"rpc": {"url": "http://node:8545", "timeout": 3, "max_retries": 7}}))
    ep = C.RpcEndpoint.from_config(cfg, env={})
    assert (ep.url, ep.timeout, ep.max_retries) == ("http://node:8545", 3.0, 7)
    assert C.RpcEndpoint.from_config(cfg, env={C.ENV_URL: "http://env"}).url == "http://env"
    assert C.RpcEndpoint.from_config(None, env={C.ENV_URL: "http://env"}).url == "http://env"
    with pytest.raises(ValueError):
        C.RpcEndpoint.from_config(None, env={})


def test_recording_is_idempotent(tmp_path):
    bundle = C.load_fixture(ERC20_FIXTURE)
    exchanges = json.loads(ERC20_FIXTURE.read_text())["exchanges"]
    C.record_fixture(bundle, tmp_path / "a.json", exchanges, "2026-01-01T00:00:00Z")
    C.record_fixture(bundle, tmp_path / "b.json", exchanges, "2026-01-01T00:00:00Z")
    C.record_fixture(bundle, tmp_path / "c.json", exchanges, "2027-06-30T12:00:00Z")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    digests = {C.load_fixture_dict(tmp_path / n)["digest"] for n in ("a.json", "c.json")}
    assert digests == {json.loads(ERC20_FIXTURE.read_text())["digest"]}
