"""Ethereum JSON-RPC client that fetches state proofs and headers, checks them
locally, and records them as offline fixtures.

Nothing is returned to callers until it has been verified against its own
header: headers must re-encode to the node-reported hash and account/storage
proofs must walk to the header's state root.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import requests

from . import ethstate
from .ethstate import AccountProofBundle, AccountState, InvalidProof, StorageProof
from .hashcodec import int_to_be, keccak256, rlp_encode
from .relation import ParseError, canonical_json, hexb, unhex

log = logging.getLogger(__name__)

ENV_URL = "PPOS_RPC_URL"
FIXTURE_VERSION = 1

# Header fields in RLP order. The first 15 exist in every block; the rest were
# added by later upgrades and are appended while present. The hash check is the
# final arbiter, so an unknown newer field shows up as a hard mismatch.
BASE_FIELDS = [
    ("parentHash", "bytes"), ("sha3Uncles", "bytes"), ("miner", "bytes"), ("stateRoot", "bytes"),
    ("transactionsRoot", "bytes"), ("receiptsRoot", "bytes"), ("logsBloom", "bytes"),
    ("difficulty", "int"), ("number", "int"), ("gasLimit", "int"), ("gasUsed", "int"),
    ("timestamp", "int"), ("extraData", "bytes"), ("mixHash", "bytes"), ("nonce", "bytes"),
]
OPTIONAL_FIELDS = [
    ("baseFeePerGas", "int"),          # London
    ("withdrawalsRoot", "bytes"),      # Shanghai
    ("blobGasUsed", "int"),            # Cancun
    ("excessBlobGas", "int"),          # Cancun
    ("parentBeaconBlockRoot", "bytes"),  # Cancun
    ("requestsHash", "bytes"),         # Prague
]


class RpcClientError(Exception):
    pass


class Transport(RpcClientError):
    pass


class RpcError(RpcClientError):
    def __init__(self, code: int, message: str):
        super().__init__(f"RPC error {code}: {message}")
        self.code = code
        self.message = message


class HeaderReencodeMismatch(RpcClientError):
    pass


class SelfValidationFailed(RpcClientError):
    pass


class FixtureCorrupt(RpcClientError):
    pass


@dataclass
class RpcEndpoint:
    url: str
    timeout: float = 10.0
    max_retries: int = 3
    backoff: float = 0.25
    max_backoff: float = 4.0

    @classmethod
    def from_config(cls, path: str | Path | None = None, env=os.environ) -> "RpcEndpoint":
        cfg: dict = {}
        if path:
            cfg = json.loads(Path(path).read_text()).get("rpc", {})
        url = env.get(ENV_URL) or cfg.get("url")
        if not url:
            raise ValueError(f"no RPC endpoint configured (set {ENV_URL} or rpc.url in the config file)")
        return cls(url, float(cfg.get("timeout", 10.0)), int(cfg.get("max_retries", 3)))


class RpcClient:
    def __init__(self, endpoint: RpcEndpoint, session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.session = session or requests.Session()
        self._ids = iter(range(1, 1 << 62))
        self._id_lock = threading.Lock()
        self.exchanges: List[dict] = []  # request/response pairs, for recording

    def call(self, method: str, params: list):
        with self._id_lock:
            req_id = next(self._ids)
        payload = {"jsonrpc": "2.0", "id": req_id, "method": method, "params": params}
        delay = self.endpoint.backoff
        for attempt in range(self.endpoint.max_retries + 1):
            try:
                resp = self.session.post(self.endpoint.url, json=payload, timeout=self.endpoint.timeout)
                resp.raise_for_status()
                body = resp.json()
                break
            except (requests.ConnectionError, requests.Timeout, requests.HTTPError, ValueError) as exc:
                if attempt == self.endpoint.max_retries:
                    raise Transport(f"{method} failed after {attempt + 1} attempts: {exc}") from exc
                log.warning("%s attempt %d failed (%s); retrying in %.2fs", method, attempt + 1, exc, delay)
                time.sleep(delay)
                delay = min(delay * 2, self.endpoint.max_backoff)
        if body.get("error"):
            err = body["error"]
            raise RpcError(int(err.get("code", 0)), str(err.get("message", "")))
        if "result" not in body:
            raise RpcError(0, "response carries neither result nor error")
        self.exchanges.append({"method": method, "params": params, "result": body["result"]})
        return body["result"]


def _block_id(block: Union[int, str, bytes]) -> tuple:
    """-> (rpc method for headers, block id param)."""
    if isinstance(block, int):
        return "eth_getBlockByNumber", hex(block)
    if isinstance(block, bytes):
        return "eth_getBlockByHash", "0x" + block.hex()
    if isinstance(block, str) and len(block) == 66:
        return "eth_getBlockByHash", block
    return "eth_getBlockByNumber", block


def _qty(text: str) -> int:
    if not isinstance(text, str) or not text.startswith("0x"):
        raise ParseError(f"bad quantity {text!r}")
    return int(text, 16) if len(text) > 2 else 0


def encode_header(fields: dict) -> bytes:
    items = []
    for name, kind in BASE_FIELDS:
        if name not in fields:
            raise HeaderReencodeMismatch(f"header response lacks {name}")
        items.append(int_to_be(_qty(fields[name])) if kind == "int" else unhex(fields[name], what=name))
    for name, kind in OPTIONAL_FIELDS:
        if fields.get(name) is None:
            break
        items.append(int_to_be(_qty(fields[name])) if kind == "int" else unhex(fields[name], what=name))
    return rlp_encode(items)


def header_from_response(result: dict) -> bytes:
    if not result:
        raise RpcError(0, "block not found")
    header_rlp = encode_header(result)
    reported = unhex(result.get("hash", ""), 32, "hash")
    if keccak256(header_rlp) != reported:
        raise HeaderReencodeMismatch(f"re-encoded header hashes to {keccak256(header_rlp).hex()}, "
                                     f"node reported {reported.hex()}")
    return header_rlp


def fetch_block_header(client: RpcClient, block) -> bytes:
    method, block_id = _block_id(block)
    return header_from_response(client.call(method, [block_id, False]))


def bundle_from_proof(result: dict, header_rlp: bytes) -> AccountProofBundle:
    storage = []
    for sp in result.get("storageProof", []):
        key = unhex(sp["key"], what="storage key")
        if len(key) > 32:
            raise ParseError("storage key wider than 32 bytes")
        storage.append(StorageProof(key.rjust(32, b"\x00"), _qty(sp["value"]),
                                    tuple(unhex(n, what="storage proof node") for n in sp["proof"])))
    account = AccountState(_qty(result["nonce"]), _qty(result["balance"]),
                           unhex(result["storageHash"], 32, "storageHash"), unhex(result["codeHash"], 32, "codeHash"))
    return AccountProofBundle(header_rlp, tuple(unhex(n, what="account proof node") for n in result["accountProof"]),
                              unhex(result["address"], 20, "address"), account, tuple(storage))


def validate_bundle(bundle: AccountProofBundle) -> None:
    """Raise SelfValidationFailed unless every proof in the bundle verifies."""
    verdict = ethstate.check_eth_min_balance_relation(
        ethstate.EthReserveStatement(0, bundle.block_hash), bundle)
    if not verdict:
        raise SelfValidationFailed(f"account proof: {verdict.reason}: {verdict.detail}")
    for sp in bundle.storage_proofs:
        try:
            value = ethstate.proven_storage_value(bundle.account.storage_root, sp)
        except InvalidProof as exc:
            raise SelfValidationFailed(f"storage proof {sp.key.hex()}: {exc}") from exc
        if value != sp.value:
            raise SelfValidationFailed(f"storage proof {sp.key.hex()}: proven value differs from reported value")


def fetch_account_proof(client: RpcClient, address: bytes, storage_keys: Sequence[bytes], block) -> AccountProofBundle:
    header_rlp = fetch_block_header(client, block)
    block_hash = keccak256(header_rlp)
    # pin the proof to the exact header we validated, even if `block` was a number
    result = client.call("eth_getProof", ["0x" + bytes(address).hex(),
                                          ["0x" + bytes(k).rjust(32, b"\x00").hex() for k in storage_keys],
                                          {"blockHash": "0x" + block_hash.hex()}])
    try:
        bundle = bundle_from_proof(result, header_rlp)
    except (KeyError, ParseError, TypeError) as exc:
        raise SelfValidationFailed(f"malformed proof response: {exc}") from exc
    validate_bundle(bundle)
    return bundle


# -- fixtures ------------------------------------------------------------------

def fixture_dict(bundle: AccountProofBundle, exchanges: Optional[List[dict]] = None,
                 recorded_at: Optional[str] = None) -> dict:
    body = bundle.to_fixture_dict()
    if exchanges is not None:
        body["exchanges"] = exchanges
    return {"version": FIXTURE_VERSION, "digest": hexb(keccak256(canonical_json(body))),
            "recorded_at": recorded_at, **body}


def record_fixture(bundle: AccountProofBundle, path: str | Path, exchanges: Optional[List[dict]] = None,
                   recorded_at: Optional[str] = None) -> None:
    data = json.dumps(fixture_dict(bundle, exchanges, recorded_at), indent=1, sort_keys=True) + "\n"
    Path(path).write_text(data)


def load_fixture_dict(path: str | Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise FixtureCorrupt(f"{path}: not valid JSON") from exc
    body = {k: v for k, v in obj.items() if k not in ("version", "digest", "recorded_at")}
    if obj.get("digest") != hexb(keccak256(canonical_json(body))):
        raise FixtureCorrupt(f"{path}: digest does not match contents")
    return obj


def load_fixture(path: str | Path, validate: bool = True) -> AccountProofBundle:
    obj = load_fixture_dict(path)
    try:
        bundle = AccountProofBundle.from_dict(obj)
    except (ParseError, ValueError) as exc:
        raise FixtureCorrupt(f"{path}: {exc}") from exc
    if validate:
        validate_bundle(bundle)
    return bundle
