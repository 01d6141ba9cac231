"""Round registry: announces solvency rounds, stores the liabilities root and
attestations, and records the final verdict.

State lives in an append-only event log (one JSON record per line). Each
record carries a digest chained to the previous one, so edits, reordering and
truncation in the middle of the log are detected on replay.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Dict, List, Optional

from . import attestor, btcstate, liabilities, solvency
from .attestor import Attestation
from .hashcodec import keccak256
from .relation import ParseError, RelationVerdict, canonical_json, hexb, unhex

log = logging.getLogger(__name__)

OPEN = "Open"
LIABILITIES_SET = "LiabilitiesSet"
FINALIZED = "Finalized"
STATUS_ORDER = {OPEN: 0, LIABILITIES_SET: 1, FINALIZED: 2}

ROUND_OPENED = "RoundOpened"
LIABILITIES_SUBMITTED = "LiabilitiesSubmitted"
RESERVE_SUBMITTED = "ReserveSubmitted"
ROUND_FINALIZED = "Finalized"

GENESIS_DIGEST = bytes(32)
# verdicts that mean "this is not a usable attestation" rather than "the relation is false"
_UNUSABLE = {"StatementMismatch", "UnknownRelation", "UnknownBackend", "ParseError"}


class RegistryError(Exception):
    code = "RegistryError"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail


class PreviousRoundOpen(RegistryError):
    code = "PreviousRoundOpen"


class WrongStatus(RegistryError):
    code = "WrongStatus"


class AttestationInvalid(RegistryError):
    code = "AttestationInvalid"


class SnapshotMismatch(RegistryError):
    code = "SnapshotMismatch"


class BindingMismatch(RegistryError):
    code = "BindingMismatch"


class UnknownRound(RegistryError):
    code = "UnknownRound"


class LogCorrupt(RegistryError):
    code = "LogCorrupt"


ERRORS = {cls.code: cls for cls in (PreviousRoundOpen, WrongStatus, AttestationInvalid, SnapshotMismatch,
                                    BindingMismatch, UnknownRound, LogCorrupt)}


@dataclass
class Submission:
    statement: bytes
    attestation: Attestation

    def to_dict(self) -> dict:
        return {"statement": json.loads(self.statement), "attestation": self.attestation.to_dict()}

    @classmethod
    def from_dict(cls, obj: dict) -> "Submission":
        return cls(canonical_json(obj["statement"]), Attestation.from_dict(obj["attestation"]))


@dataclass
class Round:
    round_id: int
    status: str = OPEN
    eth_block_hash: Optional[bytes] = None
    btc_utxo_root: Optional[bytes] = None
    btc_snapshot_block: Optional[bytes] = None
    liabilities_root: Optional[bytes] = None
    liability: Optional[Submission] = None
    reserves: List[Submission] = field(default_factory=list)
    solvency: Optional[Submission] = None
    verdict: Optional[dict] = None

    def to_dict(self) -> dict:
        opt = lambda v: None if v is None else hexb(v)  # noqa: E731
        return {
            "round_id": self.round_id, "status": self.status,
            "eth_block_hash": opt(self.eth_block_hash), "btc_utxo_root": opt(self.btc_utxo_root),
            "btc_snapshot_block": opt(self.btc_snapshot_block),
            "liabilities_root": opt(self.liabilities_root),
            "liability": self.liability and self.liability.to_dict(),
            "reserves": [s.to_dict() for s in self.reserves],
            "solvency": self.solvency and self.solvency.to_dict(),
            "verdict": self.verdict,
        }


def _opt32(value, what: str) -> Optional[bytes]:
    if value is None:
        return None
    if isinstance(value, str):
        value = unhex(value, 32, what)
    if len(value) != 32:
        raise ValueError(f"{what} must be 32 bytes")
    return bytes(value)


def _snapshot_of(relation: str, stmt) -> dict:
    if relation == btcstate.RELATION:
        return {"btc_utxo_root": stmt.utxo_root, "btc_snapshot_block": stmt.snapshot_block}
    return {"eth_block_hash": stmt.block_hash}


class Registry:
    """In-process registry. Mutations serialize through one lock."""

    def __init__(self, log_path: str | Path | None = None, verifier: Callable = attestor.verify,
                 clock: Callable[[], float] = time.time):
        self.log_path = Path(log_path) if log_path else None
        self.verifier = verifier
        self.clock = clock
        self.events: List[dict] = []
        self.rounds: Dict[int, Round] = {}
        self._lock = threading.Lock()
        if self.log_path and self.log_path.exists():
            self.replay(self.log_path.read_text().splitlines())

    # -- event log -------------------------------------------------------------

    @staticmethod
    def _digest(prev: bytes, record: dict) -> bytes:
        body = {k: v for k, v in record.items() if k != "digest"}
        return keccak256(prev + canonical_json(body))

    def _last_digest(self) -> bytes:
        return unhex(self.events[-1]["digest"], 32) if self.events else GENESIS_DIGEST

    def _append(self, kind: str, round_id: int, payload: dict) -> Round:
        record = {"seq": len(self.events) + 1, "round_id": round_id, "kind": kind,
                  "payload": payload, "timestamp": round(self.clock(), 6)}
        record["digest"] = hexb(self._digest(self._last_digest(), record))
        self._apply(record)
        if self.log_path:
            with self.log_path.open("ab") as fh:
                fh.write(canonical_json(record) + b"\n")
        self.events.append(record)
        log.info("event %d %s round %d", record["seq"], kind, round_id)
        return self.rounds[round_id]

    def replay(self, lines) -> None:
        """Rebuild state from log lines without re-running verification."""
        self.events, self.rounds = [], {}
        for n, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                ok = (record["seq"] == len(self.events) + 1
                      and unhex(record["digest"], 32) == self._digest(self._last_digest(), record))
            except (ValueError, KeyError, TypeError, ParseError) as exc:
                raise LogCorrupt(f"line {n}: {exc}") from exc
            if not ok:
                raise LogCorrupt(f"line {n}: digest or sequence check failed")
            self._apply(record)
            self.events.append(record)

    def _apply(self, ev: dict) -> None:
        kind, rid, p = ev["kind"], ev["round_id"], ev["payload"]
        if kind == ROUND_OPENED:
            self.rounds[rid] = Round(rid, OPEN, _opt32(p["eth_block_hash"], "eth_block_hash"),
                                     _opt32(p["btc_utxo_root"], "btc_utxo_root"),
                                     _opt32(p["btc_snapshot_block"], "btc_snapshot_block"))
            return
        rnd = self.rounds[rid]
        sub = Submission.from_dict(p)
        if kind == LIABILITIES_SUBMITTED:
            rnd.liability = sub
            rnd.liabilities_root = unhex(p["statement"]["root"], 32)
            rnd.status = LIABILITIES_SET
        elif kind == RESERVE_SUBMITTED:
            rnd.reserves.append(sub)
        elif kind == ROUND_FINALIZED:
            rnd.solvency = sub
            rnd.verdict = p["verdict"]
            rnd.status = FINALIZED
        else:
            raise LogCorrupt(f"unknown event kind {kind!r}")

    # -- operations ------------------------------------------------------------

    def _round(self, round_id: int) -> Round:
        try:
            return self.rounds[round_id]
        except KeyError:
            raise UnknownRound(f"no round {round_id}") from None

    def _require(self, rnd: Round, status: str) -> None:
        if rnd.status != status:
            raise WrongStatus(f"round {rnd.round_id} is {rnd.status}, expected {status}")

    def _verify(self, statement: bytes, att: Attestation) -> RelationVerdict:
        verdict = self.verifier(statement, att)
        if verdict.reason in _UNUSABLE:
            raise AttestationInvalid(f"{verdict.reason}: {verdict.detail}")
        return verdict

    def _parse(self, relation: str, statement: bytes):
        try:
            return attestor.parse_statement(relation, statement)
        except (ParseError, attestor.UnknownRelation, ValueError) as exc:
            raise AttestationInvalid(f"statement does not parse: {exc}") from exc

    def open_round(self, eth_block_hash=None, btc_utxo_root=None, btc_snapshot_block=None) -> Round:
        payload = {"eth_block_hash": _opt32(eth_block_hash, "eth_block_hash"),
                   "btc_utxo_root": _opt32(btc_utxo_root, "btc_utxo_root"),
                   "btc_snapshot_block": _opt32(btc_snapshot_block, "btc_snapshot_block")}
        if (payload["btc_utxo_root"] is None) != (payload["btc_snapshot_block"] is None):
            raise ValueError("btc_utxo_root and btc_snapshot_block go together")
        with self._lock:
            if self.rounds:
                last = self.rounds[max(self.rounds)]
                if last.status != FINALIZED:
                    raise PreviousRoundOpen(f"round {last.round_id} is still {last.status}")
            rid = max(self.rounds, default=0) + 1
            return self._append(ROUND_OPENED, rid, {k: v and hexb(v) for k, v in payload.items()})

    def submit_liabilities(self, round_id: int, statement: bytes, attestation: Attestation) -> Round:
        with self._lock:
            rnd = self._round(round_id)
            self._require(rnd, OPEN)
            if attestation.relation != liabilities.RELATION:
                raise AttestationInvalid(f"expected {liabilities.RELATION}, got {attestation.relation}")
            self._parse(liabilities.RELATION, statement)
            verdict = self._verify(statement, attestation)
            if not verdict:
                raise AttestationInvalid(f"{verdict.reason}: {verdict.detail}")
            return self._append(LIABILITIES_SUBMITTED, round_id, Submission(statement, attestation).to_dict())

    def submit_reserve(self, round_id: int, statement: bytes, attestation: Attestation) -> Round:
        with self._lock:
            rnd = self._round(round_id)
            self._require(rnd, LIABILITIES_SET)
            if attestation.relation not in attestor.RESERVE_RELATIONS:
                raise AttestationInvalid(f"{attestation.relation} is not a reserve relation")
            stmt = self._parse(attestation.relation, statement)
            for key, value in _snapshot_of(attestation.relation, stmt).items():
                if getattr(rnd, key) != value:
                    raise SnapshotMismatch(f"{key} differs from the round's snapshot commitment")
            sub = Submission(statement, attestation)
            if any(s.to_dict() == sub.to_dict() for s in rnd.reserves):
                raise AttestationInvalid("DuplicateAttestation: already submitted to this round")
            verdict = self._verify(statement, attestation)
            if not verdict:
                raise AttestationInvalid(f"{verdict.reason}: {verdict.detail}")
            return self._append(RESERVE_SUBMITTED, round_id, sub.to_dict())

    def finalize_round(self, round_id: int, statement: bytes, attestation: Attestation) -> Round:
        with self._lock:
            rnd = self._round(round_id)
            self._require(rnd, LIABILITIES_SET)
            if attestation.relation != solvency.RELATION:
                raise AttestationInvalid(f"expected {solvency.RELATION}, got {attestation.relation}")
            stmt = self._parse(solvency.RELATION, statement)
            liab = attestor.parse_statement(liabilities.RELATION, rnd.liability.statement)
            expected = (round_id, rnd.liabilities_root, liab.sum_leaf_index,
                        rnd.eth_block_hash, rnd.btc_utxo_root, rnd.btc_snapshot_block)
            got = (stmt.round_id, stmt.liabilities_root, stmt.liabilities_sum_leaf_index,
                   stmt.eth_block_hash, stmt.btc_utxo_root, stmt.btc_snapshot_block)
            if got != expected:
                names = ("round_id", "liabilities_root", "sum_leaf_index", "eth_block_hash",
                         "btc_utxo_root", "btc_snapshot_block")
                bad = [n for n, a, b in zip(names, got, expected) if a != b]
                raise BindingMismatch(f"solvency statement disagrees with the round on {', '.join(bad)}")
            verdict = self._verify(statement, attestation)
            payload = Submission(statement, attestation).to_dict()
            payload["verdict"] = {"accepted": verdict.accepted, "reason": verdict.reason}
            return self._append(ROUND_FINALIZED, round_id, payload)

    def get_round(self, round_id: int) -> Round:
        return self._round(round_id)

    def list_rounds(self) -> List[Round]:
        return [self.rounds[k] for k in sorted(self.rounds)]

    def state_bytes(self) -> bytes:
        return canonical_json([r.to_dict() for r in self.list_rounds()])

    def audit(self) -> List[str]:
        """Re-verify every stored attestation against its stored statement."""
        problems = []
        for rnd in self.list_rounds():
            subs = [rnd.liability, *rnd.reserves, rnd.solvency]
            for sub in filter(None, subs):
                verdict = attestor.verify(sub.statement, sub.attestation)
                expect_ok = sub is not rnd.solvency or rnd.verdict["accepted"]
                if verdict.accepted != expect_ok:
                    problems.append(f"round {rnd.round_id}: {sub.attestation.relation} -> {verdict.reason}")
        return problems


# -- HTTP surface ----------------------------------------------------------------

def _submission_args(body: dict):
    return canonical_json(body["statement"]), Attestation.from_dict(body["attestation"])


def make_handler(registry: Registry):
    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, obj) -> None:
            data = canonical_json(obj)
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _route(self, method: str):
            parts = [p for p in self.path.split("/") if p]
            try:
                if parts[:1] != ["rounds"]:
                    return self._send(404, {"error": "NotFound", "detail": self.path})
                if method == "GET" and len(parts) == 1:
                    return self._send(200, [r.to_dict() for r in registry.list_rounds()])
                if method == "GET" and len(parts) == 2:
                    return self._send(200, registry.get_round(int(parts[1])).to_dict())
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                if method == "POST" and len(parts) == 1:
                    rnd = registry.open_round(body.get("eth_block_hash"), body.get("btc_utxo_root"),
                                              body.get("btc_snapshot_block"))
                    return self._send(200, rnd.to_dict())
                ops = {"liabilities": registry.submit_liabilities, "reserves": registry.submit_reserve,
                       "finalize": registry.finalize_round}
                if method == "POST" and len(parts) == 3 and parts[2] in ops:
                    rnd = ops[parts[2]](int(parts[1]), *_submission_args(body))
                    return self._send(200, rnd.to_dict())
                return self._send(404, {"error": "NotFound", "detail": self.path})
            except UnknownRound as exc:
                return self._send(404, {"error": exc.code, "detail": exc.detail})
            except RegistryError as exc:
                return self._send(409, {"error": exc.code, "detail": exc.detail})
            except (ValueError, KeyError, TypeError, ParseError) as exc:
                return self._send(400, {"error": "BadRequest", "detail": str(exc)})

        def do_GET(self):
            self._route("GET")

        def do_POST(self):
            self._route("POST")

        def log_message(self, fmt, *args):
            log.debug("http: " + fmt, *args)

    return Handler


def serve(registry: Registry, host: str = "127.0.0.1", port: int = 8545) -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), make_handler(registry))


class RegistryClient:
    """Drives a remote registry over HTTP; mirrors Registry's operations but returns round dicts."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def _call(self, method: str, path: str, body=None):
        import requests

        resp = requests.request(method, self.url + path, data=None if body is None else canonical_json(body),
                                headers={"Content-Type": "application/json"}, timeout=self.timeout)
        obj = resp.json()
        if resp.status_code != 200:
            cls = ERRORS.get(obj.get("error"), RegistryError)
            raise cls(obj.get("detail", ""))
        return obj

    def open_round(self, eth_block_hash=None, btc_utxo_root=None, btc_snapshot_block=None) -> dict:
        hx = lambda v: v if v is None or isinstance(v, str) else hexb(v)  # noqa: E731
        return self._call("POST", "/rounds", {"eth_block_hash": hx(eth_block_hash),
                                              "btc_utxo_root": hx(btc_utxo_root),
                                              "btc_snapshot_block": hx(btc_snapshot_block)})

    def _submit(self, op: str, round_id: int, statement: bytes, attestation: Attestation) -> dict:
        return self._call("POST", f"/rounds/{round_id}/{op}",
                          {"statement": json.loads(statement), "attestation": attestation.to_dict()})

    def submit_liabilities(self, round_id, statement, attestation) -> dict:
        return self._submit("liabilities", round_id, statement, attestation)

    def submit_reserve(self, round_id, statement, attestation) -> dict:
        return self._submit("reserves", round_id, statement, attestation)

    def finalize_round(self, round_id, statement, attestation) -> dict:
        return self._submit("finalize", round_id, statement, attestation)

    def get_round(self, round_id: int) -> dict:
        return self._call("GET", f"/rounds/{round_id}")

    def list_rounds(self) -> list:
        return self._call("GET", "/rounds")
