"""Named relations behind one prove/verify seam.

The only backend here is ``transparent-v1``: the attestation payload is the
witness itself and verification re-executes the relation. It checks exactly
what a succinct circuit would constrain but hides nothing; a succinct backend
would replace it without changes to callers.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Callable, Dict, NamedTuple

from . import btcstate, ethstate, liabilities, solvency
from .hashcodec import keccak256
from .relation import (
    ParseError, RelationVerdict, canonical_json, field, hexb, load_canonical,
    reject, unhex,
)

BACKEND = "transparent-v1"


class UnknownRelation(KeyError):
    pass


class RelationRejected(Exception):
    def __init__(self, verdict: RelationVerdict):
        super().__init__(f"{verdict.reason}: {verdict.detail}")
        self.verdict = verdict


class Relation(NamedTuple):
    parse_statement: Callable
    parse_witness: Callable
    check: Callable[..., RelationVerdict]


RELATIONS: Dict[str, Relation] = {
    liabilities.RELATION: Relation(liabilities.LiabilityStatement.from_obj, liabilities.LiabilityWitness.from_obj,
                                   liabilities.check_liability_relation),
    ethstate.ETH_RELATION: Relation(ethstate.EthReserveStatement.from_obj, ethstate.parse_eth_witness,
                                    ethstate.check_eth_min_balance_relation),
    ethstate.ERC20_RELATION: Relation(ethstate.Erc20ReserveStatement.from_obj, ethstate.Erc20Witness.from_obj,
                                      ethstate.check_erc20_min_balance_relation),
    btcstate.RELATION: Relation(btcstate.BtcReserveStatement.from_obj, btcstate.BtcReserveWitness.from_obj,
                                btcstate.check_btc_reserve_relation),
    solvency.RELATION: Relation(solvency.SolvencyStatement.from_obj, solvency.SolvencyWitness.from_obj,
                                solvency.check_solvency_relation),
}
RESERVE_RELATIONS = (ethstate.ETH_RELATION, ethstate.ERC20_RELATION, btcstate.RELATION)


@dataclass(frozen=True)
class Attestation:
    relation: str
    statement_digest: bytes
    backend: str
    payload: bytes

    def to_dict(self) -> dict:
        return {"relation": self.relation, "backend": self.backend,
                "statement_digest_hex": hexb(self.statement_digest),
                "payload_base64": base64.b64encode(self.payload).decode()}

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "Attestation":
        try:
            payload = base64.b64decode(field(obj, "payload_base64"), validate=True)
        except (ValueError, TypeError) as exc:
            raise ParseError("payload is not base64") from exc
        return cls(field(obj, "relation"), unhex(field(obj, "statement_digest_hex"), 32, "statement_digest_hex"),
                   field(obj, "backend"), payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Attestation":
        try:
            return cls.from_dict(json.loads(data))
        except ValueError as exc:
            raise ParseError(f"attestation is not valid JSON: {exc}") from exc


def _lookup(relation: str) -> Relation:
    try:
        return RELATIONS[relation]
    except (KeyError, TypeError):
        raise UnknownRelation(relation) from None


def parse_statement(relation: str, statement: bytes):
    return _lookup(relation).parse_statement(load_canonical(statement))


def _parse_pair(rel: Relation, statement: bytes, witness: bytes):
    try:
        return rel.parse_statement(load_canonical(statement)), rel.parse_witness(load_canonical(witness))
    except ParseError:
        raise
    except (ValueError, TypeError, AttributeError) as exc:
        raise ParseError(str(exc)) from exc


def prove(relation: str, statement: bytes, witness: bytes) -> Attestation:
    rel = _lookup(relation)
    stmt, wit = _parse_pair(rel, statement, witness)
    verdict = rel.check(stmt, wit)
    if not verdict:
        raise RelationRejected(verdict)
    return Attestation(relation, keccak256(statement), BACKEND, bytes(witness))


def verify(statement: bytes, attestation: Attestation) -> RelationVerdict:
    if attestation.relation not in RELATIONS:
        return reject("UnknownRelation", f"relation {attestation.relation!r} is not registered")
    if attestation.backend != BACKEND:
        return reject("UnknownBackend", f"backend {attestation.backend!r} is not available")
    if keccak256(statement) != attestation.statement_digest:
        return reject("StatementMismatch", "attestation is bound to different statement bytes")
    rel = RELATIONS[attestation.relation]
    try:
        stmt, wit = _parse_pair(rel, statement, attestation.payload)
    except ParseError as exc:
        return reject("ParseError", str(exc))
    return rel.check(stmt, wit)
