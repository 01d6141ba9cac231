"""Verdicts and canonical structured-text helpers shared by every relation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any


@dataclass(frozen=True)
class RelationVerdict:
    accepted: bool
    reason: str
    detail: str = ""

    def __post_init__(self):
        if self.accepted and self.reason != "ok":
            raise ValueError("accepted verdicts carry reason 'ok'")

    def __bool__(self):
        return self.accepted

    def to_dict(self) -> dict:
        return {"accepted": self.accepted, "reason": self.reason, "detail": self.detail}


ACCEPT = RelationVerdict(True, "ok")


def reject(reason: str, detail: str = "") -> RelationVerdict:
    return RelationVerdict(False, reason, detail)


class ParseError(ValueError):
    """Statement or witness bytes do not parse for the relation."""


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()


def load_canonical(data: bytes) -> Any:
    """Parse structured text and insist it is already in canonical form."""
    try:
        obj = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if canonical_json(obj) != bytes(data):
        raise ParseError("bytes are not in canonical form")
    return obj


def hexb(data: bytes) -> str:
    return bytes(data).hex()


def unhex(text: Any, length: int | None = None, what: str = "hex field") -> bytes:
    if not isinstance(text, str):
        raise ParseError(f"{what}: expected hex string")
    if text.startswith(("0x", "0X")):
        text = text[2:]
    try:
        out = bytes.fromhex(text)
    except ValueError as exc:
        raise ParseError(f"{what}: bad hex") from exc
    if length is not None and len(out) != length:
        raise ParseError(f"{what}: expected {length} bytes, got {len(out)}")
    return out


def field(obj: dict, key: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"missing field {key!r}")
    return obj[key]


def as_uint(value: Any, what: str, bits: int = 256) -> int:
    """Decimal-string (or int) non-negative integer below 2**bits."""
    if isinstance(value, bool):
        raise ParseError(f"{what}: not an integer")
    if isinstance(value, str):
        if not value.isdigit():
            raise ParseError(f"{what}: not a decimal integer")
        value = int(value)
    if not isinstance(value, int):
        raise ParseError(f"{what}: not an integer")
    if value < 0 or value >= 1 << bits:
        raise ParseError(f"{what}: out of range")
    return value
