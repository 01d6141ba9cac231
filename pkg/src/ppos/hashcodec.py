"""Hash primitives and the RLP codec.

Everything downstream (trees, trie proofs, headers, statements) is built on
these byte-level conventions, so the decoder is strict: any encoding that is
not the unique canonical form of its value is rejected.
"""

from __future__ import annotations

import hashlib
from typing import List, Union

from Crypto.Hash import RIPEMD160, keccak

RlpItem = Union[bytes, List["RlpItem"]]

MAX_SCALAR_BYTES = 32


class MalformedRlp(ValueError):
    pass


def keccak256(data: bytes) -> bytes:
    # Original Keccak padding (Ethereum), not FIPS-202 SHA3-256.
    return keccak.new(data=bytes(data), digest_bits=256).digest()


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256d(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def hash160(data: bytes) -> bytes:
    return RIPEMD160.new(hashlib.sha256(data).digest()).digest()


EMPTY_KECCAK = keccak256(b"")
EMPTY_TRIE_ROOT = keccak256(b"\x80")


def as_digest(value: bytes, what: str = "digest") -> bytes:
    value = bytes(value)
    if len(value) != 32:
        raise ValueError(f"{what} must be 32 bytes, got {len(value)}")
    return value


# -- scalars -----------------------------------------------------------------

def int_to_be(n: int) -> bytes:
    """Minimal big-endian encoding; zero is the empty string."""
    if n < 0:
        raise ValueError("negative scalar")
    return n.to_bytes((n.bit_length() + 7) // 8, "big")


def be_to_int(data: bytes, max_len: int = MAX_SCALAR_BYTES) -> int:
    """Parse a canonical RLP scalar: no leading zero bytes, at most max_len bytes."""
    if len(data) > max_len:
        raise MalformedRlp(f"scalar wider than {max_len} bytes")
    if data[:1] == b"\x00":
        raise MalformedRlp("scalar has leading zero byte")
    return int.from_bytes(data, "big")


# -- encoding ----------------------------------------------------------------

def _length_prefix(length: int, offset: int) -> bytes:
    if length < 56:
        return bytes([offset + length])
    len_bytes = int_to_be(length)
    if len(len_bytes) > 8:
        raise ValueError("RLP payload too long")
    return bytes([offset + 55 + len(len_bytes)]) + len_bytes


def rlp_encode(item: RlpItem) -> bytes:
    if isinstance(item, (bytes, bytearray, memoryview)):
        item = bytes(item)
        if len(item) == 1 and item[0] < 0x80:
            return item
        return _length_prefix(len(item), 0x80) + item
    if isinstance(item, (list, tuple)):
        payload = b"".join(rlp_encode(x) for x in item)
        return _length_prefix(len(payload), 0xC0) + payload
    raise TypeError(f"cannot RLP-encode {type(item).__name__}")


# -- decoding ----------------------------------------------------------------

def _decode_at(data: bytes, pos: int):
    """Decode one item starting at pos; return (item, next_pos)."""
    if pos >= len(data):
        raise MalformedRlp("truncated input")
    b0 = data[pos]
    if b0 < 0x80:
        return data[pos:pos + 1], pos + 1

    if b0 < 0xB8:
        length = b0 - 0x80
        start = pos + 1
        end = start + length
        if end > len(data):
            raise MalformedRlp("truncated string")
        if length == 1 and data[start] < 0x80:
            raise MalformedRlp("single byte below 0x80 must encode as itself")
        return data[start:end], end

    if b0 < 0xC0:
        length, start = _long_length(data, pos, b0 - 0xB7)
        end = start + length
        if end > len(data):
            raise MalformedRlp("truncated string")
        return data[start:end], end

    if b0 < 0xF8:
        length = b0 - 0xC0
        start = pos + 1
    else:
        length, start = _long_length(data, pos, b0 - 0xF7)
    end = start + length
    if end > len(data):
        raise MalformedRlp("truncated list")
    items = []
    cur = start
    while cur < end:
        item, cur = _decode_at(data, cur)
        if cur > end:
            raise MalformedRlp("list element overruns list payload")
        items.append(item)
    return items, end


def _long_length(data: bytes, pos: int, len_of_len: int):
    start = pos + 1
    end = start + len_of_len
    if end > len(data):
        raise MalformedRlp("truncated length")
    if data[start] == 0:
        raise MalformedRlp("length has leading zero byte")
    length = int.from_bytes(data[start:end], "big")
    if length < 56:
        raise MalformedRlp("long-form length used for short payload")
    return length, end


def rlp_decode(data: bytes) -> RlpItem:
    data = bytes(data)
    if not data:
        raise MalformedRlp("empty input")
    item, end = _decode_at(data, 0)
    if end != len(data):
        raise MalformedRlp(f"{len(data) - end} trailing bytes")
    return item
