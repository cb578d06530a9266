"""Coordinate encryption.

The server only ever handles 16-byte opaque blocks. Three implementations
share one small interface (``encrypt(value, axis)`` / ``decrypt(block, axis)``):

* :class:`TestCipher` - a keyed 128-bit Feistel permutation (BLAKE2b round
  function) over ``value || axis || keyed checksum``. Deterministic, and the
  default everywhere.
* :class:`AesCipher` - the same block layout enciphered with one AES-256
  block operation. Needs the ``cryptography`` package.
* :class:`StubCipher` - a positional token per (axis, first occurrence),
  used by the security harness to take the cipher out of the picture.

The axis is a tweak so equal values on different axes do not produce equal
ciphertexts.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import secrets
import struct

BLOCK = 16
KEY_BYTES = 32
INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1


class CipherError(Exception):
    pass


def generate_key() -> bytes:
    return secrets.token_bytes(KEY_BYTES)


def load_key(path: str) -> bytes:
    with open(path, "rb") as fh:
        key = fh.read()
    if len(key) != KEY_BYTES:
        raise CipherError(f"key file {path!r} must hold exactly {KEY_BYTES} bytes")
    return key


def save_key(path: str, key: bytes) -> None:
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(key)


def _check_value(value: int) -> None:
    if not INT64_MIN <= value <= INT64_MAX:
        raise CipherError(f"value {value} outside the signed 64-bit range")


class _ChecksumBlock:
    """Shared plaintext block layout: value (8, BE) | axis (2, BE) | tag (6)."""

    def __init__(self, key: bytes):
        if len(key) != KEY_BYTES:
            raise CipherError(f"key must be {KEY_BYTES} bytes")
        self._tag_key = hashlib.blake2b(key, digest_size=32, person=b"sope-tag").digest()

    def _tag(self, head: bytes) -> bytes:
        return hashlib.blake2b(head, key=self._tag_key, digest_size=6).digest()

    def _pack(self, value: int, axis: int) -> bytes:
        _check_value(value)
        head = struct.pack(">qH", value, axis)
        return head + self._tag(head)

    def _unpack(self, block: bytes, axis: int) -> int:
        head, tag = block[:10], block[10:]
        if not hmac.compare_digest(tag, self._tag(head)):
            raise CipherError("ciphertext failed authentication")
        value, got_axis = struct.unpack(">qH", head)
        if got_axis != axis:
            raise CipherError(f"ciphertext belongs to axis {got_axis}, not {axis}")
        return value


class TestCipher(_ChecksumBlock):
    """Deterministic keyed permutation; the cipher used by the test-suite."""

    __test__ = False  # keep pytest from collecting this class
    ROUNDS = 6

    def __init__(self, key: bytes):
        super().__init__(key)
        self._round_keys = [
            hashlib.blake2b(key, digest_size=32, person=b"sope-r%d" % i).digest()
            for i in range(self.ROUNDS)
        ]

    def _f(self, i: int, half: int) -> int:
        digest = hashlib.blake2b(half.to_bytes(8, "big"), key=self._round_keys[i], digest_size=8)
        return int.from_bytes(digest.digest(), "big")

    def encrypt(self, value: int, axis: int = 0) -> bytes:
        block = self._pack(value, axis)
        left = int.from_bytes(block[:8], "big")
        right = int.from_bytes(block[8:], "big")
        for i in range(self.ROUNDS):
            left, right = right, left ^ self._f(i, right)
        return left.to_bytes(8, "big") + right.to_bytes(8, "big")

    def decrypt(self, block: bytes, axis: int = 0) -> int:
        if len(block) != BLOCK:
            raise CipherError(f"ciphertext must be {BLOCK} bytes, got {len(block)}")
        left = int.from_bytes(block[:8], "big")
        right = int.from_bytes(block[8:], "big")
        for i in reversed(range(self.ROUNDS)):
            left, right = right ^ self._f(i, left), left
        return self._unpack(left.to_bytes(8, "big") + right.to_bytes(8, "big"), axis)


class AesCipher(_ChecksumBlock):
    """AES-256 over the single 16-byte block; deterministic by construction."""

    def __init__(self, key: bytes):
        super().__init__(key)
        try:
            from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise CipherError("AesCipher needs the 'cryptography' package") from exc
        self._cipher = Cipher(algorithms.AES(key), modes.ECB())

    def encrypt(self, value: int, axis: int = 0) -> bytes:
        enc = self._cipher.encryptor()
        return enc.update(self._pack(value, axis)) + enc.finalize()

    def decrypt(self, block: bytes, axis: int = 0) -> int:
        if len(block) != BLOCK:
            raise CipherError(f"ciphertext must be {BLOCK} bytes, got {len(block)}")
        dec = self._cipher.decryptor()
        return self._unpack(dec.update(block) + dec.finalize(), axis)


class StubCipher:
    """Token = per-axis index of the value's first occurrence.

    Models a cipher whose outputs carry nothing but the pattern of
    repetitions. Stateful: one instance per simulated client.
    """

    def __init__(self):
        self._tokens: dict = {}
        self._values: dict = {}
        self._counts: dict = {}

    def encrypt(self, value: int, axis: int = 0) -> bytes:
        key = (axis, value)
        token = self._tokens.get(key)
        if token is None:
            count = self._counts.get(axis, 0)
            self._counts[axis] = count + 1
            token = struct.pack(">HQ6x", axis, count)
            self._tokens[key] = token
            self._values[token] = value
        return token

    def decrypt(self, block: bytes, axis: int = 0) -> int:
        try:
            return self._values[block]
        except KeyError:
            raise CipherError("unknown stub token") from None


def make_cipher(kind: str, key: bytes = None):
    if kind == "test":
        return TestCipher(key)
    if kind == "aes":
        return AesCipher(key)
    if kind == "stub":
        return StubCipher()
    raise CipherError(f"unknown cipher kind {kind!r}")
