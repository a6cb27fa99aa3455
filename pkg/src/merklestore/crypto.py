"""Authenticated encryption for block data and keyed hashing for tree nodes.

Blocks are sealed with AES-GCM (128-bit key); the block id rides along as
associated data so a sealed block replayed at a different address fails to
open. Internal node digests are keyed SHA-256 (HMAC) over the ordered
concatenation of child digests. A leaf digest is the 16-byte GCM tag
left-aligned in a 32-byte field so every tree level carries fixed-width
digests.

``FastCryptoProvider`` swaps the internal-node hash for keyed BLAKE2b, which
is noticeably faster and keeps structural tests and count-based benchmarks
snappy. Block sealing stays AES-GCM in both providers.
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .core import DEFAULT_BLOCK_SIZE, DIGEST_SIZE, IV_SIZE, MAC_SIZE, UsageError

BLOCK_KEY_SIZE = 16
NODE_KEY_SIZE = 32
KEY_FILE_SIZE = BLOCK_KEY_SIZE + NODE_KEY_SIZE


class AuthenticityError(Exception):
    """A sealed block failed authentication (corruption or relocation)."""


@dataclass(frozen=True)
class KeyMaterial:
    block_key: bytes
    node_key: bytes

    def __post_init__(self) -> None:
        if len(self.block_key) != BLOCK_KEY_SIZE:
            raise UsageError(f"block key must be {BLOCK_KEY_SIZE} bytes")
        if len(self.node_key) != NODE_KEY_SIZE:
            raise UsageError(f"node key must be {NODE_KEY_SIZE} bytes")
        if self.block_key == self.node_key[:BLOCK_KEY_SIZE]:
            raise UsageError("block and node keys must be distinct")

    def pack(self) -> bytes:
        return self.block_key + self.node_key

    @classmethod
    def unpack(cls, raw: bytes) -> "KeyMaterial":
        if len(raw) != KEY_FILE_SIZE:
            raise UsageError(f"key file must be {KEY_FILE_SIZE} raw bytes, got {len(raw)}")
        return cls(raw[:BLOCK_KEY_SIZE], raw[BLOCK_KEY_SIZE:])

    @classmethod
    def generate(cls, rng=None) -> "KeyMaterial":
        if rng is None:
            raw = os.urandom(KEY_FILE_SIZE)
        else:
            raw = rng.randbytes(KEY_FILE_SIZE)
        return cls.unpack(raw)


def load_key_file(path) -> KeyMaterial:
    with open(path, "rb") as fh:
        return KeyMaterial.unpack(fh.read())


def write_key_file(path, keys: KeyMaterial) -> None:
    with open(path, "wb") as fh:
        fh.write(keys.pack())


@dataclass(frozen=True)
class SealedBlock:
    ciphertext: bytes
    iv: bytes
    mac: bytes

    def __post_init__(self) -> None:
        if len(self.iv) != IV_SIZE:
            raise UsageError(f"iv must be {IV_SIZE} bytes")
        if len(self.mac) != MAC_SIZE:
            raise UsageError(f"mac must be {MAC_SIZE} bytes")


def leaf_digest(sealed: SealedBlock) -> bytes:
    """Widen the 16-byte GCM tag into the tree's 32-byte digest slot."""
    return sealed.mac + b"\x00" * (DIGEST_SIZE - MAC_SIZE)


def mac_from_leaf_digest(digest: bytes) -> bytes:
    return digest[:MAC_SIZE]


def _block_aad(block: int) -> bytes:
    return block.to_bytes(8, "little")


class CryptoProvider:
    """Production keying: AES-GCM for blocks, HMAC-SHA256 for node digests."""

    def __init__(self, keys: KeyMaterial, block_size: int = DEFAULT_BLOCK_SIZE):
        self.keys = keys
        self.block_size = block_size
        self._aead = AESGCM(keys.block_key)
        # hmac.copy() skips rehashing the padded key block on every node digest.
        self._hmac_base = hmac.new(keys.node_key, digestmod=hashlib.sha256)

    def seal_block(self, block: int, plaintext: bytes, iv: bytes) -> SealedBlock:
        if len(plaintext) != self.block_size:
            raise UsageError(
                f"plaintext must be exactly {self.block_size} bytes, got {len(plaintext)}"
            )
        if len(iv) != IV_SIZE:
            raise UsageError(f"iv must be {IV_SIZE} bytes")
        out = self._aead.encrypt(iv, plaintext, _block_aad(block))
        return SealedBlock(out[:-MAC_SIZE], iv, out[-MAC_SIZE:])

    def open_block(self, block: int, sealed: SealedBlock) -> bytes:
        try:
            return self._aead.decrypt(
                sealed.iv, sealed.ciphertext + sealed.mac, _block_aad(block)
            )
        except InvalidTag as exc:
            raise AuthenticityError(f"block {block} failed authentication") from exc

    def node_digest(self, children: list[bytes]) -> bytes:
        if len(children) < 2:
            raise UsageError("node digest needs at least two child digests")
        h = self._hmac_base.copy()
        for child in children:
            h.update(child)
        return h.digest()


class FastCryptoProvider(CryptoProvider):
    """Keyed-BLAKE2b node hashing for fast structural tests and benchmarks."""

    def node_digest(self, children: list[bytes]) -> bytes:
        if len(children) < 2:
            raise UsageError("node digest needs at least two child digests")
        return hashlib.blake2b(
            b"".join(children), key=self.keys.node_key, digest_size=DIGEST_SIZE
        ).digest()
