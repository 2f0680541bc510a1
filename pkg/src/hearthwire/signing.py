"""Signed intents: canonical envelope bytes, digests, RSA keypairs, sign/verify.

An intent envelope (client id + one or more device commands + issue time) is
serialized canonically, hashed (MD5 by default, kept for parity with the
protocol this testbed reproduces; SHA-256 selectable), and the digest is
signed with the client's RSA private key using deterministic PKCS#1 v1.5.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from typing import Any

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa, utils as asym_utils

from .devices import DecodeError, DeviceCommand, command_from_wire, params_to_dict

SUPPORTED_KEY_BITS = (1024, 2048, 4096)
RSA_PUBLIC_EXPONENT = 65537

HASHES = {"md5": hashes.MD5, "sha256": hashes.SHA256}
DIGEST_SIZES = {16: "md5", 32: "sha256"}
DEFAULT_HASH = "md5"


class SigningError(Exception):
    pass


class UnsupportedKeySize(SigningError):
    pass


class MalformedSignature(SigningError):
    """Signature is not decodable or has the wrong length for the key."""


@dataclass(frozen=True)
class IntentEnvelope:
    client_id: str
    commands: tuple[DeviceCommand, ...]
    issued_at: int  # unix milliseconds

    def __post_init__(self):
        if not self.client_id:
            raise ValueError("client_id must be non-empty")
        if len(self.commands) < 1:
            raise ValueError("an intent carries at least one command")
        object.__setattr__(self, "commands", tuple(self.commands))


@dataclass(frozen=True)
class SignedIntentPacket:
    envelope: IntentEnvelope
    signature: bytes


def envelope_to_obj(envelope: IntentEnvelope) -> dict[str, Any]:
    return {
        "client_id": envelope.client_id,
        "issued_at": envelope.issued_at,
        "commands": [
            {"device": c.device, "params": params_to_dict(c.params)} for c in envelope.commands
        ],
    }


def envelope_from_obj(obj: dict[str, Any]) -> IntentEnvelope:
    if not isinstance(obj, dict):
        raise DecodeError("envelope must be a JSON object")
    if set(obj) != {"client_id", "issued_at", "commands"}:
        raise DecodeError(f"envelope keys must be client_id/issued_at/commands, got {sorted(obj)}")
    client_id, issued_at, commands = obj["client_id"], obj["issued_at"], obj["commands"]
    if not isinstance(client_id, str) or not client_id:
        raise DecodeError("client_id must be a non-empty string")
    if not isinstance(issued_at, int) or isinstance(issued_at, bool):
        raise DecodeError("issued_at must be an integer (unix ms)")
    if not isinstance(commands, list) or not commands:
        raise DecodeError("commands must be a non-empty array")
    parsed = []
    for entry in commands:
        if not isinstance(entry, dict) or set(entry) != {"device", "params"}:
            raise DecodeError(f"bad command entry: {entry!r}")
        parsed.append(command_from_wire(entry["device"], entry["params"]))
    return IntentEnvelope(client_id=client_id, commands=tuple(parsed), issued_at=issued_at)


def canonical_bytes(envelope: IntentEnvelope) -> bytes:
    """Deterministic encoding that is hashed and signed.

    Keys sorted lexicographically at every level, no insignificant
    whitespace, UTF-8. Two value-equal envelopes always produce identical
    bytes regardless of construction order.
    """
    return json.dumps(
        envelope_to_obj(envelope), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def md5_digest(data: bytes) -> bytes:
    return hashlib.md5(data).digest()


def intent_digest(envelope: IntentEnvelope, hash_name: str = DEFAULT_HASH) -> bytes:
    if hash_name not in HASHES:
        raise SigningError(f"unknown hash: {hash_name!r}")
    return hashlib.new(hash_name, canonical_bytes(envelope)).digest()


@dataclass(frozen=True)
class RsaKeyPair:
    bits: int
    private_key: rsa.RSAPrivateKey
    public_key: rsa.RSAPublicKey


def generate_keypair(bits: int) -> RsaKeyPair:
    if bits not in SUPPORTED_KEY_BITS:
        raise UnsupportedKeySize(f"key size must be one of {SUPPORTED_KEY_BITS}, got {bits}")
    private_key = rsa.generate_private_key(public_exponent=RSA_PUBLIC_EXPONENT, key_size=bits)
    return RsaKeyPair(bits=bits, private_key=private_key, public_key=private_key.public_key())


def sign_digest(digest: bytes, private_key: rsa.RSAPrivateKey) -> bytes:
    hash_name = DIGEST_SIZES.get(len(digest))
    if hash_name is None:
        raise SigningError(f"unsupported digest length {len(digest)}")
    return private_key.sign(
        digest, padding.PKCS1v15(), asym_utils.Prehashed(HASHES[hash_name]())
    )


def verify_digest(digest: bytes, signature: bytes, public_key: rsa.RSAPublicKey) -> bool:
    """True iff the signature opens to the digest under the public key.

    Raises MalformedSignature when the signature cannot even be interpreted
    (wrong length for the modulus), as distinct from a clean mismatch.
    """
    hash_name = DIGEST_SIZES.get(len(digest))
    if hash_name is None:
        raise SigningError(f"unsupported digest length {len(digest)}")
    if len(signature) != public_key.key_size // 8:
        raise MalformedSignature(
            f"signature is {len(signature)} bytes, key expects {public_key.key_size // 8}"
        )
    try:
        public_key.verify(
            signature, digest, padding.PKCS1v15(), asym_utils.Prehashed(HASHES[hash_name]())
        )
        return True
    except InvalidSignature:
        return False


def sign_intent(
    envelope: IntentEnvelope, private_key: rsa.RSAPrivateKey, hash_name: str = DEFAULT_HASH
) -> SignedIntentPacket:
    signature = sign_digest(intent_digest(envelope, hash_name), private_key)
    return SignedIntentPacket(envelope=envelope, signature=signature)


def verify_intent(
    packet: SignedIntentPacket, public_key: rsa.RSAPublicKey, hash_name: str = DEFAULT_HASH
) -> bool:
    return verify_digest(intent_digest(packet.envelope, hash_name), packet.signature, public_key)


# Wire form (HTTP body): {"envelope": {...}, "signature": "<base64>"}

def packet_to_obj(packet: SignedIntentPacket) -> dict[str, Any]:
    return {
        "envelope": envelope_to_obj(packet.envelope),
        "signature": base64.b64encode(packet.signature).decode("ascii"),
    }


def packet_to_wire(packet: SignedIntentPacket) -> bytes:
    return json.dumps(packet_to_obj(packet), separators=(",", ":")).encode("utf-8")


def packet_from_obj(obj: dict[str, Any]) -> SignedIntentPacket:
    if not isinstance(obj, dict) or set(obj) != {"envelope", "signature"}:
        raise DecodeError("packet must carry exactly envelope and signature")
    envelope = envelope_from_obj(obj["envelope"])
    sig_b64 = obj["signature"]
    if not isinstance(sig_b64, str):
        raise DecodeError("signature must be a base64 string")
    try:
        signature = base64.b64decode(sig_b64, validate=True)
    except Exception:
        raise MalformedSignature("signature is not valid base64") from None
    return SignedIntentPacket(envelope=envelope, signature=signature)


def packet_from_wire(raw: bytes) -> SignedIntentPacket:
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"packet is not JSON: {exc}") from None
    return packet_from_obj(obj)


# Key material serialization: PEM files on disk, (n, e) JSON objects on the
# KDC wire.

def public_key_to_obj(public_key: rsa.RSAPublicKey) -> dict[str, Any]:
    numbers = public_key.public_numbers()
    return {"n": format(numbers.n, "x"), "e": numbers.e}


def public_key_from_obj(obj: dict[str, Any]) -> rsa.RSAPublicKey:
    try:
        n = int(obj["n"], 16)
        e = obj["e"]
        if not isinstance(e, int) or isinstance(e, bool) or n <= 0 or e <= 0:
            raise ValueError("n and e must be positive integers")
        return rsa.RSAPublicNumbers(e=e, n=n).public_key()
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"bad public key object: {exc}") from None


def private_key_pem(private_key: rsa.RSAPrivateKey) -> bytes:
    return private_key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )


def public_key_pem(public_key: rsa.RSAPublicKey) -> bytes:
    return public_key.public_bytes(
        serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def load_private_key(path: str) -> rsa.RSAPrivateKey:
    with open(path, "rb") as fh:
        key = serialization.load_pem_private_key(fh.read(), password=None)
    if not isinstance(key, rsa.RSAPrivateKey):
        raise SigningError(f"{path} is not an RSA private key")
    return key


def load_public_key(path: str) -> rsa.RSAPublicKey:
    with open(path, "rb") as fh:
        key = serialization.load_pem_public_key(fh.read())
    if not isinstance(key, rsa.RSAPublicKey):
        raise SigningError(f"{path} is not an RSA public key")
    return key
