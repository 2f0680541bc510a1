import base64
import json
import random

import pytest

from hearthwire import devices as dv
from hearthwire import signing as sg

from conftest import random_valid_command

# RFC 1321 appendix A.5 reference digests, frozen verbatim.
RFC1321_VECTORS = [
    ("", "d41d8cd98f00b204e9800998ecf8427e"),
    ("a", "0cc175b9c0f1b6a831c399e269772661"),
    ("abc", "900150983cd24fb0d6963f7d28e17f72"),
    ("message digest", "f96b697d7cb7938d525a2f31aaf161d0"),
    ("abcdefghijklmnopqrstuvwxyz", "c3fcd3d76192e4007dfb496cca67e13b"),
    (
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789",
        "d174ab98d277d9f5a5611c2c9f419d9f",
    ),
    (
        "1234567890123456789012345678901234567890123456789012345678901234"
        "5678901234567890",
        "57edf4a22be3c955ac49da2e2107b67a",
    ),
]


@pytest.fixture(scope="module")
def keypair():
    return sg.generate_keypair(1024)


@pytest.fixture(scope="module")
def other_keypair():
    return sg.generate_keypair(1024)


def simple_envelope(issued_at=1_700_000_000_000, client="client1"):
    return sg.IntentEnvelope(
        client_id=client,
        commands=(dv.DeviceCommand("smart_bulb1", dv.BulbParams(True, "#ffffff")),),
        issued_at=issued_at,
    )


class TestCanonicalBytes:
    def test_field_order_irrelevant(self):
        a = sg.IntentEnvelope(
            client_id="c", issued_at=5,
            commands=(dv.DeviceCommand("smart_fan1", dv.FanParams(True)),),
        )
        b = sg.IntentEnvelope(
            commands=(dv.DeviceCommand("smart_fan1", dv.FanParams(True)),),
            issued_at=5, client_id="c",
        )
        assert sg.canonical_bytes(a) == sg.canonical_bytes(b)

    def test_issued_at_changes_bytes(self):
        assert sg.canonical_bytes(simple_envelope(1)) != sg.canonical_bytes(simple_envelope(2))

    def test_keys_sorted_and_compact(self):
        raw = sg.canonical_bytes(simple_envelope())
        obj = json.loads(raw)
        assert list(obj) == sorted(obj)
        assert b" " not in raw

    def test_injective_over_random_corpus(self):
        """10^4 distinct envelopes, zero canonical-bytes collisions."""
        rng = random.Random(1321)
        seen = {}
        for i in range(10_000):
            env = sg.IntentEnvelope(
                client_id=f"client{rng.randint(0, 99)}",
                commands=tuple(
                    random_valid_command(rng) for _ in range(rng.randint(1, 3))
                ),
                issued_at=rng.randint(0, 10**13),
            )
            blob = sg.canonical_bytes(env)
            if blob in seen:
                assert seen[blob] == env, "collision between distinct envelopes"
            seen[blob] = env

    def test_roundtrip_preserves_canonical_bytes(self, keypair):
        env = simple_envelope()
        packet = sg.sign_intent(env, keypair.private_key)
        decoded = sg.packet_from_wire(sg.packet_to_wire(packet))
        assert sg.canonical_bytes(decoded.envelope) == sg.canonical_bytes(env)
        assert decoded.signature == packet.signature


class TestMd5:
    @pytest.mark.parametrize("message,expected", RFC1321_VECTORS)
    def test_rfc1321_vectors(self, message, expected):
        assert sg.md5_digest(message.encode("ascii")).hex() == expected

    def test_digest_length_is_16(self):
        for n in range(0, 1001, 97):
            assert len(sg.md5_digest(b"x" * n)) == 16


class TestKeypair:
    @pytest.mark.parametrize("bits", [1024, 2048])
    def test_modulus_bit_length(self, bits):
        pair = sg.generate_keypair(bits)
        assert pair.public_key.key_size == bits
        assert pair.public_key.public_numbers().e == 65537

    @pytest.mark.parametrize("bits", [1000, 1048, 512, 0])
    def test_unsupported_sizes(self, bits):
        with pytest.raises(sg.UnsupportedKeySize):
            sg.generate_keypair(bits)

    def test_pem_roundtrip(self, keypair, tmp_path):
        priv = tmp_path / "k.pem"
        pub = tmp_path / "k.pub.pem"
        priv.write_bytes(sg.private_key_pem(keypair.private_key))
        pub.write_bytes(sg.public_key_pem(keypair.public_key))
        loaded_priv = sg.load_private_key(str(priv))
        loaded_pub = sg.load_public_key(str(pub))
        env = simple_envelope()
        packet = sg.sign_intent(env, loaded_priv)
        assert sg.verify_intent(packet, loaded_pub)

    def test_public_key_obj_roundtrip(self, keypair):
        obj = sg.public_key_to_obj(keypair.public_key)
        restored = sg.public_key_from_obj(obj)
        assert restored.public_numbers() == keypair.public_key.public_numbers()


class TestSignVerify:
    def test_roundtrip_valid(self, keypair):
        packet = sg.sign_intent(simple_envelope(), keypair.private_key)
        assert sg.verify_intent(packet, keypair.public_key) is True

    def test_signature_deterministic(self, keypair):
        env = simple_envelope()
        a = sg.sign_intent(env, keypair.private_key)
        b = sg.sign_intent(env, keypair.private_key)
        assert a.signature == b.signature

    def test_signature_length_matches_modulus(self, keypair):
        packet = sg.sign_intent(simple_envelope(), keypair.private_key)
        assert len(packet.signature) == keypair.bits // 8

    def test_wrong_key_invalid(self, keypair, other_keypair):
        packet = sg.sign_intent(simple_envelope(), keypair.private_key)
        assert sg.verify_intent(packet, other_keypair.public_key) is False

    def test_envelope_mutations_invalid(self, keypair):
        """100 random single-byte corruptions of the wire packet all rejected."""
        packet = sg.sign_intent(simple_envelope(), keypair.private_key)
        wire = sg.packet_to_wire(packet)
        rng = random.Random(99)
        rejected = 0
        tried = 0
        while tried < 100:
            pos = rng.randrange(len(wire))
            mutated = bytearray(wire)
            mutated[pos] ^= 1 << rng.randrange(8)
            mutated = bytes(mutated)
            if mutated == wire:
                continue
            tried += 1
            try:
                candidate = sg.packet_from_wire(mutated)
            except (dv.DecodeError, sg.MalformedSignature):
                rejected += 1
                continue
            try:
                if not sg.verify_intent(candidate, keypair.public_key):
                    rejected += 1
            except sg.MalformedSignature:
                rejected += 1
        assert rejected == 100

    def test_sha256_variant(self, keypair):
        env = simple_envelope()
        packet = sg.sign_intent(env, keypair.private_key, hash_name="sha256")
        assert sg.verify_intent(packet, keypair.public_key, hash_name="sha256")
        assert not sg.verify_intent(packet, keypair.public_key, hash_name="md5")

    def test_malformed_signature_distinct(self, keypair):
        packet = sg.SignedIntentPacket(envelope=simple_envelope(), signature=b"short")
        with pytest.raises(sg.MalformedSignature):
            sg.verify_intent(packet, keypair.public_key)

    def test_bad_base64_signature(self):
        obj = {
            "envelope": sg.envelope_to_obj(simple_envelope()),
            "signature": "@@not-base64@@",
        }
        with pytest.raises(sg.MalformedSignature):
            sg.packet_from_obj(obj)


class TestWireForm:
    def test_wire_shape(self, keypair):
        packet = sg.sign_intent(simple_envelope(), keypair.private_key)
        obj = json.loads(sg.packet_to_wire(packet))
        assert set(obj) == {"envelope", "signature"}
        assert set(obj["envelope"]) == {"client_id", "issued_at", "commands"}
        base64.b64decode(obj["signature"], validate=True)

    def test_composite_envelope(self, keypair):
        env = sg.IntentEnvelope(
            client_id="c1",
            commands=(
                dv.DeviceCommand("smart_bulb1", dv.BulbParams(True, "#ffffff")),
                dv.DeviceCommand("smart_fan1", dv.FanParams(True)),
            ),
            issued_at=7,
        )
        packet = sg.sign_intent(env, keypair.private_key)
        decoded = sg.packet_from_wire(sg.packet_to_wire(packet))
        assert len(decoded.envelope.commands) == 2
        assert sg.verify_intent(decoded, keypair.public_key)

    def test_empty_commands_rejected(self):
        with pytest.raises(ValueError):
            sg.IntentEnvelope(client_id="c", commands=(), issued_at=0)

    def test_empty_client_rejected(self):
        with pytest.raises(ValueError):
            sg.IntentEnvelope(
                client_id="",
                commands=(dv.DeviceCommand("smart_fan1", dv.FanParams(True)),),
                issued_at=0,
            )
