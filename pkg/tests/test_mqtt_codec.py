import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hearthwire.mqtt import packets as pk

# Hand-computed per the 3.1.1 encoding tables: value -> wire bytes.
VARINT_FIXTURES = [
    (0, "00"),
    (1, "01"),
    (127, "7f"),
    (128, "8001"),
    (321, "c102"),
    (16383, "ff7f"),
    (16384, "808001"),
    (2097151, "ffff7f"),
    (2097152, "80808001"),
    (268435455, "ffffff7f"),
]

WIRE_FIXTURES = [
    (pk.Pingreq(), "c000"),
    (pk.Connack(session_present=False, return_code=0), "20020000"),
    # QoS-0 PUBLISH, topic a/b, payload x: 0x30, len 6, topic len 3, "a/b", "x"
    (pk.Publish(topic="a/b", payload=b"x"), "30060003612f6278"),
]


class TestVarint:
    @pytest.mark.parametrize("value,hexbytes", VARINT_FIXTURES)
    def test_encode_fixtures(self, value, hexbytes):
        assert pk.encode_varint(value).hex() == hexbytes

    @pytest.mark.parametrize("value,hexbytes", VARINT_FIXTURES)
    def test_decode_fixtures(self, value, hexbytes):
        raw = bytes.fromhex(hexbytes)
        assert pk.decode_varint(raw, 0) == (value, len(raw))

    def test_boundary_roundtrip_exhaustive(self):
        boundaries = [0, 1, 127, 128, 16383, 16384, 2097151, 2097152, 268435455]
        near = {b + d for b in boundaries for d in (-2, -1, 0, 1, 2)}
        for value in sorted(v for v in near if 0 <= v <= pk.MAX_REMAINING_LENGTH):
            encoded = pk.encode_varint(value)
            assert pk.decode_varint(encoded, 0) == (value, len(encoded))

    @given(st.integers(min_value=0, max_value=pk.MAX_REMAINING_LENGTH))
    def test_roundtrip_randomized(self, value):
        encoded = pk.encode_varint(value)
        assert pk.decode_varint(encoded, 0) == (value, len(encoded))

    def test_fifth_continuation_byte_rejected(self):
        with pytest.raises(pk.ProtocolError):
            pk.decode_varint(b"\xff\xff\xff\xff\x01", 0)

    def test_partial_returns_none(self):
        assert pk.decode_varint(b"\x80", 0) is None
        assert pk.decode_varint(b"", 0) is None

    def test_out_of_range_encode(self):
        with pytest.raises(pk.ProtocolError):
            pk.encode_varint(pk.MAX_REMAINING_LENGTH + 1)
        with pytest.raises(pk.ProtocolError):
            pk.encode_varint(-1)


class TestWireFixtures:
    @pytest.mark.parametrize("packet,hexbytes", WIRE_FIXTURES)
    def test_encode(self, packet, hexbytes):
        assert pk.encode_packet(packet).hex() == hexbytes

    @pytest.mark.parametrize("packet,hexbytes", WIRE_FIXTURES)
    def test_decode(self, packet, hexbytes):
        raw = bytes.fromhex(hexbytes)
        assert pk.decode_packet(raw) == (packet, len(raw))


def packets_strategy():
    topic = st.from_regex(r"[a-z][a-z0-9/_]{0,20}", fullmatch=True).filter(
        lambda t: "//" not in t and not t.endswith("/")
    )
    topic_filter = st.one_of(topic, topic.map(lambda t: t + "/#"), st.just("#"), st.just("+/+"))
    pid = st.integers(min_value=1, max_value=0xFFFF)
    payload = st.binary(max_size=64)
    qos01 = st.integers(min_value=0, max_value=1)
    return st.one_of(
        st.builds(
            pk.Connect,
            client_id=st.from_regex(r"[a-z0-9_-]{1,23}", fullmatch=True),
            clean_session=st.booleans(),
            keepalive=st.integers(min_value=0, max_value=0xFFFF),
            will_topic=st.none() | topic,
            will_payload=payload,
            will_qos=qos01,
            will_retain=st.booleans(),
            username=st.none() | st.just("user"),
        ).map(_fix_connect),
        st.builds(
            pk.Connack,
            session_present=st.booleans(),
            return_code=st.integers(min_value=0, max_value=5),
        ),
        st.builds(
            pk.Publish,
            topic=topic,
            payload=payload,
            qos=qos01,
            retain=st.booleans(),
            dup=st.booleans(),
            packet_id=pid,
        ).map(_fix_publish),
        st.builds(pk.Puback, packet_id=pid),
        st.builds(
            pk.Subscribe,
            packet_id=pid,
            topics=st.lists(
                st.tuples(topic_filter, st.integers(min_value=0, max_value=2)),
                min_size=1,
                max_size=4,
            ).map(tuple),
        ),
        st.builds(
            pk.Suback,
            packet_id=pid,
            return_codes=st.lists(
                st.sampled_from([0, 1, 2, 0x80]), min_size=1, max_size=4
            ).map(tuple),
        ),
        st.builds(
            pk.Unsubscribe,
            packet_id=pid,
            topics=st.lists(topic_filter, min_size=1, max_size=4).map(tuple),
        ),
        st.builds(pk.Unsuback, packet_id=pid),
        st.just(pk.Pingreq()),
        st.just(pk.Pingresp()),
        st.just(pk.Disconnect()),
    )


def _fix_connect(c: pk.Connect) -> pk.Connect:
    # will qos/retain only meaningful alongside a will topic; dup combos decode
    # back to defaults otherwise and would break the identity check
    if c.will_topic is None:
        return pk.Connect(
            client_id=c.client_id,
            clean_session=c.clean_session,
            keepalive=c.keepalive,
            username=c.username,
        )
    return c


def _fix_publish(p: pk.Publish) -> pk.Publish:
    if p.qos == 0:
        return pk.Publish(
            topic=p.topic, payload=p.payload, qos=0, retain=p.retain, dup=p.dup, packet_id=None
        )
    return p


class TestRoundTrip:
    @given(packet=packets_strategy())
    @settings(max_examples=300)
    def test_roundtrip_identity(self, packet):
        wire = pk.encode_packet(packet)
        assert pk.decode_packet(wire) == (packet, len(wire))

    @given(packet=packets_strategy(), trailing=st.binary(min_size=0, max_size=8))
    @settings(max_examples=100)
    def test_consumed_ignores_trailing_bytes(self, packet, trailing):
        wire = pk.encode_packet(packet)
        decoded, consumed = pk.decode_packet(wire + trailing)
        assert decoded == packet
        assert consumed == len(wire)

    @given(packet=packets_strategy())
    @settings(max_examples=100)
    def test_incremental_prefixes_need_more(self, packet):
        wire = pk.encode_packet(packet)
        for cut in range(len(wire)):
            result = pk.decode_packet(wire[:cut])
            assert result is None

    def test_bulk_randomized_roundtrip(self):
        """10^4 random packets through encode/decode, exact identity."""
        rng = random.Random(311)
        count = 0
        for packet in iter_random_packets(rng, 10_000):
            wire = pk.encode_packet(packet)
            assert pk.decode_packet(wire) == (packet, len(wire))
            count += 1
        assert count == 10_000


def iter_random_packets(rng: random.Random, n: int):
    """Plain-random packet generator for high-volume roundtrip sweeps."""
    topics = ["a", "a/b", "home/room/dev", "x/y/z/w", "t0"]
    filters = topics + ["a/#", "+/+", "#", "home/+/dev"]
    for _ in range(n):
        choice = rng.randrange(11)
        pid = rng.randint(1, 0xFFFF)
        if choice == 0:
            yield pk.Connect(
                client_id=f"c{rng.randint(0, 999)}",
                clean_session=rng.random() < 0.5,
                keepalive=rng.randint(0, 600),
            )
        elif choice == 1:
            yield pk.Connack(
                session_present=rng.random() < 0.5, return_code=rng.randint(0, 5)
            )
        elif choice == 2:
            qos = rng.randint(0, 1)
            yield pk.Publish(
                topic=rng.choice(topics),
                payload=rng.randbytes(rng.randint(0, 100)),
                qos=qos,
                retain=rng.random() < 0.5,
                dup=qos == 1 and rng.random() < 0.5,
                packet_id=pid if qos else None,
            )
        elif choice == 3:
            yield pk.Puback(packet_id=pid)
        elif choice == 4:
            yield pk.Subscribe(
                packet_id=pid,
                topics=tuple(
                    (rng.choice(filters), rng.randint(0, 2))
                    for _ in range(rng.randint(1, 3))
                ),
            )
        elif choice == 5:
            yield pk.Suback(
                packet_id=pid,
                return_codes=tuple(
                    rng.choice([0, 1, 2, 0x80]) for _ in range(rng.randint(1, 3))
                ),
            )
        elif choice == 6:
            yield pk.Unsubscribe(
                packet_id=pid,
                topics=tuple(rng.choice(filters) for _ in range(rng.randint(1, 3))),
            )
        elif choice == 7:
            yield pk.Unsuback(packet_id=pid)
        elif choice == 8:
            yield pk.Pingreq()
        elif choice == 9:
            yield pk.Pingresp()
        else:
            yield pk.Disconnect()


class TestDecodeTotality:
    """Any byte string decodes to a packet with its exact wire length,
    reports need-more-bytes, or raises; nothing is ever silently skipped."""

    @given(st.binary(min_size=0, max_size=64))
    @settings(max_examples=500)
    def test_random_bytes_trichotomy(self, buf):
        try:
            result = pk.decode_packet(buf)
        except pk.ProtocolError:
            return
        if result is None:
            return
        packet, consumed = result
        assert 0 < consumed <= len(buf)
        # consumed is the packet's exact wire size: the prefix re-decodes
        # to the same packet and the same length
        assert pk.decode_packet(buf[:consumed]) == (packet, consumed)

    def test_random_structured_bytes(self):
        # byte soup biased toward plausible fixed headers
        rng = random.Random(1887)
        for _ in range(2000):
            buf = bytes([rng.randrange(1, 15) << 4 | rng.randrange(16)]) + rng.randbytes(
                rng.randrange(0, 24)
            )
            try:
                result = pk.decode_packet(buf)
            except pk.ProtocolError:
                continue
            if result is not None:
                packet, consumed = result
                assert consumed <= len(buf)
                assert pk.decode_packet(buf[:consumed]) == (packet, consumed)


class TestProtocolErrors:
    @pytest.mark.parametrize(
        "raw",
        [
            "0000",  # reserved type 0
            "f000",  # reserved type 15
            "50020001",  # PUBREC (QoS 2 flow)
            "62020001",  # PUBREL
            "70020001",  # PUBCOMP
            "34070003612f62000178",  # PUBLISH QoS 2
            "36070003612f62000178",  # PUBLISH QoS 3
            "30ffffffff01",  # varint longer than 4 bytes
            "2003000000",  # CONNACK with a trailing byte inside its length
            "c001ff",  # PINGREQ with nonzero remaining length
            "c400",  # PINGREQ with reserved flag bits set
            "820400010000",  # SUBSCRIBE with zero-length filter list... (pid+filter missing qos)
            "300400036121",  # PUBLISH whose topic length overruns the packet
            "30050003612b78",  # PUBLISH topic contains '+'
        ],
    )
    def test_malformed_raises(self, raw):
        with pytest.raises(pk.ProtocolError):
            pk.decode_packet(bytes.fromhex(raw))

    def test_minimal_publish_decodes(self):
        packet, consumed = pk.decode_packet(bytes.fromhex("3003000161"))
        assert packet == pk.Publish(topic="a")
        assert consumed == 5

    def test_qos2_publish_encode_rejected(self):
        with pytest.raises(pk.ProtocolError):
            pk.encode_packet(pk.Publish(topic="a", qos=2, packet_id=1))

    def test_zero_packet_id_rejected(self):
        with pytest.raises(pk.ProtocolError):
            pk.encode_packet(pk.Puback(packet_id=0))
        with pytest.raises(pk.ProtocolError):
            pk.decode_packet(bytes.fromhex("40020000"))

    def test_empty_buffer_needs_more(self):
        assert pk.decode_packet(b"") is None
        assert pk.decode_packet(b"\x30") is None
