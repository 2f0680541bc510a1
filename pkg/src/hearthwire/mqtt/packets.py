"""MQTT 3.1.1 control-packet codec (QoS 0/1 subset).

decode_packet is incremental: it returns None until a complete packet is
buffered, then the packet plus the exact number of wire bytes consumed.
Malformed input raises ProtocolError and the connection must be closed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Union

MAX_REMAINING_LENGTH = 268_435_455  # 4-byte varint ceiling

CONNECT, CONNACK, PUBLISH, PUBACK = 1, 2, 3, 4
PUBREC, PUBREL, PUBCOMP = 5, 6, 7  # QoS 2 flow, unsupported
SUBSCRIBE, SUBACK, UNSUBSCRIBE, UNSUBACK = 8, 9, 10, 11
PINGREQ, PINGRESP, DISCONNECT = 12, 13, 14

CONNACK_ACCEPTED = 0
CONNACK_REFUSED_PROTOCOL = 1
CONNACK_REFUSED_IDENTIFIER = 2
CONNACK_REFUSED_UNAVAILABLE = 3
CONNACK_REFUSED_BAD_CREDENTIALS = 4
CONNACK_REFUSED_NOT_AUTHORIZED = 5

SUBACK_FAILURE = 0x80


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class Connect:
    client_id: str
    clean_session: bool = True
    keepalive: int = 60
    protocol_name: str = "MQTT"
    protocol_level: int = 4
    will_topic: Optional[str] = None
    will_payload: bytes = b""
    will_qos: int = 0
    will_retain: bool = False
    username: Optional[str] = None
    password: Optional[bytes] = None


@dataclass(frozen=True)
class Connack:
    session_present: bool = False
    return_code: int = CONNACK_ACCEPTED


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes = b""
    qos: int = 0
    retain: bool = False
    dup: bool = False
    packet_id: Optional[int] = None  # required iff qos > 0


@dataclass(frozen=True)
class Puback:
    packet_id: int


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    topics: tuple[tuple[str, int], ...] = field(default_factory=tuple)  # (filter, max qos)


@dataclass(frozen=True)
class Suback:
    packet_id: int
    return_codes: tuple[int, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class Unsubscribe:
    packet_id: int
    topics: tuple[str, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class Unsuback:
    packet_id: int


@dataclass(frozen=True)
class Pingreq:
    pass


@dataclass(frozen=True)
class Pingresp:
    pass


@dataclass(frozen=True)
class Disconnect:
    pass


MqttPacket = Union[
    Connect,
    Connack,
    Publish,
    Puback,
    Subscribe,
    Suback,
    Unsubscribe,
    Unsuback,
    Pingreq,
    Pingresp,
    Disconnect,
]


def encode_varint(n: int) -> bytes:
    if not (0 <= n <= MAX_REMAINING_LENGTH):
        raise ProtocolError(f"remaining length {n} out of range")
    out = bytearray()
    while True:
        byte = n % 128
        n //= 128
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf: bytes, offset: int) -> Optional[tuple[int, int]]:
    """(value, bytes consumed) or None if the buffer ends mid-varint."""
    value = 0
    multiplier = 1
    for i in range(4):
        if offset + i >= len(buf):
            return None
        byte = buf[offset + i]
        value += (byte & 0x7F) * multiplier
        if not byte & 0x80:
            return value, i + 1
        multiplier *= 128
    raise ProtocolError("remaining-length varint exceeds 4 bytes")


def _encode_string(s: str) -> bytes:
    data = s.encode("utf-8")
    if len(data) > 0xFFFF:
        raise ProtocolError("string too long for a 2-byte length prefix")
    return struct.pack("!H", len(data)) + data


def _encode_bytes(b: bytes) -> bytes:
    if len(b) > 0xFFFF:
        raise ProtocolError("byte field too long for a 2-byte length prefix")
    return struct.pack("!H", len(b)) + b


class _Reader:
    """Bounded cursor over one packet's variable header + payload."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ProtocolError("packet truncated inside its declared length")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("!H", self.take(2))[0]

    def string(self) -> str:
        raw = self.take(self.u16())
        try:
            s = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ProtocolError("string field is not valid UTF-8") from None
        if "\x00" in s:
            raise ProtocolError("string field contains U+0000")
        return s

    def blob(self) -> bytes:
        return self.take(self.u16())

    def rest(self) -> bytes:
        chunk = self.data[self.pos :]
        self.pos = len(self.data)
        return chunk

    def done(self) -> bool:
        return self.pos == len(self.data)


def _require_pid(pid: int) -> int:
    if not (1 <= pid <= 0xFFFF):
        raise ProtocolError(f"packet id must be 1..65535, got {pid}")
    return pid


def encode_packet(packet: MqttPacket) -> bytes:
    ptype, flags, body = _encode_body(packet)
    return bytes([(ptype << 4) | flags]) + encode_varint(len(body)) + body


def _encode_body(packet: MqttPacket) -> tuple[int, int, bytes]:
    if isinstance(packet, Connect):
        connect_flags = 0
        if packet.clean_session:
            connect_flags |= 0x02
        if packet.will_topic is not None:
            connect_flags |= 0x04 | (packet.will_qos << 3)
            if packet.will_retain:
                connect_flags |= 0x20
        if packet.password is not None:
            connect_flags |= 0x40
        if packet.username is not None:
            connect_flags |= 0x80
        body = (
            _encode_string(packet.protocol_name)
            + bytes([packet.protocol_level, connect_flags])
            + struct.pack("!H", packet.keepalive)
            + _encode_string(packet.client_id)
        )
        if packet.will_topic is not None:
            body += _encode_string(packet.will_topic) + _encode_bytes(packet.will_payload)
        if packet.username is not None:
            body += _encode_string(packet.username)
        if packet.password is not None:
            body += _encode_bytes(packet.password)
        return CONNECT, 0, body

    if isinstance(packet, Connack):
        return CONNACK, 0, bytes([1 if packet.session_present else 0, packet.return_code])

    if isinstance(packet, Publish):
        if packet.qos not in (0, 1):
            raise ProtocolError(f"QoS {packet.qos} not supported (only 0 and 1)")
        flags = (packet.qos << 1) | (0x08 if packet.dup else 0) | (0x01 if packet.retain else 0)
        body = _encode_string(packet.topic)
        if packet.qos > 0:
            if packet.packet_id is None:
                raise ProtocolError("QoS 1 PUBLISH requires a packet id")
            body += struct.pack("!H", _require_pid(packet.packet_id))
        return PUBLISH, flags, body + packet.payload

    if isinstance(packet, Puback):
        return PUBACK, 0, struct.pack("!H", _require_pid(packet.packet_id))

    if isinstance(packet, Subscribe):
        if not packet.topics:
            raise ProtocolError("SUBSCRIBE requires at least one topic filter")
        body = struct.pack("!H", _require_pid(packet.packet_id))
        for topic_filter, qos in packet.topics:
            if qos not in (0, 1, 2):
                raise ProtocolError(f"bad requested QoS {qos}")
            body += _encode_string(topic_filter) + bytes([qos])
        return SUBSCRIBE, 0x02, body

    if isinstance(packet, Suback):
        body = struct.pack("!H", _require_pid(packet.packet_id))
        for code in packet.return_codes:
            if code not in (0x00, 0x01, 0x02, SUBACK_FAILURE):
                raise ProtocolError(f"bad SUBACK return code {code:#x}")
            body += bytes([code])
        return SUBACK, 0, body

    if isinstance(packet, Unsubscribe):
        if not packet.topics:
            raise ProtocolError("UNSUBSCRIBE requires at least one topic filter")
        body = struct.pack("!H", _require_pid(packet.packet_id))
        for topic_filter in packet.topics:
            body += _encode_string(topic_filter)
        return UNSUBSCRIBE, 0x02, body

    if isinstance(packet, Unsuback):
        return UNSUBACK, 0, struct.pack("!H", _require_pid(packet.packet_id))

    if isinstance(packet, Pingreq):
        return PINGREQ, 0, b""
    if isinstance(packet, Pingresp):
        return PINGRESP, 0, b""
    if isinstance(packet, Disconnect):
        return DISCONNECT, 0, b""
    raise TypeError(f"not an MQTT packet: {packet!r}")


def decode_packet(buf: bytes) -> Optional[tuple[MqttPacket, int]]:
    """Decode one packet from the head of buf.

    Returns (packet, consumed) on success, None while more bytes are needed,
    and raises ProtocolError on malformed input. `consumed` is always the
    packet's full wire size.
    """
    if len(buf) < 1:
        return None
    first = buf[0]
    ptype = first >> 4
    flags = first & 0x0F
    if ptype == 0 or ptype == 15:
        raise ProtocolError(f"reserved packet type {ptype}")
    if ptype in (PUBREC, PUBREL, PUBCOMP):
        raise ProtocolError("QoS 2 flow packets are not supported (QoS 0/1 only)")
    decoded = decode_varint(buf, 1)
    if decoded is None:
        return None
    remaining, varint_len = decoded
    total = 1 + varint_len + remaining
    if len(buf) < total:
        return None
    reader = _Reader(bytes(buf[1 + varint_len : total]))
    packet = _decode_body(ptype, flags, reader)
    if not isinstance(packet, Publish) and not reader.done():
        raise ProtocolError("trailing bytes inside declared packet length")
    return packet, total


def _expect_flags(flags: int, expected: int, name: str) -> None:
    if flags != expected:
        raise ProtocolError(f"{name} fixed-header flags must be {expected:#x}, got {flags:#x}")


def _decode_body(ptype: int, flags: int, r: _Reader) -> MqttPacket:
    if ptype == CONNECT:
        _expect_flags(flags, 0, "CONNECT")
        protocol_name = r.string()
        protocol_level = r.u8()
        connect_flags = r.u8()
        if connect_flags & 0x01:
            raise ProtocolError("CONNECT reserved flag bit must be zero")
        keepalive = r.u16()
        client_id = r.string()
        will_topic, will_payload, will_qos, will_retain = None, b"", 0, False
        if connect_flags & 0x04:
            will_qos = (connect_flags >> 3) & 0x03
            if will_qos == 3:
                raise ProtocolError("will QoS 3 is invalid")
            will_retain = bool(connect_flags & 0x20)
            will_topic = r.string()
            will_payload = r.blob()
        elif connect_flags & 0x38:
            raise ProtocolError("will QoS/retain set without will flag")
        username = r.string() if connect_flags & 0x80 else None
        password = r.blob() if connect_flags & 0x40 else None
        if password is not None and username is None:
            raise ProtocolError("password flag set without username flag")
        return Connect(
            client_id=client_id,
            clean_session=bool(connect_flags & 0x02),
            keepalive=keepalive,
            protocol_name=protocol_name,
            protocol_level=protocol_level,
            will_topic=will_topic,
            will_payload=will_payload,
            will_qos=will_qos,
            will_retain=will_retain,
            username=username,
            password=password,
        )

    if ptype == CONNACK:
        _expect_flags(flags, 0, "CONNACK")
        ack_flags = r.u8()
        if ack_flags & 0xFE:
            raise ProtocolError("CONNACK flags bits 1-7 must be zero")
        return_code = r.u8()
        if return_code > 5:
            raise ProtocolError(f"bad CONNACK return code {return_code}")
        return Connack(session_present=bool(ack_flags & 0x01), return_code=return_code)

    if ptype == PUBLISH:
        qos = (flags >> 1) & 0x03
        if qos == 3:
            raise ProtocolError("PUBLISH QoS 3 is malformed")
        if qos == 2:
            raise ProtocolError("QoS 2 is not supported (only 0 and 1)")
        dup = bool(flags & 0x08)
        retain = bool(flags & 0x01)
        topic = r.string()
        if not topic:
            raise ProtocolError("PUBLISH topic must be non-empty")
        if "+" in topic or "#" in topic:
            raise ProtocolError(f"PUBLISH topic may not contain wildcards: {topic!r}")
        packet_id = _require_pid(r.u16()) if qos > 0 else None
        return Publish(
            topic=topic, payload=r.rest(), qos=qos, retain=retain, dup=dup, packet_id=packet_id
        )

    if ptype == PUBACK:
        _expect_flags(flags, 0, "PUBACK")
        return Puback(packet_id=_require_pid(r.u16()))

    if ptype == SUBSCRIBE:
        _expect_flags(flags, 0x02, "SUBSCRIBE")
        packet_id = _require_pid(r.u16())
        topics = []
        while not r.done():
            topic_filter = r.string()
            qos = r.u8()
            if qos > 2:
                raise ProtocolError(f"bad requested QoS {qos}")
            topics.append((topic_filter, qos))
        if not topics:
            raise ProtocolError("SUBSCRIBE carries no topic filters")
        return Subscribe(packet_id=packet_id, topics=tuple(topics))

    if ptype == SUBACK:
        _expect_flags(flags, 0, "SUBACK")
        packet_id = _require_pid(r.u16())
        codes = tuple(r.rest())
        for code in codes:
            if code not in (0x00, 0x01, 0x02, SUBACK_FAILURE):
                raise ProtocolError(f"bad SUBACK return code {code:#x}")
        return Suback(packet_id=packet_id, return_codes=codes)

    if ptype == UNSUBSCRIBE:
        _expect_flags(flags, 0x02, "UNSUBSCRIBE")
        packet_id = _require_pid(r.u16())
        topics = []
        while not r.done():
            topics.append(r.string())
        if not topics:
            raise ProtocolError("UNSUBSCRIBE carries no topic filters")
        return Unsubscribe(packet_id=packet_id, topics=tuple(topics))

    if ptype == UNSUBACK:
        _expect_flags(flags, 0, "UNSUBACK")
        return Unsuback(packet_id=_require_pid(r.u16()))

    if ptype == PINGREQ:
        _expect_flags(flags, 0, "PINGREQ")
        return Pingreq()
    if ptype == PINGRESP:
        _expect_flags(flags, 0, "PINGRESP")
        return Pingresp()
    if ptype == DISCONNECT:
        _expect_flags(flags, 0, "DISCONNECT")
        return Disconnect()
    raise ProtocolError(f"unhandled packet type {ptype}")
