// Minimal MQTT 3.1.1 client-side codec, QoS 0 only: what the dashboard needs
// to speak to the broker over a binary WebSocket.

export const CONNECT = 1;
export const CONNACK = 2;
export const PUBLISH = 3;
export const SUBSCRIBE = 8;
export const SUBACK = 9;
export const PINGREQ = 12;
export const PINGRESP = 13;
export const DISCONNECT = 14;

export interface DecodedPacket {
  type: number;
  // CONNACK
  returnCode?: number;
  sessionPresent?: boolean;
  // PUBLISH
  topic?: string;
  payload?: Uint8Array;
  // SUBACK
  packetId?: number;
  grantedQos?: number[];
  consumed: number;
}

export function encodeVarint(n: number): number[] {
  if (n < 0 || n > 268_435_455) throw new Error(`remaining length ${n} out of range`);
  const out: number[] = [];
  do {
    let byte = n % 128;
    n = Math.floor(n / 128);
    if (n > 0) byte |= 0x80;
    out.push(byte);
  } while (n > 0);
  return out;
}

export function decodeVarint(
  buf: Uint8Array,
  offset: number,
): { value: number; consumed: number } | null {
  let value = 0;
  let multiplier = 1;
  for (let i = 0; i < 4; i++) {
    if (offset + i >= buf.length) return null;
    const byte = buf[offset + i];
    value += (byte & 0x7f) * multiplier;
    if ((byte & 0x80) === 0) return { value, consumed: i + 1 };
    multiplier *= 128;
  }
  throw new Error("remaining-length varint exceeds 4 bytes");
}

const utf8 = new TextEncoder();
const utf8Decode = new TextDecoder();

function encodeString(s: string): number[] {
  const bytes = utf8.encode(s);
  return [bytes.length >> 8, bytes.length & 0xff, ...bytes];
}

function packet(type: number, flags: number, body: number[]): Uint8Array {
  return Uint8Array.from([(type << 4) | flags, ...encodeVarint(body.length), ...body]);
}

export function encodeConnect(clientId: string, keepalive = 60): Uint8Array {
  const body = [
    ...encodeString("MQTT"),
    4, // protocol level
    0x02, // clean session
    keepalive >> 8,
    keepalive & 0xff,
    ...encodeString(clientId),
  ];
  return packet(CONNECT, 0, body);
}

export function encodePublish(topic: string, payload: Uint8Array): Uint8Array {
  return packet(PUBLISH, 0, [...encodeString(topic), ...payload]);
}

export function encodeSubscribe(packetId: number, filters: string[]): Uint8Array {
  const body = [packetId >> 8, packetId & 0xff];
  for (const filter of filters) body.push(...encodeString(filter), 0); // max QoS 0
  return packet(SUBSCRIBE, 0x02, body);
}

export function encodePingreq(): Uint8Array {
  return packet(PINGREQ, 0, []);
}

export function encodeDisconnect(): Uint8Array {
  return packet(DISCONNECT, 0, []);
}

// Decodes one broker->client packet from the head of buf, or null if more
// bytes are needed. Unknown-but-valid packets decode to their bare type.
export function decodePacket(buf: Uint8Array): DecodedPacket | null {
  if (buf.length < 1) return null;
  const type = buf[0] >> 4;
  const flags = buf[0] & 0x0f;
  const header = decodeVarint(buf, 1);
  if (header === null) return null;
  const total = 1 + header.consumed + header.value;
  if (buf.length < total) return null;
  const body = buf.subarray(1 + header.consumed, total);

  if (type === CONNACK) {
    if (body.length !== 2) throw new Error("malformed CONNACK");
    return {
      type,
      sessionPresent: (body[0] & 0x01) === 1,
      returnCode: body[1],
      consumed: total,
    };
  }
  if (type === PUBLISH) {
    const qos = (flags >> 1) & 0x03;
    if (body.length < 2) throw new Error("malformed PUBLISH");
    const topicLen = (body[0] << 8) | body[1];
    let pos = 2 + topicLen;
    if (pos > body.length) throw new Error("malformed PUBLISH topic");
    const topic = utf8Decode.decode(body.subarray(2, pos));
    if (qos > 0) pos += 2; // packet id (we never subscribe above QoS 0, but tolerate)
    return { type, topic, payload: body.subarray(pos), consumed: total };
  }
  if (type === SUBACK) {
    if (body.length < 3) throw new Error("malformed SUBACK");
    return {
      type,
      packetId: (body[0] << 8) | body[1],
      grantedQos: Array.from(body.subarray(2)),
      consumed: total,
    };
  }
  return { type, consumed: total };
}
