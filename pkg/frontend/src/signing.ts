// In-browser intent signing: canonical envelope JSON, MD5, and RSA PKCS#1 v1.5
// via BigInt. Matches the control plane byte-for-byte (the signature scheme is
// deterministic, so equality is testable against golden fixtures).
//
// The key file is the JSON form written by `hearthwire keygen`
// ({"n": hex, "e": int, "d": hex, "bits": int}); WebCrypto cannot do RSA over
// MD5 digests, hence the self-contained implementation.

export interface BrowserKey {
  bits: number;
  n: bigint;
  e: bigint;
  d: bigint;
}

export interface CommandJson {
  device: string;
  params: Record<string, unknown>;
}

export interface EnvelopeJson {
  client_id: string;
  issued_at: number;
  commands: CommandJson[];
}

export function parseKeyFile(text: string): BrowserKey {
  const obj = JSON.parse(text);
  if (typeof obj.n !== "string" || typeof obj.d !== "string") {
    throw new Error("key file must carry hex n and d");
  }
  return {
    bits: typeof obj.bits === "number" ? obj.bits : obj.n.length * 4,
    n: BigInt("0x" + obj.n),
    e: BigInt(obj.e ?? 65537),
    d: BigInt("0x" + obj.d),
  };
}

// -- canonical JSON (sorted keys, compact, UTF-8) ---------------------------

export function canonicalJson(value: unknown): string {
  if (value === null) return "null";
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number") {
    if (!Number.isInteger(value)) throw new Error(`non-integer number: ${value}`);
    return String(value);
  }
  if (typeof value === "string") return JSON.stringify(value);
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object") {
    const record = value as Record<string, unknown>;
    const parts = Object.keys(record)
      .sort()
      .map((key) => `${JSON.stringify(key)}:${canonicalJson(record[key])}`);
    return "{" + parts.join(",") + "}";
  }
  throw new Error(`unsupported value in canonical JSON: ${String(value)}`);
}

export function canonicalEnvelopeBytes(envelope: EnvelopeJson): Uint8Array {
  return new TextEncoder().encode(canonicalJson(envelope));
}

// -- MD5 (RFC 1321) ----------------------------------------------------------

const MD5_S = [
  7, 12, 17, 22, 7, 12, 17, 22, 7, 12, 17, 22, 7, 12, 17, 22,
  5, 9, 14, 20, 5, 9, 14, 20, 5, 9, 14, 20, 5, 9, 14, 20,
  4, 11, 16, 23, 4, 11, 16, 23, 4, 11, 16, 23, 4, 11, 16, 23,
  6, 10, 15, 21, 6, 10, 15, 21, 6, 10, 15, 21, 6, 10, 15, 21,
];

const MD5_K = new Array(64)
  .fill(0)
  .map((_, i) => Math.floor(Math.abs(Math.sin(i + 1)) * 2 ** 32));

export function md5(data: Uint8Array): Uint8Array {
  const bitLen = data.length * 8;
  const padded = new Uint8Array((((data.length + 8) >> 6) + 1) << 6);
  padded.set(data);
  padded[data.length] = 0x80;
  const view = new DataView(padded.buffer);
  view.setUint32(padded.length - 8, bitLen >>> 0, true);
  view.setUint32(padded.length - 4, Math.floor(bitLen / 2 ** 32), true);

  let [a0, b0, c0, d0] = [0x67452301, 0xefcdab89, 0x98badcfe, 0x10325476];
  for (let chunk = 0; chunk < padded.length; chunk += 64) {
    const m = new Array<number>(16);
    for (let i = 0; i < 16; i++) m[i] = view.getUint32(chunk + i * 4, true);
    let [a, b, c, d] = [a0, b0, c0, d0];
    for (let i = 0; i < 64; i++) {
      let f: number;
      let g: number;
      if (i < 16) {
        f = (b & c) | (~b & d);
        g = i;
      } else if (i < 32) {
        f = (d & b) | (~d & c);
        g = (5 * i + 1) % 16;
      } else if (i < 48) {
        f = b ^ c ^ d;
        g = (3 * i + 5) % 16;
      } else {
        f = c ^ (b | ~d);
        g = (7 * i) % 16;
      }
      const sum = (a + f + MD5_K[i] + m[g]) >>> 0;
      const rotated = ((sum << MD5_S[i]) | (sum >>> (32 - MD5_S[i]))) >>> 0;
      [a, d, c, b] = [d, c, b, (b + rotated) >>> 0];
    }
    a0 = (a0 + a) >>> 0;
    b0 = (b0 + b) >>> 0;
    c0 = (c0 + c) >>> 0;
    d0 = (d0 + d) >>> 0;
  }
  const out = new Uint8Array(16);
  const outView = new DataView(out.buffer);
  outView.setUint32(0, a0, true);
  outView.setUint32(4, b0, true);
  outView.setUint32(8, c0, true);
  outView.setUint32(12, d0, true);
  return out;
}

export function md5Hex(data: Uint8Array): string {
  return Array.from(md5(data), (b) => b.toString(16).padStart(2, "0")).join("");
}

// -- RSA PKCS#1 v1.5 signing ---------------------------------------------------

// DER DigestInfo prefix for an MD5 digest
const MD5_DIGEST_INFO = Uint8Array.from([
  0x30, 0x20, 0x30, 0x0c, 0x06, 0x08, 0x2a, 0x86, 0x48, 0x86,
  0xf7, 0x0d, 0x02, 0x05, 0x05, 0x00, 0x04, 0x10,
]);

function modPow(base: bigint, exponent: bigint, modulus: bigint): bigint {
  let result = 1n;
  let b = base % modulus;
  let e = exponent;
  while (e > 0n) {
    if (e & 1n) result = (result * b) % modulus;
    b = (b * b) % modulus;
    e >>= 1n;
  }
  return result;
}

function bytesToBigInt(bytes: Uint8Array): bigint {
  let value = 0n;
  for (const byte of bytes) value = (value << 8n) | BigInt(byte);
  return value;
}

function bigIntToBytes(value: bigint, length: number): Uint8Array {
  const out = new Uint8Array(length);
  let v = value;
  for (let i = length - 1; i >= 0; i--) {
    out[i] = Number(v & 0xffn);
    v >>= 8n;
  }
  return out;
}

export function signDigest(digest: Uint8Array, key: BrowserKey): Uint8Array {
  const k = Math.ceil(key.bits / 8);
  const t = new Uint8Array(MD5_DIGEST_INFO.length + digest.length);
  t.set(MD5_DIGEST_INFO);
  t.set(digest, MD5_DIGEST_INFO.length);
  const psLength = k - t.length - 3;
  if (psLength < 8) throw new Error("key too small for the digest");
  const em = new Uint8Array(k);
  em[0] = 0x00;
  em[1] = 0x01;
  em.fill(0xff, 2, 2 + psLength);
  em[2 + psLength] = 0x00;
  em.set(t, 3 + psLength);
  return bigIntToBytes(modPow(bytesToBigInt(em), key.d, key.n), k);
}

export function signEnvelope(envelope: EnvelopeJson, key: BrowserKey): Uint8Array {
  return signDigest(md5(canonicalEnvelopeBytes(envelope)), key);
}

export function base64Encode(bytes: Uint8Array): string {
  const alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const b0 = bytes[i];
    const b1 = i + 1 < bytes.length ? bytes[i + 1] : 0;
    const b2 = i + 2 < bytes.length ? bytes[i + 2] : 0;
    out += alphabet[b0 >> 2];
    out += alphabet[((b0 & 0x03) << 4) | (b1 >> 4)];
    out += i + 1 < bytes.length ? alphabet[((b1 & 0x0f) << 2) | (b2 >> 6)] : "=";
    out += i + 2 < bytes.length ? alphabet[b2 & 0x3f] : "=";
  }
  return out;
}

export function signedPacketBody(envelope: EnvelopeJson, key: BrowserKey): string {
  const signature = base64Encode(signEnvelope(envelope, key));
  return JSON.stringify({ envelope, signature });
}
