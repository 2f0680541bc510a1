"""Just enough RFC 6455 to carry MQTT: handshake plus binary data frames.

A WebSocketConnection wraps an open TCP socket and exposes the same
recv/sendall/close surface as a plain socket, so the broker and client treat
the WS byte stream exactly like TCP. One MQTT packet may span frames and one
frame may carry several packets; payload bytes are simply concatenated.
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct
from urllib.parse import urlparse

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
SUBPROTOCOL = "mqtt"
MAX_FRAME_PAYLOAD = 16 * 1024 * 1024

OP_CONT, OP_TEXT, OP_BINARY, OP_CLOSE, OP_PING, OP_PONG = 0x0, 0x1, 0x2, 0x8, 0x9, 0xA


class WebSocketError(Exception):
    pass


def _read_until_blank_line(sock: socket.socket) -> bytes:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WebSocketError("connection closed during handshake")
        data += chunk
        if len(data) > 64 * 1024:
            raise WebSocketError("handshake too large")
    return data


def _parse_headers(raw: bytes) -> tuple[str, dict[str, str]]:
    head, _, _ = raw.partition(b"\r\n\r\n")
    lines = head.decode("latin-1").split("\r\n")
    headers = {}
    for line in lines[1:]:
        key, _, value = line.partition(":")
        headers[key.strip().lower()] = value.strip()
    return lines[0], headers


def accept_key(client_key: str) -> str:
    return base64.b64encode(
        hashlib.sha1((client_key + WS_GUID).encode("ascii")).digest()
    ).decode("ascii")


def server_handshake(sock: socket.socket, expected_path: str = "/mqtt") -> "WebSocketConnection":
    """Upgrade an accepted socket; raises WebSocketError on a bad request."""
    request_line, headers = _parse_headers(_read_until_blank_line(sock))
    parts = request_line.split(" ")
    if len(parts) != 3 or parts[0] != "GET":
        raise WebSocketError(f"bad request line: {request_line!r}")
    path = urlparse(parts[1]).path
    if expected_path and path != expected_path:
        sock.sendall(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n\r\n")
        raise WebSocketError(f"unknown websocket path {path!r}")
    if headers.get("upgrade", "").lower() != "websocket":
        raise WebSocketError("missing Upgrade: websocket")
    key = headers.get("sec-websocket-key")
    if not key:
        raise WebSocketError("missing Sec-WebSocket-Key")
    offered = [
        p.strip() for p in headers.get("sec-websocket-protocol", "").split(",") if p.strip()
    ]
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
    )
    if SUBPROTOCOL in offered:
        response += f"Sec-WebSocket-Protocol: {SUBPROTOCOL}\r\n"
    sock.sendall((response + "\r\n").encode("ascii"))
    return WebSocketConnection(sock, server_side=True)


def client_handshake(
    sock: socket.socket, host: str, port: int, path: str = "/mqtt"
) -> "WebSocketConnection":
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    request = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}:{port}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n"
        f"Sec-WebSocket-Protocol: {SUBPROTOCOL}\r\n"
        "\r\n"
    )
    sock.sendall(request.encode("ascii"))
    status_line, headers = _parse_headers(_read_until_blank_line(sock))
    if " 101 " not in status_line + " ":
        raise WebSocketError(f"handshake refused: {status_line!r}")
    if headers.get("sec-websocket-accept") != accept_key(key):
        raise WebSocketError("Sec-WebSocket-Accept mismatch")
    return WebSocketConnection(sock, server_side=False)


def connect(url: str, timeout: float = 5.0) -> "WebSocketConnection":
    """Open a ws:// URL and complete the client handshake."""
    parsed = urlparse(url)
    if parsed.scheme != "ws":
        raise WebSocketError(f"unsupported scheme {parsed.scheme!r} (only ws://)")
    host = parsed.hostname or "127.0.0.1"
    port = parsed.port or 80
    sock = socket.create_connection((host, port), timeout=timeout)
    return client_handshake(sock, host, port, parsed.path or "/")


class WebSocketConnection:
    """Socket-like wrapper: recv() yields data-frame payload bytes."""

    def __init__(self, sock: socket.socket, server_side: bool):
        self._sock = sock
        self._server_side = server_side  # servers receive masked, send unmasked
        self._buffer = b""
        self._closed = False

    def settimeout(self, timeout) -> None:
        self._sock.settimeout(timeout)

    def _read_exact(self, n: int) -> bytes:
        while len(self._buffer) < n:
            chunk = self._sock.recv(65536)
            if not chunk:
                raise ConnectionResetError("websocket peer closed mid-frame")
            self._buffer += chunk
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def _read_frame(self) -> tuple[int, bytes]:
        b0, b1 = struct.unpack("!BB", self._read_exact(2))
        opcode = b0 & 0x0F
        if b0 & 0x70:
            raise WebSocketError("RSV bits set without a negotiated extension")
        masked = bool(b1 & 0x80)
        length = b1 & 0x7F
        if length == 126:
            (length,) = struct.unpack("!H", self._read_exact(2))
        elif length == 127:
            (length,) = struct.unpack("!Q", self._read_exact(8))
        if length > MAX_FRAME_PAYLOAD:
            raise WebSocketError(f"frame payload {length} exceeds limit")
        if self._server_side and not masked:
            raise WebSocketError("client frames must be masked")
        mask = self._read_exact(4) if masked else b""
        payload = self._read_exact(length)
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, payload

    def recv(self, _hint: int = 65536) -> bytes:
        """Next data payload; b'' once the connection is closed."""
        if self._closed:
            return b""
        while True:
            try:
                opcode, payload = self._read_frame()
            except TimeoutError:
                raise  # keepalive enforcement relies on seeing the timeout
            except OSError:
                self._closed = True
                return b""
            if opcode in (OP_BINARY, OP_CONT):
                if payload:
                    return payload
                continue
            if opcode == OP_PING:
                self._send_frame(OP_PONG, payload)
                continue
            if opcode == OP_PONG:
                continue
            if opcode == OP_CLOSE:
                try:
                    self._send_frame(OP_CLOSE, payload[:2])
                except OSError:
                    pass
                self._closed = True
                return b""
            if opcode == OP_TEXT:
                raise WebSocketError("text frames are not valid on an MQTT socket")
            raise WebSocketError(f"unexpected opcode {opcode:#x}")

    def _send_frame(self, opcode: int, payload: bytes) -> None:
        fin_op = 0x80 | opcode
        header = bytearray([fin_op])
        mask_bit = 0x00 if self._server_side else 0x80
        if len(payload) < 126:
            header.append(mask_bit | len(payload))
        elif len(payload) <= 0xFFFF:
            header.append(mask_bit | 126)
            header += struct.pack("!H", len(payload))
        else:
            header.append(mask_bit | 127)
            header += struct.pack("!Q", len(payload))
        if mask_bit:
            mask = os.urandom(4)
            header += mask
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        self._sock.sendall(bytes(header) + payload)

    def sendall(self, data: bytes) -> None:
        if self._closed:
            raise BrokenPipeError("websocket is closed")
        self._send_frame(OP_BINARY, bytes(data))

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._send_frame(OP_CLOSE, struct.pack("!H", 1000))  # 1000 = normal closure
            except OSError:
                pass
        try:
            self._sock.close()
        except OSError:
            pass
