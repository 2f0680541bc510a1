"""Small blocking MQTT client over TCP or WebSocket, QoS 0/1.

Used by the emulator, the gateway bridge, the CLI, and the bench harness.
Endpoints: `mqtt://host:port`, `tcp://host:port`, plain `host:port`, or
`ws://host:port/path`.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
from typing import Callable, Optional
from urllib.parse import urlparse

from . import packets as pk
from . import websocket as ws

logger = logging.getLogger(__name__)


class MqttClientError(Exception):
    pass


class ConnectRefused(MqttClientError):
    def __init__(self, return_code: int):
        super().__init__(f"broker refused connection (return code {return_code})")
        self.return_code = return_code


class RequestTimeout(MqttClientError):
    pass


def _open_transport(endpoint: str, timeout: float):
    if endpoint.startswith("ws://"):
        return ws.connect(endpoint, timeout=timeout), "websocket"
    target = endpoint
    for scheme in ("mqtt://", "tcp://"):
        if target.startswith(scheme):
            target = target[len(scheme):]
            break
    parsed = urlparse(f"//{target}")
    host, port = parsed.hostname or "127.0.0.1", parsed.port or 1883
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock, "tcp"


class MqttClient:
    def __init__(
        self,
        endpoint: str,
        client_id: str,
        keepalive: int = 60,
        on_message: Optional[Callable[[str, bytes], None]] = None,
        on_disconnect: Optional[Callable[[], None]] = None,
    ):
        self.endpoint = endpoint
        self.client_id = client_id
        self.keepalive = keepalive
        self.on_message = on_message
        self.on_disconnect = on_disconnect
        self.inbox: "queue.Queue[tuple[str, bytes]]" = queue.Queue()
        self._transport = None
        self._write_lock = threading.Lock()
        self._acks: dict[int, tuple[threading.Event, list]] = {}
        self._acks_lock = threading.Lock()
        self._connack: Optional[pk.Connack] = None
        self._connack_event = threading.Event()
        self._next_packet_id = 1
        self._reader: Optional[threading.Thread] = None
        self._pinger: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self.connected = False

    # -- lifecycle ---------------------------------------------------------

    def connect(self, timeout: float = 5.0) -> "MqttClient":
        try:
            self._transport, self.transport_kind = _open_transport(self.endpoint, timeout)
        except (OSError, ws.WebSocketError) as exc:
            raise MqttClientError(f"cannot reach broker at {self.endpoint}: {exc}") from exc
        self._transport.settimeout(None)
        self._stop.clear()
        self._connack_event.clear()
        self._reader = threading.Thread(
            target=self._read_loop, name=f"mqtt-{self.client_id}", daemon=True
        )
        self._reader.start()
        self._send(pk.Connect(client_id=self.client_id, keepalive=self.keepalive))
        if not self._connack_event.wait(timeout):
            self.close()
            raise RequestTimeout("no CONNACK from broker")
        assert self._connack is not None
        if self._connack.return_code != pk.CONNACK_ACCEPTED:
            self.close()
            raise ConnectRefused(self._connack.return_code)
        self.connected = True
        if self.keepalive > 0:
            self._pinger = threading.Thread(
                target=self._ping_loop, name=f"mqtt-ping-{self.client_id}", daemon=True
            )
            self._pinger.start()
        return self

    def disconnect(self) -> None:
        if self.connected:
            try:
                self._send(pk.Disconnect())
            except MqttClientError:
                pass
        self.close()

    def close(self) -> None:
        self._stop.set()
        self.connected = False
        if self._transport is not None:
            try:
                self._transport.close()
            except OSError:
                pass
        with self._acks_lock:
            for event, _slot in self._acks.values():
                event.set()

    # -- requests ------------------------------------------------------------

    def subscribe(
        self, topics: list[tuple[str, int]], timeout: float = 5.0
    ) -> tuple[int, ...]:
        """Returns the broker's per-filter grant codes (0x80 = denied)."""
        pid = self._take_packet_id()
        suback = self._request(pk.Subscribe(packet_id=pid, topics=tuple(topics)), pid, timeout)
        if not isinstance(suback, pk.Suback):
            raise MqttClientError(f"expected SUBACK, got {type(suback).__name__}")
        return suback.return_codes

    def unsubscribe(self, topics: list[str], timeout: float = 5.0) -> None:
        pid = self._take_packet_id()
        self._request(pk.Unsubscribe(packet_id=pid, topics=tuple(topics)), pid, timeout)

    def publish(
        self,
        topic: str,
        payload: bytes,
        qos: int = 0,
        retain: bool = False,
        timeout: float = 5.0,
    ) -> None:
        """QoS 1 blocks until the broker's PUBACK arrives."""
        if qos == 0:
            self._send(pk.Publish(topic=topic, payload=payload, qos=0, retain=retain))
            return
        pid = self._take_packet_id()
        self._request(
            pk.Publish(topic=topic, payload=payload, qos=1, retain=retain, packet_id=pid),
            pid,
            timeout,
        )

    def recv_message(self, timeout: float = 5.0) -> tuple[str, bytes]:
        """Next inbound (topic, payload); only when no on_message callback is set."""
        try:
            return self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise RequestTimeout("no message received in time") from None

    # -- internals -----------------------------------------------------------

    def _take_packet_id(self) -> int:
        with self._write_lock:
            pid = self._next_packet_id
            self._next_packet_id = pid % 0xFFFF + 1
        return pid

    def _send(self, packet: pk.MqttPacket) -> None:
        if self._transport is None:
            raise MqttClientError("not connected")
        try:
            with self._write_lock:
                self._transport.sendall(pk.encode_packet(packet))
        except OSError as exc:
            raise MqttClientError(f"send failed: {exc}") from exc

    def _request(self, packet: pk.MqttPacket, pid: int, timeout: float) -> pk.MqttPacket:
        event = threading.Event()
        slot: list = []
        with self._acks_lock:
            self._acks[pid] = (event, slot)
        try:
            self._send(packet)
            if not event.wait(timeout):
                raise RequestTimeout(f"no ack for packet id {pid}")
            if not slot:
                raise MqttClientError("connection closed while waiting for ack")
            return slot[0]
        finally:
            with self._acks_lock:
                self._acks.pop(pid, None)

    def _resolve(self, pid: int, packet: pk.MqttPacket) -> None:
        with self._acks_lock:
            entry = self._acks.get(pid)
        if entry is not None:
            entry[1].append(packet)
            entry[0].set()

    def _read_loop(self) -> None:
        buffer = b""
        transport = self._transport
        while not self._stop.is_set():
            while True:
                try:
                    decoded = pk.decode_packet(buffer)
                except pk.ProtocolError as exc:
                    logger.error("protocol error from broker: %s", exc)
                    self._on_closed()
                    return
                if decoded is None:
                    break
                packet, consumed = decoded
                buffer = buffer[consumed:]
                self._dispatch(packet)
            try:
                data = transport.recv(65536)
            except (OSError, ws.WebSocketError):
                data = b""
            if not data:
                self._on_closed()
                return
            buffer += data

    def _dispatch(self, packet: pk.MqttPacket) -> None:
        if isinstance(packet, pk.Publish):
            if packet.qos == 1 and packet.packet_id is not None:
                try:
                    self._send(pk.Puback(packet_id=packet.packet_id))
                except MqttClientError:
                    pass
            try:
                payload = packet.payload
                topic = packet.topic
                if self.on_message is not None:
                    self.on_message(topic, payload)
                else:
                    self.inbox.put((topic, payload))
            except Exception:
                logger.exception("on_message handler failed")
        elif isinstance(packet, pk.Connack):
            self._connack = packet
            self._connack_event.set()
        elif isinstance(packet, (pk.Suback, pk.Unsuback, pk.Puback)):
            self._resolve(packet.packet_id, packet)
        elif isinstance(packet, pk.Pingresp):
            pass
        else:
            logger.warning("unexpected packet from broker: %r", packet)

    def _ping_loop(self) -> None:
        interval = max(self.keepalive / 2.0, 1.0)
        while not self._stop.wait(interval):
            try:
                self._send(pk.Pingreq())
            except MqttClientError:
                return

    def _on_closed(self) -> None:
        was_connected = self.connected
        self.connected = False
        self._connack_event.set()
        with self._acks_lock:
            for event, _slot in self._acks.values():
                event.set()
        if was_connected and self.on_disconnect is not None and not self._stop.is_set():
            try:
                self.on_disconnect()
            except Exception:
                logger.exception("on_disconnect handler failed")
