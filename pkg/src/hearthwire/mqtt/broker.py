"""Embedded MQTT 3.1.1-subset broker over raw TCP and WebSocket.

Clean-session only, QoS 0/1, retained messages, and per-client topic
authorization via allow/deny policy documents. A new connection reusing a
live client id evicts the old session. Unauthorized QoS-0 publishes are
dropped and logged (strict mode disconnects instead).
"""

from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass, field
from typing import Optional

from . import packets as pk
from . import websocket as ws
from .policy import BrokerPolicyConfig, Effect, PolicyDocument, authorize, permissive_config
from .topics import topic_matches, validate_topic_filter

logger = logging.getLogger(__name__)

KEEPALIVE_GRACE = 1.5
CONNECT_TIMEOUT = 10.0


class BrokerError(Exception):
    pass


@dataclass
class Session:
    client_id: str
    transport: object  # socket.socket or ws.WebSocketConnection
    policy: PolicyDocument
    transport_kind: str  # "tcp" | "websocket"
    subscriptions: dict[str, int] = field(default_factory=dict)  # filter -> granted qos
    write_lock: threading.Lock = field(default_factory=threading.Lock)
    next_packet_id: int = 1
    alive: bool = True

    def take_packet_id(self) -> int:
        pid = self.next_packet_id
        self.next_packet_id = pid % 0xFFFF + 1
        return pid

    def send(self, packet: pk.MqttPacket) -> bool:
        try:
            with self.write_lock:
                self.transport.sendall(pk.encode_packet(packet))
            return True
        except OSError:
            return False


class MqttBroker:
    def __init__(
        self,
        policy_config: Optional[BrokerPolicyConfig] = None,
        tcp_host: str = "127.0.0.1",
        tcp_port: Optional[int] = 1883,
        ws_host: str = "127.0.0.1",
        ws_port: Optional[int] = 9001,
        ws_path: str = "/mqtt",
        strict: bool = False,
    ):
        self.policy_config = policy_config or permissive_config()
        self.tcp_host, self._tcp_port_req = tcp_host, tcp_port
        self.ws_host, self._ws_port_req = ws_host, ws_port
        self.ws_path = ws_path
        self.strict = strict
        self._sessions: dict[str, Session] = {}
        self._sessions_lock = threading.Lock()
        self._retained: dict[str, tuple[bytes, int]] = {}  # topic -> (payload, qos)
        self._retained_lock = threading.Lock()
        self._listeners: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        self._running = False

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "MqttBroker":
        self._running = True
        if self._tcp_port_req is not None:
            self._tcp_listener = self._listen(self.tcp_host, self._tcp_port_req)
            self.tcp_port = self._tcp_listener.getsockname()[1]
            self._spawn(self._accept_loop, self._tcp_listener, "tcp")
            logger.info("broker tcp listening on %s:%d", self.tcp_host, self.tcp_port)
        if self._ws_port_req is not None:
            self._ws_listener = self._listen(self.ws_host, self._ws_port_req)
            self.ws_port = self._ws_listener.getsockname()[1]
            self._spawn(self._accept_loop, self._ws_listener, "websocket")
            logger.info(
                "broker websocket listening on ws://%s:%d%s",
                self.ws_host, self.ws_port, self.ws_path,
            )
        return self

    def _listen(self, host: str, port: int) -> socket.socket:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, port))
        except OSError as exc:
            sock.close()
            if exc.errno == 98:
                raise BrokerError(f"address {host}:{port} already in use") from exc
            raise
        sock.listen(64)
        self._listeners.append(sock)
        return sock

    def _spawn(self, target, *args) -> None:
        thread = threading.Thread(target=target, args=args, daemon=True)
        thread.start()
        self._threads.append(thread)

    def stop(self) -> None:
        self._running = False
        for listener in self._listeners:
            try:
                listener.close()
            except OSError:
                pass
        with self._sessions_lock:
            sessions = list(self._sessions.values())
            self._sessions.clear()
        for session in sessions:
            session.alive = False
            try:
                session.transport.close()
            except OSError:
                pass

    @property
    def ws_url(self) -> str:
        return f"ws://{self.ws_host}:{self.ws_port}{self.ws_path}"

    @property
    def tcp_address(self) -> str:
        return f"{self.tcp_host}:{self.tcp_port}"

    def session_count(self) -> int:
        with self._sessions_lock:
            return len(self._sessions)

    # -- connection handling -------------------------------------------------

    def _accept_loop(self, listener: socket.socket, kind: str) -> None:
        while self._running:
            try:
                conn, addr = listener.accept()
            except OSError:
                return
            self._spawn(self._serve_connection, conn, addr, kind)

    def _serve_connection(self, conn: socket.socket, addr, kind: str) -> None:
        session: Optional[Session] = None
        transport = conn
        try:
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn.settimeout(CONNECT_TIMEOUT)
            if kind == "websocket":
                transport = ws.server_handshake(conn, expected_path=self.ws_path)
            session = self._session_loop(transport, kind, addr)
        except (pk.ProtocolError, ws.WebSocketError) as exc:
            logger.info("closing %s %s: %s", kind, addr, exc)
        except (TimeoutError, OSError):
            pass
        finally:
            self._drop_session(session)
            try:
                transport.close()
            except OSError:
                pass

    def _session_loop(self, transport, kind: str, addr) -> Optional[Session]:
        buffer = b""
        session: Optional[Session] = None
        while self._running:
            while True:
                decoded = pk.decode_packet(buffer)
                if decoded is None:
                    break
                packet, consumed = decoded
                buffer = buffer[consumed:]
                if session is None:
                    if not isinstance(packet, pk.Connect):
                        raise pk.ProtocolError("first packet must be CONNECT")
                    session = self._handle_connect(packet, transport, kind)
                    if session is None:
                        return None  # refused; CONNACK already sent
                elif not self._handle_packet(session, packet):
                    return session  # clean DISCONNECT
            try:
                data = transport.recv(65536)
            except TimeoutError:
                if session is not None:
                    logger.info("keepalive expired for %r", session.client_id)
                return session
            if not data:
                return session
            buffer += data
            if session is not None and not session.alive:
                return session

    def _handle_connect(self, packet: pk.Connect, transport, kind: str) -> Optional[Session]:
        if packet.protocol_name != "MQTT":
            raise pk.ProtocolError(f"unknown protocol {packet.protocol_name!r}")
        if packet.protocol_level != 4:
            _send_raw(transport, pk.Connack(return_code=pk.CONNACK_REFUSED_PROTOCOL))
            return None
        client_id = packet.client_id or f"anon-{id(transport):x}"
        policy = self.policy_config.policy_for(client_id)
        if authorize(policy, "connect", client_id) is not Effect.ALLOW:
            logger.info("connect denied for %r", client_id)
            _send_raw(transport, pk.Connack(return_code=pk.CONNACK_REFUSED_NOT_AUTHORIZED))
            return None
        session = Session(
            client_id=client_id, transport=transport, policy=policy, transport_kind=kind
        )
        with self._sessions_lock:
            old = self._sessions.get(client_id)
            self._sessions[client_id] = session
        if old is not None:
            # MQTT 3.1.1 session takeover: the older connection is evicted
            logger.info("evicting older session for %r", client_id)
            old.alive = False
            try:
                old.transport.close()
            except OSError:
                pass
        if packet.keepalive > 0:
            transport.settimeout(packet.keepalive * KEEPALIVE_GRACE)
        else:
            transport.settimeout(None)
        session.send(pk.Connack(session_present=False, return_code=pk.CONNACK_ACCEPTED))
        return session

    def _handle_packet(self, session: Session, packet: pk.MqttPacket) -> bool:
        if isinstance(packet, pk.Publish):
            self._handle_publish(session, packet)
        elif isinstance(packet, pk.Subscribe):
            self._handle_subscribe(session, packet)
        elif isinstance(packet, pk.Unsubscribe):
            for topic_filter in packet.topics:
                session.subscriptions.pop(topic_filter, None)
            session.send(pk.Unsuback(packet_id=packet.packet_id))
        elif isinstance(packet, pk.Pingreq):
            session.send(pk.Pingresp())
        elif isinstance(packet, pk.Puback):
            pass  # QoS-1 delivery confirmed; no redelivery queue to clear
        elif isinstance(packet, pk.Disconnect):
            return False
        elif isinstance(packet, pk.Connect):
            raise pk.ProtocolError("duplicate CONNECT")
        else:
            raise pk.ProtocolError(f"client may not send {type(packet).__name__}")
        return True

    def _handle_publish(self, session: Session, packet: pk.Publish) -> None:
        allowed = authorize(session.policy, "publish", packet.topic) is Effect.ALLOW
        if not allowed:
            if self.strict:
                raise pk.ProtocolError(
                    f"publish to {packet.topic!r} denied for {session.client_id!r}"
                )
            logger.warning(
                "dropping unauthorized publish to %r from %r", packet.topic, session.client_id
            )
        else:
            if packet.retain:
                with self._retained_lock:
                    if packet.payload:
                        self._retained[packet.topic] = (packet.payload, packet.qos)
                    else:
                        self._retained.pop(packet.topic, None)
            self.route(packet)
        if packet.qos == 1:
            session.send(pk.Puback(packet_id=packet.packet_id))

    def route(self, packet: pk.Publish) -> int:
        """Fan a publish out to every matching live subscription. Returns count."""
        with self._sessions_lock:
            sessions = list(self._sessions.values())
        delivered = 0
        for subscriber in sessions:
            if not subscriber.alive:
                continue
            matching = [
                qos
                for topic_filter, qos in subscriber.subscriptions.items()
                if topic_matches(topic_filter, packet.topic)
            ]
            if not matching:
                continue
            out_qos = min(packet.qos, max(matching))
            outbound = pk.Publish(
                topic=packet.topic,
                payload=packet.payload,
                qos=out_qos,
                retain=False,
                packet_id=subscriber.take_packet_id() if out_qos else None,
            )
            if subscriber.send(outbound):
                delivered += 1
        return delivered

    def _handle_subscribe(self, session: Session, packet: pk.Subscribe) -> None:
        codes = []
        granted: list[tuple[str, int]] = []
        for topic_filter, requested_qos in packet.topics:
            validate_topic_filter(topic_filter)
            if authorize(session.policy, "subscribe", topic_filter) is not Effect.ALLOW:
                logger.warning(
                    "subscribe to %r denied for %r", topic_filter, session.client_id
                )
                codes.append(pk.SUBACK_FAILURE)
                continue
            qos = min(requested_qos, 1)
            session.subscriptions[topic_filter] = qos
            codes.append(qos)
            granted.append((topic_filter, qos))
        session.send(pk.Suback(packet_id=packet.packet_id, return_codes=tuple(codes)))
        # retained messages are replayed to the newly granted filters
        with self._retained_lock:
            retained = list(self._retained.items())
        for topic, (payload, retained_qos) in retained:
            best = max(
                (qos for flt, qos in granted if topic_matches(flt, topic)), default=None
            )
            if best is None:
                continue
            out_qos = min(retained_qos, best)
            session.send(
                pk.Publish(
                    topic=topic,
                    payload=payload,
                    qos=out_qos,
                    retain=True,
                    packet_id=session.take_packet_id() if out_qos else None,
                )
            )

    def _drop_session(self, session: Optional[Session]) -> None:
        if session is None:
            return
        session.alive = False
        with self._sessions_lock:
            if self._sessions.get(session.client_id) is session:
                del self._sessions[session.client_id]


def _send_raw(transport, packet: pk.MqttPacket) -> None:
    try:
        transport.sendall(pk.encode_packet(packet))
    except OSError:
        pass
