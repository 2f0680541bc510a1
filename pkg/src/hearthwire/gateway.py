"""Device App: authoritative device state behind signed-intent verification.

HTTP mode: accepts signed intent packets, verifies them against the KDC,
applies commands atomically, and serves state to the polling emulator.
MQTT mode: the bridge subscribes to the home's device topics and answers
command payloads with response payloads, mirroring the HTTP behavior.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from typing import Any, Optional

from . import devices as dv
from . import signing
from .httpd import HttpError, JsonHttpServer, parse_json_body
from .kdc import KdcClient, KdcUnreachable, KeyNotFound
from .logs import EventLog, now_ms
from .mqtt.client import MqttClient, MqttClientError

logger = logging.getLogger(__name__)

DEFAULT_FRESHNESS_WINDOW_MS = 30_000
DEFAULT_KEY_CACHE_TTL_S = 60.0
DEFAULT_POLL_INTERVAL_MS = 500


class GatewayError(Exception):
    http_status = 500
    code = "gateway_error"


class SignatureInvalid(GatewayError):
    http_status = 401
    code = "signature_invalid"


class UnknownClient(GatewayError):
    http_status = 401
    code = "unknown_client"


class StaleIntent(GatewayError):
    http_status = 401
    code = "stale_intent"


@dataclass
class CommandOutcome:
    results: list[dv.DeviceResponse]
    verify_ms: float


class Gateway:
    def __init__(
        self,
        registry: dv.HomeRegistry,
        kdc_url: Optional[str] = None,
        *,
        key_cache_ttl: float = DEFAULT_KEY_CACHE_TTL_S,
        freshness_window_ms: Optional[int] = DEFAULT_FRESHNESS_WINDOW_MS,
        allow_unsigned: bool = False,
        poll_interval_ms: int = DEFAULT_POLL_INTERVAL_MS,
        clock=now_ms,
    ):
        self.registry = registry
        self.kdc = KdcClient(kdc_url) if kdc_url else None
        self.key_cache_ttl = key_cache_ttl
        self.freshness_window_ms = freshness_window_ms
        self.allow_unsigned = allow_unsigned
        self.poll_interval_ms = poll_interval_ms
        self._clock = clock
        self._lock = threading.RLock()
        self._states: dict[str, dv.DeviceState] = {d.id: d for d in registry.devices}
        self._key_cache: dict[str, tuple[dict, float]] = {}
        self.log = EventLog(clock=clock)
        self._emulator_seen_ms = clock()

    # -- intent handling -----------------------------------------------------

    def handle_wire_command(self, body: bytes) -> CommandOutcome:
        """Full POST /api/command path: parse, verify, validate, apply."""
        obj = json.loads(body.decode("utf-8"))  # caller maps JSON errors
        if not isinstance(obj, dict) or "envelope" not in obj:
            raise dv.DecodeError("body must carry an envelope")
        extra = set(obj) - {"envelope", "signature"}
        if extra:
            raise dv.DecodeError(f"unexpected keys in packet: {sorted(extra)}")
        envelope = signing.envelope_from_obj(obj["envelope"])
        signature_b64 = obj.get("signature")
        verify_start = time.perf_counter()
        if signature_b64 is None:
            if not self.allow_unsigned:
                self.log.append("error", f"unsigned intent from {envelope.client_id!r} refused")
                raise SignatureInvalid("packet carries no signature")
            verify_ms = 0.0
        else:
            packet = signing.packet_from_obj({"envelope": obj["envelope"], "signature": signature_b64})
            self._verify_packet(packet)
            verify_ms = (time.perf_counter() - verify_start) * 1000.0
        self._check_freshness(envelope)
        results = self.apply_intent(envelope)
        return CommandOutcome(results=results, verify_ms=verify_ms)

    def _verify_packet(self, packet: signing.SignedIntentPacket) -> None:
        client_id = packet.envelope.client_id
        key_obj = self._client_key(client_id)
        public_key = signing.public_key_from_obj(key_obj)
        try:
            valid = signing.verify_intent(packet, public_key)
        except signing.MalformedSignature as exc:
            self.log.append("error", f"malformed signature from {client_id!r}: {exc}")
            raise SignatureInvalid(str(exc)) from None
        if not valid:
            self.log.append("error", f"signature verification failed for {client_id!r}")
            raise SignatureInvalid(f"signature does not verify for {client_id!r}")

    def _client_key(self, client_id: str) -> dict:
        if self.kdc is None:
            raise UnknownClient("gateway has no KDC configured")
        if self.key_cache_ttl > 0:
            cached = self._key_cache.get(client_id)
            if cached is not None and time.monotonic() - cached[1] < self.key_cache_ttl:
                return cached[0]
        try:
            key_obj = self.kdc.get_key(client_id)
        except KeyNotFound:
            self.log.append("error", f"no public key registered for {client_id!r}")
            raise UnknownClient(f"no key registered for {client_id!r}") from None
        if self.key_cache_ttl > 0:
            self._key_cache[client_id] = (key_obj, time.monotonic())
        return key_obj

    def _check_freshness(self, envelope: signing.IntentEnvelope) -> None:
        if self.freshness_window_ms is None:
            return
        skew = abs(self._clock() - envelope.issued_at)
        if skew > self.freshness_window_ms:
            self.log.append(
                "error",
                f"stale intent from {envelope.client_id!r}: issued {skew} ms away from now",
            )
            raise StaleIntent(
                f"issued_at is {skew} ms from the gateway clock "
                f"(window {self.freshness_window_ms} ms)"
            )

    def apply_intent(self, envelope: signing.IntentEnvelope) -> list[dv.DeviceResponse]:
        """Validate every command, then apply all of them atomically."""
        with self._lock:
            for cmd in envelope.commands:
                dv.validate_command(self.registry, cmd)
            staged: list[tuple[dv.DeviceState, dv.DeviceResponse, dv.DeviceCommand]] = []
            for cmd in envelope.commands:
                new_state, response = dv.apply_command(self._states[cmd.device], cmd)
                staged.append((new_state, response, cmd))
            for new_state, response, cmd in staged:
                self._states[new_state.id] = new_state
                self.log.append(
                    "command", f"Command received: {dv.encode_payload(cmd).decode()}"
                )
                self.log.append("response", f"Response: {response.response}")
            return [response for _state, response, _cmd in staged]

    def apply_single(self, cmd: dv.DeviceCommand) -> dv.DeviceResponse:
        """Validate and apply one command (the MQTT-bridge path)."""
        with self._lock:
            dv.validate_command(self.registry, cmd)
            new_state, response = dv.apply_command(self._states[cmd.device], cmd)
            self._states[cmd.device] = new_state
            self.log.append("command", f"Command received: {dv.encode_payload(cmd).decode()}")
            self.log.append("response", f"Response: {response.response}")
        return response

    # -- reads ---------------------------------------------------------------

    def snapshot(self) -> dict[str, dv.DeviceState]:
        with self._lock:
            return dict(self._states)

    def fingerprint(self) -> str:
        return dv.home_fingerprint(self.snapshot().values())

    def get_state(self, device_id: Optional[str] = None):
        with self._lock:
            if device_id is None:
                return [dv.state_to_dict(self._states[d.id]) for d in self.registry.devices]
            state = self._states.get(device_id)
        if state is None:
            raise dv.UnknownDevice(f"no such device: {device_id!r}")
        return dv.state_to_dict(state)

    def get_status(self) -> list[dict[str, Any]]:
        online = self.emulator_online()
        return [
            {"id": d.id, "kind": d.kind.value, "online": online}
            for d in self.registry.devices
        ]

    def emulator_online(self) -> bool:
        window = 3 * self.poll_interval_ms
        return (self._clock() - self._emulator_seen_ms) <= window

    def mark_emulator_seen(self) -> None:
        self._emulator_seen_ms = self._clock()


class GatewayService:
    """HTTP face of the gateway.

    POST /api/command               signed intent packet  -> 200 | 401 | 404 | 422
    GET  /api/devices               status list
    GET  /api/state[/{device_id}]   full or single-device snapshot
    GET  /api/logs?since=<ms>       event log entries
    """

    def __init__(self, gateway: Gateway, host: str = "127.0.0.1", port: int = 0):
        self.gateway = gateway
        self.server = JsonHttpServer(host=host, port=port, name="gateway")
        self.server.add_route("POST", r"/api/command", self._post_command)
        self.server.add_route("GET", r"/api/devices", self._get_devices)
        self.server.add_route("GET", r"/api/state", self._get_state)
        self.server.add_route("GET", r"/api/state/(?P<device_id>[^/]+)", self._get_one_state)
        self.server.add_route("GET", r"/api/logs", self._get_logs)

    def start(self) -> "GatewayService":
        self.server.start()
        logger.info("gateway listening on %s", self.server.url)
        return self

    def stop(self) -> None:
        self.server.stop()

    @property
    def url(self) -> str:
        return self.server.url

    def _post_command(self, match, query, body, ctx):
        try:
            outcome = self.gateway.handle_wire_command(body)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise HttpError(400, "bad_json", str(exc)) from None
        except signing.MalformedSignature as exc:
            raise HttpError(401, "signature_invalid", str(exc)) from None
        except dv.UnknownDevice as exc:
            raise HttpError(404, exc.code, str(exc)) from None
        except dv.ValidationError as exc:
            raise HttpError(422, exc.code, str(exc)) from None
        except dv.DecodeError as exc:
            raise HttpError(400, exc.code, str(exc)) from None
        except GatewayError as exc:
            raise HttpError(exc.http_status, exc.code, str(exc)) from None
        except KdcUnreachable as exc:
            raise HttpError(502, "kdc_unreachable", str(exc)) from None
        return 200, {
            "results": [{"response": r.response} for r in outcome.results],
            "verify_ms": outcome.verify_ms,
        }

    def _get_devices(self, match, query, body, ctx):
        return 200, self.gateway.get_status()

    def _get_state(self, match, query, body, ctx):
        self.gateway.mark_emulator_seen()
        return 200, {"devices": self.gateway.get_state()}

    def _get_one_state(self, match, query, body, ctx):
        self.gateway.mark_emulator_seen()
        try:
            return 200, self.gateway.get_state(match["device_id"])
        except dv.UnknownDevice as exc:
            raise HttpError(404, exc.code, str(exc)) from None

    def _get_logs(self, match, query, body, ctx):
        try:
            since = int(query.get("since", ["0"])[0])
        except ValueError:
            raise HttpError(400, "bad_query", "since must be an integer") from None
        return 200, [e.to_dict() for e in self.gateway.log.since(since)]


class GatewayMqttBridge:
    """Gateway behavior over broker topics instead of HTTP.

    Subscribes to `{prefix}/+`, answers command payloads on the same device
    topic, and announces itself on `{prefix}/connection`. Response payloads
    seen on device topics (its own echoes, or an emulator's) are ignored.
    """

    def __init__(
        self,
        gateway: Gateway,
        broker_endpoint: str,
        client_id: str = "device_app",
        announce: str = "Device App connected",
        reconnect_delay: float = 0.5,
        max_reconnect_delay: float = 10.0,
    ):
        self.gateway = gateway
        self.broker_endpoint = broker_endpoint
        self.client_id = client_id
        self.announce = announce
        self.reconnect_delay = reconnect_delay
        self.max_reconnect_delay = max_reconnect_delay
        self.prefix = gateway.registry.topic_prefix
        self._client: Optional[MqttClient] = None
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self.connected = threading.Event()

    def start(self) -> "GatewayMqttBridge":
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="gateway-bridge", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._client is not None:
            self._client.close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _run(self) -> None:
        delay = self.reconnect_delay
        while not self._stop.is_set():
            try:
                self._connect_once()
                delay = self.reconnect_delay  # healthy session resets backoff
                while not self._stop.is_set() and self._client.connected:
                    self._stop.wait(0.2)
                self.connected.clear()
            except MqttClientError as exc:
                self.gateway.log.append("error", f"broker connection failed: {exc}")
                self.connected.clear()
                if self._stop.wait(delay):
                    return
                delay = min(delay * 2, self.max_reconnect_delay)

    def _connect_once(self) -> None:
        client = MqttClient(
            self.broker_endpoint,
            client_id=self.client_id,
            keepalive=30,
            on_message=self._on_message,
        )
        client.connect()
        client.subscribe([(f"{self.prefix}/+", 0)])
        client.publish(
            f"{self.prefix}/connection",
            json.dumps({"connection": self.announce}).encode("utf-8"),
        )
        self._client = client
        self.gateway.log.append("connection", f"{self.announce} ({self.broker_endpoint})")
        self.connected.set()

    def _on_message(self, topic: str, payload: bytes) -> None:
        if topic == f"{self.prefix}/connection":
            self.gateway.mark_emulator_seen()
            self.gateway.log.append("connection", f"peer on connection topic: {payload.decode(errors='replace')}")
            return
        try:
            obj = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self.gateway.log.append(
                "error", f"malformed payload on {topic}: {payload[:128]!r}"
            )
            return
        if isinstance(obj, dict) and "response" in obj:
            self.gateway.mark_emulator_seen()
            return
        try:
            cmd = dv.decode_payload(payload)
            if topic != f"{self.prefix}/{cmd.device}":
                raise dv.DecodeError(f"command for {cmd.device!r} arrived on {topic!r}")
            response = self.gateway.apply_single(cmd)
        except dv.DeviceError as exc:
            self.gateway.log.append("error", f"{topic}: {exc}")
            return
        reply = json.dumps({"response": response.response}, separators=(",", ":"))
        if self._client is not None:
            try:
                self._client.publish(topic, reply.encode("utf-8"))
            except MqttClientError as exc:
                self.gateway.log.append("error", f"response publish failed: {exc}")
