"""Headless home emulator: mirrors device state and acknowledges commands.

In http-poll mode it periodically GETs the gateway's state snapshot, diffs
it against its own, and emits one event per changed device. In mqtt mode it
subscribes to the home's device topics, applies command payloads, and
publishes the response on the same topic.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from typing import Optional

import requests

from . import devices as dv
from .httpd import JsonHttpServer
from .logs import EventLog
from .mqtt.client import MqttClient, MqttClientError

logger = logging.getLogger(__name__)

MIN_POLL_INTERVAL_MS = 50


@dataclass
class EmulatorConfig:
    mode: str  # "http-poll" | "mqtt"
    registry: dv.HomeRegistry
    gateway_url: Optional[str] = None
    broker_endpoint: Optional[str] = None
    poll_interval_ms: int = 500
    client_id: str = "emulator"
    announce: str = "Emulator App connected"
    max_backoff_ms: int = 5_000
    log_sink: Optional[object] = None  # writable text stream for NDJSON events

    def __post_init__(self):
        if self.mode not in ("http-poll", "mqtt"):
            raise ValueError(f"bad emulator mode: {self.mode!r}")
        if self.mode == "http-poll":
            if not self.gateway_url:
                raise ValueError("http-poll mode needs a gateway_url")
            if self.poll_interval_ms < MIN_POLL_INTERVAL_MS:
                raise ValueError(f"poll_interval_ms must be >= {MIN_POLL_INTERVAL_MS}")
        if self.mode == "mqtt" and not self.broker_endpoint:
            raise ValueError("mqtt mode needs a broker_endpoint")


class EmulatorEngine:
    def __init__(self, config: EmulatorConfig):
        self.config = config
        self.registry = config.registry
        self.log = EventLog(sink=config.log_sink)
        self._states: dict[str, dv.DeviceState] = {
            d.id: d for d in config.registry.devices
        }
        self._lock = threading.RLock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._client: Optional[MqttClient] = None
        self._state_server: Optional[JsonHttpServer] = None
        self.connected = threading.Event()

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "EmulatorEngine":
        self._stop.clear()
        target = self._poll_loop if self.config.mode == "http-poll" else self._mqtt_loop
        self._thread = threading.Thread(target=target, name="emulator", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._client is not None:
            self._client.close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        if self._state_server is not None:
            self._state_server.stop()

    def serve_state(self, host: str = "127.0.0.1", port: int = 0) -> JsonHttpServer:
        """Expose GET /emulator/state for the floorplan UI."""
        server = JsonHttpServer(host=host, port=port, name="emulator")
        server.add_route(
            "GET",
            r"/emulator/state",
            lambda match, query, body, ctx: (200, {"devices": self.state_dicts()}),
        )
        server.start()
        self._state_server = server
        return server

    # -- reads ---------------------------------------------------------------

    def snapshot(self) -> dict[str, dv.DeviceState]:
        with self._lock:
            return dict(self._states)

    def state_dicts(self) -> list[dict]:
        with self._lock:
            return [dv.state_to_dict(s) for s in self._states.values()]

    def fingerprint(self) -> str:
        return dv.home_fingerprint(self.snapshot().values())

    def wait_for(self, predicate, timeout: float = 5.0, step: float = 0.01) -> bool:
        """Poll the snapshot until predicate(states) holds."""
        deadline = time.monotonic() + timeout
        while True:
            if predicate(self.snapshot()):
                return True
            if time.monotonic() >= deadline:
                return False
            time.sleep(step)

    # -- http-poll mode --------------------------------------------------------

    def _poll_loop(self) -> None:
        session = requests.Session()
        interval_s = self.config.poll_interval_ms / 1000.0
        delay_s = interval_s
        healthy: Optional[bool] = None
        while not self._stop.is_set():
            try:
                resp = session.get(
                    f"{self.config.gateway_url}/api/state", timeout=max(2.0, interval_s * 4)
                )
                resp.raise_for_status()
                devices = resp.json()["devices"]
            except (requests.RequestException, ValueError, KeyError) as exc:
                if healthy is not False:
                    self.log.append("error", f"gateway unreachable: {exc}")
                healthy = False
                self.connected.clear()
                delay_s = min(delay_s * 2, self.config.max_backoff_ms / 1000.0)
                if self._stop.wait(delay_s):
                    return
                continue
            if healthy is not True:
                self.log.append("connection", "connected to gateway")
                self.connected.set()
            healthy = True
            delay_s = interval_s
            self._absorb_states(devices)
            if self._stop.wait(interval_s):
                return

    def _absorb_states(self, device_objs: list) -> None:
        for obj in device_objs:
            try:
                incoming = dv.state_from_dict(obj)
            except (dv.DeviceError, TypeError) as exc:
                self.log.append("error", f"bad state entry from gateway: {exc}")
                continue
            with self._lock:
                current = self._states.get(incoming.id)
                changed = (
                    current is None
                    or dv.params_to_dict(current.params) != dv.params_to_dict(incoming.params)
                )
                if changed:
                    self._states[incoming.id] = incoming
            if changed:
                self.log.append(
                    "action",
                    f"{incoming.id} updated: "
                    f"{json.dumps(dv.params_to_dict(incoming.params), separators=(',', ':'))}",
                )

    # -- mqtt mode -------------------------------------------------------------

    def _mqtt_loop(self) -> None:
        prefix = self.registry.topic_prefix
        delay_s = 0.5
        while not self._stop.is_set():
            try:
                client = MqttClient(
                    self.config.broker_endpoint,
                    client_id=self.config.client_id,
                    keepalive=30,
                    on_message=self._on_mqtt_message,
                )
                client.connect()
                client.subscribe([(f"{prefix}/+", 0), (f"{prefix}/connection", 0)])
                client.publish(
                    f"{prefix}/connection",
                    json.dumps({"connection": self.config.announce}).encode("utf-8"),
                )
                self._client = client
                self.log.append("connection", self.config.announce)
                self.connected.set()
                delay_s = 0.5
                while not self._stop.is_set() and client.connected:
                    self._stop.wait(0.2)
                self.connected.clear()
                if not self._stop.is_set():
                    self.log.append("error", "broker connection lost, reconnecting")
            except MqttClientError as exc:
                self.connected.clear()
                self.log.append("error", f"broker connection failed: {exc}")
                if self._stop.wait(delay_s):
                    return
                delay_s = min(delay_s * 2, self.config.max_backoff_ms / 1000.0)

    def _on_mqtt_message(self, topic: str, payload: bytes) -> None:
        prefix = self.registry.topic_prefix
        if topic == f"{prefix}/connection":
            self.log.append(
                "connection", f"peer connected: {payload.decode(errors='replace')}"
            )
            return
        try:
            obj = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self.log.append("error", f"malformed payload on {topic}: {payload[:128]!r}")
            return
        if isinstance(obj, dict) and "response" in obj:
            return  # a response echo (possibly our own); nothing to apply
        try:
            cmd = dv.decode_payload(payload)
            if topic != f"{prefix}/{cmd.device}":
                raise dv.DecodeError(f"command for {cmd.device!r} arrived on {topic!r}")
            with self._lock:
                dv.validate_command(self.registry, cmd)
                new_state, response = dv.apply_command(self._states[cmd.device], cmd)
                self._states[cmd.device] = new_state
        except dv.DeviceError as exc:
            self.log.append("error", f"{topic}: {exc}")
            return
        self.log.append("command", f"Command received: {topic}: {payload.decode()}")
        reply = json.dumps({"response": response.response}, separators=(",", ":"))
        if self._client is not None:
            try:
                self._client.publish(topic, reply.encode("utf-8"))
                self.log.append("response", f"Response sent: {topic}: {reply}")
            except MqttClientError as exc:
                self.log.append("error", f"response publish failed: {exc}")
