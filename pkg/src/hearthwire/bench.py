"""Round-trip latency bench: per-stage delay decomposition and mode comparison.

One iteration is a full command round-trip: sign the intent (HTTP modes),
carry it to the gateway or broker, verify it server-side (signed mode), and
wait until the emulator observes the change. Stages are decomposed on the
client's clock plus the server-reported verify duration, so no clock
synchronization is needed. Iterations run strictly sequentially.

The polling emulator quantizes observation times to its poll period: a
round trip that starts right after a poll is observed one full period later
no matter how long the server took, which silently absorbs server-side
latency. HTTP iterations therefore start at stratified phase offsets that
sweep the poll period, so quantization integrates out and total latency
shifts by the real per-request overhead.

The absolute per-stage delays published for the original cloud deployment
(20/480/525/426 ms over trans-continental hops) are not reproducible on
loopback and are used only as a sum-identity fixture; this harness reproduces
the decomposition method, the payload-size comparison, and the relative
overhead of signature verification.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import requests

from . import devices as dv
from . import signing
from .emulator import EmulatorConfig, EmulatorEngine
from .logs import now_ms
from .mqtt import packets as pk
from .mqtt.client import MqttClient, MqttClientError, RequestTimeout

MODES = ("http-signed", "http-unsigned", "mqtt")
STAGES = ("sign_ms", "transport_ms", "verify_ms", "emulator_ms", "total_ms")
CSV_HEADER = "mode,iteration,sign_ms,transport_ms,verify_ms,emulator_ms,total_ms"

DEFAULT_ITERATIONS = 100
DEFAULT_WARMUP = 10
BENCH_POLL_INTERVAL_MS = 100


class BenchError(Exception):
    pass


class TargetUnreachable(BenchError):
    pass


class IncomparableReports(BenchError):
    pass


@dataclass(frozen=True)
class StageTimings:
    sign_ms: float
    transport_ms: float
    verify_ms: float
    emulator_ms: float
    total_ms: float = field(init=False)

    def __post_init__(self):
        for name in ("sign_ms", "transport_ms", "verify_ms", "emulator_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(
            self,
            "total_ms",
            self.sign_ms + self.transport_ms + self.verify_ms + self.emulator_ms,
        )

    def to_dict(self) -> dict[str, float]:
        return {stage: getattr(self, stage) for stage in STAGES}


def percentile(values: list[float], q: float) -> float:
    """Linear-interpolation percentile (the numpy default)."""
    if not values:
        raise ValueError("percentile of empty list")
    xs = sorted(values)
    rank = (len(xs) - 1) * (q / 100.0)
    lo, hi = math.floor(rank), math.ceil(rank)
    if lo == hi:
        return xs[lo]
    frac = rank - lo
    return xs[lo] * (1 - frac) + xs[hi] * frac


@dataclass
class BenchReport:
    mode: str
    command_mix: str
    payload_bytes: int
    rows: list[StageTimings]

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"bad mode: {self.mode!r}")

    @property
    def iterations(self) -> int:
        return len(self.rows)

    def aggregates(self) -> dict[str, dict[str, float]]:
        out = {}
        for stage in STAGES:
            values = [getattr(row, stage) for row in self.rows]
            out[stage] = {
                "mean": sum(values) / len(values),
                "p50": percentile(values, 50),
                "p95": percentile(values, 95),
            }
        return out

    def to_obj(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": self.iterations,
            "command_mix": self.command_mix,
            "payload_bytes": self.payload_bytes,
            "rows": [row.to_dict() for row in self.rows],
            "aggregates": self.aggregates(),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "BenchReport":
        rows = [
            StageTimings(
                sign_ms=r["sign_ms"],
                transport_ms=r["transport_ms"],
                verify_ms=r["verify_ms"],
                emulator_ms=r["emulator_ms"],
            )
            for r in obj["rows"]
        ]
        return cls(
            mode=obj["mode"],
            command_mix=obj["command_mix"],
            payload_bytes=obj["payload_bytes"],
            rows=rows,
        )


def emit_report(report: BenchReport, fmt: str) -> bytes:
    if fmt == "json":
        return json.dumps(report.to_obj(), indent=2).encode("utf-8")
    if fmt == "csv":
        lines = [CSV_HEADER]
        for i, row in enumerate(report.rows, start=1):
            lines.append(
                f"{report.mode},{i},{row.sign_ms!r},{row.transport_ms!r},"
                f"{row.verify_ms!r},{row.emulator_ms!r},{row.total_ms!r}"
            )
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format: {fmt!r}")


def load_report(path: str) -> BenchReport:
    with open(path, "r", encoding="utf-8") as fh:
        return BenchReport.from_obj(json.load(fh))


def compare_modes(a: BenchReport, b: BenchReport) -> dict:
    """Per-stage and payload deltas (b minus a) plus human-readable verdicts."""
    if a.iterations != b.iterations:
        raise IncomparableReports(
            f"iteration counts differ: {a.iterations} vs {b.iterations}"
        )
    if a.command_mix != b.command_mix:
        raise IncomparableReports(
            f"command mixes differ: {a.command_mix!r} vs {b.command_mix!r}"
        )
    agg_a, agg_b = a.aggregates(), b.aggregates()
    stages = {}
    verdicts = []
    for stage in STAGES:
        stages[stage] = {}
        for metric in ("mean", "p50", "p95"):
            va, vb = agg_a[stage][metric], agg_b[stage][metric]
            stages[stage][metric] = {"a": va, "b": vb, "delta": vb - va}
    for metric in ("p50", "p95"):
        va, vb = agg_a["total_ms"][metric], agg_b["total_ms"][metric]
        if va == vb:
            verdicts.append(f"total {metric}: {a.mode} and {b.mode} equal at {va:.3f} ms")
        else:
            lower = a.mode if va < vb else b.mode
            verdicts.append(
                f"total {metric}: {a.mode} {va:.3f} ms vs {b.mode} {vb:.3f} ms "
                f"-> {lower} lower by {abs(vb - va):.3f} ms"
            )
    payload_delta = b.payload_bytes - a.payload_bytes
    if payload_delta == 0:
        verdicts.append(f"payload: both {a.payload_bytes} bytes")
    else:
        smaller = a.mode if a.payload_bytes < b.payload_bytes else b.mode
        verdicts.append(
            f"payload: {a.mode} {a.payload_bytes} B vs {b.mode} {b.payload_bytes} B "
            f"-> {smaller} smaller by {abs(payload_delta)} B"
        )
    return {
        "modes": [a.mode, b.mode],
        "iterations": a.iterations,
        "command_mix": a.command_mix,
        "stages": stages,
        "payload_bytes": {
            "a": a.payload_bytes,
            "b": b.payload_bytes,
            "delta": payload_delta,
        },
        "verdicts": verdicts,
    }


@dataclass
class BenchTargets:
    gateway_url: Optional[str] = None
    broker_endpoint: Optional[str] = None
    registry: dv.HomeRegistry = field(default_factory=dv.default_registry)
    client_id: str = "bench_client"
    private_key: Optional[object] = None  # rsa.RSAPrivateKey for http-signed
    poll_interval_ms: int = BENCH_POLL_INTERVAL_MS


def run_bench(
    mode: str,
    iterations: int = DEFAULT_ITERATIONS,
    targets: Optional[BenchTargets] = None,
    warmup: int = DEFAULT_WARMUP,
) -> BenchReport:
    if mode not in MODES:
        raise BenchError(f"unknown mode: {mode!r}")
    if iterations < 1:
        raise BenchError("iterations must be >= 1")
    targets = targets or BenchTargets()
    if mode in ("http-signed", "http-unsigned"):
        if not targets.gateway_url:
            raise BenchError(f"{mode} needs a gateway_url")
        if mode == "http-signed" and targets.private_key is None:
            raise BenchError("http-signed needs the client's private key")
        return _run_http(mode, iterations, targets, warmup)
    if not targets.broker_endpoint:
        raise BenchError("mqtt mode needs a broker_endpoint")
    return _run_mqtt(iterations, targets, warmup)


def _bulb_command(power: bool) -> dv.DeviceCommand:
    return dv.DeviceCommand("smart_bulb1", dv.BulbParams(power, "#ffffff"))


def _run_http(mode: str, iterations: int, targets: BenchTargets, warmup: int) -> BenchReport:
    engine = EmulatorEngine(
        EmulatorConfig(
            mode="http-poll",
            registry=targets.registry,
            gateway_url=targets.gateway_url,
            poll_interval_ms=targets.poll_interval_ms,
            client_id="bench_emulator",
        )
    ).start()
    session = requests.Session()
    rows: list[StageTimings] = []
    payload_bytes = 0
    try:
        if not engine.connected.wait(5):
            raise TargetUnreachable(f"gateway at {targets.gateway_url} is not answering polls")
        # every iteration must actually change gateway state (a no-op command
        # produces no emulator event), so align the toggle with current state
        try:
            current = session.get(
                f"{targets.gateway_url}/api/state/smart_bulb1", timeout=5
            ).json()
            current_power = bool(current["params"]["power"])
        except (requests.RequestException, ValueError, KeyError) as exc:
            raise TargetUnreachable(f"cannot read gateway state: {exc}") from None
        _, cursor = engine.log.read_from(0)
        period_s = targets.poll_interval_ms / 1000.0
        for i in range(warmup + iterations):
            # stratified phase sweep over the poll period (37 is coprime to 100,
            # so any 100 consecutive iterations cover the full grid)
            time.sleep(((i * 37) % 100) / 100.0 * period_s)
            power = (i % 2 == 0) ^ current_power
            envelope = signing.IntentEnvelope(
                client_id=targets.client_id,
                commands=(_bulb_command(power),),
                issued_at=now_ms(),
            )
            sign_start = time.perf_counter()
            if mode == "http-signed":
                packet = signing.sign_intent(envelope, targets.private_key)
                body = signing.packet_to_wire(packet)
            else:
                body = json.dumps(
                    {"envelope": signing.envelope_to_obj(envelope)}, separators=(",", ":")
                ).encode("utf-8")
            sign_ms = (time.perf_counter() - sign_start) * 1000.0
            if mode == "http-unsigned":
                sign_ms = 0.0
            post_start = time.perf_counter()
            try:
                resp = session.post(
                    f"{targets.gateway_url}/api/command", data=body, timeout=10
                )
            except requests.RequestException as exc:
                raise TargetUnreachable(f"gateway unreachable: {exc}") from None
            post_done_wall = now_ms()
            rtt_ms = (time.perf_counter() - post_start) * 1000.0
            if resp.status_code != 200:
                raise BenchError(
                    f"gateway rejected iteration {i}: {resp.status_code} {resp.text}"
                )
            verify_ms = float(resp.json()["verify_ms"])
            expected = json.dumps(
                dv.params_to_dict(_bulb_command(power).params), separators=(",", ":")
            )
            event = _await_event(
                engine, cursor, f"smart_bulb1 updated: {expected}", timeout_s=10.0
            )
            cursor = event[1]
            emulator_ms = max(float(event[0].timestamp - post_done_wall), 0.0)
            if i < warmup:
                continue
            if power or payload_bytes == 0:  # record the bulb-on request size
                payload_bytes = len(body)
            rows.append(
                StageTimings(
                    sign_ms=sign_ms,
                    transport_ms=max(rtt_ms - verify_ms, 0.0),
                    verify_ms=verify_ms,
                    emulator_ms=emulator_ms,
                )
            )
    finally:
        engine.stop()
    return BenchReport(
        mode=mode, command_mix="bulb-toggle", payload_bytes=payload_bytes, rows=rows
    )


def _await_event(engine: EmulatorEngine, cursor: int, message: str, timeout_s: float):
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        entries, next_cursor = engine.log.read_from(cursor)
        for offset, entry in enumerate(entries):
            if entry.level == "action" and entry.message == message:
                return entry, cursor + offset + 1
        cursor = next_cursor
        time.sleep(0.002)
    raise BenchError(f"emulator never observed: {message!r}")


def _run_mqtt(iterations: int, targets: BenchTargets, warmup: int) -> BenchReport:
    engine = EmulatorEngine(
        EmulatorConfig(
            mode="mqtt",
            registry=targets.registry,
            broker_endpoint=targets.broker_endpoint,
            client_id="bench_emulator",
        )
    ).start()
    publisher = None
    rows: list[StageTimings] = []
    payload_bytes = 0
    topic = f"{targets.registry.topic_prefix}/smart_bulb1"
    try:
        if not engine.connected.wait(5):
            raise TargetUnreachable(
                f"broker at {targets.broker_endpoint} refused the bench emulator"
            )
        try:
            publisher = MqttClient(
                targets.broker_endpoint, client_id=targets.client_id
            ).connect()
            publisher.subscribe([(topic, 0)])
        except MqttClientError as exc:
            raise TargetUnreachable(str(exc)) from None
        for i in range(warmup + iterations):
            power = i % 2 == 0
            payload = dv.encode_payload(_bulb_command(power))
            wire = pk.encode_packet(pk.Publish(topic=topic, payload=payload))
            expected = f"Smart_bulb1 Turned {'On' if power else 'Off'} in living room"
            _drain_inbox(publisher)
            start = time.perf_counter()
            publisher.publish(topic, payload)
            # wait for this iteration's response; extra responders (another
            # emulator on the same topics) may interleave other messages
            _await_response(publisher, expected, timeout_s=10.0)
            rtt_ms = (time.perf_counter() - start) * 1000.0
            if i < warmup:
                continue
            if power or payload_bytes == 0:  # record the bulb-on PUBLISH size
                payload_bytes = len(wire)
            rows.append(
                StageTimings(
                    sign_ms=0.0, transport_ms=rtt_ms, verify_ms=0.0, emulator_ms=0.0
                )
            )
    finally:
        if publisher is not None:
            publisher.close()
        engine.stop()
    return BenchReport(
        mode="mqtt", command_mix="bulb-toggle", payload_bytes=payload_bytes, rows=rows
    )


def _drain_inbox(client: MqttClient) -> None:
    while True:
        try:
            client.inbox.get_nowait()
        except Exception:
            return


def _await_response(client: MqttClient, expected: str, timeout_s: float) -> None:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        try:
            _topic, payload = client.recv_message(timeout=deadline - time.monotonic())
        except RequestTimeout:
            break
        try:
            obj = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            continue
        if isinstance(obj, dict) and obj.get("response") == expected:
            return
    raise BenchError(f"no emulator response matching {expected!r} on the device topic")
