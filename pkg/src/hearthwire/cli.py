"""hearthwire command line: key tooling, daemons, one-shot sends, and the bench.

Exit codes: 0 success, 2 usage or bad config, 3 authentication/authorization
failure, 4 validation failure, 5 connectivity failure.

Flag values win over HEARTHWIRE_* environment variables, which win over the
--config file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal as signals
import sys
import threading
import time
from typing import Any, Optional

import requests

from . import bench as bench_mod
from . import devices as dv
from . import signing
from .emulator import EmulatorConfig, EmulatorEngine
from .gateway import Gateway, GatewayMqttBridge, GatewayService
from .httpd import AddressInUse
from .kdc import KdcClient, KdcService, KdcUnreachable
from .logs import now_ms
from .mqtt.broker import BrokerError, MqttBroker
from .mqtt.client import ConnectRefused, MqttClient, MqttClientError, RequestTimeout
from .mqtt.policy import PolicyError, load_broker_config

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_AUTH = 3
EXIT_VALIDATION = 4
EXIT_CONNECTIVITY = 5

DEFAULT_KDC_PORT = 5001
DEFAULT_GATEWAY_PORT = 5000
DEFAULT_BROKER_TCP_PORT = 1883
DEFAULT_BROKER_WS_PORT = 9001

ENV_PREFIX = "HEARTHWIRE_"


class CliError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _load_config_file(path: Optional[str]) -> dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {path}: {exc}", EXIT_USAGE) from None
    if not isinstance(obj, dict):
        raise CliError(f"config file {path} must hold a JSON object", EXIT_USAGE)
    return obj


def _resolve(flag_value, env_key: str, config: dict, config_key: str, default):
    """flags > environment > config file > default."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(ENV_PREFIX + env_key)
    if env is not None:
        return env
    if config_key in config:
        return config[config_key]
    return default


def _load_registry(path: Optional[str]) -> dv.HomeRegistry:
    if not path:
        return dv.default_registry()
    try:
        return dv.load_registry(path)
    except (OSError, ValueError, dv.DeviceError) as exc:
        raise CliError(f"bad registry file {path}: {exc}", EXIT_USAGE) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hearthwire",
        description="Self-hosted smart-home control plane and protocol testbed.",
        epilog="Exit codes: 0 ok, 2 usage, 3 auth, 4 validation, 5 connectivity.",
    )
    parser.add_argument("--config", help="JSON config file merged under flags")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    keygen = sub.add_parser("keygen", help="generate an RSA keypair, optionally register it")
    keygen.add_argument("--bits", type=int, default=2048, help="1024, 2048, or 4096")
    keygen.add_argument("--client-id", required=True)
    keygen.add_argument("--out-dir", required=True)
    keygen.add_argument("--register", metavar="KDC_URL", help="POST the public key to this KDC")
    keygen.add_argument("--token", help="bearer token for KDC registration")

    serve = sub.add_parser("serve", help="run one of the daemons")
    serve_sub = serve.add_subparsers(dest="daemon", required=True)

    kdc = serve_sub.add_parser("kdc", help="key distribution center")
    kdc.add_argument("--host", default=None)
    kdc.add_argument("--port", type=int, default=None)
    kdc.add_argument("--snapshot", help="JSON snapshot file for durable keys")
    kdc.add_argument("--register-token", help="require this bearer token for registration")

    gw = serve_sub.add_parser("gateway", help="device gateway (the Device App)")
    gw.add_argument("--host", default=None)
    gw.add_argument("--port", type=int, default=None)
    gw.add_argument("--kdc", default=None, metavar="URL")
    gw.add_argument("--registry", help="registry config JSON")
    gw.add_argument("--key-cache-ttl", type=float, default=None, metavar="SECONDS",
                    help="0 disables caching (paper-parity)")
    gw.add_argument("--freshness-window-ms", type=int, default=None,
                    help="allowed |now - issued_at|; -1 disables the check")
    gw.add_argument("--allow-unsigned", action="store_true",
                    help="accept envelopes without signatures")
    gw.add_argument("--poll-interval-ms", type=int, default=None,
                    help="expected emulator poll cadence (online-flag window)")
    gw.add_argument("--bridge", metavar="BROKER_ENDPOINT",
                    help="also answer commands over these broker topics")

    br = serve_sub.add_parser("broker", help="embedded MQTT broker")
    br.add_argument("--host", default=None)
    br.add_argument("--tcp-port", type=int, default=None)
    br.add_argument("--ws-port", type=int, default=None)
    br.add_argument("--ws-path", default="/mqtt")
    br.add_argument("--no-tcp", action="store_true")
    br.add_argument("--no-ws", action="store_true")
    br.add_argument("--policies", metavar="FILE", help="broker policy config JSON")
    br.add_argument("--strict", action="store_true",
                    help="disconnect clients on authorization violations")

    emulate = sub.add_parser("emulate", help="run the headless home emulator")
    emulate.add_argument("--mode", choices=["http-poll", "mqtt"], required=True)
    emulate.add_argument("--gateway", default=None, metavar="URL")
    emulate.add_argument("--broker", default=None, metavar="ENDPOINT")
    emulate.add_argument("--registry", help="registry config JSON")
    emulate.add_argument("--poll-interval-ms", type=int, default=500)
    emulate.add_argument("--client-id", default="emulator")
    emulate.add_argument("--state-port", type=int,
                         help="also serve GET /emulator/state on this port")
    emulate.add_argument("--log-file", help="append NDJSON events here instead of stdout")

    send = sub.add_parser("send", help="send one intent (repeat --device/--params to compose)")
    send.add_argument("--gateway", default=None, metavar="URL")
    send.add_argument("--broker", default=None, metavar="ENDPOINT")
    send.add_argument("--key", metavar="PRIVATE_PEM", help="signing key for HTTP sends")
    send.add_argument("--client-id", default="client1")
    send.add_argument("--device", action="append", required=True)
    send.add_argument("--params", action="append", required=True, metavar="JSON")
    send.add_argument("--registry", help="registry config JSON (topic prefix for MQTT)")
    send.add_argument("--qos", type=int, choices=[0, 1], default=0)

    bench = sub.add_parser("bench", help="latency bench harness")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    run = bench_sub.add_parser("run", help="measure one mode")
    run.add_argument("--mode", choices=list(bench_mod.MODES), required=True)
    run.add_argument("--iterations", type=int, default=bench_mod.DEFAULT_ITERATIONS)
    run.add_argument("--warmup", type=int, default=bench_mod.DEFAULT_WARMUP)
    run.add_argument("--out", required=True, metavar="FILE.json|FILE.csv")
    run.add_argument("--gateway", default=None, metavar="URL")
    run.add_argument("--broker", default=None, metavar="ENDPOINT")
    run.add_argument("--key", metavar="PRIVATE_PEM")
    run.add_argument("--client-id", default="bench_client")
    run.add_argument("--registry", help="registry config JSON")
    compare = bench_sub.add_parser("compare", help="compare two JSON reports")
    compare.add_argument("report_a")
    compare.add_argument("report_b")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = _load_config_file(args.config)
        handler = {
            "keygen": cmd_keygen,
            "serve": cmd_serve,
            "emulate": cmd_emulate,
            "send": cmd_send,
            "bench": cmd_bench,
        }[args.command]
        return handler(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return EXIT_OK


def _wait_for_signal() -> None:
    stop = threading.Event()

    def handle(_signum, _frame):
        stop.set()

    signals.signal(signals.SIGTERM, handle)
    signals.signal(signals.SIGINT, handle)
    stop.wait()


def cmd_keygen(args, config) -> int:
    try:
        pair = signing.generate_keypair(args.bits)
    except signing.UnsupportedKeySize as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    os.makedirs(args.out_dir, exist_ok=True)
    private_path = os.path.join(args.out_dir, f"{args.client_id}_private.pem")
    public_path = os.path.join(args.out_dir, f"{args.client_id}_public.pem")
    browser_path = os.path.join(args.out_dir, f"{args.client_id}_browser_key.json")
    with open(private_path, "wb") as fh:
        fh.write(signing.private_key_pem(pair.private_key))
    os.chmod(private_path, 0o600)
    with open(public_path, "wb") as fh:
        fh.write(signing.public_key_pem(pair.public_key))
    numbers = pair.private_key.private_numbers()
    with open(browser_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "client_id": args.client_id,
                "bits": pair.bits,
                "n": format(numbers.public_numbers.n, "x"),
                "e": numbers.public_numbers.e,
                "d": format(numbers.d, "x"),
            },
            fh,
        )
    os.chmod(browser_path, 0o600)
    print(f"wrote {private_path}")
    print(f"wrote {public_path}")
    print(f"wrote {browser_path} (web UI key file)")
    if args.register:
        try:
            KdcClient(args.register).register(
                args.client_id, signing.public_key_to_obj(pair.public_key), token=args.token
            )
        except KdcUnreachable as exc:
            print(f"keys written, but registration failed: {exc}", file=sys.stderr)
            return EXIT_CONNECTIVITY
        print(f"registered {args.client_id} at {args.register}")
    return EXIT_OK


def cmd_serve(args, config) -> int:
    if args.daemon == "kdc":
        host = _resolve(args.host, "HOST", config, "host", "127.0.0.1")
        port = int(_resolve(args.port, "KDC_PORT", config, "kdc_port", DEFAULT_KDC_PORT))
        try:
            service = KdcService(
                host=host, port=port, snapshot_path=args.snapshot,
                register_token=args.register_token,
            ).start()
        except AddressInUse as exc:
            raise CliError(str(exc), EXIT_CONNECTIVITY) from None
        print(f"kdc listening on {service.url}", flush=True)
        try:
            _wait_for_signal()
        finally:
            service.stop()
        return EXIT_OK

    if args.daemon == "gateway":
        host = _resolve(args.host, "HOST", config, "host", "127.0.0.1")
        port = int(
            _resolve(args.port, "GATEWAY_PORT", config, "gateway_port", DEFAULT_GATEWAY_PORT)
        )
        kdc_url = _resolve(args.kdc, "KDC", config, "kdc", None)
        registry = _load_registry(_resolve(args.registry, "REGISTRY", config, "registry", None))
        freshness = args.freshness_window_ms
        gateway = Gateway(
            registry,
            kdc_url=kdc_url,
            key_cache_ttl=args.key_cache_ttl if args.key_cache_ttl is not None else 60.0,
            freshness_window_ms=None if freshness == -1 else (freshness or 30_000),
            allow_unsigned=args.allow_unsigned,
            poll_interval_ms=args.poll_interval_ms or 500,
        )
        try:
            service = GatewayService(gateway, host=host, port=port).start()
        except AddressInUse as exc:
            raise CliError(str(exc), EXIT_CONNECTIVITY) from None
        print(f"gateway listening on {service.url}", flush=True)
        bridge = None
        if args.bridge:
            bridge = GatewayMqttBridge(gateway, args.bridge).start()
            print(f"gateway bridging to broker at {args.bridge}", flush=True)
        try:
            _wait_for_signal()
        finally:
            if bridge is not None:
                bridge.stop()
            service.stop()
        return EXIT_OK

    if args.daemon == "broker":
        host = _resolve(args.host, "HOST", config, "host", "127.0.0.1")
        tcp_port = None if args.no_tcp else int(
            _resolve(args.tcp_port, "BROKER_TCP_PORT", config, "broker_tcp_port",
                     DEFAULT_BROKER_TCP_PORT)
        )
        ws_port = None if args.no_ws else int(
            _resolve(args.ws_port, "BROKER_WS_PORT", config, "broker_ws_port",
                     DEFAULT_BROKER_WS_PORT)
        )
        policy_config = None
        if args.policies:
            try:
                policy_config = load_broker_config(args.policies)
            except (OSError, PolicyError, json.JSONDecodeError) as exc:
                raise CliError(f"bad policy config: {exc}", EXIT_USAGE) from None
        try:
            broker = MqttBroker(
                policy_config=policy_config,
                tcp_host=host, tcp_port=tcp_port,
                ws_host=host, ws_port=ws_port, ws_path=args.ws_path,
                strict=args.strict,
            ).start()
        except BrokerError as exc:
            raise CliError(str(exc), EXIT_CONNECTIVITY) from None
        if tcp_port is not None:
            print(f"broker tcp listening on {broker.tcp_address}", flush=True)
        if ws_port is not None:
            print(f"broker websocket listening on {broker.ws_url}", flush=True)
        try:
            _wait_for_signal()
        finally:
            broker.stop()
        return EXIT_OK

    raise CliError(f"unknown daemon {args.daemon!r}", EXIT_USAGE)


def cmd_emulate(args, config) -> int:
    registry = _load_registry(_resolve(args.registry, "REGISTRY", config, "registry", None))
    gateway_url = _resolve(args.gateway, "GATEWAY", config, "gateway", None)
    broker_endpoint = _resolve(args.broker, "BROKER", config, "broker", None)
    sink = None
    if args.log_file:
        sink = open(args.log_file, "a", encoding="utf-8")
    else:
        sink = sys.stdout
    try:
        engine_config = EmulatorConfig(
            mode=args.mode,
            registry=registry,
            gateway_url=gateway_url,
            broker_endpoint=broker_endpoint,
            poll_interval_ms=args.poll_interval_ms,
            client_id=args.client_id,
            log_sink=sink,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    engine = EmulatorEngine(engine_config).start()
    if args.state_port is not None:
        try:
            server = engine.serve_state(port=args.state_port)
        except AddressInUse as exc:
            engine.stop()
            raise CliError(str(exc), EXIT_CONNECTIVITY) from None
        print(f"emulator state on {server.url}/emulator/state", flush=True)
    print(f"emulator running in {args.mode} mode", flush=True)
    try:
        _wait_for_signal()
    finally:
        engine.stop()
        if args.log_file and sink is not None:
            sink.close()
    return EXIT_OK


def _parse_command_args(args) -> list[dv.DeviceCommand]:
    if len(args.device) != len(args.params):
        raise CliError("--device and --params must be given the same number of times",
                       EXIT_USAGE)
    commands = []
    for device, params_json in zip(args.device, args.params):
        try:
            params_obj = json.loads(params_json)
            commands.append(dv.command_from_wire(device, params_obj))
        except (json.JSONDecodeError, dv.DecodeError) as exc:
            raise CliError(f"bad command for {device!r}: {exc}", EXIT_VALIDATION) from None
    return commands


def cmd_send(args, config) -> int:
    gateway_url = _resolve(args.gateway, "GATEWAY", config, "gateway", None)
    broker_endpoint = _resolve(args.broker, "BROKER", config, "broker", None)
    commands = _parse_command_args(args)
    if gateway_url and broker_endpoint:
        raise CliError("choose one of --gateway or --broker", EXIT_USAGE)
    if gateway_url:
        return _send_http(args, gateway_url, commands)
    if broker_endpoint:
        return _send_mqtt(args, broker_endpoint, commands, config)
    raise CliError("need --gateway or --broker", EXIT_USAGE)


def _send_http(args, gateway_url: str, commands) -> int:
    if not args.key:
        raise CliError("HTTP sends need --key (the client's private key PEM)", EXIT_USAGE)
    try:
        private_key = signing.load_private_key(args.key)
    except (OSError, ValueError, signing.SigningError) as exc:
        raise CliError(f"cannot load key {args.key}: {exc}", EXIT_USAGE) from None
    envelope = signing.IntentEnvelope(
        client_id=args.client_id, commands=tuple(commands), issued_at=now_ms()
    )
    packet = signing.sign_intent(envelope, private_key)
    try:
        resp = requests.post(
            f"{gateway_url}/api/command", data=signing.packet_to_wire(packet), timeout=10
        )
    except requests.RequestException as exc:
        raise CliError(f"gateway unreachable: {exc}", EXIT_CONNECTIVITY) from None
    if resp.status_code == 200:
        for result in resp.json()["results"]:
            print(result["response"])
        return EXIT_OK
    try:
        detail = resp.json()
    except ValueError:
        detail = {"error": "unknown", "detail": resp.text}
    message = f"{detail.get('error')}: {detail.get('detail')}"
    if resp.status_code == 401:
        raise CliError(message, EXIT_AUTH)
    if resp.status_code in (404, 422):
        raise CliError(message, EXIT_VALIDATION)
    raise CliError(f"gateway error {resp.status_code}: {message}", EXIT_CONNECTIVITY)


def _send_mqtt(args, broker_endpoint: str, commands, config) -> int:
    registry = _load_registry(_resolve(args.registry, "REGISTRY", config, "registry", None))
    prefix = registry.topic_prefix
    try:
        client = MqttClient(broker_endpoint, client_id=args.client_id).connect()
    except ConnectRefused as exc:
        raise CliError(str(exc), EXIT_AUTH) from None
    except MqttClientError as exc:
        raise CliError(str(exc), EXIT_CONNECTIVITY) from None
    try:
        exit_code = EXIT_OK
        for cmd in commands:
            topic = f"{prefix}/{cmd.device}"
            codes = client.subscribe([(topic, 0)])
            if codes and codes[0] == 0x80:
                raise CliError(f"subscription to {topic} denied", EXIT_AUTH)
            client.publish(topic, dv.encode_payload(cmd), qos=args.qos)
            deadline = time.monotonic() + 10
            response = None
            while time.monotonic() < deadline:
                try:
                    _t, payload = client.recv_message(timeout=deadline - time.monotonic())
                except RequestTimeout:
                    break
                try:
                    obj = json.loads(payload.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError):
                    continue
                if isinstance(obj, dict) and "response" in obj:
                    response = obj["response"]
                    break
            if response is None:
                print(f"no response for {cmd.device} (emulator offline?)", file=sys.stderr)
                exit_code = EXIT_CONNECTIVITY
            else:
                print(response)
        return exit_code
    except MqttClientError as exc:
        raise CliError(str(exc), EXIT_CONNECTIVITY) from None
    finally:
        client.close()


def cmd_bench(args, config) -> int:
    if args.bench_command == "compare":
        try:
            report_a = bench_mod.load_report(args.report_a)
            report_b = bench_mod.load_report(args.report_b)
        except (OSError, KeyError, ValueError) as exc:
            raise CliError(f"cannot load reports: {exc}", EXIT_USAGE) from None
        try:
            summary = bench_mod.compare_modes(report_a, report_b)
        except bench_mod.IncomparableReports as exc:
            raise CliError(str(exc), EXIT_USAGE) from None
        for line in summary["verdicts"]:
            print(line)
        return EXIT_OK

    gateway_url = _resolve(args.gateway, "GATEWAY", config, "gateway", None)
    broker_endpoint = _resolve(args.broker, "BROKER", config, "broker", None)
    registry = _load_registry(_resolve(args.registry, "REGISTRY", config, "registry", None))
    private_key = None
    if args.mode == "http-signed":
        if not args.key:
            raise CliError("http-signed bench needs --key", EXIT_USAGE)
        try:
            private_key = signing.load_private_key(args.key)
        except (OSError, ValueError, signing.SigningError) as exc:
            raise CliError(f"cannot load key {args.key}: {exc}", EXIT_USAGE) from None
    targets = bench_mod.BenchTargets(
        gateway_url=gateway_url,
        broker_endpoint=broker_endpoint,
        registry=registry,
        client_id=args.client_id,
        private_key=private_key,
    )
    try:
        report = bench_mod.run_bench(
            args.mode, iterations=args.iterations, targets=targets, warmup=args.warmup
        )
    except bench_mod.TargetUnreachable as exc:
        raise CliError(str(exc), EXIT_CONNECTIVITY) from None
    except bench_mod.BenchError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    fmt = "csv" if args.out.endswith(".csv") else "json"
    with open(args.out, "wb") as fh:
        fh.write(bench_mod.emit_report(report, fmt))
    agg = report.aggregates()
    print(f"mode={report.mode} iterations={report.iterations} "
          f"payload_bytes={report.payload_bytes}")
    for stage in bench_mod.STAGES:
        print(
            f"  {stage}: mean={agg[stage]['mean']:.3f} "
            f"p50={agg[stage]['p50']:.3f} p95={agg[stage]['p95']:.3f}"
        )
    print(f"report written to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
