import json
import os
import signal
import socket
import subprocess
import sys
import time

import pytest

from hearthwire import devices as dv
from hearthwire import signing as sg
from hearthwire.cli import main
from hearthwire.gateway import Gateway, GatewayService
from hearthwire.kdc import KdcService
from hearthwire.logs import now_ms
from hearthwire.mqtt.broker import MqttBroker
from hearthwire.emulator import EmulatorConfig, EmulatorEngine


def free_port() -> int:
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


@pytest.fixture
def keys(tmp_path):
    assert main(["keygen", "--bits", "1024", "--client-id", "client1",
                 "--out-dir", str(tmp_path / "keys")]) == 0
    return {
        "private": str(tmp_path / "keys" / "client1_private.pem"),
        "public": str(tmp_path / "keys" / "client1_public.pem"),
    }


class TestKeygen:
    def test_writes_key_files(self, tmp_path):
        out = tmp_path / "k"
        assert main(["keygen", "--bits", "1024", "--client-id", "c", "--out-dir", str(out)]) == 0
        assert (out / "c_private.pem").exists()
        assert (out / "c_public.pem").exists()
        private = sg.load_private_key(str(out / "c_private.pem"))
        public = sg.load_public_key(str(out / "c_public.pem"))
        browser = json.loads((out / "c_browser_key.json").read_text())
        assert int(browser["n"], 16) == public.public_numbers().n
        assert browser["e"] == public.public_numbers().e
        assert int(browser["d"], 16) == private.private_numbers().d

    def test_unsupported_bits_exit_2(self, tmp_path, capsys):
        code = main(["keygen", "--bits", "1000", "--client-id", "c",
                     "--out-dir", str(tmp_path)])
        assert code == 2
        assert "key size" in capsys.readouterr().err

    def test_register_against_live_kdc(self, tmp_path):
        kdc = KdcService(port=0).start()
        try:
            code = main(["keygen", "--bits", "1024", "--client-id", "c1",
                         "--out-dir", str(tmp_path), "--register", kdc.url])
            assert code == 0
            assert kdc.store.get("c1") is not None
        finally:
            kdc.stop()

    def test_register_unreachable_exit_5_keys_still_written(self, tmp_path, capsys):
        code = main(["keygen", "--bits", "1024", "--client-id", "c1",
                     "--out-dir", str(tmp_path), "--register", "http://127.0.0.1:1"])
        assert code == 5
        assert (tmp_path / "c1_private.pem").exists()


class TestSendHttp:
    @pytest.fixture
    def stack(self, keys):
        kdc = KdcService(port=0).start()
        kdc.store.register(
            "client1", sg.public_key_to_obj(sg.load_public_key(keys["public"]))
        )
        gateway = Gateway(dv.default_registry(), kdc_url=kdc.url)
        service = GatewayService(gateway, port=0).start()
        yield kdc, gateway, service
        service.stop()
        kdc.stop()

    def test_bulb_on(self, stack, keys, capsys):
        _kdc, gateway, service = stack
        code = main([
            "send", "--gateway", service.url, "--key", keys["private"],
            "--client-id", "client1",
            "--device", "smart_bulb1",
            "--params", '{"power":true,"color":"#ffffff"}',
        ])
        assert code == 0
        assert "Smart_bulb1 Turned On in living room" in capsys.readouterr().out
        assert gateway.snapshot()["smart_bulb1"].params.power is True

    def test_composite_two_lines(self, stack, keys, capsys):
        _kdc, _gateway, service = stack
        code = main([
            "send", "--gateway", service.url, "--key", keys["private"],
            "--client-id", "client1",
            "--device", "smart_bulb1", "--params", '{"power":true,"color":"#ffffff"}',
            "--device", "smart_fan1", "--params", '{"power":true}',
        ])
        out = capsys.readouterr().out.strip().splitlines()
        assert code == 0
        assert out == [
            "Smart_bulb1 Turned On in living room",
            "Smart_fan1 Turned On in living room",
        ]

    def test_validation_error_exit_4(self, stack, keys, capsys):
        _kdc, _gateway, service = stack
        code = main([
            "send", "--gateway", service.url, "--key", keys["private"],
            "--client-id", "client1",
            "--device", "smart_ac1",
            "--params", '{"power":true,"h_direction":"rotate(0deg)","temperature":30}',
        ])
        assert code == 4
        assert "range" in capsys.readouterr().err.lower()

    def test_unknown_client_exit_3(self, stack, keys):
        _kdc, _gateway, service = stack
        code = main([
            "send", "--gateway", service.url, "--key", keys["private"],
            "--client-id", "stranger",
            "--device", "smart_fan1", "--params", '{"power":true}',
        ])
        assert code == 3

    def test_gateway_unreachable_exit_5(self, keys):
        code = main([
            "send", "--gateway", "http://127.0.0.1:1", "--key", keys["private"],
            "--client-id", "client1",
            "--device", "smart_fan1", "--params", '{"power":true}',
        ])
        assert code == 5

    def test_mismatched_pairs_exit_2(self, keys):
        code = main([
            "send", "--gateway", "http://127.0.0.1:1", "--key", keys["private"],
            "--device", "smart_fan1", "--params", '{"power":true}',
            "--device", "smart_bulb1",
        ])
        assert code == 2


class TestSendMqtt:
    def test_send_and_response(self, capsys):
        broker = MqttBroker(tcp_port=0, ws_port=None).start()
        engine = EmulatorEngine(EmulatorConfig(
            mode="mqtt", registry=dv.default_registry(),
            broker_endpoint=f"mqtt://{broker.tcp_address}",
        )).start()
        try:
            assert engine.connected.wait(5)
            code = main([
                "send", "--broker", f"mqtt://{broker.tcp_address}",
                "--device", "smart_lock1", "--params", '{"door_status":"unlocked"}',
            ])
            assert code == 0
            assert "Smart_lock1 Unlocked" in capsys.readouterr().out
        finally:
            engine.stop()
            broker.stop()

    def test_no_emulator_exit_5(self, capsys):
        broker = MqttBroker(tcp_port=0, ws_port=None).start()
        try:
            code = main([
                "send", "--broker", f"mqtt://{broker.tcp_address}",
                "--device", "smart_lock1", "--params", '{"door_status":"locked"}',
            ])
            assert code == 5
        finally:
            broker.stop()


class TestBenchCli:
    def test_run_and_compare(self, tmp_path, capsys):
        broker = MqttBroker(tcp_port=0, ws_port=None).start()
        try:
            out_a = str(tmp_path / "a.json")
            out_b = str(tmp_path / "b.json")
            for out in (out_a, out_b):
                code = main([
                    "bench", "run", "--mode", "mqtt", "--iterations", "3",
                    "--warmup", "1", "--broker", f"mqtt://{broker.tcp_address}",
                    "--out", out,
                ])
                assert code == 0
            report = json.load(open(out_a))
            assert report["iterations"] == 3
            code = main(["bench", "compare", out_a, out_b])
            assert code == 0
            assert "total p50" in capsys.readouterr().out
        finally:
            broker.stop()

    def test_csv_output(self, tmp_path):
        broker = MqttBroker(tcp_port=0, ws_port=None).start()
        try:
            out = str(tmp_path / "r.csv")
            code = main([
                "bench", "run", "--mode", "mqtt", "--iterations", "2", "--warmup", "0",
                "--broker", f"mqtt://{broker.tcp_address}", "--out", out,
            ])
            assert code == 0
            lines = open(out).read().strip().splitlines()
            assert lines[0].startswith("mode,iteration,")
            assert len(lines) == 3
        finally:
            broker.stop()

    def test_unreachable_exit_5(self, tmp_path):
        code = main([
            "bench", "run", "--mode", "mqtt", "--iterations", "1",
            "--broker", "mqtt://127.0.0.1:1", "--out", str(tmp_path / "x.json"),
        ])
        assert code == 5


class TestDaemons:
    def test_serve_kdc_subprocess_health_and_sigterm(self):
        port = free_port()
        proc = subprocess.Popen(
            [sys.executable, "-m", "hearthwire.cli", "serve", "kdc", "--port", str(port)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        try:
            line = proc.stdout.readline()
            assert f"kdc listening on http://127.0.0.1:{port}" in line
            import requests

            resp = requests.get(f"http://127.0.0.1:{port}/kdc/keys/nobody", timeout=5)
            assert resp.status_code == 404  # routed; daemon is healthy
        finally:
            proc.send_signal(signal.SIGTERM)
            assert proc.wait(timeout=10) == 0

    def test_address_in_use_exit_5(self):
        port = free_port()
        holder = socket.socket()
        holder.bind(("127.0.0.1", port))
        holder.listen(1)
        try:
            proc = subprocess.run(
                [sys.executable, "-m", "hearthwire.cli", "serve", "kdc",
                 "--port", str(port)],
                capture_output=True, text=True, timeout=30,
            )
            assert proc.returncode == 5
            assert "in use" in proc.stderr
        finally:
            holder.close()

    def test_emulate_usage_error(self):
        assert main(["emulate", "--mode", "mqtt"]) == 2


class TestHelp:
    @pytest.mark.parametrize(
        "argv",
        [
            ["--help"],
            ["keygen", "--help"],
            ["serve", "--help"],
            ["serve", "kdc", "--help"],
            ["serve", "gateway", "--help"],
            ["serve", "broker", "--help"],
            ["emulate", "--help"],
            ["send", "--help"],
            ["bench", "--help"],
            ["bench", "run", "--help"],
            ["bench", "compare", "--help"],
        ],
    )
    def test_help_exits_zero(self, argv, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(argv)
        assert excinfo.value.code == 0
        assert "usage" in capsys.readouterr().out.lower()

    def test_usage_error_exit_2(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["keygen"])  # missing required flags
        assert excinfo.value.code == 2


class TestConfigPrecedence:
    def test_env_beats_config_file(self, tmp_path, monkeypatch, keys):
        # config file points at a dead gateway, env at nothing valid either,
        # but precedence decides which error we get
        config_path = tmp_path / "cfg.json"
        config_path.write_text(json.dumps({"gateway": "http://127.0.0.1:1"}))
        monkeypatch.setenv("HEARTHWIRE_GATEWAY", "not-a-url")
        code = main([
            "--config", str(config_path),
            "send", "--key", keys["private"],
            "--device", "smart_fan1", "--params", '{"power":true}',
        ])
        assert code == 5  # env value used, requests fails on the bogus URL

    def test_flag_beats_env(self, monkeypatch, keys, capsys):
        monkeypatch.setenv("HEARTHWIRE_GATEWAY", "http://127.0.0.1:1")
        kdc = KdcService(port=0).start()
        kdc.store.register(
            "client1", sg.public_key_to_obj(sg.load_public_key(keys["public"]))
        )
        gateway = Gateway(dv.default_registry(), kdc_url=kdc.url)
        service = GatewayService(gateway, port=0).start()
        try:
            code = main([
                "send", "--gateway", service.url, "--key", keys["private"],
                "--client-id", "client1",
                "--device", "smart_fan1", "--params", '{"power":true}',
            ])
            assert code == 0
        finally:
            service.stop()
            kdc.stop()
