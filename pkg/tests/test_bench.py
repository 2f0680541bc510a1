import json
import random

import numpy as np
import pytest

from hearthwire import bench
from hearthwire import devices as dv
from hearthwire import signing as sg
from hearthwire.bench import (
    BenchReport,
    BenchTargets,
    IncomparableReports,
    StageTimings,
    compare_modes,
    emit_report,
    percentile,
    run_bench,
)
from hearthwire.gateway import Gateway, GatewayService
from hearthwire.kdc import KdcService
from hearthwire.mqtt.broker import MqttBroker


def synthetic_report(mode="mqtt", seed=1, n=20, payload=64, mix="bulb-toggle"):
    rng = random.Random(seed)
    rows = [
        StageTimings(
            sign_ms=rng.uniform(0, 5),
            transport_ms=rng.uniform(0, 50),
            verify_ms=rng.uniform(0, 10),
            emulator_ms=rng.uniform(0, 100),
        )
        for _ in range(n)
    ]
    return BenchReport(mode=mode, command_mix=mix, payload_bytes=payload, rows=rows)


class TestStageTimings:
    def test_reference_row_sum_identity(self):
        """The published cloud-deployment stage delays sum to their total."""
        row = StageTimings(sign_ms=20, transport_ms=480, verify_ms=525, emulator_ms=426)
        assert row.total_ms == 1451

    def test_sum_identity_holds_for_every_row(self):
        report = synthetic_report(seed=7, n=50)
        for row in report.rows:
            assert row.total_ms == pytest.approx(
                row.sign_ms + row.transport_ms + row.verify_ms + row.emulator_ms, abs=0
            )

    def test_negative_stage_rejected(self):
        with pytest.raises(ValueError):
            StageTimings(sign_ms=-1, transport_ms=0, verify_ms=0, emulator_ms=0)


class TestPercentile:
    def test_matches_numpy_on_random_data(self):
        rng = random.Random(3)
        for _ in range(50):
            values = [rng.uniform(0, 1000) for _ in range(rng.randint(1, 40))]
            for q in (0, 25, 50, 90, 95, 100):
                assert percentile(values, q) == pytest.approx(
                    float(np.percentile(values, q)), rel=1e-12
                )

    def test_single_value(self):
        assert percentile([42.0], 95) == 42.0


class TestAggregates:
    def test_match_independent_recomputation(self):
        report = synthetic_report(seed=11, n=37)
        agg = report.aggregates()
        for stage in bench.STAGES:
            values = np.array([getattr(row, stage) for row in report.rows])
            assert agg[stage]["mean"] == pytest.approx(float(values.mean()), rel=1e-9)
            assert agg[stage]["p50"] == pytest.approx(
                float(np.percentile(values, 50)), rel=1e-9
            )
            assert agg[stage]["p95"] == pytest.approx(
                float(np.percentile(values, 95)), rel=1e-9
            )


class TestEmit:
    def test_csv_shape(self):
        report = synthetic_report(n=2)
        text = emit_report(report, "csv").decode()
        lines = text.strip().split("\n")
        assert len(lines) == 3  # header + 2 rows
        assert lines[0] == "mode,iteration,sign_ms,transport_ms,verify_ms,emulator_ms,total_ms"
        first = lines[1].split(",")
        assert first[0] == "mqtt" and first[1] == "1"
        assert float(first[6]) == pytest.approx(report.rows[0].total_ms)

    def test_csv_sum_identity_in_rows(self):
        report = synthetic_report(n=10)
        for line in emit_report(report, "csv").decode().strip().split("\n")[1:]:
            parts = [float(x) for x in line.split(",")[2:]]
            assert parts[4] == pytest.approx(sum(parts[:4]), rel=1e-12)

    def test_json_roundtrip(self):
        report = synthetic_report(n=5, payload=123)
        obj = json.loads(emit_report(report, "json"))
        restored = BenchReport.from_obj(obj)
        assert restored.mode == report.mode
        assert restored.payload_bytes == report.payload_bytes
        assert restored.rows == report.rows
        # aggregates in the JSON equal recomputation from its own rows
        assert obj["aggregates"] == restored.aggregates()

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_report(synthetic_report(), "xml")


class TestCompare:
    def test_identical_reports_give_zero_deltas(self):
        a = synthetic_report(seed=5)
        b = synthetic_report(seed=5)
        summary = compare_modes(a, b)
        for stage in bench.STAGES:
            for metric in ("mean", "p50", "p95"):
                assert summary["stages"][stage][metric]["delta"] == 0
        assert summary["payload_bytes"]["delta"] == 0

    def test_delta_arithmetic_on_fixed_reports(self):
        slow = BenchReport(
            mode="http-signed",
            command_mix="bulb-toggle",
            payload_bytes=500,
            rows=[StageTimings(2, 10, 5, 40) for _ in range(4)],
        )
        fast = BenchReport(
            mode="mqtt",
            command_mix="bulb-toggle",
            payload_bytes=70,
            rows=[StageTimings(0, 12, 0, 0) for _ in range(4)],
        )
        summary = compare_modes(slow, fast)
        assert summary["stages"]["total_ms"]["p50"]["a"] == 57
        assert summary["stages"]["total_ms"]["p50"]["b"] == 12
        assert summary["stages"]["total_ms"]["p50"]["delta"] == 12 - 57
        assert summary["payload_bytes"]["delta"] == 70 - 500
        assert any("mqtt lower" in line for line in summary["verdicts"])
        assert any("mqtt smaller" in line for line in summary["verdicts"])

    def test_mismatched_iterations(self):
        with pytest.raises(IncomparableReports):
            compare_modes(synthetic_report(n=5), synthetic_report(n=6))

    def test_mismatched_command_mix(self):
        with pytest.raises(IncomparableReports):
            compare_modes(
                synthetic_report(mix="bulb-toggle"), synthetic_report(mix="ac-sweep")
            )


class TestLiveSmoke:
    """Tiny-iteration live runs; the full 100-iteration runs live in acceptance."""

    def test_http_modes_and_payload_sizes(self):
        keypair = sg.generate_keypair(1024)
        kdc = KdcService(port=0).start()
        kdc.store.register("bench_client", sg.public_key_to_obj(keypair.public_key))
        gateway = Gateway(
            dv.default_registry(),
            kdc_url=kdc.url,
            allow_unsigned=True,
            key_cache_ttl=0,
        )
        service = GatewayService(gateway, port=0).start()
        try:
            targets = BenchTargets(
                gateway_url=service.url,
                private_key=keypair.private_key,
                poll_interval_ms=50,
            )
            signed = run_bench("http-signed", iterations=3, targets=targets, warmup=1)
            unsigned = run_bench("http-unsigned", iterations=3, targets=targets, warmup=1)
            assert signed.iterations == unsigned.iterations == 3
            assert signed.payload_bytes > unsigned.payload_bytes
            for report in (signed, unsigned):
                for row in report.rows:
                    assert row.total_ms >= 0
            assert all(row.verify_ms > 0 for row in signed.rows)
            assert all(row.verify_ms == 0 for row in unsigned.rows)
        finally:
            service.stop()
            kdc.stop()

    def test_mqtt_mode(self):
        broker = MqttBroker(tcp_port=0, ws_port=None).start()
        try:
            targets = BenchTargets(broker_endpoint=f"mqtt://{broker.tcp_address}")
            report = run_bench("mqtt", iterations=3, targets=targets, warmup=1)
            assert report.iterations == 3
            assert report.payload_bytes > 0
            assert all(row.transport_ms > 0 for row in report.rows)
        finally:
            broker.stop()

    def test_unreachable_target(self):
        targets = BenchTargets(gateway_url="http://127.0.0.1:1", private_key=object())
        with pytest.raises(bench.TargetUnreachable):
            run_bench("http-signed", iterations=1, targets=targets, warmup=0)

    def test_bad_mode_and_iterations(self):
        with pytest.raises(bench.BenchError):
            run_bench("carrier-pigeon", iterations=1)
        with pytest.raises(bench.BenchError):
            run_bench("mqtt", iterations=0)
