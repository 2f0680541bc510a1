import base64
import json
import threading

import pytest
import requests

from hearthwire import signing as sg
from hearthwire.kdc import (
    KdcClient,
    KdcService,
    KeyNotFound,
    KeyStore,
    MalformedKey,
)


@pytest.fixture(scope="module")
def pair_a():
    return sg.generate_keypair(1024)


@pytest.fixture(scope="module")
def pair_b():
    return sg.generate_keypair(1024)


@pytest.fixture
def kdc():
    service = KdcService(port=0).start()
    yield service
    service.stop()


class TestKeyStore:
    def test_register_get_roundtrip(self, pair_a):
        store = KeyStore()
        obj = sg.public_key_to_obj(pair_a.public_key)
        store.register("client1", obj)
        assert store.get("client1").public_key == obj

    def test_reregistration_replaces(self, pair_a, pair_b):
        store = KeyStore()
        store.register("client1", sg.public_key_to_obj(pair_a.public_key))
        store.register("client1", sg.public_key_to_obj(pair_b.public_key))
        assert store.get("client1").public_key == sg.public_key_to_obj(pair_b.public_key)

    def test_unknown_id(self):
        with pytest.raises(KeyNotFound):
            KeyStore().get("ghost")

    def test_empty_client_id_rejected(self, pair_a):
        with pytest.raises(MalformedKey):
            KeyStore().register("", sg.public_key_to_obj(pair_a.public_key))

    def test_garbage_key_rejected(self):
        with pytest.raises(MalformedKey):
            KeyStore().register("c", {"n": "zz", "e": "no"})

    def test_verify_matches_local_verification(self, pair_a, pair_b):
        """KDC-side verify agrees with local verify_digest on all inputs."""
        store = KeyStore()
        store.register("a", sg.public_key_to_obj(pair_a.public_key))
        digest = sg.md5_digest(b"intent bytes")
        good = sg.sign_digest(digest, pair_a.private_key)
        bad = sg.sign_digest(digest, pair_b.private_key)
        for sig in (good, bad):
            assert store.verify("a", digest, sig) == sg.verify_digest(
                digest, sig, pair_a.public_key
            )
        assert store.verify("a", digest, good) is True
        assert store.verify("a", digest, bad) is False

    def test_verify_unknown_client(self, pair_a):
        digest = sg.md5_digest(b"x")
        with pytest.raises(KeyNotFound):
            KeyStore().verify("ghost", digest, b"\x00" * 128)

    def test_snapshot_persistence(self, tmp_path, pair_a):
        path = str(tmp_path / "keys.json")
        store = KeyStore(snapshot_path=path)
        store.register("client1", sg.public_key_to_obj(pair_a.public_key))
        reloaded = KeyStore(snapshot_path=path)
        assert reloaded.get("client1").public_key == sg.public_key_to_obj(pair_a.public_key)

    def test_concurrent_readers_never_see_torn_keys(self, pair_a, pair_b):
        store = KeyStore()
        obj_a = sg.public_key_to_obj(pair_a.public_key)
        obj_b = sg.public_key_to_obj(pair_b.public_key)
        store.register("c", obj_a)
        stop = threading.Event()
        errors = []

        def writer():
            flip = False
            while not stop.is_set():
                store.register("c", obj_b if flip else obj_a)
                flip = not flip

        def reader():
            while not stop.is_set():
                seen = store.get("c").public_key
                if seen != obj_a and seen != obj_b:
                    errors.append(seen)

        threads = [threading.Thread(target=writer)] + [
            threading.Thread(target=reader) for _ in range(4)
        ]
        for t in threads:
            t.start()
        stop_timer = threading.Timer(1.0, stop.set)
        stop_timer.start()
        for t in threads:
            t.join()
        assert errors == []


class TestHttpApi:
    def test_register_and_fetch(self, kdc, pair_a):
        obj = sg.public_key_to_obj(pair_a.public_key)
        resp = requests.post(
            f"{kdc.url}/kdc/keys", json={"client_id": "client1", "public_key": obj}, timeout=5
        )
        assert resp.status_code == 201
        got = requests.get(f"{kdc.url}/kdc/keys/client1", timeout=5)
        assert got.status_code == 200
        assert got.json() == {"client_id": "client1", "public_key": obj}

    def test_fetch_unknown_404(self, kdc):
        assert requests.get(f"{kdc.url}/kdc/keys/ghost", timeout=5).status_code == 404

    def test_register_malformed_400(self, kdc):
        resp = requests.post(
            f"{kdc.url}/kdc/keys",
            json={"client_id": "", "public_key": {"n": "ff", "e": 3}},
            timeout=5,
        )
        assert resp.status_code == 400

    def test_verify_endpoint(self, kdc, pair_a, pair_b):
        obj = sg.public_key_to_obj(pair_a.public_key)
        requests.post(
            f"{kdc.url}/kdc/keys", json={"client_id": "v1", "public_key": obj}, timeout=5
        )
        digest = sg.md5_digest(b"payload")
        good = sg.sign_digest(digest, pair_a.private_key)
        bad = sg.sign_digest(digest, pair_b.private_key)

        def verify(sig):
            return requests.post(
                f"{kdc.url}/kdc/verify",
                json={
                    "client_id": "v1",
                    "digest_hex": digest.hex(),
                    "signature_b64": base64.b64encode(sig).decode(),
                },
                timeout=5,
            )

        assert verify(good).json() == {"valid": True}
        assert verify(bad).json() == {"valid": False}

    def test_verify_unknown_client_404(self, kdc):
        resp = requests.post(
            f"{kdc.url}/kdc/verify",
            json={"client_id": "ghost", "digest_hex": "00" * 16, "signature_b64": ""},
            timeout=5,
        )
        assert resp.status_code == 404

    def test_cors_headers_present(self, kdc):
        resp = requests.get(f"{kdc.url}/kdc/keys/ghost", timeout=5)
        assert resp.headers["Access-Control-Allow-Origin"] == "*"
        preflight = requests.options(f"{kdc.url}/kdc/keys", timeout=5)
        assert preflight.status_code == 204

    def test_registration_token_enforced(self, pair_a):
        service = KdcService(port=0, register_token="sesame").start()
        try:
            obj = sg.public_key_to_obj(pair_a.public_key)
            body = {"client_id": "c", "public_key": obj}
            denied = requests.post(f"{service.url}/kdc/keys", json=body, timeout=5)
            assert denied.status_code == 401
            allowed = requests.post(
                f"{service.url}/kdc/keys",
                json=body,
                headers={"Authorization": "Bearer sesame"},
                timeout=5,
            )
            assert allowed.status_code == 201
            # reads stay open
            assert requests.get(f"{service.url}/kdc/keys/c", timeout=5).status_code == 200
        finally:
            service.stop()


class TestKdcClient:
    def test_client_roundtrip(self, kdc, pair_a):
        client = KdcClient(kdc.url)
        obj = sg.public_key_to_obj(pair_a.public_key)
        client.register("cli_client", obj)
        assert client.get_key("cli_client") == obj

    def test_client_not_found(self, kdc):
        with pytest.raises(KeyNotFound):
            KdcClient(kdc.url).get_key("ghost")
