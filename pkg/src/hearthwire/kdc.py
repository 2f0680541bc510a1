"""Key Distribution Center: a trusted repository of client public keys.

Clients (or an operator) register RSA public keys under a client id; the
gateway fetches them to verify intent signatures, or delegates verification
to the KDC's own verify endpoint. Registration replaces any previous key.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
from dataclasses import dataclass
from typing import Any, Optional

import requests

from . import signing
from .devices import DecodeError
from .httpd import HttpError, JsonHttpServer, parse_json_body
from .logs import now_ms

logger = logging.getLogger(__name__)


class KdcError(Exception):
    pass


class MalformedKey(KdcError):
    pass


class KeyNotFound(KdcError):
    pass


class KdcUnreachable(KdcError):
    pass


@dataclass(frozen=True)
class KeyRecord:
    client_id: str
    public_key: dict[str, Any]  # {"n": hex string, "e": int}
    registered_at: int


class KeyStore:
    """In-memory client-id -> public-key map with an optional JSON snapshot.

    Records are immutable and swapped whole under a lock, so concurrent
    readers can never observe a partially written key.
    """

    def __init__(self, snapshot_path: Optional[str] = None, clock=now_ms):
        self._records: dict[str, KeyRecord] = {}
        self._lock = threading.Lock()
        self._snapshot_path = snapshot_path
        self._clock = clock
        if snapshot_path and os.path.exists(snapshot_path):
            self._load_snapshot(snapshot_path)

    def register(self, client_id: str, public_key: dict[str, Any]) -> KeyRecord:
        if not isinstance(client_id, str) or not client_id:
            raise MalformedKey("client_id must be a non-empty string")
        try:
            signing.public_key_from_obj(public_key)
        except DecodeError as exc:
            raise MalformedKey(str(exc)) from None
        record = KeyRecord(
            client_id=client_id,
            public_key={"n": public_key["n"], "e": public_key["e"]},
            registered_at=self._clock(),
        )
        with self._lock:
            self._records[client_id] = record
            self._write_snapshot_locked()
        return record

    def get(self, client_id: str) -> KeyRecord:
        with self._lock:
            record = self._records.get(client_id)
        if record is None:
            raise KeyNotFound(client_id)
        return record

    def verify(self, client_id: str, digest: bytes, signature: bytes) -> bool:
        """Open the signature with the stored key and compare to the digest."""
        record = self.get(client_id)
        public_key = signing.public_key_from_obj(record.public_key)
        try:
            return signing.verify_digest(digest, signature, public_key)
        except signing.MalformedSignature:
            return False

    def client_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._records)

    def _load_snapshot(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        for entry in data.get("keys", []):
            self._records[entry["client_id"]] = KeyRecord(
                client_id=entry["client_id"],
                public_key=entry["public_key"],
                registered_at=entry["registered_at"],
            )

    def _write_snapshot_locked(self) -> None:
        if not self._snapshot_path:
            return
        data = {
            "keys": [
                {
                    "client_id": r.client_id,
                    "public_key": r.public_key,
                    "registered_at": r.registered_at,
                }
                for r in self._records.values()
            ]
        }
        tmp = self._snapshot_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh)
        os.replace(tmp, self._snapshot_path)


class KdcService:
    """HTTP face of the key store.

    POST /kdc/keys              {"client_id", "public_key"}          -> 201
    GET  /kdc/keys/{client_id}                                       -> 200 | 404
    POST /kdc/verify            {"client_id","digest_hex","signature_b64"} -> 200 | 404
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        snapshot_path: Optional[str] = None,
        register_token: Optional[str] = None,
    ):
        self.store = KeyStore(snapshot_path=snapshot_path)
        self._register_token = register_token
        self.server = JsonHttpServer(host=host, port=port, name="kdc")
        self.server.add_route("POST", r"/kdc/keys", self._post_key)
        self.server.add_route("GET", r"/kdc/keys/(?P<client_id>[^/]+)", self._get_key)
        self.server.add_route("POST", r"/kdc/verify", self._post_verify)

    def start(self) -> "KdcService":
        self.server.start()
        logger.info("kdc listening on %s", self.server.url)
        return self

    def stop(self) -> None:
        self.server.stop()

    @property
    def url(self) -> str:
        return self.server.url

    def _post_key(self, match, query, body, ctx):
        if self._register_token is not None and ctx.bearer_token() != self._register_token:
            raise HttpError(401, "unauthorized", "registration requires a bearer token")
        obj = parse_json_body(body)
        if not isinstance(obj, dict) or set(obj) != {"client_id", "public_key"}:
            raise HttpError(400, "malformed_key", "body must carry client_id and public_key")
        try:
            record = self.store.register(obj["client_id"], obj["public_key"])
        except (MalformedKey, TypeError) as exc:
            raise HttpError(400, "malformed_key", str(exc)) from None
        return 201, {"client_id": record.client_id, "registered_at": record.registered_at}

    def _get_key(self, match, query, body, ctx):
        try:
            record = self.store.get(match["client_id"])
        except KeyNotFound:
            raise HttpError(404, "not_found", f"no key for {match['client_id']!r}") from None
        return 200, {"client_id": record.client_id, "public_key": record.public_key}

    def _post_verify(self, match, query, body, ctx):
        obj = parse_json_body(body)
        if not isinstance(obj, dict) or set(obj) != {"client_id", "digest_hex", "signature_b64"}:
            raise HttpError(
                400, "bad_request", "body must carry client_id, digest_hex, signature_b64"
            )
        try:
            digest = bytes.fromhex(obj["digest_hex"])
        except (TypeError, ValueError):
            raise HttpError(400, "bad_request", "digest_hex is not hex") from None
        try:
            sig = base64.b64decode(obj["signature_b64"], validate=True)
        except Exception:
            raise HttpError(400, "bad_request", "signature_b64 is not base64") from None
        try:
            valid = self.store.verify(obj["client_id"], digest, sig)
        except KeyNotFound:
            raise HttpError(404, "not_found", f"no key for {obj['client_id']!r}") from None
        except signing.SigningError as exc:
            raise HttpError(400, "bad_request", str(exc)) from None
        return 200, {"valid": valid}


class KdcClient:
    """requests-backed client used by the gateway and the keygen tool."""

    def __init__(self, base_url: str, timeout: float = 5.0, session: Optional[requests.Session] = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def register(self, client_id: str, public_key: dict[str, Any], token: Optional[str] = None):
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        try:
            resp = self.session.post(
                f"{self.base_url}/kdc/keys",
                json={"client_id": client_id, "public_key": public_key},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise KdcUnreachable(str(exc)) from None
        if resp.status_code != 201:
            raise KdcError(f"registration failed: {resp.status_code} {resp.text}")

    def get_key(self, client_id: str) -> dict[str, Any]:
        try:
            resp = self.session.get(
                f"{self.base_url}/kdc/keys/{client_id}", timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise KdcUnreachable(str(exc)) from None
        if resp.status_code == 404:
            raise KeyNotFound(client_id)
        if resp.status_code != 200:
            raise KdcError(f"key fetch failed: {resp.status_code} {resp.text}")
        return resp.json()["public_key"]
