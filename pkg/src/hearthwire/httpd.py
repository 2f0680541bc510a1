"""Small threaded JSON-over-HTTP server used by the KDC, gateway, and emulator.

Routes are (method, path-regex) pairs; handlers get the regex match, the
parsed query, and the raw body, and return (status, json-able object).
CORS headers are emitted on every response so the browser UI can call in.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Optional
from urllib.parse import parse_qs, urlparse

logger = logging.getLogger(__name__)

Handler = Callable[[re.Match, dict, bytes, "RequestContext"], tuple[int, Any]]


class HttpError(Exception):
    def __init__(self, status: int, code: str, detail: str = ""):
        super().__init__(detail or code)
        self.status = status
        self.code = code
        self.detail = detail

    def body(self) -> dict:
        return {"error": self.code, "detail": self.detail}


class AddressInUse(OSError):
    pass


class RequestContext:
    def __init__(self, headers):
        self.headers = headers

    def bearer_token(self) -> Optional[str]:
        auth = self.headers.get("Authorization", "")
        if auth.startswith("Bearer "):
            return auth[len("Bearer ") :]
        return None


def parse_json_body(body: bytes) -> Any:
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HttpError(400, "bad_json", f"request body is not JSON: {exc}") from None


class JsonHttpServer:
    def __init__(self, host: str = "127.0.0.1", port: int = 0, name: str = "service"):
        self.host = host
        self.requested_port = port
        self.name = name
        self._routes: list[tuple[str, re.Pattern, Handler]] = []
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    def add_route(self, method: str, pattern: str, handler: Handler) -> None:
        self._routes.append((method.upper(), re.compile(f"^{pattern}$"), handler))

    def start(self) -> None:
        routes = self._routes
        name = self.name

        class _Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            server_version = f"hearthwire-{name}"
            disable_nagle_algorithm = True  # loopback latency matters for the bench

            def log_message(self, fmt, *args):  # default stderr chatter off
                logger.debug("%s %s", self.address_string(), fmt % args)

            def _respond(self, status: int, obj: Any) -> None:
                payload = b"" if obj is None else json.dumps(obj).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type, Authorization")
                self.end_headers()
                if payload:
                    self.wfile.write(payload)

            def _dispatch(self, method: str) -> None:
                parsed = urlparse(self.path)
                query = parse_qs(parsed.query)
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length) if length else b""
                path_exists = False
                for route_method, pattern, handler in routes:
                    match = pattern.match(parsed.path)
                    if not match:
                        continue
                    path_exists = True
                    if route_method != method:
                        continue
                    try:
                        status, obj = handler(match, query, body, RequestContext(self.headers))
                    except HttpError as exc:
                        self._respond(exc.status, exc.body())
                    except Exception:
                        logger.exception("%s: handler error on %s %s", name, method, parsed.path)
                        self._respond(500, {"error": "internal", "detail": ""})
                    else:
                        self._respond(status, obj)
                    return
                if path_exists:
                    self._respond(405, {"error": "method_not_allowed", "detail": method})
                else:
                    self._respond(404, {"error": "not_found", "detail": parsed.path})

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_OPTIONS(self):
                self._respond(204, None)

        try:
            self._httpd = ThreadingHTTPServer((self.host, self.requested_port), _Handler)
        except OSError as exc:
            if exc.errno == 98:  # EADDRINUSE
                raise AddressInUse(
                    f"{self.name}: address {self.host}:{self.requested_port} already in use"
                ) from exc
            raise
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name=f"{self.name}-http", daemon=True
        )
        self._thread.start()

    @property
    def port(self) -> int:
        assert self._httpd is not None, "server not started"
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
