"""Request plumbing shared by the service and the agents.

Every server-side component is an *app*: an object with
``handle(method, target, body) -> Response`` where ``target`` is the
origin-form request target (path plus query). Apps can be mounted on a
real socket with :func:`serve` or wired together in-process with
:class:`InProcessTransport`; clients only ever see a :class:`Transport`.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Protocol
from urllib.parse import urlsplit

import requests

log = logging.getLogger(__name__)


class TransportError(ConnectionError):
    """The peer could not be reached or did not answer in time."""


@dataclass
class Response:
    status: int
    body: str = ""
    content_type: str = "application/ld+json"
    headers: dict[str, str] = field(default_factory=dict)

    def json(self) -> Any:
        return json.loads(self.body)

    @classmethod
    def error(cls, status: int, message: str) -> "Response":
        return cls(status, json.dumps({"error": message}), "application/json")


class App(Protocol):
    def handle(self, method: str, target: str, body: bytes) -> Response: ...


class Transport(Protocol):
    def request(self, method: str, url: str, body: Any = None,
                timeout: float | None = None) -> Response: ...


def _encode(body: Any) -> bytes:
    if body is None:
        return b""
    if isinstance(body, bytes):
        return body
    if isinstance(body, str):
        return body.encode()
    return json.dumps(body).encode()


def _origin(url: str) -> tuple[str, str]:
    parts = urlsplit(url)
    target = parts.path or "/"
    if parts.query:
        target += "?" + parts.query
    return f"{parts.scheme}://{parts.netloc}".lower(), target


class DeferredApp:
    """Forwards to ``app`` once set; 503 before that.

    Lets a listener be bound (and its URL known) before the app exists.
    """

    def __init__(self, app: App | None = None) -> None:
        self.app = app

    def handle(self, method: str, target: str, body: bytes) -> Response:
        if self.app is None:
            return Response.error(503, "not ready")
        return self.app.handle(method, target, body)


class InProcessTransport:
    """Routes requests to apps registered by origin, without sockets.

    Calls are synchronous and run on the caller's thread, which keeps whole
    experiments deterministic. An unmounted origin behaves like a refused
    connection.
    """

    def __init__(self) -> None:
        self._apps: dict[str, App] = {}
        self._lock = threading.Lock()

    def mount(self, base_url: str, app: App) -> None:
        origin, _ = _origin(base_url)
        with self._lock:
            self._apps[origin] = app

    def unmount(self, base_url: str) -> None:
        origin, _ = _origin(base_url)
        with self._lock:
            self._apps.pop(origin, None)

    def request(self, method: str, url: str, body: Any = None,
                timeout: float | None = None) -> Response:
        origin, target = _origin(url)
        app = self._apps.get(origin)
        if app is None:
            raise TransportError(f"no app mounted at {origin}")
        return app.handle(method.upper(), target, _encode(body))


class HttpTransport:
    """``requests``-backed transport with one keep-alive session per thread."""

    def __init__(self, default_timeout: float = 10.0) -> None:
        self.default_timeout = default_timeout
        self._local = threading.local()

    def _session(self) -> requests.Session:
        s = getattr(self._local, "session", None)
        if s is None:
            s = self._local.session = requests.Session()
        return s

    def request(self, method: str, url: str, body: Any = None,
                timeout: float | None = None) -> Response:
        data = _encode(body) if body is not None else None
        headers = {"Content-Type": "application/ld+json"} if data is not None else {}
        try:
            r = self._session().request(
                method, url, data=data, headers=headers,
                timeout=timeout if timeout is not None else self.default_timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        return Response(r.status_code, r.text, r.headers.get("Content-Type", ""))


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # One write per response; split header/body writes stall on delayed ACKs.
    wbufsize = -1
    disable_nagle_algorithm = True
    app: App

    def _dispatch(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        try:
            resp = self.app.handle(self.command, self.path, body)
        except Exception:
            log.exception("unhandled error for %s %s", self.command, self.path)
            resp = Response.error(500, "internal error")
        payload = resp.body.encode()
        self.send_response(resp.status)
        self.send_header("Content-Type", resp.content_type)
        self.send_header("Content-Length", str(len(payload)))
        for k, v in resp.headers.items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(payload)
        self.wfile.flush()

    do_GET = do_POST = do_PUT = do_DELETE = _dispatch

    def log_message(self, format: str, *args: Any) -> None:
        log.debug("%s - %s", self.address_string(), format % args)


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128


class ServerHandle:
    """A running HTTP server; ``close()`` stops it and drops the socket."""

    def __init__(self, server: _Server, thread: threading.Thread):
        self._server = server
        self._thread = thread
        host, port = server.server_address[:2]
        self.port = port
        self.url = f"http://{host}:{port}/"

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def serve(app: App, host: str = "127.0.0.1", port: int = 0) -> ServerHandle:
    """Serve ``app`` on a background thread. ``port=0`` picks a free port."""
    handler = type("Handler", (_Handler,), {"app": app})
    server = _Server((host, port), handler)
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05},
                              daemon=True, name=f"http-{server.server_address[1]}")
    thread.start()
    return ServerHandle(server, thread)
