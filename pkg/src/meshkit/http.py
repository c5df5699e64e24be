"""Minimal JSON-over-HTTP plumbing.

Services are plain ``App`` routers. The same app can be mounted on a real
socket (``serve``) or called in-process through ``LocalTransport``; either
way requests and responses travel as encoded bytes, so a
``CapturingTransport`` sees exactly what would cross the wire.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Mapping
from urllib.parse import parse_qsl, quote, unquote, urlencode, urlsplit

from .errors import BadRequest, MeshError, NodeUnreachable, NotFound, PortInUse, from_json

log = logging.getLogger(__name__)


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str] = field(default_factory=dict)
    headers: dict[str, str] = field(default_factory=dict)
    body: bytes = b""
    params: dict[str, str] = field(default_factory=dict)

    def json(self) -> Any:
        if not self.body:
            return {}
        try:
            return json.loads(self.body)
        except ValueError:
            raise BadRequest("request body is not JSON") from None

    def header(self, name: str) -> str | None:
        return self.headers.get(name.lower())

    @property
    def bearer(self) -> str | None:
        auth = self.header("authorization") or ""
        if auth.lower().startswith("bearer "):
            return auth[7:].strip() or None
        return None


@dataclass
class Response:
    status: int
    body: bytes
    headers: dict[str, str] = field(default_factory=dict)

    def json(self) -> Any:
        return json.loads(self.body) if self.body else None


def json_response(status: int, payload: Any, headers: Mapping[str, str] | None = None) -> Response:
    body = json.dumps(payload, sort_keys=True).encode()
    return Response(status, body, {"content-type": "application/json", **(headers or {})})


Handler = Callable[[Request], Response]


class App:
    """Routes ``METHOD /a/{param}/b`` patterns; path params are URL-decoded."""

    def __init__(self, name: str):
        self.name = name
        self._routes: list[tuple[str, re.Pattern, Handler]] = []

    def route(self, method: str, pattern: str):
        regex = re.compile(
            "^" + re.sub(r"\\\{(\w+)\\\}", r"(?P<\1>[^/]+)", re.escape(pattern)) + "$"
        )

        def deco(fn: Handler) -> Handler:
            self._routes.append((method.upper(), regex, fn))
            return fn

        return deco

    def __call__(self, request: Request) -> Response:
        path_seen = False
        for method, regex, fn in self._routes:
            m = regex.match(request.path)
            if not m:
                continue
            path_seen = True
            if method != request.method:
                continue
            request.params = {k: unquote(v) for k, v in m.groupdict().items()}
            try:
                return fn(request)
            except MeshError as exc:
                return json_response(exc.http_status, exc.to_json())
            except Exception as exc:  # surfaced as 500, never crashes the server
                log.exception("%s: unhandled error", self.name)
                return json_response(500, {"error": "INTERNAL", "message": str(exc)})
        if path_seen:
            return json_response(405, {"error": "METHOD_NOT_ALLOWED", "message": request.method})
        return json_response(404, NotFound(f"no route for {request.path}").to_json())


# -- transports ---------------------------------------------------------------


class Transport:
    def send(self, method: str, url: str, body: bytes = b"", headers: Mapping[str, str] | None = None) -> Response:
        raise NotImplementedError


class LocalTransport(Transport):
    """Dispatches to apps registered under a base URL, in-process."""

    def __init__(self):
        self._apps: dict[str, App] = {}
        self.down: set[str] = set()

    def mount(self, base_url: str, app: App) -> None:
        self._apps[base_url.rstrip("/")] = app

    def send(self, method, url, body=b"", headers=None):
        parts = urlsplit(url)
        base = f"{parts.scheme}://{parts.netloc}"
        app = self._apps.get(base)
        if app is None or base in self.down:
            raise NodeUnreachable(f"cannot reach {base}")
        req = Request(
            method=method.upper(),
            path=parts.path or "/",
            query=dict(parse_qsl(parts.query)),
            headers={k.lower(): v for k, v in (headers or {}).items()},
            body=bytes(body),
        )
        resp = app(req)
        return Response(resp.status, bytes(resp.body), dict(resp.headers))


class HttpTransport(Transport):
    def __init__(self, timeout: float = 10.0):
        self.timeout = timeout

    def send(self, method, url, body=b"", headers=None):
        req = urllib.request.Request(url, data=body or None, method=method.upper(), headers=dict(headers or {}))
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return Response(resp.status, resp.read(), {k.lower(): v for k, v in resp.headers.items()})
        except urllib.error.HTTPError as exc:
            return Response(exc.code, exc.read(), {k.lower(): v for k, v in exc.headers.items()})
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise NodeUnreachable(f"cannot reach {url}: {exc}") from None


@dataclass
class Exchange:
    direction: str  # "outbound" (hub as client) or "inbound" (hub as server)
    method: str
    url: str
    request: bytes
    response: bytes


class Capture:
    """Byte log of everything a service sends and receives."""

    def __init__(self):
        self.exchanges: list[Exchange] = []
        self._lock = threading.Lock()

    def add(self, ex: Exchange) -> None:
        with self._lock:
            self.exchanges.append(ex)

    def count(self, needle: bytes) -> int:
        with self._lock:
            return sum(
                (ex.request + b"\n" + ex.url.encode()).count(needle) + ex.response.count(needle)
                for ex in self.exchanges
            )

    def total_bytes(self) -> int:
        with self._lock:
            return sum(len(ex.request) + len(ex.response) for ex in self.exchanges)


class CapturingTransport(Transport):
    def __init__(self, inner: Transport, capture: Capture):
        self.inner = inner
        self.capture = capture

    def send(self, method, url, body=b"", headers=None):
        resp = self.inner.send(method, url, body, headers)
        header_bytes = json.dumps(dict(headers or {}), sort_keys=True).encode()
        self.capture.add(Exchange("outbound", method, url, header_bytes + body, resp.body))
        return resp


def capturing_app(app: App, capture: Capture) -> App:
    """Wrap ``app`` so every inbound request/response pair is logged."""
    def handler(request: Request) -> Response:
        resp = app(request)
        header_bytes = json.dumps(request.headers, sort_keys=True).encode()
        capture.add(Exchange("inbound", request.method, request.path, header_bytes + request.body, resp.body))
        return resp

    return _CallableApp(app.name, handler)


class _CallableApp(App):
    def __init__(self, name: str, handler: Handler):
        super().__init__(name)
        self._handler = handler

    def __call__(self, request: Request) -> Response:
        return self._handler(request)


# -- JSON client --------------------------------------------------------------


class JsonClient:
    """Thin client: JSON in, JSON out, service errors re-raised by code."""

    def __init__(self, base_url: str, transport: Transport, headers: Mapping[str, str] | None = None):
        self.base_url = base_url.rstrip("/")
        self.transport = transport
        self.headers = dict(headers or {})

    def url(self, path: str, query: Mapping[str, Any] | None = None) -> str:
        url = self.base_url + path
        q = {k: v for k, v in (query or {}).items() if v not in (None, "")}
        if q:
            url += "?" + urlencode(q)
        return url

    def request(self, method: str, path: str, *, json_body: Any = None, query=None, token: str | None = None,
                headers: Mapping[str, str] | None = None) -> tuple[int, Any, dict]:
        hdrs = dict(self.headers)
        hdrs.update(headers or {})
        if token:
            hdrs["Authorization"] = f"Bearer {token}"
        body = b""
        if json_body is not None:
            body = json.dumps(json_body, sort_keys=True).encode()
            hdrs["Content-Type"] = "application/json"
        resp = self.transport.send(method, self.url(path, query), body, hdrs)
        try:
            payload = resp.json()
        except ValueError:
            payload = None
        if resp.status >= 400:
            if isinstance(payload, dict) and "error" in payload:
                raise from_json(payload)
            raise MeshError(f"HTTP {resp.status} from {self.base_url}{path}")
        return resp.status, payload, resp.headers

    def get(self, path, **kw):
        return self.request("GET", path, **kw)[1]

    def post(self, path, **kw):
        return self.request("POST", path, **kw)[1]


def pid_segment(pid: Any) -> str:
    return quote(str(pid), safe="")


# -- real sockets -------------------------------------------------------------


def _handler_for(app: App):
    class _Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self):
            parts = urlsplit(self.path)
            length = int(self.headers.get("content-length") or 0)
            body = self.rfile.read(length) if length else b""
            req = Request(
                method=self.command,
                path=parts.path,
                query=dict(parse_qsl(parts.query)),
                headers={k.lower(): v for k, v in self.headers.items()},
                body=body,
            )
            resp = app(req)
            self.send_response(resp.status)
            for k, v in resp.headers.items():
                self.send_header(k, v)
            self.send_header("content-length", str(len(resp.body)))
            self.end_headers()
            self.wfile.write(resp.body)

        do_GET = do_POST = do_PUT = do_DELETE = _dispatch

        def log_message(self, fmt, *args):
            log.debug("%s: " + fmt, app.name, *args)

    return _Handler


class Server:
    def __init__(self, app: App, host: str = "127.0.0.1", port: int = 0):
        try:
            self.httpd = ThreadingHTTPServer((host, port), _handler_for(app))
        except OSError as exc:
            raise PortInUse(f"{host}:{port}: {exc}") from None
        self.httpd.daemon_threads = True
        self.app = app
        self.thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def url(self) -> str:
        host = self.httpd.server_address[0]
        return f"http://{host}:{self.port}"

    def set_app(self, app: App) -> None:
        self.app = app
        self.httpd.RequestHandlerClass = _handler_for(app)

    def start(self) -> Server:
        self.thread = threading.Thread(target=self.httpd.serve_forever, name=f"serve-{self.app.name}", daemon=True)
        self.thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
