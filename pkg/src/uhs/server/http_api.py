"""HTTP adapter exposing the server core as a JSON API under /api/v1/.

Built on the stdlib threading HTTP server: every request gets its own
thread, which lets the long-poll alert stream block naturally without
an async stack. Errors cross the wire as {"error": <class>, "message"}
and map back onto the same exception types client-side.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from ..errors import (
    AlreadyAcknowledged,
    BadCredentials,
    DuplicatePatient,
    InvalidObservation,
    OverlappingSlot,
    RejectedInvalid,
    SlotTaken,
    UhsError,
    Unauthorized,
    UnknownAlert,
    UnknownPatient,
    UnknownSlot,
)
from .core import HealthServer

_STATUS = {
    Unauthorized: 401,
    BadCredentials: 401,
    UnknownPatient: 404,
    UnknownSlot: 404,
    UnknownAlert: 404,
    DuplicatePatient: 409,
    SlotTaken: 409,
    AlreadyAcknowledged: 409,
    OverlappingSlot: 409,
    InvalidObservation: 400,
    RejectedInvalid: 400,
}

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".map": "application/json",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


def _status_for(exc: UhsError) -> int:
    for cls, status in _STATUS.items():
        if isinstance(exc, cls):
            return status
    return 400


def _q1(query: dict, key: str, cast=str, default=None):
    if key not in query:
        return default
    return cast(query[key][0])


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    core: HealthServer = None
    static_dir: Path | None = None

    # route table: (method, compiled path regex, handler name)
    ROUTES = [
        ("GET", r"/api/v1/health", "r_health"),
        ("POST", r"/api/v1/auth/login", "r_login"),
        ("POST", r"/api/v1/patients", "r_add_patient"),
        ("GET", r"/api/v1/patients", "r_list_patients"),
        ("GET", r"/api/v1/patients/(?P<pid>[^/]+)/observations", "r_collect"),
        ("GET", r"/api/v1/patients/(?P<pid>[^/]+)/info", "r_get_info"),
        ("POST", r"/api/v1/patients/(?P<pid>[^/]+)/info", "r_upload_info"),
        ("GET", r"/api/v1/patients/(?P<pid>[^/]+)", "r_view_patient"),
        ("POST", r"/api/v1/observations", "r_enter_data"),
        ("POST", r"/api/v1/appointments", "r_book"),
        ("GET", r"/api/v1/alerts", "r_get_alerts"),
        ("POST", r"/api/v1/alerts/(?P<aid>[^/]+)/ack", "r_ack"),
        ("POST", r"/api/v1/alerts", "r_create_alert"),
        ("GET", r"/api/v1/stream/alerts", "r_stream"),
    ]
    _compiled = [(m, re.compile("^" + p + "$"), name) for m, p, name in ROUTES]

    # -- plumbing -----------------------------------------------------------

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _token(self) -> str | None:
        header = self.headers.get("Authorization", "")
        if header.startswith("Bearer "):
            return header[len("Bearer "):]
        return None

    def _body(self) -> dict:
        if not self._raw_body:
            return {}
        try:
            return json.loads(self._raw_body)
        except ValueError as exc:
            raise InvalidObservation(f"request body is not valid JSON: {exc}") from exc

    def _send_json(self, obj, status: int = 200) -> None:
        blob = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _dispatch(self, method: str) -> None:
        parsed = urlparse(self.path)
        query = parse_qs(parsed.query)
        # drain the body up front: a handler that never parses it must not
        # leave bytes behind to corrupt the next keep-alive request
        length = int(self.headers.get("Content-Length") or 0)
        self._raw_body = self.rfile.read(length) if length else b""
        try:
            for verb, pattern, name in self._compiled:
                if verb != method:
                    continue
                match = pattern.match(parsed.path)
                if match:
                    getattr(self, name)(match, query)
                    return
            if method == "GET" and self._serve_static(parsed.path):
                return
            self._send_json({"error": "UhsError", "message": "no such endpoint"}, 404)
        except UhsError as exc:
            self._send_json({"error": type(exc).__name__, "message": str(exc)},
                            _status_for(exc))
        except BrokenPipeError:
            pass

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def _serve_static(self, path: str) -> bool:
        if self.static_dir is None:
            return False
        if path in ("", "/"):
            self.send_response(302)
            self.send_header("Location", "/ui/")
            self.send_header("Content-Length", "0")
            self.end_headers()
            return True
        if not path.startswith("/ui/"):
            return False
        rel = path[len("/ui/"):] or "index.html"
        target = (self.static_dir / rel).resolve()
        root = self.static_dir.resolve()
        if root not in target.parents and target != root:
            return False
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return False
        blob = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type",
                         _CONTENT_TYPES.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)
        return True

    # -- routes ------------------------------------------------------------

    def r_health(self, match, query):
        self._send_json({"ok": True})

    def r_login(self, match, query):
        body = self._body()
        self._send_json(self.core.login(body.get("username", ""),
                                        body.get("password", "")))

    def r_add_patient(self, match, query):
        self._send_json(self.core.add_patient(self._token(), self._body()), 201)

    def r_list_patients(self, match, query):
        self._send_json({"patients": self.core.list_patients(self._token())})

    def r_view_patient(self, match, query):
        self._send_json(self.core.view_patient(self._token(), match["pid"]))

    def r_enter_data(self, match, query):
        self._send_json(self.core.enter_data(self._token(), self._body()), 201)

    def r_collect(self, match, query):
        records = self.core.collect_data(
            self._token(), match["pid"],
            _q1(query, "from", float), _q1(query, "to", float))
        self._send_json({"observations": records})

    def r_get_info(self, match, query):
        self._send_json(self.core.get_info(self._token(), match["pid"]))

    def r_upload_info(self, match, query):
        self._send_json(self.core.upload_info(self._token(), match["pid"],
                                              self._body()), 201)

    def r_book(self, match, query):
        body = self._body()
        self._send_json(self.core.book_appointment(
            self._token(), body.get("slot_id", ""), body.get("patient_id")))

    def r_get_alerts(self, match, query):
        alerts = self.core.get_alerts(self._token(), _q1(query, "state"))
        self._send_json({"alerts": alerts})

    def r_ack(self, match, query):
        self._send_json(self.core.ack_alert(self._token(), match["aid"]))

    def r_create_alert(self, match, query):
        self._send_json(self.core.create_alert(self._token(), self._body()), 201)

    def r_stream(self, match, query):
        result = self.core.wait_alerts(
            self._token(), _q1(query, "since", int, 0),
            min(_q1(query, "timeout_s", float, 10.0), 60.0))
        self._send_json(result)


def make_http_server(core: HealthServer, host: str = "127.0.0.1", port: int = 0,
                     static_dir: str | None = None) -> ThreadingHTTPServer:
    """Bind (but do not serve) an HTTP server for the given core. Use
    port 0 to get an ephemeral port; check `.server_address`."""
    handler = type("BoundApiHandler", (ApiHandler,), {
        "core": core,
        "static_dir": Path(static_dir) if static_dir else None,
    })
    httpd = ThreadingHTTPServer((host, port), handler)
    httpd.daemon_threads = True
    return httpd


def serve_in_thread(core: HealthServer, host: str = "127.0.0.1", port: int = 0,
                    static_dir: str | None = None):
    """Start serving on a daemon thread; returns (httpd, base_url)."""
    httpd = make_http_server(core, host, port, static_dir)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    addr = httpd.server_address
    return httpd, f"http://{addr[0]}:{addr[1]}"
