"""HTTP annotation service: publishes MDI-selected uncertain samples, accepts
labels from a human annotator, and exposes live training status and metrics.

JSON over HTTP/1.1, no authentication (single-operator desk tool). Handlers
run on server threads and exchange data with the single trainer thread only
through the lock-guarded bridge below; the trainer polls it at epoch
boundaries, so GETs never touch live training state, only snapshots.
"""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8490


class AnnotationBridge:
    """Mailbox between the trainer thread and HTTP handler threads."""

    def __init__(self, class_names, annotation_timeout: float = 600.0):
        self.class_names = list(class_names)
        self.timeout = annotation_timeout
        self._lock = threading.Lock()
        self._status = {"mode": None, "epoch": 0, "max_epoch": 0,
                        "budget_total": 0, "budget_used": 0}
        self._metrics = None
        self._queue = []            # open round, request dicts in server order
        self._received = {}         # sample_id -> (label, annotator, timestamp)
        self._round_done = threading.Event()
        self._advance = threading.Event()
        self._paused = False
        self._resume = threading.Event()
        self._resume.set()
        self._stop = False

    # -- trainer side ------------------------------------------------------

    def on_status(self, status: dict) -> None:
        with self._lock:
            self._status.update(status)

    def on_metrics(self, row: dict) -> None:
        with self._lock:
            self._metrics = row

    def wait_if_paused(self) -> None:
        self._resume.wait()

    def stop(self) -> None:
        with self._lock:
            self._stop = True
        self._resume.set()
        self._advance.set()

    def open_round(self, requests) -> dict:
        """Publish a round and block until every sample is labeled, the round
        is advanced from the UI, or the timeout passes. Returns the labels
        collected so far, keyed by sample id."""
        with self._lock:
            self._queue = [r.to_json() for r in requests]
            self._received = {}
            self._round_done.clear()
            self._advance.clear()
        deadline = time.monotonic() + self.timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or self._stop:
                break
            if self._round_done.wait(timeout=min(remaining, 0.05)):
                break
            if self._advance.is_set():
                break
        with self._lock:
            answers = {sid: rec[0] for sid, rec in self._received.items()}
            self._queue = []
            self._received = {}
        return answers

    # -- handler side --------------------------------------------------------

    def snapshot_status(self) -> dict:
        with self._lock:
            out = dict(self._status)
            out["budget_used"] = out.get("budget_used", 0) + len(self._received)
            out["paused"] = self._paused
            out["class_names"] = list(self.class_names)
            return out

    def snapshot_queue(self) -> list:
        with self._lock:
            return [dict(r) for r in self._queue
                    if r["sample_id"] not in self._received]

    def snapshot_metrics(self) -> dict:
        with self._lock:
            return dict(self._metrics) if self._metrics else {}

    def submit_label(self, payload: dict):
        """Validate one annotation. Returns (http_status, response_dict)."""
        try:
            sample_id = int(payload["sample_id"])
            label = int(payload["label"])
        except (KeyError, TypeError, ValueError):
            return 400, {"error": "sample_id and integer label required"}
        annotator = str(payload.get("annotator", "anonymous"))
        timestamp = payload.get("timestamp") or time.strftime(
            "%Y-%m-%dT%H:%M:%S")
        with self._lock:
            used = self._status.get("budget_used", 0) + len(self._received)
            if used >= self._status.get("budget_total", 0):
                return 409, {"error": "budget"}
            ids = {r["sample_id"] for r in self._queue}
            if sample_id not in ids:
                return 404, {"error": f"sample {sample_id} not in queue"}
            if sample_id in self._received:
                return 409, {"error": "duplicate"}
            if not 0 <= label < len(self.class_names):
                return 400, {"error": f"label {label} out of range"}
            self._received[sample_id] = (label, annotator, timestamp)
            if len(self._received) == len(self._queue):
                self._round_done.set()
        return 200, {"ok": True, "sample_id": sample_id, "label": label}

    def control(self, action: str):
        if action == "pause":
            with self._lock:
                self._paused = True
            self._resume.clear()
            return 200, {"ok": True, "paused": True}
        if action == "resume":
            with self._lock:
                self._paused = False
            self._resume.set()
            return 200, {"ok": True, "paused": False}
        if action == "advance_round":
            self._advance.set()
            return 200, {"ok": True}
        return 400, {"error": f"unknown action {action!r}"}


class ServiceOracle:
    """Annotation oracle backed by the HTTP service (blocks per round)."""

    def __init__(self, bridge: AnnotationBridge):
        self.bridge = bridge

    def annotate(self, requests) -> dict:
        return self.bridge.open_round(requests)


def _make_handler(bridge: AnnotationBridge):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):   # keep test output clean
            pass

        def _send(self, code: int, payload) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods",
                             "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self._send(200, {})

        def do_GET(self):
            if self.path == "/status":
                self._send(200, bridge.snapshot_status())
            elif self.path == "/queue":
                self._send(200, bridge.snapshot_queue())
            elif self.path == "/metrics":
                self._send(200, bridge.snapshot_metrics())
            else:
                self._send(404, {"error": "not found"})

        def _read_json(self):
            try:
                length = int(self.headers.get("Content-Length", 0))
                return json.loads(self.rfile.read(length) or b"{}")
            except (ValueError, json.JSONDecodeError):
                return None

        def do_POST(self):
            if self.path == "/labels":
                payload = self._read_json()
                if not isinstance(payload, dict):
                    self._send(400, {"error": "invalid JSON body"})
                    return
                code, resp = bridge.submit_label(payload)
                self._send(code, resp)
            elif self.path == "/control":
                payload = self._read_json()
                if not isinstance(payload, dict):
                    self._send(400, {"error": "invalid JSON body"})
                    return
                code, resp = bridge.control(str(payload.get("action", "")))
                self._send(code, resp)
            else:
                self._send(404, {"error": "not found"})

    return Handler


def start_service(bridge: AnnotationBridge, host: str = DEFAULT_HOST,
                  port: int = DEFAULT_PORT):
    """Start the HTTP server on a daemon thread. Returns (server, thread);
    the bound port is ``server.server_address[1]`` (pass port=0 for any)."""
    server = ThreadingHTTPServer((host, port), _make_handler(bridge))
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
