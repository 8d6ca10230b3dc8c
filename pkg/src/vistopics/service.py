"""HTTP service for the coder-facing validation tasks.

Endpoints (JSON unless noted):

    GET  /api/tasks/{kind}/next?coder=<id>   next unanswered item, keyless
    POST /api/tasks/{kind}/respond           {coder, item_id, choice} -> 204
    GET  /api/progress?coder=<id>            per-task answered/total
    GET  /api/frames/<video_id>/<file>       frame image from the run dir
    GET  /                                   coder UI bundle (static)

Responses persist append-only as JSON lines, fsynced per write, so a crash
mid-session loses nothing; duplicate (coder, item) submissions get 409.
Items are served to every coder in the same fixed order.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .validation import CoderResponse, ValidationItem, choice_range

log = logging.getLogger(__name__)

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".png": "image/png",
}

_FALLBACK_INDEX = """<!doctype html>
<html><head><meta charset="utf-8"><title>Validation tasks</title></head>
<body><h1>Validation service is running</h1>
<p>No coder UI bundle is configured. Point --ui-dir at a built bundle, or
use the JSON API directly (see README).</p></body></html>
"""


class ResponseLog:
    """Single-writer append-only JSONL persistence with crash-safe flushes."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.lock = threading.Lock()
        self.index: dict[tuple[str, int], int] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                self.index[(rec["coder_id"], rec["item_id"])] = rec["choice"]

    def record(self, coder_id: str, item_id: int, choice: int) -> bool:
        """Append one response; False if this (coder, item) already answered."""
        with self.lock:
            if (coder_id, item_id) in self.index:
                return False
            rec = {
                "coder_id": coder_id,
                "item_id": item_id,
                "choice": choice,
                "received_at": datetime.now(timezone.utc).isoformat(),
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.index[(coder_id, item_id)] = choice
            return True

    def answered(self, coder_id: str, item_ids: list[int]) -> set[int]:
        with self.lock:
            return {i for i in item_ids if (coder_id, i) in self.index}


def load_responses(path: Path) -> list[CoderResponse]:
    responses = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        responses.append(CoderResponse(
            coder_id=rec["coder_id"], item_id=rec["item_id"],
            choice=rec["choice"], received_at=rec["received_at"],
        ))
    return responses


class ValidationService:
    def __init__(
        self,
        items: list[ValidationItem],
        run_dir: Path,
        responses_path: Path,
        ui_dir: Path | None = None,
    ):
        self.items_by_kind: dict[str, list[ValidationItem]] = {}
        self.items_by_id = {it.item_id: it for it in items}
        for it in sorted(items, key=lambda i: i.item_id):
            self.items_by_kind.setdefault(it.kind, []).append(it)
        self.run_dir = Path(run_dir)
        self.responses = ResponseLog(responses_path)
        self.ui_dir = Path(ui_dir) if ui_dir else None

    # -- API logic, transport-independent ------------------------------------

    def next_item(self, kind: str, coder: str) -> tuple[int, dict]:
        items = self.items_by_kind.get(kind)
        if items is None:
            return 404, {"error": f"unknown task kind: {kind}"}
        done = self.responses.answered(coder, [it.item_id for it in items])
        for it in items:
            if it.item_id not in done:
                return 200, it.public_payload()
        return 200, {"done": True, "answered": len(done), "total": len(items)}

    def respond(self, kind: str, body: dict) -> tuple[int, dict | None]:
        try:
            coder = str(body["coder"])
            item_id = int(body["item_id"])
            choice = int(body["choice"])
        except (KeyError, TypeError, ValueError):
            return 400, {"error": "body must carry coder, item_id, choice"}
        item = self.items_by_id.get(item_id)
        if item is None or item.kind != kind:
            return 400, {"error": f"unknown item {item_id} for task {kind}"}
        if not coder:
            return 400, {"error": "coder id must be non-empty"}
        if not 0 <= choice < choice_range(kind):
            return 400, {"error": f"choice {choice} out of range for {kind}"}
        if not self.responses.record(coder, item_id, choice):
            return 409, {"error": "response already recorded for this item"}
        return 204, None

    def progress(self, coder: str) -> dict:
        tasks = {}
        for kind, items in self.items_by_kind.items():
            done = self.responses.answered(coder, [it.item_id for it in items])
            tasks[kind] = {"answered": len(done), "total": len(items)}
        return {"coder": coder, "tasks": tasks}

    def frame_file(self, rel: str) -> Path | None:
        base = (self.run_dir / "frames").resolve()
        target = (base / rel).resolve()
        if not str(target).startswith(str(base) + os.sep) or not target.is_file():
            return None
        return target

    def static_file(self, rel: str) -> tuple[bytes, str] | None:
        if self.ui_dir is None:
            if rel in ("", "index.html"):
                return _FALLBACK_INDEX.encode(), _CONTENT_TYPES[".html"]
            return None
        base = self.ui_dir.resolve()
        target = (base / (rel or "index.html")).resolve()
        if not str(target).startswith(str(base) + os.sep) or not target.is_file():
            return None
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        return target.read_bytes(), ctype


class _Handler(BaseHTTPRequestHandler):
    service: ValidationService  # set on the subclass by make_server

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, doc: dict | None):
        body = b"" if doc is None else json.dumps(doc).encode()
        self.send_response(status)
        if body:
            self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def do_GET(self):
        url = urlparse(self.path)
        query = {k: v[0] for k, v in parse_qs(url.query).items()}
        parts = [p for p in url.path.split("/") if p]
        svc = self.service
        if parts[:2] == ["api", "tasks"] and len(parts) == 4 and parts[3] == "next":
            status, doc = svc.next_item(parts[2], query.get("coder", ""))
            return self._send_json(status, doc)
        if parts[:2] == ["api", "progress"] or url.path == "/api/progress":
            return self._send_json(200, svc.progress(query.get("coder", "")))
        if parts[:2] == ["api", "frames"]:
            target = svc.frame_file("/".join(parts[2:]))
            if target is None:
                return self._send_json(404, {"error": "no such frame"})
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", _CONTENT_TYPES.get(target.suffix, "image/jpeg"))
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
            return
        static = svc.static_file("/".join(parts))
        if static is None:
            return self._send_json(404, {"error": "not found"})
        data, ctype = static
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if parts[:2] != ["api", "tasks"] or len(parts) != 4 or parts[3] != "respond":
            return self._send_json(404, {"error": "not found"})
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except ValueError:
            return self._send_json(400, {"error": "invalid JSON body"})
        status, doc = self.service.respond(parts[2], body)
        return self._send_json(status, doc)


def make_server(service: ValidationService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)
