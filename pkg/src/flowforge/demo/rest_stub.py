"""REST-binding stub: a local HTTP server exposing the markdown renderer.

POST /markdown with ``{"mdText": "..."}`` answers ``{"htmlOut": "..."}``.
Field names differ from the abstract service's on purpose: they exercise
the binding's parameter name mappings.
"""

from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .markdown import render_markdown


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802  (stdlib handler naming)
        if self.path != "/markdown":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            doc = json.loads(self.rfile.read(length).decode("utf-8"))
            html = render_markdown(str(doc["mdText"]))
        except (ValueError, KeyError):
            self.send_error(400)
            return
        body = json.dumps({"htmlOut": html}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):  # keep test output quiet
        pass


def start_stub(port: int = 0) -> ThreadingHTTPServer:
    """Start the stub on a background thread; returns the bound server."""
    server = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def main() -> int:
    port = int(sys.argv[1]) if len(sys.argv) > 1 else 8764
    server = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
    print(f"markdown stub listening on 127.0.0.1:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
