"""HTTP admin endpoint served next to a brick.

Routes:
    GET /status   - brick snapshot (rgids, records, queues, restart log)
    GET /healthz  - 200 while the brick serves, 503 otherwise
"""

import logging
import threading

from flask import Flask, jsonify
from werkzeug.serving import make_server

from brick.brick import Brick

logger = logging.getLogger(__name__)


def create_admin_app(brick: Brick) -> Flask:
    """Build the Flask app for one brick."""
    app = Flask(f"dstore-admin-{brick.endpoint.port}")

    @app.get("/status")
    def status():
        return jsonify(brick.status()), 200

    @app.get("/healthz")
    def healthz():
        if brick.running:
            return jsonify({"status": "ok", "endpoint": str(brick.endpoint)}), 200
        return jsonify({"status": "down", "endpoint": str(brick.endpoint)}), 503

    @app.errorhandler(404)
    def not_found(_error):
        return jsonify({"error": "Not found"}), 404

    return app


class AdminServer:
    """Runs the admin app on a background thread."""

    def __init__(self, brick: Brick, host: str, port: int):
        self.app = create_admin_app(brick)
        self._server = make_server(host, port, self.app, threaded=True)
        self._thread = threading.Thread(target=self._server.serve_forever, name="dstore-admin", daemon=True)

    @property
    def port(self) -> int:
        return self._server.server_port

    def start(self) -> None:
        self._thread.start()
        logger.info("admin endpoint on port %d", self.port)

    def shutdown(self) -> None:
        self._server.shutdown()
