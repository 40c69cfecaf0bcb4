"""Transports: the seam between protocol logic and sockets.

A ``Transport`` sends one request and later invokes ``on_reply(reply, error)``
exactly once per delivered outcome. ``error`` is ``"refused"`` when the
destination is not accepting connections and ``"reset"`` when the connection
dropped with the request outstanding. Timeouts are the caller's business.
"""

import itertools
import logging
import socket
import socketserver
import threading
from abc import ABC, abstractmethod
from typing import Callable, Dict, Iterable, Optional, Tuple

from core.errors import ProtocolError
from core.rate_limiter import retry_with_backoff
from core.types import Endpoint
from wire.codec import FrameReader, decode, encode
from wire.messages import Beacon, ErrorReply, Message, Status

logger = logging.getLogger(__name__)

REFUSED = "refused"
RESET = "reset"

ReplyCallback = Callable[[Optional[Message], Optional[str]], None]
RequestHandler = Callable[[Message, Callable[[Message], None]], None]


class Transport(ABC):
    """Request/response channel to bricks."""

    @abstractmethod
    def request(self, dest: Endpoint, message: Message, on_reply: ReplyCallback) -> None:
        """Send ``message`` to ``dest``; never raises for network failures."""

    def close(self) -> None:
        """Release connections."""


def request_sync(transport: Transport, dest: Endpoint, message: Message, timeout_s: float = 2.0) -> Tuple[Optional[Message], Optional[str]]:
    """Blocking wrapper used by one-shot tools."""
    done = threading.Event()
    box: Dict[str, object] = {}

    def on_reply(reply, error):
        box["reply"], box["error"] = reply, error
        done.set()

    transport.request(dest, message, on_reply)
    if not done.wait(timeout_s):
        return None, "timeout"
    return box["reply"], box["error"]


# ============== TCP client side ==============

class _Connection:
    """One pipelined connection; replies are matched by request id."""

    def __init__(self, sock: socket.socket, dest: Endpoint, on_close: Callable[["_Connection"], None]):
        self.sock = sock
        self.dest = dest
        self._on_close = on_close
        self._write_lock = threading.Lock()
        self._pending: Dict[int, ReplyCallback] = {}
        self._pending_lock = threading.Lock()
        self._closed = False
        self._reader = threading.Thread(target=self._read_loop, name=f"dstore-conn-{dest}", daemon=True)
        self._reader.start()

    def send(self, request_id: int, message: Message, on_reply: ReplyCallback) -> bool:
        with self._pending_lock:
            if self._closed:
                return False
            self._pending[request_id] = on_reply
        try:
            with self._write_lock:
                self.sock.sendall(encode(message, request_id))
        except OSError:
            with self._pending_lock:
                self._pending.pop(request_id, None)
            self.close()
            return False
        return True

    def _read_loop(self) -> None:
        reader = FrameReader()
        try:
            while True:
                data = self.sock.recv(65536)
                if not data:
                    break
                for request_id, reply in reader.feed(data):
                    with self._pending_lock:
                        callback = self._pending.pop(request_id, None)
                    if callback is not None:
                        callback(reply, None)
        except (OSError, ProtocolError) as e:
            logger.debug("connection to %s ended: %s", self.dest, e)
        self.close()

    def close(self) -> None:
        with self._pending_lock:
            if self._closed:
                return
            self._closed = True
            pending, self._pending = self._pending, {}
        try:
            self.sock.close()
        except OSError:
            pass
        self._on_close(self)
        for callback in pending.values():
            callback(None, RESET)


class TcpTransport(Transport):
    """One bidirectional connection per brick with request-id pipelining."""

    def __init__(self, connect_timeout_s: float = 1.0, connect_retries: int = 1):
        self.connect_timeout_s = connect_timeout_s
        self.connect_retries = connect_retries
        self._ids = itertools.count(1)
        self._conns: Dict[Endpoint, _Connection] = {}
        self._lock = threading.Lock()
        self._dest_locks: Dict[Endpoint, threading.Lock] = {}

    def _connect(self, dest: Endpoint) -> socket.socket:
        @retry_with_backoff(max_retries=self.connect_retries, base_delay=0.02, max_delay=0.2)
        def connect():
            sock = socket.create_connection(dest.address, timeout=self.connect_timeout_s)
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock

        return connect()

    def _connection(self, dest: Endpoint) -> Optional[_Connection]:
        with self._lock:
            conn = self._conns.get(dest)
            if conn is not None:
                return conn
            dest_lock = self._dest_locks.setdefault(dest, threading.Lock())
        with dest_lock:
            with self._lock:
                conn = self._conns.get(dest)
            if conn is not None:
                return conn
            try:
                sock = self._connect(dest)
            except OSError as e:
                logger.debug("connect to %s failed: %s", dest, e)
                return None
            conn = _Connection(sock, dest, self._forget)
            with self._lock:
                self._conns[dest] = conn
            return conn

    def _forget(self, conn: _Connection) -> None:
        with self._lock:
            if self._conns.get(conn.dest) is conn:
                del self._conns[conn.dest]

    def request(self, dest: Endpoint, message: Message, on_reply: ReplyCallback) -> None:
        conn = self._connection(dest)
        if conn is None:
            on_reply(None, REFUSED)
            return
        if not conn.send(next(self._ids), message, on_reply):
            on_reply(None, RESET)

    def close(self) -> None:
        with self._lock:
            conns = list(self._conns.values())
        for conn in conns:
            conn.close()


# ============== TCP server side ==============

class _BrickRequestHandler(socketserver.BaseRequestHandler):
    """Reads frames from one client and dispatches them to the brick."""

    def handle(self) -> None:
        write_lock = threading.Lock()
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.server.track(sock)
        reader = FrameReader()

        def replier(request_id: int) -> Callable[[Message], None]:
            def reply(message: Message) -> None:
                try:
                    with write_lock:
                        sock.sendall(encode(message, request_id))
                except OSError:
                    pass
            return reply

        try:
            while True:
                data = sock.recv(65536)
                if not data:
                    return
                for request_id, message in reader.feed(data):
                    self.server.handler(message, replier(request_id))
        except ProtocolError as e:
            logger.debug("protocol error from %s: %s", self.client_address, e)
            replier(0)(ErrorReply(Status.PROTOCOL_ERROR))
        except OSError:
            pass
        finally:
            self.server.untrack(sock)


class BrickServer(socketserver.ThreadingTCPServer):
    """TCP listener that feeds decoded requests to a handler."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: Tuple[str, int], handler: RequestHandler):
        self.handler = handler
        self._clients = set()
        self._clients_lock = threading.Lock()
        super().__init__(address, _BrickRequestHandler)

    @property
    def endpoint(self) -> Endpoint:
        host, port = self.server_address[:2]
        return Endpoint.parse(f"{host}:{port}")

    def track(self, sock: socket.socket) -> None:
        with self._clients_lock:
            self._clients.add(sock)

    def untrack(self, sock: socket.socket) -> None:
        with self._clients_lock:
            self._clients.discard(sock)

    def drop_connections(self) -> None:
        """Close every client connection (a restart discards them)."""
        with self._clients_lock:
            clients, self._clients = list(self._clients), set()
        for sock in clients:
            try:
                sock.shutdown(socket.SHUT_RDWR)
                sock.close()
            except OSError:
                pass

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, name="dstore-brick-server", daemon=True)
        thread.start()
        return thread


# ============== UDP beacons ==============

class UdpBeaconSink:
    """Sends beacon datagrams to a fixed list of listeners."""

    def __init__(self, sinks: Iterable[Endpoint]):
        self.sinks = list(sinks)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def __call__(self, beacon: Beacon) -> None:
        frame = encode(beacon, 0)
        for sink in self.sinks:
            try:
                self._sock.sendto(frame, sink.address)
            except OSError as e:
                logger.debug("beacon to %s failed: %s", sink, e)

    def close(self) -> None:
        self._sock.close()


class UdpBeaconListener:
    """Receives beacon datagrams and hands them to ``on_beacon``."""

    def __init__(self, listen: Endpoint, on_beacon: Callable[[Beacon], None]):
        self.on_beacon = on_beacon
        self.malformed = 0
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(listen.address)
        self._closed = False
        self._thread = threading.Thread(target=self._loop, name="dstore-beacons", daemon=True)
        self._thread.start()

    @property
    def endpoint(self) -> Endpoint:
        host, port = self._sock.getsockname()[:2]
        return Endpoint.parse(f"{host}:{port}")

    def _loop(self) -> None:
        while not self._closed:
            try:
                data, _ = self._sock.recvfrom(65536)
            except OSError:
                return
            try:
                message = decode(data)
            except ProtocolError:
                self.malformed += 1
                continue
            if isinstance(message, Beacon):
                self.on_beacon(message)
            else:
                self.malformed += 1

    def close(self) -> None:
        self._closed = True
        self._sock.close()
