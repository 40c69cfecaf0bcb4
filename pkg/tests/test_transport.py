import threading
from concurrent.futures import Future

import pytest

from core.types import Timestamp
from wire.messages import ReadTsRequest, TsReply
from wire.transport import REFUSED, RESET, BrickServer, TcpTransport, request_sync

HELD_KEY = 1


class HoldingHandler:
    """Answers ReadTs(key) with TsReply(key, 1); holds HELD_KEY until released."""

    def __init__(self):
        self.held = None
        self.seen = []
        self.lock = threading.Lock()

    def __call__(self, message, reply):
        with self.lock:
            self.seen.append(message.key)
        if message.key == HELD_KEY:
            self.held = reply
            return
        reply(TsReply(Timestamp(message.key, 1)))

    def release(self):
        self.held(TsReply(Timestamp(HELD_KEY, 1)))


@pytest.fixture
def server():
    handler = HoldingHandler()
    srv = BrickServer(("127.0.0.1", 0), handler)
    srv.serve_in_background()
    yield srv, handler
    srv.shutdown()
    srv.server_close()


@pytest.fixture
def transport():
    t = TcpTransport(connect_timeout_s=0.5, connect_retries=0)
    yield t
    t.close()


def request_future(transport, dest, key):
    future = Future()
    transport.request(dest, ReadTsRequest(key), lambda reply, error: future.set_result((reply, error)))
    return future


def test_pipelined_replies_match_their_requests(server, transport):
    srv, handler = server
    keys = [HELD_KEY, 5, 9, 2, 7, 3]
    futures = {key: request_future(transport, srv.endpoint, key) for key in keys}

    for key in keys[1:]:
        assert futures[key].result(timeout=5) == (TsReply(Timestamp(key, 1)), None)
    assert not futures[HELD_KEY].done()
    assert handler.seen == keys
    assert len(transport._conns) == 1

    handler.release()
    assert futures[HELD_KEY].result(timeout=5) == (TsReply(Timestamp(HELD_KEY, 1)), None)


def test_interleaved_senders_share_one_connection(server, transport):
    srv, _ = server
    results = {}

    def worker(offset):
        for key in range(offset, 200, 4):
            results[key] = request_sync(transport, srv.endpoint, ReadTsRequest(key), timeout_s=5)

    threads = [threading.Thread(target=worker, args=(offset,)) for offset in range(2, 6)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert sorted(results) == list(range(2, 200))
    assert all(results[key] == (TsReply(Timestamp(key, 1)), None) for key in results)
    assert len(transport._conns) == 1


def test_dropped_connection_resets_outstanding_requests(server, transport):
    srv, handler = server
    held = request_future(transport, srv.endpoint, HELD_KEY)
    assert request_future(transport, srv.endpoint, 4).result(timeout=5)[1] is None
    srv.drop_connections()
    assert held.result(timeout=5) == (None, RESET)

    # The next request opens a fresh connection.
    assert request_sync(transport, srv.endpoint, ReadTsRequest(6), timeout_s=5) == (TsReply(Timestamp(6, 1)), None)


def test_closed_port_is_refused(transport):
    srv = BrickServer(("127.0.0.1", 0), HoldingHandler())
    dest = srv.endpoint
    srv.server_close()
    assert request_sync(transport, dest, ReadTsRequest(1), timeout_s=5) == (None, REFUSED)
