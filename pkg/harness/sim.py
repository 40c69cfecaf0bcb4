"""Virtual clock, event loop and simulated network.

One thread runs everything: every callback is an event on a heap ordered by
(time, sequence), so a seed fully determines the execution. Messages are
pushed through the real codec on every hop so the simulated cluster speaks
the same bytes as a real one.
"""

import heapq
import itertools
import logging
import random
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from core.errors import ScenarioError
from core.runtime import Runtime, TimerHandle
from core.types import Endpoint
from wire.codec import decode, encode
from wire.messages import Beacon, Message
from wire.transport import REFUSED, RESET, ReplyCallback, RequestHandler, Transport

logger = logging.getLogger(__name__)

# Virtual clock origin; timestamps look like real epoch milliseconds.
EPOCH_MS = 1_600_000_000_000.0
DEFAULT_LATENCY_MS = 0.5


class SimRuntime(Runtime):
    """Deterministic virtual-time runtime."""

    def __init__(self, seed: int = 0, start_ms: float = EPOCH_MS):
        self._now = start_ms
        self.start_ms = start_ms
        self._rng = random.Random(seed)
        self._heap: List[Tuple[float, int, TimerHandle, Callable[[], None]]] = []
        self._seq = itertools.count()
        self.events_run = 0

    def now_ms(self) -> float:
        return self._now

    @property
    def elapsed_ms(self) -> float:
        return self._now - self.start_ms

    @property
    def rng(self) -> random.Random:
        return self._rng

    def call_later(self, delay_ms: float, fn: Callable[[], None]) -> TimerHandle:
        handle = TimerHandle()
        heapq.heappush(self._heap, (self._now + max(delay_ms, 0.0), next(self._seq), handle, fn))
        return handle

    def execute(self, fn: Callable[[], None], delay_ms: float = 0.0) -> None:
        self.call_later(delay_ms, fn)

    def at(self, elapsed_ms: float, fn: Callable[[], None]) -> TimerHandle:
        """Schedule ``fn`` at an offset from the start of the run."""
        return self.call_later(self.start_ms + elapsed_ms - self._now, fn)

    def step(self) -> bool:
        """Run the next event. Returns False when nothing is scheduled."""
        while self._heap:
            when, _, handle, fn = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self._now = max(self._now, when)
            self.events_run += 1
            fn()
            return True
        return False

    def run_until(self, done: Callable[[], bool], limit_ms: float) -> None:
        """Step until ``done()`` holds.

        Raises:
            ScenarioError: If virtual time passes ``limit_ms`` after start first.
        """
        deadline = self.start_ms + limit_ms
        while not done():
            if not self.step():
                raise ScenarioError("simulation ran out of events before completing")
            if self._now > deadline:
                raise ScenarioError(f"simulation exceeded {limit_ms:.0f} ms of virtual time")

    def run_for(self, duration_ms: float) -> None:
        """Advance virtual time by ``duration_ms``, running every event due."""
        deadline = self._now + duration_ms
        while self._heap and self._heap[0][0] <= deadline:
            self.step()
        self._now = max(self._now, deadline)


class SimNetwork:
    """Message bus between named nodes (bricks ``b*``, coordinators ``d*``).

    A request to a brick that is down comes back as ``refused``; bricks that
    go down with requests in flight answer them with ``reset``. Partitioned
    links drop traffic silently so the sender sees a timeout.
    """

    def __init__(self, runtime: SimRuntime, latency_ms: float = DEFAULT_LATENCY_MS):
        self.runtime = runtime
        self.latency_ms = latency_ms
        self.link_latency: Dict[Tuple[str, str], float] = {}
        self._handlers: Dict[Endpoint, RequestHandler] = {}
        self._names: Dict[Endpoint, str] = {}
        self._up: Set[Endpoint] = set()
        self._incarnation: Dict[Endpoint, int] = {}
        self._inflight: Dict[Endpoint, Dict[int, ReplyCallback]] = {}
        self._request_ids = itertools.count(1)
        self._partitions: List[FrozenSet[str]] = []
        self._blocked: Set[Tuple[str, str]] = set()
        self._beacon_listeners: Dict[str, Callable[[Beacon], None]] = {}
        self.messages = 0

    # ---- topology ------------------------------------------------------

    def register_brick(self, name: str, endpoint: Endpoint, handler: RequestHandler) -> None:
        self._names[endpoint] = name
        self._handlers[endpoint] = handler
        self._incarnation.setdefault(endpoint, 0)
        self._inflight.setdefault(endpoint, {})

    def add_beacon_listener(self, name: str, on_beacon: Callable[[Beacon], None]) -> None:
        self._beacon_listeners[name] = on_beacon

    def set_up(self, endpoint: Endpoint, up: bool) -> None:
        """Bring a brick up or down; going down resets its open requests."""
        if up:
            self._up.add(endpoint)
            return
        self._up.discard(endpoint)
        self._incarnation[endpoint] = self._incarnation.get(endpoint, 0) + 1
        pending, self._inflight[endpoint] = self._inflight.get(endpoint, {}), {}
        for rid in sorted(pending):
            on_reply = pending[rid]
            self.runtime.execute(lambda on_reply=on_reply: on_reply(None, RESET), self.latency_ms)

    def is_up(self, endpoint: Endpoint) -> bool:
        return endpoint in self._up

    def partition(self, nodes: Iterable[str]) -> FrozenSet[str]:
        group = frozenset(nodes)
        self._partitions.append(group)
        return group

    def heal(self, group: Optional[FrozenSet[str]] = None) -> None:
        if group is None:
            self._partitions.clear()
            self._blocked.clear()
        elif group in self._partitions:
            self._partitions.remove(group)

    def block(self, src: str, dst: str) -> None:
        """Drop every message from ``src`` to ``dst`` (one direction)."""
        self._blocked.add((src, dst))

    def unblock(self, src: str, dst: str) -> None:
        self._blocked.discard((src, dst))

    def reachable(self, src: str, dst: str) -> bool:
        if (src, dst) in self._blocked:
            return False
        return not any((src in group) != (dst in group) for group in self._partitions)

    def latency(self, src: str, dst: str) -> float:
        return self.link_latency.get((src, dst), self.latency_ms)

    # ---- delivery ------------------------------------------------------

    def send_request(self, src: str, dest: Endpoint, message: Message, on_reply: ReplyCallback) -> None:
        self.messages += 1
        dst = self._names.get(dest, str(dest))
        if not self.reachable(src, dst):
            return
        frame = encode(message, 0)
        self.runtime.execute(lambda: self._deliver(src, dst, dest, frame, on_reply), self.latency(src, dst))

    def _deliver(self, src: str, dst: str, dest: Endpoint, frame: bytes, on_reply: ReplyCallback) -> None:
        if dest not in self._up:
            if self.reachable(dst, src):
                self.runtime.execute(lambda: on_reply(None, REFUSED), self.latency(dst, src))
            return
        rid = next(self._request_ids)
        incarnation = self._incarnation[dest]
        self._inflight[dest][rid] = on_reply

        def reply(message: Message) -> None:
            if self._incarnation.get(dest) != incarnation:
                return
            if self._inflight[dest].pop(rid, None) is None:
                return
            if not self.reachable(dst, src):
                return
            data = encode(message, rid)
            self.runtime.execute(lambda: on_reply(decode(data), None), self.latency(dst, src))

        self._handlers[dest](decode(frame), reply)

    def broadcast_beacon(self, src: str, beacon: Beacon) -> None:
        """Deliver a brick's beacon to every coordinator it can reach."""
        frame = encode(beacon, 0)
        for name in sorted(self._beacon_listeners):
            if not self.reachable(src, name):
                continue
            listener = self._beacon_listeners[name]
            self.runtime.execute(lambda listener=listener: listener(decode(frame)), self.latency(src, name))

    def transport_for(self, node: str) -> "SimTransport":
        return SimTransport(self, node)


class SimTransport(Transport):
    """Transport bound to one sending node."""

    def __init__(self, network: SimNetwork, node: str):
        self.network = network
        self.node = node

    def request(self, dest: Endpoint, message: Message, on_reply: ReplyCallback) -> None:
        self.network.send_request(self.node, dest, message, on_reply)
