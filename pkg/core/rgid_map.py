"""Soft-state RGID-to-brick routing table built from beacons."""

import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Set, Tuple

from core.errors import NoRoute
from core.types import Endpoint, QuorumConfig, Rgid, quorums_intersect

NEVER = float("-inf")


@dataclass(frozen=True)
class Route:
    """Result of a lookup: the matching group, its routable endpoints and quorum."""

    rgid: Rgid
    endpoints: Tuple[Endpoint, ...]
    quorum: QuorumConfig


class RgidMap:
    """Rgid -> {endpoint: last beacon time}.

    Membership and routability are tracked separately: an endpoint is a member
    of an Rgid until it withdraws it, is removed, or stays silent past
    ``member_expiry_ms``; it is routable only while its last beacon is within
    ``staleness_ms``. Quorum sizes follow membership.

    Writers hold a lock and publish a fresh dict; readers use the published
    dict without locking.
    """

    def __init__(self, staleness_ms: float = 6000.0, member_expiry_ms: float = 60000.0):
        self.staleness_ms = staleness_ms
        self.member_expiry_ms = member_expiry_ms
        self._entries: Dict[Rgid, Dict[Endpoint, float]] = {}
        # Last beacon time per endpoint regardless of suspicion.
        self._heard: Dict[Endpoint, float] = {}
        self._lock = threading.Lock()
        self._version = 0
        self._listeners: List[Callable[[], None]] = []

    @property
    def version(self) -> int:
        return self._version

    def add_listener(self, fn: Callable[[], None]) -> None:
        """Call ``fn`` (outside the lock) after every membership change."""
        self._listeners.append(fn)

    # ---- writers -------------------------------------------------------

    def observe(self, endpoint: Endpoint, rgids: Iterable[Rgid], now_ms: float) -> bool:
        """Fold one beacon in. Returns True if membership changed."""
        announced = set(rgids)
        changed = False
        with self._lock:
            entries = {r: dict(m) for r, m in self._entries.items()}
            for rgid in announced:
                members = entries.setdefault(rgid, {})
                if endpoint not in members:
                    changed = True
                members[endpoint] = now_ms
            for rgid, members in list(entries.items()):
                if rgid not in announced and endpoint in members:
                    del members[endpoint]
                    changed = True
                if not members:
                    del entries[rgid]
            self._heard[endpoint] = now_ms
            self._publish(entries, changed)
        if changed:
            self._notify()
        return changed

    def suspend(self, endpoint: Endpoint) -> None:
        """Drop ``endpoint`` from routing until its next beacon; membership is kept."""
        with self._lock:
            entries = {r: dict(m) for r, m in self._entries.items()}
            for members in entries.values():
                if endpoint in members:
                    members[endpoint] = NEVER
            self._publish(entries, False)

    def remove(self, endpoint: Endpoint) -> None:
        """Forget ``endpoint`` entirely (taken offline)."""
        with self._lock:
            self._drop({endpoint})
        self._notify()

    def expire(self, now_ms: float) -> List[Endpoint]:
        """Drop members silent for longer than ``member_expiry_ms``."""
        cutoff = now_ms - self.member_expiry_ms
        with self._lock:
            dead = sorted(e for e, t in self._heard.items() if t < cutoff)
            if dead:
                self._drop(set(dead))
        if dead:
            self._notify()
        return dead

    def _drop(self, gone: Set[Endpoint]) -> None:
        # Caller holds the lock.
        entries = {r: {e: t for e, t in m.items() if e not in gone} for r, m in self._entries.items()}
        entries = {r: m for r, m in entries.items() if m}
        for endpoint in gone:
            self._heard.pop(endpoint, None)
        self._publish(entries, True)

    def _publish(self, entries: Dict[Rgid, Dict[Endpoint, float]], changed: bool) -> None:
        self._entries = entries
        if changed:
            self._version += 1

    def _notify(self) -> None:
        for fn in list(self._listeners):
            fn()

    # ---- readers -------------------------------------------------------

    def is_live(self, last_beacon_ms: float, now_ms: float) -> bool:
        return now_ms - last_beacon_ms <= self.staleness_ms

    def members(self, rgid: Rgid) -> List[Endpoint]:
        return sorted(self._entries.get(rgid, {}))

    def live_endpoints(self, rgid: Rgid, now_ms: float) -> List[Endpoint]:
        members = self._entries.get(rgid, {})
        return sorted(e for e, t in members.items() if self.is_live(t, now_ms))

    def group_size(self, rgid: Rgid) -> int:
        return len(self._entries.get(rgid, {}))

    def quorum(self, rgid: Rgid) -> QuorumConfig:
        return QuorumConfig.majority(max(self.group_size(rgid), 1))

    def rgids(self) -> List[Rgid]:
        return sorted(self._entries, key=lambda r: (r.length, r.suffix))

    def groups(self) -> Dict[Rgid, List[Endpoint]]:
        return {r: sorted(m) for r, m in self._entries.items()}

    def last_heard(self) -> Dict[Endpoint, float]:
        """Last beacon arrival per endpoint, including suspended ones."""
        with self._lock:
            return dict(self._heard)

    def live_all(self, now_ms: float) -> List[Endpoint]:
        """Every routable endpoint across all groups, in endpoint order."""
        live = set()
        for members in self._entries.values():
            live.update(e for e, t in members.items() if self.is_live(t, now_ms))
        return sorted(live)

    def lookup(self, key: int, now_ms: float) -> Route:
        """Longest-suffix match among entries with a routable endpoint.

        A longer entry only shadows a shorter matching one when their majority
        quorums intersect, so a child Rgid still gathering members during a
        split keeps being served through its parent.

        Raises:
            NoRoute: If no entry matches the key.
        """
        matching = sorted(
            ((rgid, members) for rgid, members in self._entries.items() if rgid.matches(key)),
            key=lambda item: item[0].length,
            reverse=True,
        )
        for rgid, members in matching:
            live = sorted(e for e, t in members.items() if self.is_live(t, now_ms))
            if not live:
                continue
            shorter = [len(m) for r, m in matching if r.length < rgid.length]
            if all(quorums_intersect(n, len(members)) for n in shorter):
                return Route(rgid, tuple(live), self.quorum(rgid))
        raise NoRoute(f"no route for key {key}")

    def snapshot(self, now_ms: float) -> dict:
        """JSON-friendly view for stats and status output."""
        out = {}
        for rgid in self.rgids():
            members = self._entries.get(rgid, {})
            quorum = self.quorum(rgid)
            out[str(rgid)] = {
                "n": quorum.n,
                "wt": quorum.wt,
                "rt": quorum.rt,
                "members": {
                    str(e): {"live": self.is_live(t, now_ms), "age_ms": None if t == NEVER else round(now_ms - t, 3)}
                    for e, t in sorted(members.items())
                },
            }
        return out


def rgid_lookup(rgid_map: RgidMap, key: int, now_ms: float) -> Tuple[Rgid, Tuple[Endpoint, ...]]:
    """Longest matching suffix entry for ``key`` and its routable endpoints."""
    route = rgid_map.lookup(key, now_ms)
    return route.rgid, route.endpoints
