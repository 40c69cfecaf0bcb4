"""An in-process cluster of bricks, coordinators and control plane on the simulator."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from brick.brick import Brick
from config import BrickConfig, DetectorConfig, DlibConfig, RestartPolicy
from control.monitor import HealthMonitor
from control.repartition import PlanLock, PlanResult, Repartitioner
from control.restart import Restarter
from core.errors import PlanError
from core.runtime import SkewedRuntime
from core.types import Endpoint, Rgid
from dlib.dlib import Dlib
from harness.scenario import EventKind, FaultEvent, Scenario
from harness.sim import SimNetwork, SimRuntime
from services.supervisor import CallbackSupervisor
from storage.memory_store import MemoryStore

logger = logging.getLogger(__name__)

BRICK_PORT = 9000


def brick_endpoint(index: int) -> Endpoint:
    return Endpoint.parse(f"10.0.{index // 250}.{index % 250 + 1}:{BRICK_PORT}")


@dataclass
class SimBrick:
    name: str
    brick: Brick
    store: MemoryStore
    up: bool = False
    started: bool = False
    offline: bool = False

    @property
    def endpoint(self) -> Endpoint:
        return self.brick.endpoint


@dataclass
class SupervisorAction:
    at_ms: float
    brick: str
    action: str

    def to_dict(self) -> dict:
        return {"at_ms": self.at_ms, "brick": self.brick, "action": self.action}


@dataclass
class ClusterLog:
    supervisor: List[SupervisorAction] = field(default_factory=list)
    alerts: List[dict] = field(default_factory=list)
    plans: List[PlanResult] = field(default_factory=list)
    events: List[dict] = field(default_factory=list)


class SimCluster:
    """Bricks ``b0..``, coordinators ``d0..`` and one HealthMonitor per coordinator.

    Each brick's stable store is a MemoryStore that survives its restarts; the
    supervisor behind every brick's Restarter is this object.
    """

    def __init__(self, scenario: Scenario, runtime: SimRuntime, network: SimNetwork):
        self.scenario = scenario
        self.runtime = runtime
        self.network = network
        self.log = ClusterLog()
        self.bricks: Dict[str, SimBrick] = {}
        self._by_endpoint: Dict[Endpoint, str] = {}
        self.dlibs: Dict[str, Dlib] = {}
        self.clocks: Dict[str, SkewedRuntime] = {}
        self.monitors: Dict[str, HealthMonitor] = {}
        self.plan_lock = PlanLock()
        self.policy = RestartPolicy(**scenario.restart_overrides)
        self.supervisor = CallbackSupervisor(self._supervisor_restart, self._supervisor_stop)

        bits = scenario.group_bits
        for index, name in enumerate(scenario.brick_names()):
            self.add_brick(name, [Rgid(index % scenario.groups, bits)])
        for index, name in enumerate(scenario.dlib_names()):
            self._add_dlib(index, name)

    # ---- construction --------------------------------------------------

    def _alert(self, subject: str, details: Optional[dict] = None) -> bool:
        self.log.alerts.append({"at_ms": self.runtime.elapsed_ms, "subject": subject, "details": details or {}})
        logger.warning("alert: %s", subject)
        return False

    def add_brick(self, name: str, rgids: List[Rgid]) -> SimBrick:
        index = int(name[1:])
        config = BrickConfig(
            endpoint=brick_endpoint(index),
            announced_rgids=list(rgids),
            beacon_period_ms=self.scenario.beacon_period_ms,
            restart_policy=self.policy,
            supervisor_command="",
            supervisor_stop_command="",
        )
        store = MemoryStore(config.record_payload_size)
        restarter = Restarter(self.policy, self.runtime, self.supervisor, alert=self._alert, name=name)
        brick = Brick(
            config, store, self.runtime,
            beacon_sinks=[lambda beacon, name=name: self.network.broadcast_beacon(name, beacon)],
            restarter=restarter,
        )
        brick.on_crash = lambda step, name=name: self.kill(name)
        node = SimBrick(name, brick, store)
        self.bricks[name] = node
        self._by_endpoint[brick.endpoint] = name
        self.network.register_brick(name, brick.endpoint, brick.handle_request)
        return node

    def _add_dlib(self, index: int, name: str) -> None:
        clock = SkewedRuntime(self.runtime)
        config = DlibConfig(
            coordinator_id=index + 1,
            op_timeout_ms=self.scenario.op_timeout_ms,
            max_retries=self.scenario.max_retries,
            beacon_period_ms=self.scenario.beacon_period_ms,
        )
        dlib = Dlib(config, self.network.transport_for(name), clock, alert=self._alert, name=name)
        self.network.add_beacon_listener(name, dlib.handle_beacon)
        self.dlibs[name] = dlib
        self.clocks[name] = clock
        if self.scenario.detector:
            detector = DetectorConfig(beacon_period_ms=self.scenario.beacon_period_ms,
                                      **self.scenario.detector_overrides)
            self.monitors[name] = HealthMonitor(dlib, detector, clock)

    def start(self) -> None:
        for name in sorted(self.bricks):
            self.launch(name)
        for monitor in self.monitors.values():
            monitor.start()

    # ---- process control -----------------------------------------------

    def name_of(self, endpoint: Endpoint) -> Optional[str]:
        return self._by_endpoint.get(endpoint)

    def launch(self, name: str) -> None:
        """Start a brick process (fresh volatile state, existing stable store)."""
        node = self.bricks[name]
        if node.up:
            self.kill(name)
        if node.started:
            node.brick.restart_self()
        else:
            node.brick.start()
        node.started = True
        node.up = True
        self.network.set_up(node.endpoint, True)

    def kill(self, name: str) -> None:
        """kill -9: volatile state and open connections are gone."""
        node = self.bricks[name]
        if not node.up:
            return
        node.brick.stop()
        node.up = False
        self.network.set_up(node.endpoint, False)

    def _supervisor_restart(self, target: Endpoint) -> bool:
        name = self.name_of(target)
        if name is None or self.bricks[name].offline:
            return False
        self.log.supervisor.append(SupervisorAction(self.runtime.elapsed_ms, name, "restart"))
        self.launch(name)
        return True

    def _supervisor_stop(self, target: Endpoint) -> bool:
        name = self.name_of(target)
        if name is None:
            return False
        self.log.supervisor.append(SupervisorAction(self.runtime.elapsed_ms, name, "stop"))
        self.bricks[name].offline = True
        self.kill(name)
        return True

    def supervisor_executions(self, name: str) -> int:
        return sum(1 for a in self.log.supervisor if a.brick == name and a.action == "restart")

    # ---- scheduled events ----------------------------------------------

    def apply(self, event: FaultEvent) -> None:
        self.log.events.append({"at_ms": self.runtime.elapsed_ms, **event.to_dict()})
        kind = event.kind
        if kind == EventKind.KILL:
            self.kill(event.brick)
        elif kind == EventKind.RESTART:
            if not self.bricks[event.brick].offline:
                self.launch(event.brick)
        elif kind == EventKind.STUTTER:
            self.stutter(event.brick, event.added_ms, event.duration_ms)
        elif kind == EventKind.SKEW:
            self.clocks[event.dlib].offset_ms = event.offset_ms
        elif kind == EventKind.PARTITION:
            group = self.network.partition(event.nodes)
            self.runtime.call_later(event.duration_ms, lambda: self.network.heal(group))
        elif kind == EventKind.CRASH_POINT:
            self.bricks[event.brick].brick.arm_crash(event.step)
        elif kind == EventKind.JOIN:
            self.join(event.brick, Rgid.parse(event.rgid or "0/0"))
        elif kind == EventKind.SPLIT:
            self.split(Rgid.parse(event.rgid), {
                name: [Rgid.parse(r) for r in rgids] for name, rgids in event.assignment.items()
            })

    def stutter(self, name: str, added_ms: float, duration_ms: float) -> None:
        brick = self.bricks[name].brick
        brick.service_delay_ms = added_ms

        def clear() -> None:
            if brick.service_delay_ms == added_ms:
                brick.service_delay_ms = 0.0

        self.runtime.call_later(duration_ms, clear)

    def _repartitioner(self) -> Repartitioner:
        return Repartitioner(self.dlibs[sorted(self.dlibs)[0]], self.plan_lock)

    def join(self, name: str, rgid: Rgid) -> None:
        def launch(_config: BrickConfig) -> None:
            self.launch(name)

        node = self.add_brick(name, [rgid])
        try:
            self._repartitioner().join_brick(node.brick.config, rgid, launch=launch, on_done=self.log.plans.append)
        except PlanError as e:
            self.log.plans.append(PlanResult(f"join {name}", False, str(e)))

    def split(self, parent: Rgid, assignment: Dict[str, List[Rgid]]) -> None:
        by_endpoint = {self.bricks[name].endpoint: rgids for name, rgids in assignment.items()}
        try:
            self._repartitioner().split_group(parent, by_endpoint, on_done=self.log.plans.append)
        except PlanError as e:
            self.log.plans.append(PlanResult(f"split {parent}", False, str(e)))

    def heal_all(self) -> None:
        """Undo every injected fault except persistent-fault shutdowns."""
        self.network.heal()
        for clock in self.clocks.values():
            clock.offset_ms = 0.0
        for name in sorted(self.bricks):
            node = self.bricks[name]
            node.brick.service_delay_ms = 0.0
            if not node.up and not node.offline:
                self.launch(name)

    def stop(self) -> None:
        for monitor in self.monitors.values():
            monitor.stop()
        for name in sorted(self.bricks):
            self.kill(name)

    # ---- inspection ----------------------------------------------------

    def holders(self, key: int, ts) -> List[str]:
        """Bricks whose stable store holds ``key`` at ``ts`` or newer."""
        out = []
        for name in sorted(self.bricks):
            durable = self.bricks[name].store.durable_ts(key)
            if durable is not None and durable >= ts:
                out.append(name)
        return out

    def final_state(self) -> dict:
        return {
            "bricks": {
                name: {
                    "endpoint": str(node.endpoint),
                    "up": node.up,
                    "offline": node.offline,
                    "restarts": node.brick.restarts,
                    "records": len(node.store),
                    "rgids": [str(r) for r in node.brick.rgid_list()],
                    "counters": dict(node.brick.counters),
                }
                for name, node in sorted(self.bricks.items())
            },
            "dlibs": {name: dict(dlib.counters) for name, dlib in sorted(self.dlibs.items())},
            "flags": {name: [s.to_dict() for s in m.flags] for name, m in sorted(self.monitors.items())},
            "supervisor": [a.to_dict() for a in self.log.supervisor],
            "alerts": list(self.log.alerts),
            "plans": [p.to_dict() for p in self.log.plans],
        }
