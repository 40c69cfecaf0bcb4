"""Drive a scenario on the simulator and collect history, verdict and report."""

import logging
import random
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from dlib.dlib import Dlib
from dlib.results import OpResult
from harness.checker import Verdict, check_history
from harness.cluster import SimCluster
from harness.history import FINAL_CLIENT, OpHistory
from harness.report import availability_report
from harness.scenario import Scenario
from harness.sim import SimNetwork, SimRuntime
from harness.workload import GET, PUT, Op, Workload, split_ops

logger = logging.getLogger(__name__)

# Clients start once the first beacons have populated every routing table.
CLIENT_START_MS = 10.0
# Client-side call overhead; keeps every return strictly after its invoke.
CLIENT_CALL_MS = 0.01


@dataclass
class RunResult:
    scenario: Scenario
    history: OpHistory
    verdict: Verdict
    report: dict
    final_state: dict
    workload_end_ms: float
    virtual_ms: float
    events_run: int
    messages: int

    def to_dict(self, include_history: bool = False) -> dict:
        data = {
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "verdict": self.verdict.to_dict(),
            "availability": self.report,
            "final_state": self.final_state,
            "workload_end_ms": round(self.workload_end_ms, 3),
            "virtual_ms": round(self.virtual_ms, 3),
            "events_run": self.events_run,
            "messages": self.messages,
        }
        if include_history:
            data["history"] = self.history.to_dict()
        return data


class _Client:
    """Closed-loop client: one op outstanding, next op after ``think_ms``."""

    def __init__(self, index: int, dlib: Dlib, workload: Workload, budget: int,
                 history: OpHistory, runtime: SimRuntime, think_ms: float):
        self.index = index
        self.dlib = dlib
        self.workload = workload
        self.remaining = budget
        self.history = history
        self.runtime = runtime
        self.think_ms = think_ms

    @property
    def done(self) -> bool:
        return self.remaining <= 0

    def start(self) -> None:
        if not self.done:
            self.runtime.execute(self._issue)

    def _issue(self) -> None:
        op = self.workload.next_op()
        issue(self.dlib, op, self.index, self.history, self.runtime, self._completed)

    def _completed(self) -> None:
        self.remaining -= 1
        if not self.done:
            self.runtime.execute(self._issue, self.think_ms)


def issue(dlib: Dlib, op: Op, client: int, history: OpHistory, runtime: SimRuntime,
          then: Optional[Callable[[], None]] = None) -> None:
    """Record the invocation, call the coordinator, record the return."""
    record = history.begin(client, op.kind, op.key, runtime.elapsed_ms)

    def on_result(result: OpResult) -> None:
        record.complete(result, runtime.elapsed_ms, op.value)
        if then is not None:
            then()

    def call() -> None:
        if op.kind == PUT:
            dlib.put_async(op.key, op.value, on_result)
        else:
            dlib.get_async(op.key, on_result)

    runtime.execute(call, CLIENT_CALL_MS)


def _final_reads(cluster: SimCluster, history: OpHistory, runtime: SimRuntime, limit_ms: float) -> None:
    keys = sorted({r.key for r in history.puts()})
    if not keys:
        return
    dlib = cluster.dlibs[sorted(cluster.dlibs)[0]]
    pending = {"n": len(keys)}

    def landed() -> None:
        pending["n"] -= 1

    for key in keys:
        issue(dlib, Op(GET, key), FINAL_CLIENT, history, runtime, landed)
    runtime.run_until(lambda: pending["n"] == 0, limit_ms)


def run(scenario: Scenario) -> RunResult:
    """Execute one scenario to completion.

    Clients run their ops while the schedule fires; then every fault is
    healed, the cluster settles and one quorum read per written key is taken
    as the final read.

    Raises:
        ScenarioError: If the run does not finish within ``scenario.limit_ms``.
    """
    logger.info("running scenario %s seed=%d", scenario.name, scenario.seed)
    runtime = SimRuntime(scenario.seed)
    network = SimNetwork(runtime, scenario.latency_ms)
    for link in scenario.link_latency:
        network.link_latency[(link["src"], link["dst"])] = float(link["latency_ms"])

    cluster = SimCluster(scenario, runtime, network)
    cluster.start()

    applied = {"n": 0}
    for event in scenario.schedule:
        def fire(event=event) -> None:
            cluster.apply(event)
            applied["n"] += 1
        runtime.at(event.at_ms, fire)

    history = OpHistory()
    spec = scenario.workload
    dlibs: List[Dlib] = [cluster.dlibs[name] for name in scenario.dlib_names()]
    clients = [
        _Client(index, dlibs[index % len(dlibs)],
                Workload(spec, index, random.Random(f"{scenario.seed}:{index}")),
                budget, history, runtime, spec.think_ms)
        for index, budget in enumerate(split_ops(spec.ops, spec.clients))
    ]

    def start_clients() -> None:
        for client in clients:
            client.start()

    runtime.at(CLIENT_START_MS, start_clients)

    total_events = len(scenario.schedule)
    runtime.run_until(lambda: all(c.done for c in clients) and applied["n"] == total_events, scenario.limit_ms)
    workload_end = runtime.elapsed_ms

    cluster.heal_all()
    runtime.run_for(scenario.settle_ms)
    _final_reads(cluster, history, runtime, scenario.limit_ms)

    verdict = check_history(history)
    report = availability_report(history, scenario.schedule, run_end_ms=workload_end)
    counts: Dict[str, int] = verdict.by_check()
    logger.info("scenario %s finished at %.0f ms: %s %s", scenario.name, runtime.elapsed_ms,
                "pass" if verdict.passed else "FAIL", counts)
    return RunResult(
        scenario=scenario,
        history=history,
        verdict=verdict,
        report=report,
        final_state=cluster.final_state(),
        workload_end_ms=workload_end,
        virtual_ms=runtime.elapsed_ms,
        events_run=runtime.events_run,
        messages=network.messages,
    )
