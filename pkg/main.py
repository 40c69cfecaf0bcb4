"""Unified entry point for dstore - brick daemon, client, load generator, control and simulator."""

import os
import sys
import json
import random
import signal
import argparse
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

# Add project root to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from dotenv import load_dotenv
load_dotenv()

import requests

from brick.brick import Brick
from config import BrickConfig, ClusterConfig, get_config, load_brick_config, load_cluster_config
from control.monitor import HealthMonitor
from control.repartition import PlanResult, Repartitioner
from control.restart import RestartOutcome, Restarter
from core.errors import DStoreError
from core.log import configure_logging
from core.rate_limiter import TokenBucket
from core.runtime import ThreadRuntime
from core.types import Endpoint, Rgid, parse_rgids
from dlib.dlib import Dlib
from harness.history import OpHistory
from harness.report import summarize
from harness.runner import run
from harness.scenario import WorkloadSpec, load_scenario, preset
from harness.workload import PUT, Workload, split_ops
from services.admin_api import AdminServer
from services.supervisor import CommandSupervisor
from storage.fixed_record_store import FixedRecordStore
from wire.codec import iter_frames
from wire.messages import Beacon, BeaconRequest
from wire.transport import BrickServer, TcpTransport, UdpBeaconListener, UdpBeaconSink, request_sync

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_UNREACHABLE = 3


def _print(args, data: dict, lines: Optional[List[str]] = None) -> None:
    """JSON with --json, otherwise the human-readable lines."""
    if args.json:
        print(json.dumps(data, ensure_ascii=False, sort_keys=True))
    else:
        for line in lines if lines is not None else [json.dumps(data, indent=2, ensure_ascii=False)]:
            print(line)


def parse_value(text: str) -> bytes:
    """``0x``-prefixed hex, otherwise the UTF-8 encoding of ``text``."""
    if text[:2].lower() == "0x":
        try:
            return bytes.fromhex(text[2:])
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"bad hex value {text!r}: {e}") from e
    return text.encode("utf-8")


def _fail(message: str, code: int) -> int:
    print(f"Error: {message}", file=sys.stderr)
    return code


# ============== brick daemon ==============

@dataclass
class BrickProcess:
    """A brick serving on TCP, plus its beacon sink and optional admin endpoint."""

    brick: Brick
    server: BrickServer
    runtime: ThreadRuntime
    sink: UdpBeaconSink
    admin: Optional[AdminServer] = None

    @property
    def endpoint(self) -> Endpoint:
        return self.brick.endpoint

    def close(self) -> None:
        self.brick.stop()
        self.server.shutdown()
        self.server.server_close()
        self.server.drop_connections()
        if self.admin is not None:
            self.admin.shutdown()
        self.sink.close()
        self.runtime.close()
        self.brick.backend.close()


def start_brick(config: BrickConfig, fresh: bool = False) -> BrickProcess:
    """Open the store, bind the listener and start serving.

    Port 0 binds an ephemeral port and the brick announces the bound endpoint.
    """
    handler: List[Callable] = []
    server = BrickServer(config.endpoint.address, lambda message, reply: handler[0](message, reply))
    if config.endpoint.port == 0:
        config = replace(config, endpoint=server.endpoint)

    runtime = ThreadRuntime(max_workers=sum(config.worker_counts.values()) + 8)
    store = FixedRecordStore(config.store_path, config.record_payload_size, fresh=fresh)
    sink = UdpBeaconSink(config.beacon_sinks)
    supervisor = CommandSupervisor(config.supervisor_command, config.supervisor_stop_command)
    restarter = Restarter(config.restart_policy, runtime, supervisor, name=str(config.endpoint))

    def reopen() -> FixedRecordStore:
        server.drop_connections()
        return FixedRecordStore(config.store_path, config.record_payload_size)

    brick = Brick(config, store, runtime, beacon_sinks=[sink], restarter=restarter, reopen=reopen)
    handler.append(brick.handle_request)
    brick.start()
    server.serve_in_background()

    admin = None
    if config.admin_port:
        admin = AdminServer(brick, config.endpoint.host, config.admin_port)
        admin.start()
    return BrickProcess(brick, server, runtime, sink, admin)


def cli_brickd(args) -> int:
    """Run one brick until SIGINT / SIGTERM."""
    config = load_brick_config(args.config, port_override=args.port)
    process = start_brick(config, fresh=args.fresh)
    print(f"brick {process.endpoint} serving {', '.join(str(r) for r in process.brick.rgid_list())}")

    stopping = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stopping.set())
    try:
        while not stopping.wait(1.0):
            pass
    except KeyboardInterrupt:
        pass
    finally:
        process.close()
    return EXIT_OK


# ============== cluster access ==============

def _cluster_path(args) -> str:
    return args.cluster or get_config().cluster_config


@dataclass
class ClusterSession:
    """A Dlib bound to one cluster file for the length of a CLI command."""

    cluster: ClusterConfig
    dlib: Dlib
    listener: Optional[UdpBeaconListener] = None

    def wait_for_routes(self, keys=(0,), timeout_s: float = 5.0) -> bool:
        return self.dlib.wait_for_routes(keys, timeout_s)

    def close(self) -> None:
        if self.listener is not None:
            self.listener.close()
        self.dlib.transport.close()
        self.dlib.runtime.close()


def pull_beacons(dlib: Dlib, endpoints: List[Endpoint]) -> int:
    """Ask every endpoint for a beacon and wait for all answers or timeouts.

    Returns how many beacons were folded into the map; group sizes are
    complete once this returns.
    """
    if not endpoints:
        return 0
    lock = threading.Lock()
    state = {"left": len(endpoints), "seen": 0}
    done = threading.Event()

    def on_reply(reply, error) -> None:
        with lock:
            if isinstance(reply, Beacon) and dlib.handle_beacon(reply):
                state["seen"] += 1
            state["left"] -= 1
            if not state["left"]:
                done.set()

    for endpoint in endpoints:
        dlib.control_request(endpoint, BeaconRequest(), on_reply)
    done.wait(2 * dlib.config.op_timeout_ms / 1000.0)
    return state["seen"]


def open_cluster(args) -> ClusterSession:
    """Load the cluster file and bring up a Dlib with a populated map.

    With ``beacon_listen`` configured the Dlib also listens for pushed
    beacons; either way it pulls one beacon from every configured brick.
    """
    cluster = load_cluster_config(_cluster_path(args))
    dlib = Dlib(cluster.dlib, TcpTransport(), ThreadRuntime(), name=f"cli-{cluster.dlib.coordinator_id}")
    listener = None
    if cluster.dlib.beacon_listen is not None:
        listener = UdpBeaconListener(cluster.dlib.beacon_listen, dlib.handle_beacon)
    pull_beacons(dlib, cluster.bricks)
    return ClusterSession(cluster, dlib, listener)



def _keep_fresh(cluster: ClusterConfig, dlib: Dlib) -> Callable[[], None]:
    """Pull beacons at most once per beacon period."""
    last = {"at": 0.0}

    def refresh() -> None:
        now = dlib.runtime.now_ms()
        if now - last["at"] >= cluster.dlib.beacon_period_ms / 2:
            last["at"] = now
            dlib.bootstrap(cluster.bricks)

    return refresh


# ============== client ==============

def cli_client(args) -> int:
    """One-shot put / get / stats."""
    session = open_cluster(args)
    cluster, dlib = session.cluster, session.dlib
    try:
        if args.client_command == "stats":
            session.wait_for_routes((0,), 1.0)
            snapshot = dlib.snapshot()
            lines = [f"coordinator {snapshot['coordinator_id']}"]
            for rgid, entry in sorted(snapshot["rgid_map"].items()):
                live = [e for e, m in entry["members"].items() if m["live"]]
                lines.append(f"  {rgid}: n={entry['n']} wt={entry['wt']} rt={entry['rt']} live={','.join(live)}")
            _print(args, snapshot, lines)
            return EXIT_OK

        key = args.key
        if not session.wait_for_routes([key]):
            return _fail(f"cluster unreachable: no route for key {key} from {len(cluster.bricks)} bricks",
                         EXIT_UNREACHABLE)
        if args.client_command == "put":
            result = dlib.put(key, args.value)
            _print(args, result.to_dict(), [f"{result.status.value} ts={result.ts}"])
        else:
            result = dlib.get(key)
            text = result.value.decode("utf-8", errors="replace") if result.value is not None else None
            data = {**result.to_dict(), "text": text}
            _print(args, data, [text if result.success and text is not None else f"{result.status.value} ts={result.ts}"])
        return EXIT_OK if result.success else EXIT_FAILED
    finally:
        session.close()


# ============== load generator ==============

def cli_loadgen(args) -> int:
    """Closed-loop workload against a live cluster; reports success and percentiles."""
    spec = WorkloadSpec(
        ops=args.ops,
        read_fraction=args.read_frac,
        key_space=args.key_space,
        distribution=args.distribution,
        value_size=args.value_size,
        clients=args.workers,
    )
    session = open_cluster(args)
    cluster, dlib = session.cluster, session.dlib
    try:
        if not session.wait_for_routes():
            return _fail(f"cluster unreachable: none of {len(cluster.bricks)} bricks answered", EXIT_UNREACHABLE)
        bucket = TokenBucket(args.rate) if args.rate else None
        bucket_lock = threading.Lock()
        history = OpHistory()
        history_lock = threading.Lock()
        origin = time.monotonic()

        def elapsed_ms() -> float:
            return (time.monotonic() - origin) * 1000.0

        def worker(index: int, budget: int) -> None:
            workload = Workload(spec, index, random.Random(f"{args.seed}:{index}"))
            for op in workload.ops(budget):
                if bucket is not None:
                    with bucket_lock:
                        bucket.wait_for_tokens()
                with history_lock:
                    record = history.begin(index, op.kind, op.key, elapsed_ms())
                result = dlib.put(op.key, op.value) if op.kind == PUT else dlib.get(op.key)
                with history_lock:
                    record.complete(result, elapsed_ms(), op.value)

        with ThreadPoolExecutor(max_workers=spec.clients) as pool:
            budgets = split_ops(spec.ops, spec.clients)
            list(pool.map(worker, range(spec.clients), budgets))

        report = summarize(history.completed())
        report["duration_ms"] = round(elapsed_ms(), 3)
        lines = [
            f"ops {report['ops']}  success {report['success_rate']}  "
            f"p50 {report['p50_ms']} ms  p95 {report['p95_ms']} ms  p99 {report['p99_ms']} ms",
        ]
        for kind, entry in report["by_kind"].items():
            lines.append(f"  {kind}: {entry['ops']} ops, success {entry['success_rate']}, "
                         f"p50 {entry['p50_ms']} / p95 {entry['p95_ms']} / p99 {entry['p99_ms']} ms")
        _print(args, report, lines)
        return EXIT_OK
    finally:
        session.close()


# ============== control ==============

def _probe(dlib: Dlib, endpoint: Endpoint, timeout_s: float) -> dict:
    reply, error = request_sync(dlib.transport, endpoint, BeaconRequest(), timeout_s)
    if isinstance(reply, Beacon):
        dlib.handle_beacon(reply)
        return {"endpoint": str(endpoint), "up": True, "rgids": [str(r) for r in reply.rgids],
                "sequence": reply.sequence}
    return {"endpoint": str(endpoint), "up": False, "error": error or "unexpected reply"}


def cli_ctl_status(args, cluster: ClusterConfig, dlib: Dlib) -> int:
    rows = []
    for endpoint in cluster.bricks:
        url = cluster.admin_urls.get(endpoint)
        if url:
            try:
                response = requests.get(url.rstrip("/") + "/status", timeout=args.timeout)
                response.raise_for_status()
                rows.append({"up": True, **response.json()})
                continue
            except requests.RequestException as e:
                rows.append({"endpoint": str(endpoint), "up": False, "error": str(e)})
                continue
        rows.append(_probe(dlib, endpoint, args.timeout))
    lines = []
    for row in rows:
        if row.get("up"):
            extra = f" records={row['records']}" if "records" in row else ""
            lines.append(f"{row['endpoint']}  UP    {','.join(row.get('rgids', []))}{extra}")
        else:
            lines.append(f"{row['endpoint']}  DOWN  {row.get('error', '')}")
    _print(args, {"bricks": rows}, lines)
    return EXIT_OK if any(row.get("up") for row in rows) else EXIT_UNREACHABLE


def cli_ctl_restart(args, cluster: ClusterConfig, dlib: Dlib) -> int:
    target = Endpoint.parse(args.endpoint)
    for endpoint in cluster.bricks:
        _probe(dlib, endpoint, args.timeout)
    done = threading.Event()
    box = {}

    def on_done(outcome: Optional[RestartOutcome]) -> None:
        box["outcome"] = outcome
        done.set()

    restarter = dlib.initiate_restart(target, on_done)
    if not done.wait(args.timeout * 4):
        return _fail(f"no answer from restarter {restarter}", EXIT_UNREACHABLE)
    outcome = box.get("outcome")
    data = {"target": str(target), "restarter": str(restarter) if restarter else None,
            "outcome": outcome.value if outcome else None}
    _print(args, data, [f"{target}: {data['outcome'] or 'no restarter'} (via {data['restarter']})"])
    return EXIT_OK if outcome in (RestartOutcome.EXECUTED, RestartOutcome.DEDUPED) else EXIT_FAILED


def _wait_plan(start: Callable[[Callable[[PlanResult], None]], None], timeout_s: float) -> Optional[PlanResult]:
    done = threading.Event()
    box = {}

    def on_done(result: PlanResult) -> None:
        box["result"] = result
        done.set()

    start(on_done)
    done.wait(timeout_s)
    return box.get("result")


def _parse_assignment(items: List[str]) -> dict:
    """``host:port=rgid[,rgid]`` entries."""
    assignment = {}
    for item in items:
        endpoint, sep, rgids = item.partition("=")
        if not sep:
            raise DStoreError(f"--assign expects endpoint=rgid[,rgid], got {item!r}")
        assignment[Endpoint.parse(endpoint)] = parse_rgids(rgids)
    return assignment


def cli_ctl_split(args, cluster: ClusterConfig, dlib: Dlib) -> int:
    parent = Rgid.parse(args.rgid)
    assignment = _parse_assignment(args.assign)
    if not dlib.wait_for_routes((0,), 5.0):
        return _fail("cluster unreachable", EXIT_UNREACHABLE)
    repartitioner = Repartitioner(dlib, refresh=_keep_fresh(cluster, dlib))
    timeout_s = 12 * cluster.dlib.beacon_period_ms / 1000.0
    result = _wait_plan(lambda on_done: repartitioner.split_group(parent, assignment, on_done), timeout_s)
    if result is None:
        return _fail(f"split of {parent} did not finish within {timeout_s:.0f}s", EXIT_FAILED)
    _print(args, result.to_dict(), [f"{result.plan}: {'ok' if result.ok else 'FAILED'} ({result.detail})"])
    return EXIT_OK if result.ok else EXIT_FAILED


def cli_ctl_join(args, cluster: ClusterConfig, dlib: Dlib) -> int:
    new = load_brick_config(args.config)
    group = Rgid.parse(args.rgid) if args.rgid else new.announced_rgids[0]
    refresh = _keep_fresh(cluster, dlib)

    def pull_new() -> None:
        refresh()
        dlib.bootstrap([new.endpoint])

    repartitioner = Repartitioner(dlib, refresh=pull_new)
    timeout_s = 12 * cluster.dlib.beacon_period_ms / 1000.0
    result = _wait_plan(lambda on_done: repartitioner.join_brick(new, group, on_done=on_done), timeout_s)
    if result is None:
        return _fail(f"join of {new.endpoint} did not finish within {timeout_s:.0f}s", EXIT_FAILED)
    _print(args, result.to_dict(), [f"{result.plan}: {'ok' if result.ok else 'FAILED'} ({result.detail})"])
    return EXIT_OK if result.ok else EXIT_FAILED


def cli_ctl_monitor(args, cluster: ClusterConfig, dlib: Dlib) -> int:
    """Run the failure detector against live traffic for ``--duration`` seconds."""
    monitor = HealthMonitor(dlib, cluster.detector, auto_restart=not args.dry_run)
    refresh = _keep_fresh(cluster, dlib)
    stop = threading.Event()

    def pump() -> None:
        while not stop.wait(cluster.dlib.beacon_period_ms / 1000.0):
            refresh()

    def show(report) -> None:
        if args.json:
            return
        for suspicion in report.suspicions:
            print(f"SUSPECT {suspicion.endpoint} {suspicion.kind.value}: {suspicion.detail}")

    monitor.add_listener(show)
    thread = threading.Thread(target=pump, name="dstore-ctl-refresh", daemon=True)
    thread.start()
    monitor.start()
    try:
        time.sleep(args.duration)
    except KeyboardInterrupt:
        pass
    finally:
        monitor.stop()
        stop.set()
    status = monitor.status()
    _print(args, status, [f"{status['windows']} windows, {len(status['flags'])} suspicions"])
    return EXIT_OK


def cli_ctl(args) -> int:
    session = open_cluster(args)
    cluster, dlib = session.cluster, session.dlib
    try:
        if args.ctl_command == "status":
            return cli_ctl_status(args, cluster, dlib)
        if args.ctl_command == "restart":
            return cli_ctl_restart(args, cluster, dlib)
        if args.ctl_command == "split":
            return cli_ctl_split(args, cluster, dlib)
        if args.ctl_command == "join":
            return cli_ctl_join(args, cluster, dlib)
        return cli_ctl_monitor(args, cluster, dlib)
    finally:
        session.close()


# ============== simulator ==============

def cli_sim_run(args) -> int:
    if args.preset:
        scenario = preset(args.preset, seed=args.seed if args.seed is not None else 1)
    elif args.scenario:
        scenario = load_scenario(args.scenario, seed=args.seed)
    else:
        return _fail("give a scenario file or --preset", EXIT_CONFIG)
    if args.ops is not None:
        scenario.workload.ops = args.ops

    started = time.monotonic()
    result = run(scenario)
    wall_s = time.monotonic() - started
    data = result.to_dict()
    data["wall_s"] = round(wall_s, 3)

    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
    if args.history:
        result.history.save(args.history)

    verdict = result.verdict
    overall = result.report["overall"]
    lines = [
        f"scenario {scenario.name} seed {scenario.seed}: {'PASS' if verdict.passed else 'FAIL'}",
        f"  ops {overall['ops']}  success {overall['success_rate']}  p99 {overall['p99_ms']} ms",
        f"  virtual {result.virtual_ms:.0f} ms, wall {wall_s:.2f} s, {result.events_run} events",
    ]
    for phase, entry in result.report["phases"].items():
        if entry["ops"]:
            lines.append(f"  {phase}: {entry['ops']} ops, success {entry['success_rate']}")
    for violation in verdict.violations[:20]:
        lines.append(f"  {violation.check} key {violation.key}: {violation.detail}")
    _print(args, {"verdict": verdict.to_dict(), "availability": result.report, "wall_s": data["wall_s"]}, lines)
    return EXIT_OK if verdict.passed else EXIT_FAILED


# ============== wire dump ==============

def cli_wire_dump(args) -> int:
    with open(args.file, "rb") as f:
        data = f.read()
    failed = False
    for entry in iter_frames(data):
        failed = failed or "error" in entry
        if args.json:
            print(json.dumps(entry, sort_keys=True))
        elif "error" in entry:
            print(f"@{entry['offset']}: {entry['error']}")
        else:
            body = {k: v for k, v in entry.items() if k not in ("offset", "request_id", "type", "opcode")}
            print(f"@{entry['offset']} #{entry['request_id']} {entry['opcode']} {entry['type']} {body}")
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="dstore - quorum-replicated hash table with reboot-based recovery"
    )
    parser.add_argument("--json", action="store_true", help="Machine-readable JSON output")
    parser.add_argument("--log-level", type=str, help="Log level (default: DSTORE_LOG_LEVEL)")
    parser.add_argument("--log-format", choices=["text", "json"], help="Log format (default: DSTORE_LOG_FORMAT)")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # brickd
    brickd_parser = subparsers.add_parser("brickd", help="Run a brick")
    brickd_parser.add_argument("--config", required=True, help="Brick config file")
    brickd_parser.add_argument("--fresh", action="store_true", help="Start from an empty store")
    brickd_parser.add_argument("--port", type=int, help="Override the endpoint port")

    # client
    client_parser = subparsers.add_parser("client", help="One-shot operations")
    client_parser.add_argument("--cluster", type=str, help="Cluster config file (default: DSTORE_CLUSTER_CONFIG)")
    client_subparsers = client_parser.add_subparsers(dest="client_command", required=True)
    put_parser = client_subparsers.add_parser("put", help="Write a value")
    put_parser.add_argument("key", type=int)
    put_parser.add_argument("value", type=parse_value, help="0x-prefixed hex bytes or a UTF-8 string")
    get_parser = client_subparsers.add_parser("get", help="Read a value")
    get_parser.add_argument("key", type=int)
    client_subparsers.add_parser("stats", help="Routing table and latency summary")

    # loadgen
    loadgen_parser = subparsers.add_parser("loadgen", help="Generate load against a live cluster")
    loadgen_parser.add_argument("--cluster", type=str, help="Cluster config file")
    loadgen_parser.add_argument("--ops", type=int, default=10000)
    loadgen_parser.add_argument("--read-frac", type=float, default=0.5)
    loadgen_parser.add_argument("--workers", type=int, default=8)
    loadgen_parser.add_argument("--rate", type=float, help="Ops per second limit")
    loadgen_parser.add_argument("--key-space", type=int, default=1000)
    loadgen_parser.add_argument("--distribution", choices=["uniform", "zipf"], default="uniform")
    loadgen_parser.add_argument("--value-size", type=int, default=64)
    loadgen_parser.add_argument("--seed", type=int, default=1)

    # ctl
    ctl_parser = subparsers.add_parser("ctl", help="Control-plane actions")
    ctl_parser.add_argument("--cluster", type=str, help="Cluster config file")
    ctl_parser.add_argument("--timeout", type=float, default=2.0, help="Per-request timeout in seconds")
    ctl_subparsers = ctl_parser.add_subparsers(dest="ctl_command", required=True)
    ctl_subparsers.add_parser("status", help="Show every brick")
    restart_parser = ctl_subparsers.add_parser("restart", help="Ask a brick's peer to restart it")
    restart_parser.add_argument("endpoint")
    split_parser = ctl_subparsers.add_parser("split", help="Split a replica group")
    split_parser.add_argument("rgid")
    split_parser.add_argument("--assign", action="append", required=True, help="endpoint=rgid[,rgid]")
    join_parser = ctl_subparsers.add_parser("join", help="Add a running brick to a group")
    join_parser.add_argument("config", help="Brick config file of the new brick")
    join_parser.add_argument("--rgid", type=str, help="Group to join (default: first rgid in the config)")
    monitor_parser = ctl_subparsers.add_parser("monitor", help="Run the failure detector")
    monitor_parser.add_argument("--duration", type=float, default=30.0)
    monitor_parser.add_argument("--dry-run", action="store_true", help="Flag only, never restart")

    # sim
    sim_parser = subparsers.add_parser("sim", help="Deterministic simulation")
    sim_subparsers = sim_parser.add_subparsers(dest="sim_command", required=True)
    run_parser = sim_subparsers.add_parser("run", help="Run a scenario")
    run_parser.add_argument("scenario", nargs="?", help="Scenario JSON file")
    run_parser.add_argument("--preset", type=str, help="Built-in scenario")
    run_parser.add_argument("--seed", type=int)
    run_parser.add_argument("--ops", type=int, help="Override the workload op count")
    run_parser.add_argument("--report", type=str, help="Write the full report here")
    run_parser.add_argument("--history", type=str, help="Write the op history here")

    # wire-dump
    dump_parser = subparsers.add_parser("wire-dump", help="Decode a file of frames")
    dump_parser.add_argument("file")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = get_config()
    configure_logging(args.log_level or settings.log_level, args.log_format or settings.log_format)

    try:
        if args.command == "brickd":
            return cli_brickd(args)
        elif args.command == "client":
            return cli_client(args)
        elif args.command == "loadgen":
            return cli_loadgen(args)
        elif args.command == "ctl":
            return cli_ctl(args)
        elif args.command == "sim":
            return cli_sim_run(args)
        elif args.command == "wire-dump":
            return cli_wire_dump(args)
        else:
            parser.print_help()
            return EXIT_CONFIG
    except DStoreError as e:
        return _fail(str(e), EXIT_CONFIG)
    except OSError as e:
        return _fail(str(e), EXIT_UNREACHABLE)


if __name__ == "__main__":
    sys.exit(main())
