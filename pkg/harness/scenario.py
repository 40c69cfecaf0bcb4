"""Scenario files: cluster shape, workload and a timed fault schedule."""

import json
import random
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

from core.errors import InvalidConfiguration, ScenarioError
from core.types import Rgid
from brick.brick import CrashPoint


class EventKind(str, Enum):
    KILL = "KILL"
    RESTART = "RESTART"
    STUTTER = "STUTTER"
    SKEW = "SKEW"
    PARTITION = "PARTITION"
    JOIN = "JOIN"
    SPLIT = "SPLIT"
    CRASH_POINT = "CRASH_POINT"


@dataclass
class FaultEvent:
    """One scheduled event; which fields matter depends on ``kind``."""

    at_ms: float
    kind: EventKind
    brick: Optional[str] = None
    dlib: Optional[str] = None
    added_ms: float = 0.0
    duration_ms: float = 0.0
    offset_ms: float = 0.0
    nodes: List[str] = field(default_factory=list)
    rgid: Optional[str] = None
    assignment: Dict[str, List[str]] = field(default_factory=dict)
    step: Optional[str] = None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = self.kind.value
        return {k: v for k, v in data.items() if v not in (None, [], {}, 0.0) or k in ("at_ms", "kind")}

    @classmethod
    def from_dict(cls, data: dict) -> "FaultEvent":
        data = dict(data)
        try:
            data["kind"] = EventKind(str(data["kind"]).upper())
        except (KeyError, ValueError) as e:
            raise ScenarioError(f"bad event kind in {data!r}") from e
        return cls(**data)


@dataclass
class WorkloadSpec:
    ops: int = 1000
    read_fraction: float = 0.5
    key_space: int = 100
    distribution: str = "uniform"
    zipf_s: float = 1.1
    value_size: int = 16
    clients: int = 4
    think_ms: float = 0.0

    def __post_init__(self):
        if self.ops < 0 or self.key_space < 1 or self.clients < 1:
            raise ScenarioError(f"invalid workload: {self}")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ScenarioError("read_fraction must be in [0, 1]")
        if self.distribution not in ("uniform", "zipf"):
            raise ScenarioError(f"distribution must be uniform or zipf, got {self.distribution!r}")
        if self.distribution == "zipf" and self.zipf_s <= 0:
            raise ScenarioError("zipf_s must be > 0")


@dataclass
class Scenario:
    """Everything a simulated run needs; same scenario and seed give the same history."""

    name: str = "scenario"
    seed: int = 0
    brick_count: int = 3
    dlib_count: int = 2
    groups: int = 1
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    schedule: List[FaultEvent] = field(default_factory=list)
    latency_ms: float = 0.5
    link_latency: List[Dict[str, Any]] = field(default_factory=list)
    beacon_period_ms: float = 2000.0
    op_timeout_ms: float = 1000.0
    max_retries: int = 4
    detector: bool = True
    detector_overrides: Dict[str, Any] = field(default_factory=dict)
    restart_overrides: Dict[str, Any] = field(default_factory=dict)
    settle_ms: float = 6000.0
    limit_ms: float = 3_600_000.0

    def __post_init__(self):
        self.validate()

    @property
    def group_bits(self) -> int:
        return self.groups.bit_length() - 1

    def brick_names(self) -> List[str]:
        return [f"b{i}" for i in range(self.brick_count)]

    def dlib_names(self) -> List[str]:
        return [f"d{i}" for i in range(self.dlib_count)]

    def validate(self) -> None:
        """Check names and ordering before anything runs.

        Raises:
            ScenarioError: On the first problem found.
        """
        if self.brick_count < 1 or self.dlib_count < 1:
            raise ScenarioError("need at least one brick and one dlib")
        if self.groups < 1 or self.groups & (self.groups - 1):
            raise ScenarioError(f"groups must be a power of two, got {self.groups}")
        if self.groups > self.brick_count:
            raise ScenarioError(f"{self.groups} groups need at least {self.groups} bricks")
        bricks = set(self.brick_names())
        dlibs = set(self.dlib_names())
        last = float("-inf")
        for event in self.schedule:
            if event.at_ms < last:
                raise ScenarioError(f"schedule is not sorted by at_ms at {event.to_dict()}")
            last = event.at_ms
            kind = event.kind
            if kind == EventKind.JOIN:
                if not event.brick or event.brick in bricks:
                    raise ScenarioError(f"JOIN needs a new brick name, got {event.brick!r}")
                bricks.add(event.brick)
                self._rgid(event.rgid or "0/0")
            elif kind in (EventKind.KILL, EventKind.RESTART, EventKind.STUTTER, EventKind.CRASH_POINT):
                if event.brick not in bricks:
                    raise ScenarioError(f"{kind.value} references unknown brick {event.brick!r}")
            if kind == EventKind.CRASH_POINT:
                try:
                    CrashPoint(event.step)
                except ValueError as e:
                    raise ScenarioError(f"unknown crash point {event.step!r}") from e
            if kind == EventKind.SKEW and event.dlib not in dlibs:
                raise ScenarioError(f"SKEW references unknown dlib {event.dlib!r}")
            if kind == EventKind.PARTITION:
                unknown = [n for n in event.nodes if n not in bricks | dlibs]
                if unknown or not event.nodes:
                    raise ScenarioError(f"PARTITION references unknown nodes {unknown or event.nodes}")
            if kind == EventKind.SPLIT:
                self._rgid(event.rgid)
                for brick, rgids in event.assignment.items():
                    if brick not in bricks:
                        raise ScenarioError(f"SPLIT assigns unknown brick {brick!r}")
                    for rgid in rgids:
                        self._rgid(rgid)
            if kind in (EventKind.STUTTER, EventKind.PARTITION) and event.duration_ms <= 0:
                raise ScenarioError(f"{kind.value} needs a positive duration_ms")

    @staticmethod
    def _rgid(text: Optional[str]) -> Rgid:
        try:
            return Rgid.parse(text or "")
        except InvalidConfiguration as e:
            raise ScenarioError(str(e)) from e

    def to_dict(self) -> dict:
        data = asdict(self)
        data["schedule"] = [event.to_dict() for event in self.schedule]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        try:
            data["workload"] = WorkloadSpec(**data.get("workload", {}))
            data["schedule"] = [FaultEvent.from_dict(e) for e in data.get("schedule", [])]
            return cls(**data)
        except TypeError as e:
            raise ScenarioError(f"bad scenario: {e}") from e


def load_scenario(path: str, seed: Optional[int] = None) -> Scenario:
    """Read a JSON scenario file; ``seed`` overrides the file's seed."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"{path}: {e}") from e
    if seed is not None:
        data["seed"] = seed
    return Scenario.from_dict(data)


# ============== presets ==============

def consistency_scenario(seed: int = 1, ops: int = 5000, groups: int = 1) -> Scenario:
    """Random kill, restart, stutter, skew and partition schedule."""
    rng = random.Random(seed)
    bricks = [f"b{i}" for i in range(3 * groups)]
    schedule: List[FaultEvent] = []
    at = 200.0
    for _ in range(rng.randint(2, 5)):
        at += rng.uniform(500, 3000)
        kind = rng.choice(["KILL", "STUTTER", "SKEW", "PARTITION"])
        brick = rng.choice(bricks)
        if kind == "KILL":
            schedule.append(FaultEvent(at, EventKind.KILL, brick=brick))
            schedule.append(FaultEvent(at + rng.uniform(300, 2500), EventKind.RESTART, brick=brick))
        elif kind == "STUTTER":
            schedule.append(FaultEvent(at, EventKind.STUTTER, brick=brick, added_ms=rng.choice([20.0, 50.0]),
                                       duration_ms=rng.uniform(1000, 4000)))
        elif kind == "SKEW":
            schedule.append(FaultEvent(at, EventKind.SKEW, dlib=rng.choice(["d0", "d1"]),
                                       offset_ms=rng.choice([-50.0, -5.0, 5.0, 500.0])))
        else:
            schedule.append(FaultEvent(at, EventKind.PARTITION, nodes=[brick], duration_ms=rng.uniform(500, 3000)))
    schedule.sort(key=lambda e: e.at_ms)
    return Scenario(
        name=f"consistency-{seed}",
        seed=seed,
        brick_count=len(bricks),
        dlib_count=2,
        groups=groups,
        workload=WorkloadSpec(ops=ops, read_fraction=0.5, key_space=64, clients=4, think_ms=2.0),
        schedule=schedule,
    )


def reboot_scenario(seed: int = 1, ops: int = 4000) -> Scenario:
    """One brick of three rebooted under continuous load."""
    return Scenario(
        name="reboot",
        seed=seed,
        workload=WorkloadSpec(ops=ops, read_fraction=0.7, key_space=200, clients=4, think_ms=2.0),
        schedule=[
            FaultEvent(500.0, EventKind.KILL, brick="b1"),
            FaultEvent(1500.0, EventKind.RESTART, brick="b1"),
        ],
        detector=False,
    )


def stutter_scenario(seed: int = 1, ops: int = 6000) -> Scenario:
    """+50 ms service time on one brick; the detector should restart it."""
    return Scenario(
        name="stutter",
        seed=seed,
        workload=WorkloadSpec(ops=ops, read_fraction=0.5, key_space=200, clients=4, think_ms=5.0),
        schedule=[FaultEvent(2000.0, EventKind.STUTTER, brick="b2", added_ms=50.0, duration_ms=60000.0)],
    )


def scaling_scenario(seed: int = 1, ops: int = 5000) -> Scenario:
    """Grow a two-brick group to three, then split it in two."""
    return Scenario(
        name="scaling",
        seed=seed,
        brick_count=2,
        workload=WorkloadSpec(ops=ops, read_fraction=0.5, key_space=128, clients=4, think_ms=4.0),
        schedule=[
            FaultEvent(1000.0, EventKind.JOIN, brick="b2", rgid="0/0"),
            FaultEvent(8000.0, EventKind.SPLIT, rgid="0/0",
                       assignment={"b0": ["0/1"], "b1": ["0/1", "1/1"], "b2": ["1/1"]}),
        ],
    )


PRESETS: Dict[str, Callable[..., Scenario]] = {
    "consistency": consistency_scenario,
    "reboot": reboot_scenario,
    "stutter": stutter_scenario,
    "scaling": scaling_scenario,
}


def preset(name: str, seed: int = 1, **kwargs) -> Scenario:
    """Build a named preset scenario.

    Raises:
        ScenarioError: If the preset does not exist.
    """
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return PRESETS[name](seed=seed, **kwargs)
