import json
import random

import pytest

from brick.brick import CrashPoint
from core.errors import ScenarioError
from core.types import BOTTOM, Timestamp
from dlib.results import OpResult, OpStatus
from harness import (
    EventKind,
    FaultEvent,
    OpHistory,
    Scenario,
    WorkloadSpec,
    check_history,
    load_scenario,
    preset,
    run,
)
from harness.cluster import SimCluster
from harness.history import FINAL_CLIENT
from harness.report import FAULT, NORMAL, RECOVERY, availability_report, classify, fault_windows
from harness.sim import SimNetwork, SimRuntime
from harness.workload import GET, PUT, KeyChooser, Workload, split_ops


# ---- micro-histories ------------------------------------------------------

def put(history, key, value, wall, invoke, ret, client=0, status=OpStatus.OK):
    record = history.begin(client, PUT, key, invoke)
    record.complete(OpResult(status, key, ts=Timestamp(wall, 1)), ret, value)
    return record


def get(history, key, value, wall, invoke, ret, client=1, status=OpStatus.OK):
    record = history.begin(client, GET, key, invoke)
    ts = Timestamp(wall, 1) if wall is not None else BOTTOM
    record.complete(OpResult(status, key, value=value, ts=ts), ret)
    return record


class TestChecker:
    def test_clean_history_passes(self):
        h = OpHistory()
        get(h, 1, None, None, 0, 1, status=OpStatus.NOT_FOUND)
        put(h, 1, b"a", 10, 2, 3)
        get(h, 1, b"a", 10, 4, 5)
        get(h, 1, b"a", 10, 6, 7, client=FINAL_CLIENT)
        verdict = check_history(h)
        assert verdict.passed
        assert verdict.checked_keys == 1
        assert verdict.checked_gets == 3

    def test_concurrent_get_may_miss_put(self):
        h = OpHistory()
        put(h, 1, b"a", 10, 2, 6)
        get(h, 1, None, None, 3, 4, status=OpStatus.NOT_FOUND)
        get(h, 1, b"a", 10, 7, 8, client=FINAL_CLIENT)
        assert check_history(h).passed

    def test_stale_get_after_ack(self):
        h = OpHistory()
        old = put(h, 1, b"a", 10, 0, 1)
        new = put(h, 1, b"b", 20, 2, 3)
        stale = get(h, 1, b"a", 10, 4, 5)
        get(h, 1, b"b", 20, 6, 7, client=FINAL_CLIENT)
        verdict = check_history(h)
        assert verdict.by_check() == {"C1": 1, "C2": 0, "C3": 0, "C4": 0}
        (violation,) = verdict.violations
        assert violation.witnesses == (new.op_id, stale.op_id)
        assert old.op_id not in violation.witnesses

    def test_get_going_backwards(self):
        h = OpHistory()
        put(h, 1, b"a", 10, 0, 1)
        put(h, 1, b"b", 20, 0, 10)
        first = get(h, 1, b"b", 20, 2, 3)
        second = get(h, 1, b"a", 10, 4, 5, client=2)
        get(h, 1, b"b", 20, 11, 12, client=FINAL_CLIENT)
        verdict = check_history(h)
        assert verdict.by_check()["C2"] == 1
        assert verdict.violations[0].witnesses == (first.op_id, second.op_id)

    def test_forged_value(self):
        h = OpHistory()
        put(h, 1, b"a", 10, 0, 1)
        get(h, 1, b"zzz", 10, 2, 3)
        get(h, 1, b"a", 10, 4, 5, client=FINAL_CLIENT)
        assert check_history(h).by_check()["C3"] == 1

    def test_not_found_with_timestamp(self):
        h = OpHistory()
        get(h, 1, None, 5, 0, 1, status=OpStatus.NOT_FOUND)
        assert check_history(h).by_check()["C3"] == 1

    def test_lost_acked_put(self):
        h = OpHistory()
        put(h, 1, b"a", 10, 0, 1)
        get(h, 1, None, None, 5, 6, client=FINAL_CLIENT, status=OpStatus.NOT_FOUND)
        verdict = check_history(h)
        assert verdict.by_check()["C4"] == 1
        assert verdict.by_check()["C1"] == 1

    def test_missing_final_read(self):
        h = OpHistory()
        put(h, 1, b"a", 10, 0, 1)
        assert check_history(h).by_check()["C4"] == 1

    def test_unacked_partial_write_is_not_durable(self):
        h = OpHistory()
        put(h, 1, b"a", 10, 0, 1000, status=OpStatus.PUT_FAILED)
        get(h, 1, None, None, 1001, 1002, client=FINAL_CLIENT, status=OpStatus.NOT_FOUND)
        assert check_history(h).passed

    def test_verdict_json(self):
        h = OpHistory()
        put(h, 1, b"a", 10, 0, 1)
        data = check_history(h).to_dict()
        assert data["verdict"] == "fail"
        assert data["violations"][0]["check"] == "C4"
        assert json.loads(json.dumps(data)) == data


# ---- workload -------------------------------------------------------------

class TestWorkload:
    def test_zipf_keys_stay_in_range_and_skew_low(self):
        chooser = KeyChooser(50, "zipf", 1.1)
        rng = random.Random(1)
        keys = [chooser.choose(rng) for _ in range(2000)]
        assert all(0 <= k < 50 for k in keys)
        assert keys.count(0) > keys.count(49)

    def test_put_values_are_unique(self):
        workload = Workload(WorkloadSpec(read_fraction=0.0, value_size=8), 3, random.Random(0))
        values = [op.value for op in workload.ops(100)]
        assert len(set(values)) == 100
        assert values[0] == b"c3-1...."

    def test_same_seed_same_ops(self):
        spec = WorkloadSpec(key_space=10)
        a = list(Workload(spec, 0, random.Random("7:0")).ops(50))
        b = list(Workload(spec, 0, random.Random("7:0")).ops(50))
        assert a == b

    def test_split_ops(self):
        assert split_ops(10, 4) == [3, 3, 2, 2]
        assert sum(split_ops(5000, 7)) == 5000


# ---- scenarios ------------------------------------------------------------

class TestScenario:
    def test_unknown_brick_rejected_before_running(self):
        with pytest.raises(ScenarioError):
            Scenario(schedule=[FaultEvent(100, EventKind.KILL, brick="b9")])

    def test_unsorted_schedule(self):
        with pytest.raises(ScenarioError):
            Scenario(schedule=[
                FaultEvent(200, EventKind.KILL, brick="b0"),
                FaultEvent(100, EventKind.RESTART, brick="b0"),
            ])

    def test_bad_crash_point(self):
        with pytest.raises(ScenarioError):
            Scenario(schedule=[FaultEvent(1, EventKind.CRASH_POINT, brick="b0", step="mid_write")])

    def test_join_adds_a_name(self):
        scenario = Scenario(brick_count=2, schedule=[
            FaultEvent(10, EventKind.JOIN, brick="b2", rgid="0/0"),
            FaultEvent(20, EventKind.KILL, brick="b2"),
        ])
        assert len(scenario.schedule) == 2

    def test_groups_power_of_two(self):
        with pytest.raises(ScenarioError):
            Scenario(brick_count=6, groups=3)

    def test_load_from_json(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({
            "name": "file",
            "seed": 4,
            "workload": {"ops": 10},
            "schedule": [{"at_ms": 5, "kind": "kill", "brick": "b1"}],
        }))
        scenario = load_scenario(str(path), seed=9)
        assert scenario.seed == 9
        assert scenario.schedule[0].kind == EventKind.KILL
        assert scenario.workload.ops == 10

    def test_load_rejects_unknown_field(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"bricks": 3}))
        with pytest.raises(ScenarioError):
            load_scenario(str(path))

    def test_unknown_preset(self):
        with pytest.raises(ScenarioError):
            preset("chaos")

    def test_consistency_preset_is_seeded(self):
        assert preset("consistency", seed=5).to_dict() == preset("consistency", seed=5).to_dict()


# ---- report ---------------------------------------------------------------

class TestReport:
    SCHEDULE = [
        FaultEvent(500, EventKind.KILL, brick="b1"),
        FaultEvent(1500, EventKind.RESTART, brick="b1"),
        FaultEvent(2000, EventKind.STUTTER, brick="b2", added_ms=50, duration_ms=1000),
    ]

    def test_windows(self):
        windows = fault_windows(self.SCHEDULE, 10_000, 6000)
        assert [(w.label, w.start_ms, w.end_ms) for w in windows] == [
            ("KILL", 500, 1500),
            ("STUTTER", 2000, 3000),
        ]

    def test_classify(self):
        windows = fault_windows(self.SCHEDULE, 10_000, 6000)
        assert classify(100, windows, 4000) == NORMAL
        assert classify(600, windows, 4000) == FAULT
        assert classify(1600, windows, 4000) == RECOVERY
        assert classify(8000, windows, 4000) == NORMAL

    def test_phases(self):
        h = OpHistory()
        put(h, 1, b"a", 10, 100, 101)
        put(h, 2, b"b", 11, 600, 700, status=OpStatus.PUT_FAILED)
        get(h, 1, b"a", 10, 1600, 1602)
        get(h, 1, b"a", 10, 9000, 9001, client=FINAL_CLIENT)
        report = availability_report(h, self.SCHEDULE, run_end_ms=5000)
        assert report["overall"]["ops"] == 3
        assert report["phases"][FAULT]["success_rate"] == 0.0
        assert report["phases"][RECOVERY]["success_rate"] == 1.0
        assert report["phases"][NORMAL]["by_kind"]["put"]["p50_ms"] == 1.0


# ---- simulated runs -------------------------------------------------------

def quiet_scenario(seed=42, ops=300):
    return Scenario(name="quiet", seed=seed, dlib_count=2,
                    workload=WorkloadSpec(ops=ops, key_space=30, clients=3, think_ms=1.0))


def test_same_seed_gives_identical_history():
    first = run(quiet_scenario())
    second = run(quiet_scenario())
    assert first.history.to_json() == second.history.to_json()
    assert first.to_dict() == second.to_dict()
    assert first.verdict.passed
    assert first.report["overall"]["success_rate"] == 1.0


def test_different_seed_changes_history():
    assert run(quiet_scenario(seed=1)).history.to_json() != run(quiet_scenario(seed=2)).history.to_json()


def test_every_op_returns_after_it_was_invoked():
    result = run(quiet_scenario(ops=200))
    assert all(r.return_ms > r.invoke_ms for r in result.history)
    assert any(r.final for r in result.history)


def test_reboot_under_load_is_invisible_to_clients():
    result = run(preset("reboot", seed=3, ops=2000))
    assert result.verdict.passed, result.verdict.to_dict()
    assert result.report["overall"]["success_rate"] == 1.0
    assert result.report["phases"][FAULT]["ops"] > 0
    assert result.final_state["bricks"]["b1"]["restarts"] == 1


def test_link_latency_override():
    scenario = quiet_scenario(ops=100)
    scenario.link_latency = [{"src": "d0", "dst": "b0", "latency_ms": 30.0}]
    result = run(scenario)
    assert result.verdict.passed
    assert result.virtual_ms > run(quiet_scenario(ops=100)).virtual_ms


def test_crash_point_run_passes():
    scenario = Scenario(
        name="crash", seed=5, dlib_count=2,
        workload=WorkloadSpec(ops=600, key_space=20, clients=2, think_ms=2.0),
        schedule=[
            FaultEvent(100, EventKind.CRASH_POINT, brick="b1", step="after_durable_write"),
            FaultEvent(1000, EventKind.RESTART, brick="b1"),
        ],
        detector=False,
    )
    result = run(scenario)
    assert result.verdict.passed
    assert result.final_state["bricks"]["b1"]["restarts"] == 1


@pytest.mark.parametrize("seed", range(1, 6))
@pytest.mark.parametrize("step", [p.value for p in CrashPoint])
def test_read_ts_after_crash_never_exceeds_disk(step, seed):
    scenario = Scenario(seed=seed, dlib_count=1, detector=False)
    runtime = SimRuntime(seed)
    cluster = SimCluster(scenario, runtime, SimNetwork(runtime))
    cluster.start()
    runtime.run_for(5)
    dlib = cluster.dlibs["d0"]
    key = seed * 7
    cluster.bricks["b1"].brick.arm_crash(step)
    done = []
    dlib.put_async(key, b"v", done.append)
    runtime.run_until(lambda: done, 60_000)
    runtime.run_for(10)
    assert not cluster.bricks["b1"].up

    cluster.launch("b1")
    node = cluster.bricks["b1"]
    durable = node.store.durable_ts(key) or BOTTOM
    assert node.brick.brick_read_ts(key) <= durable
    if step == CrashPoint.BEFORE_DURABLE_WRITE.value:
        assert durable == BOTTOM
    else:
        assert durable == done[0].ts


def test_scaling_plans_complete():
    result = run(preset("scaling", seed=2, ops=1500))
    assert result.verdict.passed, result.verdict.to_dict()
    plans = result.final_state["plans"]
    assert [p["ok"] for p in plans] == [True, True]
    assert result.final_state["bricks"]["b0"]["rgids"] == ["0/1"]


@pytest.mark.slow
def test_scaling_under_full_load():
    result = run(preset("scaling", seed=1))
    assert result.verdict.passed
    assert result.report["overall"]["success_rate"] == 1.0


@pytest.mark.slow
def test_stutter_is_detected_and_restarted():
    result = run(preset("stutter", seed=1))
    flags = [f for flags in result.final_state["flags"].values() for f in flags]
    assert any(f["endpoint"] == "10.0.0.3:9000" and f["kind"] == "fail_stutter" for f in flags)
    assert any(a["brick"] == "b2" for a in result.final_state["supervisor"])
    assert result.verdict.passed


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(1, 201))
def test_consistency_sweep(seed):
    result = run(preset("consistency", seed=seed, groups=1 + seed % 2))
    assert result.verdict.passed, result.verdict.to_dict()
