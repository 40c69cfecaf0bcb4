import json

import pytest

from config import BrickConfig
from core.types import Endpoint, Rgid, Timestamp
from main import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_UNREACHABLE, main, parse_value, start_brick
from wire.codec import encode
from wire.messages import ReadValRequest, WriteRequest


@pytest.fixture
def live_cluster(tmp_path):
    """Three bricks on ephemeral localhost ports plus a cluster file naming them."""
    processes = []
    for i in range(3):
        config = BrickConfig(
            endpoint=Endpoint.parse("127.0.0.1:0"),
            announced_rgids=[Rgid(0, 0)],
            store_path=str(tmp_path / f"b{i}.dat"),
            record_payload_size=64,
            supervisor_command="true",
            supervisor_stop_command="true",
        )
        processes.append(start_brick(config, fresh=True))
    path = tmp_path / "cluster.conf"
    path.write_text(
        "bricks = " + ",".join(str(p.endpoint) for p in processes) + "\n"
        "coordinator_id = 7\n"
        "op_timeout_ms = 500\n"
    )
    yield str(path), processes
    for process in processes:
        process.close()


def run_json(capsys, argv):
    code = main(["--json"] + argv)
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1]) if out else None


def test_client_put_then_get(live_cluster, capsys):
    path, processes = live_cluster
    code, put = run_json(capsys, ["client", "--cluster", path, "put", "12", "hello"])
    assert code == EXIT_OK
    assert put["status"] == "ok"
    assert put["ts"]["coord"] == 7

    code, got = run_json(capsys, ["client", "--cluster", path, "get", "12"])
    assert code == EXIT_OK
    assert got["text"] == "hello"
    assert got["ts"] == put["ts"]
    assert all(p.brick.backend.fetch(12).value == b"hello" for p in processes)


def test_client_put_hex_value(live_cluster, capsys):
    path, processes = live_cluster
    code, put = run_json(capsys, ["client", "--cluster", path, "put", "13", "0x00ff10"])
    assert code == EXIT_OK
    stored = [p.brick.backend.fetch(13) for p in processes]
    assert sum(1 for r in stored if r is not None and r.value == b"\x00\xff\x10") >= 2

    code, got = run_json(capsys, ["client", "--cluster", path, "get", "13"])
    assert got["value"] == "00ff10"
    assert got["ts"] == put["ts"]


@pytest.mark.parametrize("text, value", [
    ("hello", b"hello"),
    ("0x", b""),
    ("0XAbCd", b"\xab\xcd"),
    ("x0ff", b"x0ff"),
    ("caf\u00e9", "caf\u00e9".encode("utf-8")),
])
def test_parse_value(text, value):
    assert parse_value(text) == value


def test_bad_hex_value_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["client", "put", "1", "0xzz"])
    assert exc.value.code == 2
    assert "bad hex value" in capsys.readouterr().err


def test_client_get_unwritten_prints_status(live_cluster, capsys):
    path, _ = live_cluster
    assert main(["client", "--cluster", path, "get", "3"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("not_found")


def test_client_stats(live_cluster, capsys):
    path, processes = live_cluster
    code, snapshot = run_json(capsys, ["client", "--cluster", path, "stats"])
    assert code == EXIT_OK
    entry = snapshot["rgid_map"]["0/0"]
    assert (entry["n"], entry["wt"], entry["rt"]) == (3, 2, 2)


def test_loadgen(live_cluster, capsys):
    path, _ = live_cluster
    code, report = run_json(capsys, [
        "loadgen", "--cluster", path, "--ops", "60", "--workers", "3",
        "--key-space", "100000", "--value-size", "8", "--rate", "1000",
    ])
    assert code == EXIT_OK
    assert report["ops"] == 60
    assert report["success_rate"] == 1.0


def test_ctl_status(live_cluster, capsys):
    path, processes = live_cluster
    processes.pop().close()
    code, data = run_json(capsys, ["ctl", "--cluster", path, "--timeout", "0.5", "status"])
    assert code == EXIT_OK
    assert [row["up"] for row in data["bricks"]] == [True, True, False]
    assert data["bricks"][0]["rgids"] == ["0/0"]


def test_ctl_restart_dedups(live_cluster, capsys):
    path, processes = live_cluster
    target = str(processes[0].endpoint)
    code, first = run_json(capsys, ["ctl", "--cluster", path, "restart", target])
    assert code == EXIT_OK
    assert first["outcome"] == "executed"
    assert first["restarter"] == str(processes[1].endpoint)

    code, second = run_json(capsys, ["ctl", "--cluster", path, "restart", target])
    assert code == EXIT_OK
    assert second["outcome"] == "deduped"


def test_unreachable_cluster(tmp_path, capsys):
    path = tmp_path / "cluster.conf"
    path.write_text("bricks = 127.0.0.1:1\nop_timeout_ms = 100\nmax_retries = 0\n")
    assert main(["client", "--cluster", str(path), "get", "1"]) == EXIT_UNREACHABLE
    assert "cluster unreachable" in capsys.readouterr().err


def test_bad_cluster_file(tmp_path, capsys):
    path = tmp_path / "cluster.conf"
    path.write_text("bricks = 127.0.0.1:1\nflavour = mint\n")
    assert main(["client", "--cluster", str(path), "get", "1"]) == EXIT_CONFIG
    assert f"{path}:2: flavour: unknown key" in capsys.readouterr().err


def test_sim_preset(tmp_path, capsys):
    report = tmp_path / "report.json"
    code = main(["sim", "run", "--preset", "reboot", "--seed", "3", "--ops", "400", "--report", str(report)])
    assert code == EXIT_OK
    assert "PASS" in capsys.readouterr().out
    data = json.loads(report.read_text())
    assert data["verdict"]["verdict"] == "pass"


def test_sim_needs_a_scenario(capsys):
    assert main(["sim", "run"]) == EXIT_CONFIG


def test_wire_dump(tmp_path, capsys):
    path = tmp_path / "frames.bin"
    path.write_bytes(encode(ReadValRequest(7), 1) + encode(WriteRequest(7, Timestamp(5, 2), b"hi"), 2))
    assert main(["--json", "wire-dump", str(path)]) == EXIT_OK
    entries = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [e["type"] for e in entries] == ["ReadValRequest", "WriteRequest"]
    assert entries[1]["value"] == b"hi".hex()
    assert entries[1]["request_id"] == 2


def test_wire_dump_partial_frame(tmp_path, capsys):
    path = tmp_path / "frames.bin"
    path.write_bytes(encode(ReadValRequest(7), 1)[:-2])
    assert main(["wire-dump", str(path)]) == EXIT_FAILED
    assert "partial frame" in capsys.readouterr().out
