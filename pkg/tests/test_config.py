import os

import pytest

from config import (
    ClusterConfig,
    DlibConfig,
    RestartPolicy,
    Settings,
    get_config,
    load_brick_config,
    load_cluster_config,
)
from core.errors import ConfigFileError, InvalidConfiguration
from core.types import Endpoint, Rgid


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


BRICK = """endpoint = 10.0.0.1:9000
rgids = 0/1, 1/1
store_path = data/b0.dat
record_payload_size = 64
workers_put = 2
restart_max = 5
"""


class TestBrickConfig:
    def test_load(self, tmp_path):
        config = load_brick_config(write(tmp_path, "b0.conf", BRICK))
        assert config.endpoint == Endpoint.parse("10.0.0.1:9000")
        assert config.announced_rgids == [Rgid(0, 1), Rgid(1, 1)]
        assert config.store_path == os.path.join(str(tmp_path), "data", "b0.dat")
        assert config.record_payload_size == 64
        assert config.worker_counts == {"read": 4, "put": 2, "ts": 4}
        assert config.queue_capacities["put"] == 1024
        assert config.restart_policy.max_restarts == 5
        assert config.restart_policy.dedup_interval_ms == 4000.0

    def test_port_override(self, tmp_path):
        config = load_brick_config(write(tmp_path, "b0.conf", BRICK), port_override=0)
        assert config.endpoint.port == 0
        assert config.endpoint.host == "10.0.0.1"

    def test_unknown_key_names_its_line(self, tmp_path):
        path = write(tmp_path, "b0.conf", BRICK + "colour = blue\n")
        with pytest.raises(ConfigFileError) as e:
            load_brick_config(path)
        assert (e.value.line, e.value.key, e.value.reason) == (7, "colour", "unknown key")
        assert str(e.value).startswith(f"{path}:7: colour: ")

    def test_bad_value_names_its_line(self, tmp_path):
        path = write(tmp_path, "b0.conf", "rgids = 0/0\nendpoint = 10.0.0.1\n")
        with pytest.raises(ConfigFileError) as e:
            load_brick_config(path)
        assert (e.value.line, e.value.key) == (2, "endpoint")
        assert "host:port" in e.value.reason

    def test_bad_number(self, tmp_path):
        path = write(tmp_path, "b0.conf", BRICK + "delta_ts_ms = soon\n")
        with pytest.raises(ConfigFileError) as e:
            load_brick_config(path)
        assert e.value.line == 7

    def test_invalid_combination_has_no_line(self, tmp_path):
        path = write(tmp_path, "b0.conf", BRICK + "delta_ts_ms = -1\n")
        with pytest.raises(ConfigFileError) as e:
            load_brick_config(path)
        assert e.value.line is None
        assert "delta_ts_ms" in e.value.reason

    def test_required_key(self, tmp_path):
        with pytest.raises(ConfigFileError) as e:
            load_brick_config(write(tmp_path, "b0.conf", "endpoint = 10.0.0.1:9000\n"))
        assert e.value.key == "rgids"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError) as e:
            load_brick_config(str(tmp_path / "nope.conf"))
        assert e.value.reason == "file not found"
        assert isinstance(e.value, InvalidConfiguration)


class TestClusterConfig:
    def test_brick_refs_and_extras(self, tmp_path):
        write(tmp_path, "b0.conf", BRICK)
        write(tmp_path, "b1.conf", BRICK.replace("10.0.0.1", "10.0.0.2"))
        path = write(tmp_path, "cluster.conf", (
            "brick_configs = b0.conf, b1.conf\n"
            "bricks = 10.0.0.3:9000\n"
            "admin_urls = 10.0.0.1:9000=http://10.0.0.1:8080\n"
            "coordinator_id = 42\n"
            "beacon_period_ms = 500\n"
            "detector_k = 4\n"
        ))
        cluster = load_cluster_config(path)
        assert [str(b) for b in cluster.bricks] == ["10.0.0.1:9000", "10.0.0.2:9000", "10.0.0.3:9000"]
        assert len(cluster.brick_configs) == 2
        assert cluster.admin_urls == {Endpoint.parse("10.0.0.1:9000"): "http://10.0.0.1:8080"}
        assert cluster.dlib.coordinator_id == 42
        assert cluster.dlib.member_expiry_ms == 15000
        assert cluster.dlib.staleness_ms == 1500
        assert cluster.detector.k == 4.0
        assert cluster.detector.beacon_period_ms == 500.0

    def test_default_coordinator_id(self, tmp_path):
        cluster = load_cluster_config(write(tmp_path, "cluster.conf", "bricks = 10.0.0.1:9000\n"))
        assert 0 < cluster.dlib.coordinator_id <= 0xFFFFFFFF

    def test_duplicate_endpoints(self, tmp_path):
        write(tmp_path, "b0.conf", BRICK)
        path = write(tmp_path, "cluster.conf", "brick_configs = b0.conf\nbricks = 10.0.0.1:9000\n")
        with pytest.raises(ConfigFileError) as e:
            load_cluster_config(path)
        assert "unique" in e.value.reason

    def test_no_bricks(self, tmp_path):
        with pytest.raises(ConfigFileError) as e:
            load_cluster_config(write(tmp_path, "cluster.conf", "max_retries = 2\n"))
        assert e.value.reason == "cluster lists no bricks"

    def test_bad_admin_url(self, tmp_path):
        path = write(tmp_path, "cluster.conf", "bricks = 10.0.0.1:9000\nadmin_urls = http://x\n")
        with pytest.raises(ConfigFileError) as e:
            load_cluster_config(path)
        assert (e.value.line, e.value.key) == (2, "admin_urls")

    def test_broken_brick_ref_reports_the_brick_file(self, tmp_path):
        brick = write(tmp_path, "b0.conf", BRICK + "bogus = 1\n")
        path = write(tmp_path, "cluster.conf", "brick_configs = b0.conf\n")
        with pytest.raises(ConfigFileError) as e:
            load_cluster_config(path)
        assert e.value.path == brick

    def test_unique_endpoints_in_code(self):
        ep = Endpoint.parse("10.0.0.1:9000")
        with pytest.raises(InvalidConfiguration):
            ClusterConfig(bricks=[ep, ep])


class TestSettings:
    def test_defaults(self):
        settings = get_config()
        assert settings.log_level == "INFO"
        assert settings.log_format == "text"
        assert get_config() is settings

    def test_env(self, monkeypatch):
        monkeypatch.setenv("DSTORE_LOG_FORMAT", "json")
        monkeypatch.setenv("DSTORE_LOG_LEVEL", "DEBUG")
        assert (Settings().log_format, Settings().log_level) == ("json", "DEBUG")

    def test_bad_log_format(self, monkeypatch):
        monkeypatch.setenv("DSTORE_LOG_FORMAT", "xml")
        with pytest.raises(InvalidConfiguration):
            Settings()

    def test_restart_policy_from_env(self, monkeypatch):
        monkeypatch.setenv("DSTORE_RESTART_DEDUP_MS", "100")
        assert RestartPolicy().dedup_interval_ms == 100
        with pytest.raises(InvalidConfiguration):
            RestartPolicy(max_restarts=0)

    def test_dlib_validation(self):
        with pytest.raises(InvalidConfiguration):
            DlibConfig(op_timeout_ms=0)
        with pytest.raises(InvalidConfiguration):
            DlibConfig(coordinator_id=1 << 32)
