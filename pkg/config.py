"""Configuration management for the replicated brick store."""

import os
import socket
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from dotenv import dotenv_values, load_dotenv

from core.errors import ConfigFileError, InvalidConfiguration
from core.types import Endpoint, Rgid, parse_rgids

# Load environment variables from .env file
load_dotenv()

QUEUE_KINDS = ("read", "put", "ts")


def _env_int(name: str, default: int) -> int:
    return int(os.environ.get(name, default))


@dataclass
class Settings:
    """Process-wide settings taken from the environment."""

    log_level: str = field(default_factory=lambda: os.environ.get("DSTORE_LOG_LEVEL", "INFO"))
    log_format: str = field(default_factory=lambda: os.environ.get("DSTORE_LOG_FORMAT", "text"))
    cluster_config: str = field(default_factory=lambda: os.environ.get("DSTORE_CLUSTER_CONFIG", "./cluster.conf"))
    alert_webhook: str = field(default_factory=lambda: os.environ.get("DSTORE_ALERT_WEBHOOK", ""))
    supervisor_command: str = field(default_factory=lambda: os.environ.get("DSTORE_SUPERVISOR_COMMAND", ""))
    supervisor_stop_command: str = field(default_factory=lambda: os.environ.get("DSTORE_SUPERVISOR_STOP_COMMAND", ""))

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.log_format not in ("text", "json"):
            raise InvalidConfiguration(f"DSTORE_LOG_FORMAT must be text or json, got {self.log_format!r}")


@dataclass
class RestartPolicy:
    """Restarter-side rate limiting and persistent-fault escalation."""

    dedup_interval_ms: float = field(default_factory=lambda: _env_int("DSTORE_RESTART_DEDUP_MS", 4000))
    max_restarts: int = field(default_factory=lambda: _env_int("DSTORE_RESTART_MAX", 3))
    restart_window_ms: float = field(default_factory=lambda: _env_int("DSTORE_RESTART_WINDOW_MS", 600000))

    def __post_init__(self):
        if self.dedup_interval_ms < 0 or self.max_restarts < 1 or self.restart_window_ms <= 0:
            raise InvalidConfiguration(f"invalid restart policy: {self}")


@dataclass
class DetectorConfig:
    """Statistical failure detector parameters."""

    window_ms: float = 2000.0
    k: float = 6.0
    mad_floor_ms: float = 0.5
    consecutive_required: int = 2
    beacon_miss_threshold: int = 2
    beacon_period_ms: float = 2000.0
    min_samples: int = 3
    cooldown_windows: int = 2

    def __post_init__(self):
        if self.k <= 0:
            raise InvalidConfiguration("detector k must be > 0")
        if self.consecutive_required < 1:
            raise InvalidConfiguration("consecutive_required must be >= 1")
        if self.window_ms <= 0 or self.mad_floor_ms < 0:
            raise InvalidConfiguration(f"invalid detector config: {self}")


@dataclass
class AdvisorConfig:
    """Repartition advisor thresholds."""

    factor: float = 2.0
    consecutive_windows: int = 3


@dataclass
class BrickConfig:
    """Configuration for one brick process."""

    endpoint: Endpoint
    announced_rgids: List[Rgid]
    store_path: str = "./brick.dat"
    record_payload_size: int = 256
    beacon_period_ms: float = 2000.0
    delta_ts_ms: int = 1
    queue_capacities: Dict[str, int] = field(default_factory=lambda: {k: 1024 for k in QUEUE_KINDS})
    worker_counts: Dict[str, int] = field(default_factory=lambda: {k: 4 for k in QUEUE_KINDS})
    beacon_sinks: List[Endpoint] = field(default_factory=list)
    admin_port: int = 0
    restart_policy: RestartPolicy = field(default_factory=RestartPolicy)
    supervisor_command: str = field(default_factory=lambda: get_config().supervisor_command)
    supervisor_stop_command: str = field(default_factory=lambda: get_config().supervisor_stop_command)

    def __post_init__(self):
        if self.delta_ts_ms < 0:
            raise InvalidConfiguration("delta_ts_ms must be >= 0")
        if self.record_payload_size <= 0:
            raise InvalidConfiguration("record_payload_size must be > 0")
        if not self.announced_rgids:
            raise InvalidConfiguration("a brick must announce at least one rgid")
        if self.beacon_period_ms <= 0:
            raise InvalidConfiguration("beacon_period_ms must be > 0")
        for kind in QUEUE_KINDS:
            if self.queue_capacities.get(kind, 0) < 1 or self.worker_counts.get(kind, 0) < 1:
                raise InvalidConfiguration(f"queue {kind} needs capacity and workers >= 1")


@dataclass
class DlibConfig:
    """Coordinator library configuration."""

    coordinator_id: int = 0
    op_timeout_ms: float = 1000.0
    max_retries: int = 4
    beacon_period_ms: float = 2000.0
    member_expiry_ms: Optional[float] = None
    latency_window: int = 64
    beacon_listen: Optional[Endpoint] = None

    def __post_init__(self):
        if self.op_timeout_ms <= 0:
            raise InvalidConfiguration("op_timeout_ms must be > 0")
        if self.max_retries < 0:
            raise InvalidConfiguration("max_retries must be >= 0")
        if not 0 <= self.coordinator_id <= 0xFFFFFFFF:
            raise InvalidConfiguration("coordinator_id must fit in 32 bits")
        if self.member_expiry_ms is None:
            self.member_expiry_ms = 30 * self.beacon_period_ms

    @property
    def staleness_ms(self) -> float:
        """Endpoints silent for three beacon periods leave routing."""
        return 3 * self.beacon_period_ms


@dataclass
class ClusterConfig:
    """Static description of a cluster as seen by clients and operators."""

    bricks: List[Endpoint]
    brick_configs: List[BrickConfig] = field(default_factory=list)
    admin_urls: Dict[Endpoint, str] = field(default_factory=dict)
    dlib: DlibConfig = field(default_factory=DlibConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    restart_policy: RestartPolicy = field(default_factory=RestartPolicy)

    def __post_init__(self):
        if len(set(self.bricks)) != len(self.bricks):
            raise InvalidConfiguration("brick endpoints must be unique")
        groups: Dict[Rgid, int] = {}
        for brick in self.brick_configs:
            for rgid in brick.announced_rgids:
                groups[rgid] = groups.get(rgid, 0) + 1
        if self.brick_configs and any(count < 1 for count in groups.values()):
            raise InvalidConfiguration("every replica group needs at least one brick")


def default_coordinator_id() -> int:
    """Derive a coordinator id from the host address and process id."""
    try:
        ip = int.from_bytes(socket.inet_aton(socket.gethostbyname(socket.gethostname())), "big")
    except OSError:
        ip = 0x7F000001
    return (ip ^ (os.getpid() << 8)) & 0xFFFFFFFF or 1


# ============== key = value config files ==============

def _line_of(path: str, key: str) -> Optional[int]:
    """Find the line that defines ``key`` for error messages."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            for number, line in enumerate(f, start=1):
                name = line.split("=", 1)[0].strip()
                if name.startswith("export "):
                    name = name[len("export "):].strip()
                if name == key:
                    return number
    except OSError:
        return None
    return None


def _read_file(path: str) -> Dict[str, str]:
    if not os.path.exists(path):
        raise ConfigFileError(path, None, None, "file not found")
    values = dotenv_values(path)
    for key, value in values.items():
        if value is None:
            raise ConfigFileError(path, _line_of(path, key), key, "missing '= value'")
    return dict(values)


def _endpoints(text: str) -> List[Endpoint]:
    return [Endpoint.parse(part) for part in text.split(",") if part.strip()]


def _convert(path: str, values: Dict[str, str], key: str, convert: Callable, default=None):
    if key not in values:
        return default
    try:
        return convert(values[key])
    except (ValueError, InvalidConfiguration) as e:
        raise ConfigFileError(path, _line_of(path, key), key, str(e)) from e


BRICK_KEYS = {
    "endpoint", "rgids", "store_path", "record_payload_size", "beacon_period_ms", "delta_ts_ms",
    "queue_capacity_read", "queue_capacity_put", "queue_capacity_ts",
    "workers_read", "workers_put", "workers_ts", "beacon_sinks", "admin_port",
    "supervisor_command", "supervisor_stop_command",
    "restart_dedup_ms", "restart_max", "restart_window_ms",
}


def load_brick_config(path: str, port_override: Optional[int] = None) -> BrickConfig:
    """Load a brick config file.

    Raises:
        ConfigFileError: With ``path:line`` context on any invalid entry.
    """
    values = _read_file(path)
    for key in values:
        if key not in BRICK_KEYS:
            raise ConfigFileError(path, _line_of(path, key), key, "unknown key")
    for required in ("endpoint", "rgids"):
        if required not in values:
            raise ConfigFileError(path, None, required, "required key missing")

    endpoint = _convert(path, values, "endpoint", Endpoint.parse)
    if port_override is not None:
        endpoint = Endpoint(endpoint.ip, port_override)

    policy = RestartPolicy(
        dedup_interval_ms=_convert(path, values, "restart_dedup_ms", float, 4000.0),
        max_restarts=_convert(path, values, "restart_max", int, 3),
        restart_window_ms=_convert(path, values, "restart_window_ms", float, 600000.0),
    )
    store_path = values.get("store_path", "./brick.dat")
    if not os.path.isabs(store_path):
        store_path = os.path.join(os.path.dirname(os.path.abspath(path)), store_path)

    try:
        return BrickConfig(
            endpoint=endpoint,
            announced_rgids=_convert(path, values, "rgids", parse_rgids),
            store_path=store_path,
            record_payload_size=_convert(path, values, "record_payload_size", int, 256),
            beacon_period_ms=_convert(path, values, "beacon_period_ms", float, 2000.0),
            delta_ts_ms=_convert(path, values, "delta_ts_ms", int, 1),
            queue_capacities={k: _convert(path, values, f"queue_capacity_{k}", int, 1024) for k in QUEUE_KINDS},
            worker_counts={k: _convert(path, values, f"workers_{k}", int, 4) for k in QUEUE_KINDS},
            beacon_sinks=_convert(path, values, "beacon_sinks", _endpoints, []),
            admin_port=_convert(path, values, "admin_port", int, 0),
            restart_policy=policy,
            supervisor_command=values.get("supervisor_command", get_config().supervisor_command),
            supervisor_stop_command=values.get("supervisor_stop_command", get_config().supervisor_stop_command),
        )
    except InvalidConfiguration as e:
        raise ConfigFileError(path, None, None, str(e)) from e


CLUSTER_KEYS = {
    "brick_configs", "bricks", "admin_urls", "op_timeout_ms", "max_retries", "coordinator_id",
    "beacon_period_ms", "member_expiry_ms", "beacon_listen",
    "detector_window_ms", "detector_k", "detector_mad_floor_ms", "detector_consecutive", "detector_beacon_miss",
    "restart_dedup_ms", "restart_max", "restart_window_ms",
}


def _admin_urls(text: str) -> Dict[Endpoint, str]:
    """Parse ``endpoint=url`` pairs separated by commas."""
    urls = {}
    for part in text.split(","):
        if not part.strip():
            continue
        endpoint, sep, url = part.partition("=")
        if not sep:
            raise ValueError(f"admin_urls entry must be endpoint=url, got {part!r}")
        urls[Endpoint.parse(endpoint)] = url.strip()
    return urls


def load_cluster_config(path: str) -> ClusterConfig:
    """Load a cluster config file.

    Raises:
        ConfigFileError: With ``path:line`` context on any invalid entry.
    """
    values = _read_file(path)
    for key in values:
        if key not in CLUSTER_KEYS:
            raise ConfigFileError(path, _line_of(path, key), key, "unknown key")

    base = os.path.dirname(os.path.abspath(path))
    brick_configs = []
    for ref in values.get("brick_configs", "").split(","):
        if ref.strip():
            brick_configs.append(load_brick_config(os.path.join(base, ref.strip())))
    bricks = [b.endpoint for b in brick_configs] + _convert(path, values, "bricks", _endpoints, [])
    if not bricks:
        raise ConfigFileError(path, None, "bricks", "cluster lists no bricks")

    beacon_period = _convert(path, values, "beacon_period_ms", float, 2000.0)
    coordinator_id = _convert(path, values, "coordinator_id", int, 0) or default_coordinator_id()
    try:
        return ClusterConfig(
            bricks=bricks,
            brick_configs=brick_configs,
            admin_urls=_convert(path, values, "admin_urls", _admin_urls, {}),
            dlib=DlibConfig(
                coordinator_id=coordinator_id,
                op_timeout_ms=_convert(path, values, "op_timeout_ms", float, 1000.0),
                max_retries=_convert(path, values, "max_retries", int, 4),
                beacon_period_ms=beacon_period,
                member_expiry_ms=_convert(path, values, "member_expiry_ms", float, None),
                beacon_listen=_convert(path, values, "beacon_listen", Endpoint.parse, None),
            ),
            detector=DetectorConfig(
                window_ms=_convert(path, values, "detector_window_ms", float, 2000.0),
                k=_convert(path, values, "detector_k", float, 6.0),
                mad_floor_ms=_convert(path, values, "detector_mad_floor_ms", float, 0.5),
                consecutive_required=_convert(path, values, "detector_consecutive", int, 2),
                beacon_miss_threshold=_convert(path, values, "detector_beacon_miss", int, 2),
                beacon_period_ms=beacon_period,
            ),
            restart_policy=RestartPolicy(
                dedup_interval_ms=_convert(path, values, "restart_dedup_ms", float, 4000.0),
                max_restarts=_convert(path, values, "restart_max", int, 3),
                restart_window_ms=_convert(path, values, "restart_window_ms", float, 600000.0),
            ),
        )
    except InvalidConfiguration as e:
        if isinstance(e, ConfigFileError):
            raise
        raise ConfigFileError(path, None, None, str(e)) from e


# Global config instance
_config: Optional[Settings] = None


def get_config() -> Settings:
    """Get the global settings instance."""
    global _config
    if _config is None:
        _config = Settings()
    return _config


def reset_config() -> None:
    """Reset the global settings (useful for testing)."""
    global _config
    _config = None
