"""Supervisor handles: the thing that actually kills and relaunches a brick."""

import logging
import shlex
import subprocess
from abc import ABC, abstractmethod
from string import Template
from typing import Callable, Optional

from core.types import Endpoint

logger = logging.getLogger(__name__)


class SupervisorHandle(ABC):
    """Restart or stop one brick process. Returns True on success."""

    @abstractmethod
    def restart(self, target: Endpoint) -> bool:
        """Fully terminate, then relaunch ``target``."""

    @abstractmethod
    def stop(self, target: Endpoint) -> bool:
        """Terminate ``target`` without relaunching it."""


def render_command(template: str, target: Endpoint) -> list:
    """Substitute ``${endpoint}``, ``${host}`` and ``${port}`` and split into argv."""
    text = Template(template).safe_substitute(endpoint=str(target), host=target.host, port=target.port)
    return shlex.split(text)


class CommandSupervisor(SupervisorHandle):
    """Runs external command templates; exit code 0 means success.

    A typical restart command sends ``kill -9`` to the brick process and
    starts it again under its process manager.
    """

    def __init__(self, restart_command: str, stop_command: str = "", timeout_s: float = 30.0):
        self.restart_command = restart_command
        self.stop_command = stop_command
        self.timeout_s = timeout_s

    def _run(self, template: str, target: Endpoint, action: str) -> bool:
        if not template:
            logger.error("no %s command configured for %s", action, target)
            return False
        argv = render_command(template, target)
        try:
            result = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout_s, check=False)
        except (OSError, subprocess.TimeoutExpired) as e:
            logger.error("%s of %s failed to run: %s", action, target, e)
            return False
        if result.returncode != 0:
            logger.error("%s of %s exited %d: %s", action, target, result.returncode, result.stderr.strip())
            return False
        logger.info("%s of %s succeeded", action, target)
        return True

    def restart(self, target: Endpoint) -> bool:
        return self._run(self.restart_command, target, "restart")

    def stop(self, target: Endpoint) -> bool:
        return self._run(self.stop_command, target, "stop")


class CallbackSupervisor(SupervisorHandle):
    """In-process handle; the simulator passes its own kill/relaunch callbacks."""

    def __init__(self, restart_fn: Callable[[Endpoint], bool], stop_fn: Optional[Callable[[Endpoint], bool]] = None):
        self.restart_fn = restart_fn
        self.stop_fn = stop_fn

    def restart(self, target: Endpoint) -> bool:
        return bool(self.restart_fn(target))

    def stop(self, target: Endpoint) -> bool:
        if self.stop_fn is None:
            return False
        return bool(self.stop_fn(target))
