"""Services module."""

from services.alerts import send_operator_alert
from services.supervisor import CallbackSupervisor, CommandSupervisor, SupervisorHandle

__all__ = ["CallbackSupervisor", "CommandSupervisor", "SupervisorHandle", "send_operator_alert"]
