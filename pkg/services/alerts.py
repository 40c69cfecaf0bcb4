"""Operator alerts: always logged, optionally posted to a webhook."""

import logging
from datetime import datetime, timezone
from typing import Optional

import requests

from config import get_config

logger = logging.getLogger(__name__)


def send_operator_alert(subject: str, details: Optional[dict] = None, webhook_url: Optional[str] = None) -> bool:
    """Raise an operator alert.

    Args:
        subject: One-line summary.
        details: Extra JSON-serializable context.
        webhook_url: Override for DSTORE_ALERT_WEBHOOK.

    Returns:
        True if the alert reached the webhook, False if only logged.
    """
    details = details or {}
    logger.error("OPERATOR ALERT: %s %s", subject, details)

    url = webhook_url if webhook_url is not None else get_config().alert_webhook
    if not url:
        return False

    payload = {
        "subject": subject,
        "details": details,
        "sent_at": datetime.now(timezone.utc).isoformat(),
    }
    try:
        response = requests.post(url, json=payload, timeout=5)
        response.raise_for_status()
    except requests.RequestException as e:
        logger.warning("alert webhook %s failed: %s", url, e)
        return False
    return True
