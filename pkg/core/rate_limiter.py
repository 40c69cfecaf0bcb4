"""Retry and rate limiting utilities for network clients."""

import logging
import random
import time
from functools import wraps
from typing import Any, Callable, Optional, Tuple, Type

logger = logging.getLogger(__name__)


class RateLimitConfig:
    """Defaults for reconnect backoff and load generation."""

    # Retry settings
    MAX_RETRIES = 4
    BASE_DELAY = 0.05      # Base delay in seconds
    MAX_DELAY = 2.0        # Max delay in seconds
    JITTER = 0.5           # Random jitter factor

    # Loadgen default rate (ops per second, 0 = unlimited)
    OPS_PER_SECOND = 0


def retry_with_backoff(
    max_retries: int = RateLimitConfig.MAX_RETRIES,
    base_delay: float = RateLimitConfig.BASE_DELAY,
    max_delay: float = RateLimitConfig.MAX_DELAY,
    retryable_errors: Tuple[Type[BaseException], ...] = (ConnectionError, TimeoutError),
):
    """Decorator to retry calls with exponential backoff.

    Args:
        max_retries: Maximum number of retry attempts.
        base_delay: Base delay between retries in seconds.
        max_delay: Maximum delay between retries.
        retryable_errors: Exception types that should trigger a retry.
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            for attempt in range(max_retries + 1):
                try:
                    return func(*args, **kwargs)
                except retryable_errors as e:
                    if attempt == max_retries:
                        raise

                    # Exponential backoff with jitter
                    delay = min(base_delay * (2 ** attempt), max_delay)
                    actual_delay = delay + delay * RateLimitConfig.JITTER * random.random()

                    logger.debug(
                        "%s failed (attempt %d/%d): %s; retrying in %.2fs",
                        func.__name__, attempt + 1, max_retries + 1, e, actual_delay,
                    )
                    time.sleep(actual_delay)
            raise AssertionError("unreachable")

        return wrapper
    return decorator


class TokenBucket:
    """Simple token bucket rate limiter (tokens per second)."""

    def __init__(self, rate_per_second: float, capacity: Optional[float] = None):
        """Initialize token bucket.

        Args:
            rate_per_second: Refill rate.
            capacity: Burst size; defaults to one second of tokens.
        """
        self.refill_rate = float(rate_per_second)
        self.capacity = float(capacity if capacity is not None else max(rate_per_second, 1.0))
        self.tokens = self.capacity
        self.last_refill = time.monotonic()

    def _refill(self):
        """Refill tokens based on elapsed time."""
        now = time.monotonic()
        elapsed = now - self.last_refill
        self.tokens = min(self.capacity, self.tokens + elapsed * self.refill_rate)
        self.last_refill = now

    def consume(self, tokens: float = 1.0) -> bool:
        """Try to consume tokens.

        Returns:
            True if tokens were consumed, False if not enough tokens.
        """
        self._refill()
        if self.tokens >= tokens:
            self.tokens -= tokens
            return True
        return False

    def wait_for_tokens(self, tokens: float = 1.0):
        """Block until enough tokens are available, then consume them."""
        self._refill()
        if self.tokens < tokens:
            wait_time = (tokens - self.tokens) / self.refill_rate
            time.sleep(wait_time)
            self._refill()
        self.tokens -= tokens
