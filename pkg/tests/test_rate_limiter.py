import pytest

from core.rate_limiter import TokenBucket, retry_with_backoff


def test_retries_connection_errors_then_succeeds():
    calls = []

    @retry_with_backoff(max_retries=3, base_delay=0.001, max_delay=0.002)
    def flaky():
        calls.append(1)
        if len(calls) < 3:
            raise ConnectionRefusedError("refused")
        return "ok"

    assert flaky() == "ok"
    assert len(calls) == 3


def test_gives_up_after_max_retries():
    calls = []

    @retry_with_backoff(max_retries=2, base_delay=0.001, max_delay=0.002)
    def down():
        calls.append(1)
        raise TimeoutError("slow")

    with pytest.raises(TimeoutError):
        down()
    assert len(calls) == 3


def test_other_errors_are_not_retried():
    calls = []

    @retry_with_backoff(max_retries=5, base_delay=0.001)
    def broken():
        calls.append(1)
        raise KeyError("x")

    with pytest.raises(KeyError):
        broken()
    assert calls == [1]


def test_token_bucket():
    bucket = TokenBucket(rate_per_second=0.001, capacity=2)
    assert bucket.consume()
    assert bucket.consume()
    assert not bucket.consume()
