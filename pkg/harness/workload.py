"""Operation streams shared by the simulator and ``loadgen``."""

import bisect
import random
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from harness.scenario import WorkloadSpec

PUT = "put"
GET = "get"


@dataclass(frozen=True)
class Op:
    kind: str
    key: int
    value: Optional[bytes] = None


class KeyChooser:
    """Uniform or Zipf(s) choice over ``[0, key_space)``."""

    def __init__(self, key_space: int, distribution: str = "uniform", zipf_s: float = 1.1):
        self.key_space = key_space
        self.distribution = distribution
        self._cdf: List[float] = []
        if distribution == "zipf":
            weights = 1.0 / np.power(np.arange(1, key_space + 1, dtype=float), zipf_s)
            self._cdf = (np.cumsum(weights) / weights.sum()).tolist()

    def choose(self, rng: random.Random) -> int:
        if not self._cdf:
            return rng.randrange(self.key_space)
        return min(bisect.bisect_left(self._cdf, rng.random()), self.key_space - 1)


class Workload:
    """Deterministic op generator for one client.

    Put values are unique per (client, sequence) so the checker can match a
    returned value to the put that wrote it.
    """

    def __init__(self, spec: WorkloadSpec, client: int, rng: random.Random):
        self.spec = spec
        self.client = client
        self.rng = rng
        self.keys = KeyChooser(spec.key_space, spec.distribution, spec.zipf_s)
        self._seq = 0

    def value_for(self, seq: int) -> bytes:
        tag = f"c{self.client}-{seq}".encode()
        if len(tag) >= self.spec.value_size:
            return tag
        return tag + b"." * (self.spec.value_size - len(tag))

    def next_op(self) -> Op:
        key = self.keys.choose(self.rng)
        if self.rng.random() < self.spec.read_fraction:
            return Op(GET, key)
        self._seq += 1
        return Op(PUT, key, self.value_for(self._seq))

    def ops(self, count: int) -> Iterator[Op]:
        for _ in range(count):
            yield self.next_op()


def split_ops(total: int, clients: int) -> List[int]:
    """Spread ``total`` ops over clients as evenly as possible."""
    base, extra = divmod(total, clients)
    return [base + (1 if i < extra else 0) for i in range(clients)]
