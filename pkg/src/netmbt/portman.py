"""Listen-port pool with per-test cooldown recycling.

Rapid connection-heavy suites exhaust ephemeral ports; leasing listen ports
from a fixed range and parking released ports in a short cooldown keeps the
footprint bounded and deterministic.  Cooldown is measured in tests, not
wall-clock time.
"""

from __future__ import annotations

import heapq

from .errors import PoolExhaustedError


class PortPool:
    def __init__(self, lo: int, hi: int, cooldown_tests: int = 2):
        if not (0 < lo <= hi <= 65535):
            raise ValueError(f"invalid port range [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi
        self.cooldown_tests = cooldown_tests
        self._free = list(range(lo, hi + 1))  # heap: acquire takes the lowest
        heapq.heapify(self._free)
        self._free_set = set(self._free)
        self._leased: set[int] = set()
        self._cooldown: dict[int, int] = {}  # port -> test index when usable again
        self._test_index = 0

    def acquire(self) -> int:
        self._expire()
        if not self._free:
            raise PoolExhaustedError(
                f"no free listen port in [{self.lo}, {self.hi}]; "
                "widen --port-range or lower the test rate"
            )
        port = heapq.heappop(self._free)
        self._free_set.remove(port)
        self._leased.add(port)
        return port

    def release(self, port: int) -> None:
        if port not in self._leased:
            raise ValueError(f"port {port} is not leased")
        self._leased.remove(port)
        self._cooldown[port] = self._test_index + self.cooldown_tests

    def next_test(self) -> None:
        """Advance the test counter; called once per finished test."""
        self._test_index += 1
        self._expire()

    def _expire(self) -> None:
        due = [p for p, when in self._cooldown.items() if when <= self._test_index]
        for port in due:
            del self._cooldown[port]
            heapq.heappush(self._free, port)
            self._free_set.add(port)

    # introspection, used by invariant tests
    @property
    def leased(self) -> frozenset[int]:
        return frozenset(self._leased)

    @property
    def free(self) -> frozenset[int]:
        return frozenset(self._free_set)

    @property
    def cooling(self) -> frozenset[int]:
        return frozenset(self._cooldown)
