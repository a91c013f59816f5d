"""
Clocks used for wall-time and creation stamps.

Runs under the mock backend inject FrozenClock so that trajectories and store
contents are byte-identical across repeated runs.
"""

import time
from datetime import datetime, timezone


class SystemClock:
    """Real wall clock."""

    def monotonic(self) -> float:
        return time.perf_counter()

    def now_iso(self) -> str:
        return datetime.now(timezone.utc).isoformat()


class FrozenClock:
    """Clock that never advances."""

    def __init__(self, stamp: str = "1970-01-01T00:00:00+00:00") -> None:
        self.stamp = stamp

    def monotonic(self) -> float:
        return 0.0

    def now_iso(self) -> str:
        return self.stamp
