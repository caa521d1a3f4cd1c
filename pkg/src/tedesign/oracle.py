"""Access-controlled view of the potential outcomes."""

import numpy as np

from .errors import DimensionMismatch, OracleViolation

UNREAD = -1


class OutcomeOracle:
    """Reveals at most one potential outcome per unit.

    ``access_log[j]`` is -1 until unit j is read, then 0 or 1 for the arm that
    was revealed. Reading the same arm again is fine; asking for the other arm
    raises OracleViolation. ``full_information=True`` lifts the restriction for
    the oracle regression baseline.
    """

    def __init__(self, y1, y0, full_information=False):
        y1 = np.asarray(y1, dtype=float)
        y0 = np.asarray(y0, dtype=float)
        if y1.ndim != 1 or y1.shape != y0.shape:
            raise DimensionMismatch(f"outcome vectors differ in shape: {y1.shape} vs {y0.shape}")
        self._y = (y0.copy(), y1.copy())
        self.full_information = full_information
        self.access_log = np.full(len(y1), UNREAD, dtype=np.int8)
        self.both_read = np.zeros(len(y1), dtype=bool)
        self.events = []

    @property
    def n(self):
        return len(self.access_log)

    def read(self, arm, indices):
        if arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {arm!r}")
        idx = np.asarray(indices, dtype=np.intp).ravel()
        if len(idx) == 0:
            return np.empty(0)
        prev = self.access_log[idx]
        clash = (prev != UNREAD) & (prev != arm)
        if np.any(clash):
            if not self.full_information:
                j = int(idx[np.argmax(clash)])
                raise OracleViolation(f"unit {j} already revealed arm {int(self.access_log[j])}")
            self.both_read[idx[clash]] = True
        fresh = prev == UNREAD
        self.access_log[idx[fresh]] = arm
        self.events.append((arm, idx.copy()))
        return self._y[arm][idx]

    def read_all(self, arm):
        return self.read(arm, np.arange(self.n))

    def revealed_count(self) -> int:
        return int(np.count_nonzero(self.access_log != UNREAD))

    def units_read(self, arm):
        """Indices whose revealed arm includes ``arm``."""
        mask = np.zeros(self.n, dtype=bool)
        for a, idx in self.events:
            if a == arm:
                mask[idx] = True
        return np.flatnonzero(mask)
