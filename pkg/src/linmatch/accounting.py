"""Explicit byte accounting for matrix buffers.

Matching code allocates every float matrix through :class:`Tensor2D`, which
reports the buffer size to all currently active ledgers. This measures the
memory story directly (bank vs. attention vs. constant state) instead of
relying on process RSS, which is neither portable nor deterministic.

Buffers are tagged with a category so that the regime-distinguishing
allocations (the attention matrix, the recurrent state) can be compared
against closed-form expected-byte formulas. Tiny bookkeeping temporaries
(boolean masks from validity checks, Python ints) are outside the model on
purpose: they are not matrix buffers.

Freed buffers are detected through CPython's prompt refcount collection via
``weakref.finalize``; ``current_bytes`` and ``peak_bytes`` assume that
behaviour. Cumulative per-category totals never decrease and are safe on any
interpreter.
"""

from __future__ import annotations

from collections import defaultdict
from contextlib import contextmanager

# Canonical category tags used by the matching code paths.
CATEGORY_BANK = "bank"            # stored memory keys/values
CATEGORY_STATE = "state"          # recurrent S and Z buffers
CATEGORY_ATTENTION = "attention"  # materialized similarity blocks
CATEGORY_WORKSPACE = "workspace"  # per-call scratch (feature maps, partial sums)
CATEGORY_READOUT = "readout"      # value readouts and their normalizers


class AllocationLedger:
    """Tallies bytes of tracked buffers while active."""

    def __init__(self):
        self.current_bytes = 0
        self.peak_bytes = 0
        self.total_bytes = 0
        self.total_by_category = defaultdict(int)
        self.current_by_category = defaultdict(int)

    def record_alloc(self, nbytes: int, category: str) -> None:
        self.current_bytes += nbytes
        self.total_bytes += nbytes
        self.total_by_category[category] += nbytes
        self.current_by_category[category] += nbytes
        if self.current_bytes > self.peak_bytes:
            self.peak_bytes = self.current_bytes

    def record_free(self, nbytes: int, category: str) -> None:
        self.current_bytes -= nbytes
        self.current_by_category[category] -= nbytes


# Stack of active ledgers; allocations report to every entry so a scoped
# step measurement can nest inside a run-wide one.
_active: list[AllocationLedger] = []


def active_ledgers() -> tuple[AllocationLedger, ...]:
    return tuple(_active)


@contextmanager
def track_allocations(ledger: AllocationLedger | None = None):
    """Activate a ledger for the dynamic extent of the block."""
    ledger = ledger if ledger is not None else AllocationLedger()
    _active.append(ledger)
    try:
        yield ledger
    finally:
        _active.remove(ledger)
