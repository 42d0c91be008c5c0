"""Per-block broadcast cost.

Every block a node broadcasts is paid for from its broadcast budget. Once a
node's budget sits at or below ``low_bound`` the network drops its blocks.
The budget is separate from the fused trust score and regenerates by
``refund`` every ``refund_interval`` ticks, capped at the initial amount.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable


@dataclass
class DoSBudget:
    cost_per_block: float
    low_bound: float
    initial: float = 100.0
    refund: float = 0.0
    refund_interval: int = 1
    remaining: dict[int, float] = field(default_factory=dict)
    accepted: Counter = field(default_factory=Counter)
    discarded: Counter = field(default_factory=Counter)
    refunded: Counter = field(default_factory=Counter)

    def __post_init__(self):
        if not self.cost_per_block > 0:
            raise ValueError("cost_per_block must be positive")
        if self.refund_interval < 1:
            raise ValueError("refund_interval must be >= 1")

    def enroll(self, nodes: Iterable[int]) -> None:
        for n in nodes:
            self.remaining.setdefault(n, self.initial)

    def exhausted(self, node: int) -> bool:
        return self.remaining.get(node, self.initial) <= self.low_bound

    def refund_all(self) -> None:
        if self.refund <= 0:
            return
        for n, left in self.remaining.items():
            topped = min(self.initial, left + self.refund)
            if topped > left:
                self.refunded[n] += topped - left
                self.remaining[n] = topped

    def bound(self, node: int) -> int:
        """Most broadcasts ``node`` can have had accepted so far."""
        return math.ceil((self.initial - self.low_bound + self.refunded[node]) / self.cost_per_block)


def max_accepted_blocks(initial: float, cost_per_block: float, low_bound: float) -> int:
    """Accepted broadcasts before exhaustion with no refund: ceil((initial - low_bound) / cost)."""
    return max(0, math.ceil((initial - low_bound) / cost_per_block))


def charge_block_broadcast(budget: DoSBudget, node: int) -> bool:
    """Charge one block broadcast. False means every receiver discards it."""
    if budget.exhausted(node):
        budget.discarded[node] += 1
        return False
    budget.remaining[node] = budget.remaining.get(node, budget.initial) - budget.cost_per_block
    budget.accepted[node] += 1
    return True
