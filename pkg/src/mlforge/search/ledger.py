"""Evaluation-cost accounting in full-evaluation units.

Each run charges ``budget / max_budget``; the ledger keeps the total as an
exact rational of the charged float values, so bracket-cost identities hold
regardless of summation order.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

BUDGET_UNITS = ("epochs", "evaluation-cost")


@dataclass(frozen=True)
class Budget:
    """A fidelity level: epochs for deep learning, dataset fraction otherwise."""

    value: float
    unit: str = "epochs"

    def __post_init__(self):
        if self.unit not in BUDGET_UNITS:
            raise ValueError(f"unknown budget unit: {self.unit!r}")
        if self.value <= 0:
            raise ValueError("budget value must be > 0")


class CostLedger:
    """Accumulated fractional evaluation costs, exact and order-independent."""

    def __init__(self):
        self._entries: list[Fraction] = []

    def charge(self, budget: float, max_budget: float) -> float:
        """Record one run's cost; returns the charged fraction as float."""
        if max_budget <= 0:
            raise ValueError("max budget must be > 0")
        fraction = Fraction(budget) / Fraction(max_budget)
        self._entries.append(fraction)
        return float(fraction)

    @property
    def entries(self) -> tuple[float, ...]:
        return tuple(float(e) for e in self._entries)

    @property
    def total_exact(self) -> Fraction:
        return sum(self._entries, Fraction(0))

    @property
    def total(self) -> float:
        return float(self.total_exact)

    def prefix_within(self, cost_cap: float) -> int:
        """Number of leading records whose cumulative cost stays <= cap."""
        running = Fraction(0)
        count = 0
        for entry in self._entries:
            running += entry
            if float(running) > cost_cap + 1e-12:
                break
            count += 1
        return count

    @classmethod
    def from_costs(cls, costs: Iterable[float]) -> "CostLedger":
        ledger = cls()
        for cost in costs:
            ledger._entries.append(Fraction(cost))
        return ledger
