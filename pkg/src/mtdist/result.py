"""Result container shared by the oracle, the solvers and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field

OPTIMAL = "optimal"
UPPER_BOUND_ONLY = "upper_bound_only"
INFEASIBLE_ERROR = "infeasible_error"
STATUSES = (OPTIMAL, UPPER_BOUND_ONLY, INFEASIBLE_ERROR)


@dataclass
class SolveResult:
    """Outcome of a distance computation.

    ``witness`` is a sorted tuple of ``(node in T1, node in T2)`` pairs whose
    mapping cost equals ``value``.  For ``optimal`` results ``lower_bound``
    equals ``value``.
    """

    value: float
    status: str
    witness: tuple[tuple[int, int], ...] = ()
    lower_bound: float = 0.0
    stats: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    message: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        self.witness = tuple(sorted((int(a), int(b)) for a, b in self.witness))

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL
