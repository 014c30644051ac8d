"""Query and resource counters shared by every module."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

# queries to the entry oracle per application of the isometry T (or T^dagger):
# one location query and one value query
QUERIES_PER_ISOMETRY = 2
# a walk step W = S(2TT^dagger - 1) uses T once and T^dagger once
QUERIES_PER_WALK_STEP = 2 * QUERIES_PER_ISOMETRY


@dataclass
class CostLedger:
    """Counters for oracle uses and amplification rounds.

    Ledgers are private to one task and merge by summation (``a + b`` or
    ``a.merge(b)``).
    """

    pa_queries: int = 0
    pb_uses: int = 0
    walk_steps: int = 0
    evolution_uses: int = 0
    evolution_time_total: float = 0.0
    aa_rounds: int = 0
    u_uses: int = 0
    v_uses: int = 0

    def charge_walk(self, steps: int) -> None:
        self.walk_steps += steps
        self.pa_queries += QUERIES_PER_WALK_STEP * steps

    def charge_isometry(self, count: int = 1) -> None:
        self.pa_queries += QUERIES_PER_ISOMETRY * count

    def charge_evolution(self, t: float, uses: int = 1) -> None:
        self.evolution_uses += uses
        self.evolution_time_total += abs(t) * uses

    def merge(self, other: "CostLedger") -> "CostLedger":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(**asdict(self)).merge(other)

    def scaled(self, k: int) -> "CostLedger":
        return CostLedger(**{f.name: getattr(self, f.name) * k for f in fields(self)})

    def as_dict(self) -> dict:
        return asdict(self)
