from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class TransmissionLedger:
    """Counts real numbers broadcast over one hop, per stage and per time step.

    add() accumulates into the open step; end_step() closes it and appends the
    step's per-stage counts to the history.
    """
    current: dict[str, int] = field(default_factory=dict)
    history: list[dict[str, int]] = field(default_factory=list)
    totals: dict[str, int] = field(default_factory=dict)

    def add(self, stage: str, count: int) -> None:
        if count < 0:
            raise ValueError("transmission count must be nonnegative")
        self.current[stage] = self.current.get(stage, 0) + int(count)
        self.totals[stage] = self.totals.get(stage, 0) + int(count)

    def end_step(self) -> dict[str, int]:
        closed = dict(self.current)
        self.history.append(closed)
        self.current = {}
        return closed

    @property
    def total(self) -> int:
        return sum(self.totals.values())

    @property
    def per_step(self) -> list[int]:
        return [sum(h.values()) for h in self.history]

    def stage_total(self, stage: str) -> int:
        return self.totals.get(stage, 0)

    def to_dict(self) -> dict:
        return {"totals": dict(self.totals), "total": self.total, "per_step": self.per_step}
