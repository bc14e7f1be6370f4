"""Pass/fail outcome records produced by the invariant check suites."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckOutcome:
    """One verified invariant: worst margin is >= 0 exactly when it passed.

    margin is oriented so that larger is safer; the failing direction is
    negative.  detail carries the instance that produced the worst margin.
    """

    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class CheckReport:
    outcomes: list[CheckOutcome] = field(default_factory=list)

    def add(self, name, passed, margin, detail=""):
        self.outcomes.append(CheckOutcome(name, bool(passed), float(margin), detail))

    @property
    def all_passed(self):
        return all(o.passed for o in self.outcomes)

    def worst(self):
        return min(self.outcomes, key=lambda o: o.margin) if self.outcomes else None

    def lines(self):
        out = []
        for o in self.outcomes:
            tag = "PASS" if o.passed else "FAIL"
            line = f"[{tag}] {o.name}: worst margin {o.margin:.3e}"
            if o.detail:
                line += f" ({o.detail})"
            out.append(line)
        return out
