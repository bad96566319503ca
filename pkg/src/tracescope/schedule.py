"""Per-category decisions on which training steps get recorded.

The schedule is dense early and geometrically sparse late: occurrence n of a
category is recorded iff n equals the current threshold, and thresholds
follow the integer recurrence r0 = 0, r_{k+1} = max(r_k + 1, floor(r_k * g)).
The growth factor g is kept as an exact rational so the recorded index set is
bit-reproducible across platforms; floor(r * g) is computed as
(r * num) // den.  Every category runs its own schedule, so rarely occurring
categories keep their full early density no matter how busy the others are.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import DuplicateCategoryError, InvariantViolation

DEFAULT_GROWTH = Fraction(3, 2)


def growth_fraction(g: float | int | str | Fraction) -> Fraction:
    """Parse a growth factor into an exact Fraction (> 1).

    Floats go through their shortest decimal representation, so 1.1 means
    exactly 11/10 rather than the nearest binary double.
    """
    if isinstance(g, Fraction):
        value = g
    elif isinstance(g, bool):
        raise InvariantViolation("growth factor must be a number, not a bool")
    elif isinstance(g, int):
        value = Fraction(g)
    elif isinstance(g, float):
        value = Fraction(str(g))
    elif isinstance(g, str):
        value = Fraction(g)
    else:
        raise InvariantViolation(f"cannot parse growth factor from {type(g).__name__}")
    if not value > 1:
        raise InvariantViolation(f"growth factor must be > 1, got {value}")
    return value


@dataclass(frozen=True, slots=True)
class CategoryState:
    """Progress of one category's schedule; advance via should_record."""

    category: str
    occurrences_seen: int
    next_record_at: int
    growth: Fraction

    def __post_init__(self) -> None:
        if not self.category:
            raise InvariantViolation("CategoryState.category must be nonempty")
        if self.occurrences_seen < 0 or self.next_record_at < 0:
            raise InvariantViolation("CategoryState counters must be nonnegative")
        if self.next_record_at < self.occurrences_seen:
            raise InvariantViolation(
                "CategoryState.next_record_at must never trail occurrences_seen")
        if not isinstance(self.growth, Fraction) or not self.growth > 1:
            raise InvariantViolation("CategoryState.growth must be a Fraction > 1")


def register_category(name: str, g: float | int | str | Fraction = DEFAULT_GROWTH) -> CategoryState:
    """Fresh schedule state: the first occurrence is always recorded."""
    if not name:
        raise InvariantViolation("category name must be nonempty")
    return CategoryState(category=name, occurrences_seen=0, next_record_at=0,
                         growth=growth_fraction(g))


def should_record(state: CategoryState) -> tuple[bool, CategoryState]:
    """Consume one occurrence of the category; call exactly once per occurrence.

    Returns whether this occurrence is recorded plus the advanced state.
    """
    n = state.occurrences_seen
    if n == state.next_record_at:
        g = state.growth
        advanced = max(n + 1, (n * g.numerator) // g.denominator)
        return True, replace(state, occurrences_seen=n + 1, next_record_at=advanced)
    return False, replace(state, occurrences_seen=n + 1)


class ScheduleRegistry:
    """Hands out and advances per-category schedule states for one run.

    The recording path is sequential per run; this registry is a convenience
    wrapper over the pure functions above, not a synchronization point.
    """

    def __init__(self, default_growth: float | int | str | Fraction = DEFAULT_GROWTH):
        self.default_growth = growth_fraction(default_growth)
        self._states: dict[str, CategoryState] = {}

    def register(self, name: str, g: float | int | str | Fraction | None = None) -> CategoryState:
        if name in self._states:
            raise DuplicateCategoryError(f"category {name!r} already registered")
        state = register_category(name, self.default_growth if g is None else g)
        self._states[name] = state
        return state

    def observe(self, category: str) -> bool:
        """Advance the category by one occurrence; registers it on first sight."""
        if category not in self._states:
            self.register(category)
        recorded, state = should_record(self._states[category])
        self._states[category] = state
        return recorded

    def state(self, category: str) -> CategoryState:
        return self._states[category]

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(self._states)
