import math
from dataclasses import dataclass, field
from typing import Iterable
from typing import Optional
from typing import Tuple


SUM_TOLERANCE = 1e-12


class SumExceedsOne(ValueError):
    def __init__(self, total: float):
        super().__init__(f"terms sum to {total!r} > 1, not a mass partition")
        self.total = total


@dataclass(frozen=True)
class MassPartition:
    """
    Outcome of one dislocation: the finitely many positive masses of the
    children, relative to the parent, in non-increasing order. Whatever is
    missing from 1 is dust.
    """

    terms: Tuple[float, ...]
    dust: float = field(init=False)
    neg_log_terms: Tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        total = math.fsum(self.terms)
        if total > 1.0 + SUM_TOLERANCE:
            raise SumExceedsOne(total)
        if any(t <= 0.0 for t in self.terms):
            raise ValueError(f"terms must be strictly positive: {self.terms}")
        if any(a < b for a, b in zip(self.terms, self.terms[1:])):
            raise ValueError(f"terms must be non-increasing: {self.terms}")
        object.__setattr__(self, "dust", max(0.0, 1.0 - total))
        object.__setattr__(self, "neg_log_terms", tuple(-math.log(t) for t in self.terms))

    def total(self) -> float:
        return math.fsum(self.terms)

    def is_trivial(self) -> bool:
        # (1, 0, ...) carries no ν-mass; dislocations never produce it
        return len(self.terms) == 1 and abs(self.terms[0] - 1.0) <= SUM_TOLERANCE

    def is_conservative(self) -> bool:
        return self.dust <= SUM_TOLERANCE

    def power_sum(self, q: float) -> float:
        return math.fsum(t**q for t in self.terms)

    def __len__(self) -> int:
        return len(self.terms)


def normalize_partition(raw: Iterable[float]) -> MassPartition:
    values = [float(x) for x in raw]
    negative = [x for x in values if x < 0.0]
    if negative:
        raise ValueError(f"negative masses are not allowed: {negative}")
    terms = sorted((x for x in values if x > 0.0), reverse=True)
    return MassPartition(tuple(terms))


def size_biased_pick(s: MassPartition, u: float) -> Optional[int]:
    """
    Return the 0-based index of the child whose cumulative band
    [s_0 + ... + s_{i-1}, s_0 + ... + s_i) contains u, or None when u lands
    in the dust band [sum(s), 1).
    """
    upper = 0.0
    for i, t in enumerate(s.terms):
        upper += t
        if u < upper:
            return i
    # rounding of the running sum must not push a conservative partition into dust
    if s.is_conservative() and s.terms:
        return len(s.terms) - 1
    return None
