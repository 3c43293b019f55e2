import math
from dataclasses import dataclass, field
from typing import List
from typing import Optional
from typing import Tuple
import numpy as np


# relative slack at indicator endpoints, ratios X / eta on a lattice land on them up to rounding
ENDPOINT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Indicator:
    lo: float
    hi: float
    weight: float = 1.0
    right_open: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError(f"indicator bounds must satisfy 0 <= lo <= hi <= 1, got [{self.lo}, {self.hi}]")
        if self.weight < 0.0:
            raise ValueError(f"indicator weight must be nonnegative, got {self.weight}")

    def contains(self, u: np.ndarray) -> np.ndarray:
        upper = u < self.hi * (1.0 - ENDPOINT_TOLERANCE) if self.right_open else u <= self.hi * (1.0 + ENDPOINT_TOLERANCE)
        return (u >= self.lo * (1.0 - ENDPOINT_TOLERANCE)) & upper


@dataclass(frozen=True)
class TestFunction:
    """
    Bounded nonnegative f on [0, 1], a weighted sum of indicators plus a
    polynomial with nonnegative coefficients. f vanishes above 1.
    """

    __test__ = False

    name: str
    indicators: Tuple[Indicator, ...] = ()
    coefficients: Tuple[float, ...] = ()
    bound: float = field(init=False)

    def __post_init__(self) -> None:
        if any(c < 0.0 for c in self.coefficients):
            raise ValueError(f"polynomial coefficients must be nonnegative, got {self.coefficients}")
        # the polynomial part is nondecreasing, so the sup sits at a breakpoint or just left of one
        breaks = [1.0] + [i.lo for i in self.indicators] + [i.hi for i in self.indicators]
        candidates = np.array(breaks + [b * (1.0 - 2.0 * ENDPOINT_TOLERANCE) for b in breaks])
        object.__setattr__(self, "bound", float(self.values(candidates).max()))

    def values(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for ind in self.indicators:
            out = out + ind.weight * ind.contains(u)
        if self.coefficients:
            out = out + np.polynomial.polynomial.polyval(np.clip(u, 0.0, 1.0), self.coefficients)
        return np.where((u >= 0.0) & (u <= 1.0), out, 0.0)

    def __call__(self, u: float) -> float:
        return float(self.values(np.array([u]))[0])

    def is_piecewise_constant(self) -> bool:
        return not any(c != 0.0 for c in self.coefficients[1:])

    def log_integral(self, a: float, b: float = 1.0) -> float:
        """Integral of f(u) du / u over [a, b], for 0 < a <= b."""
        b = min(b, 1.0)
        if a >= b:
            return 0.0
        total: List[float] = []
        for ind in self.indicators:
            lo, hi = max(a, ind.lo), min(b, ind.hi)
            if hi > lo:
                total.append(ind.weight * math.log(hi / lo))
        for m, c in enumerate(self.coefficients):
            if c == 0.0:
                continue
            total.append(c * math.log(b / a) if m == 0 else c * (b**m - a**m) / m)
        return math.fsum(total)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        n = max(len(self.coefficients), len(other.coefficients))
        coefficients = tuple(a + b for a, b in zip(self.coefficients + (0.0,) * (n - len(self.coefficients)), other.coefficients + (0.0,) * (n - len(other.coefficients))))
        return TestFunction(f"{self.name}+{other.name}", self.indicators + other.indicators, coefficients)

    def scaled(self, c: float) -> "TestFunction":
        if c < 0.0:
            raise ValueError(f"test functions can only be scaled by c >= 0, got {c}")
        indicators = tuple(Indicator(i.lo, i.hi, i.weight * c, i.right_open) for i in self.indicators)
        return TestFunction(f"{c}*{self.name}", indicators, tuple(c * x for x in self.coefficients))


def one() -> TestFunction:
    return TestFunction("one", coefficients=(1.0,))


def identity() -> TestFunction:
    return TestFunction("identity", coefficients=(0.0, 1.0))


def indicator(lo: float, hi: float, right_open: bool = False) -> TestFunction:
    bracket = ")" if right_open else "]"
    return TestFunction(f"indicator[{lo},{hi}{bracket}", (Indicator(lo, hi, 1.0, right_open),))


def polynomial(coefficients: List[float]) -> TestFunction:
    return TestFunction("poly:" + ":".join(str(c) for c in coefficients), coefficients=tuple(float(c) for c in coefficients))


def dyadic_library(bins: int = 16) -> List[TestFunction]:
    """Indicators of bins partitioning [0, 1]; right-open except the last."""
    if bins < 1:
        raise ValueError(f"need at least one bin, got {bins}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    return [TestFunction(f"dyadic{bins}:{i}", (Indicator(float(edges[i]), float(edges[i + 1]), 1.0, i < bins - 1),)) for i in range(bins)]


def default_library() -> List[TestFunction]:
    return [one(), identity()] + dyadic_library(16)


def parse_function(token: str) -> List[TestFunction]:
    """
    one, identity, indicator:lo:hi (indicator:lo:hi:open for a right-open
    bin), dyadic:n, poly:c0:c1:...
    """
    kind, *args = token.strip().split(":")
    try:
        values = [float(a) for a in args if a != "open"]
    except ValueError:
        raise ValueError(f"malformed test function '{token}'") from None
    if kind == "one" and not args:
        return [one()]
    if kind == "identity" and not args:
        return [identity()]
    if kind == "indicator" and len(values) == 2:
        return [indicator(values[0], values[1], right_open="open" in args)]
    if kind == "dyadic" and len(values) == 1 and values[0].is_integer():
        return dyadic_library(int(values[0]))
    if kind == "poly" and values:
        return [polynomial(values)]
    raise ValueError(f"unknown test function '{token}'")


def parse_functions(tokens: Optional[List[str]]) -> List[TestFunction]:
    if not tokens:
        return default_library()
    functions: List[TestFunction] = []
    for token in tokens:
        functions.extend(parse_function(token))
    return functions
