import bisect
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
import numpy as np
from scipy import integrate as sp_integrate
from logger import logger
from massPartition import MassPartition, normalize_partition


QUAD_RELATIVE_TOLERANCE = 1e-10
QUAD_ABSOLUTE_TOLERANCE = 1e-13
QUAD_PANEL_LIMIT = 10**4
CONSERVATIVE_THRESHOLD = 1e-14
# guard for measures whose integrals are finite for every p > -1
DISCRETE_P_LOWER = -1.0 + 1e-9

Functional = Callable[[MassPartition], float]


class NonIntegrable(ArithmeticError):
    pass


class DislocationMeasure(ABC):
    """
    The rate at which a block splits into a given mass partition. A block
    of mass x dislocates into x*s at rate nu(ds).
    """

    p_lower: float = DISCRETE_P_LOWER

    @property
    @abstractmethod
    def total_rate(self) -> float:
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> MassPartition:
        pass

    @abstractmethod
    def integrate(self, h: Functional, points: Optional[Sequence[float]] = None) -> float:
        pass

    @abstractmethod
    def describe(self) -> Dict[str, object]:
        pass

    def dust_integral(self) -> float:
        return self.integrate(lambda s: s.dust)

    def is_conservative(self) -> bool:
        return self.dust_integral() < CONSERVATIVE_THRESHOLD

    def is_finite_rate(self) -> bool:
        return math.isfinite(self.total_rate)


class DiscreteDislocation(DislocationMeasure):
    def __init__(self, atoms: Sequence[Tuple[float, MassPartition]], p_lower: float = DISCRETE_P_LOWER):
        if not atoms:
            raise ValueError("a discrete dislocation measure needs at least one atom")
        for rate, partition in atoms:
            if not rate > 0.0:
                raise ValueError(f"atom rates must be positive, got {rate}")
            if partition.is_trivial():
                raise ValueError("the trivial partition (1, 0, ...) cannot carry mass")
        self.atoms: List[Tuple[float, MassPartition]] = list(atoms)
        self.p_lower = p_lower
        self._rates = [r for r, _ in self.atoms]
        self._total = math.fsum(self._rates)
        self._cumulative = list(np.cumsum(self._rates) / self._total)

    @property
    def total_rate(self) -> float:
        return self._total

    def sample(self, rng: np.random.Generator) -> MassPartition:
        if len(self.atoms) == 1:
            return self.atoms[0][1]
        k = bisect.bisect_right(self._cumulative, rng.random())
        return self.atoms[min(k, len(self.atoms) - 1)][1]

    def integrate(self, h: Functional, points: Optional[Sequence[float]] = None) -> float:
        return math.fsum(rate * h(partition) for rate, partition in self.atoms)

    def describe(self) -> Dict[str, object]:
        return {"type": "discrete", "atoms": [[rate, list(partition.terms)] for rate, partition in self.atoms]}


class BinaryDensity(ABC):
    """Density g(a) of the larger child a in [1/2, 1) for binary splits."""

    name: str

    @abstractmethod
    def value(self, a: float) -> float:
        pass

    @abstractmethod
    def mass(self, lo: float, hi: float) -> float:
        pass

    @abstractmethod
    def inverse(self, lo: float, w: float) -> float:
        """The point a with mass(lo, a) == w."""
        pass

    def natural_p_lower(self, child_fraction: float) -> float:
        return DISCRETE_P_LOWER


@dataclass(frozen=True)
class UniformDensity(BinaryDensity):
    scale: float = 1.0
    name: str = "uniform"

    def value(self, a: float) -> float:
        return self.scale

    def mass(self, lo: float, hi: float) -> float:
        return self.scale * max(0.0, hi - lo)

    def inverse(self, lo: float, w: float) -> float:
        return lo + w / self.scale


@dataclass(frozen=True)
class PowerDensity(BinaryDensity):
    """g(a) = scale * (1 - a)^(-1 - beta); infinitely many small dislocations."""

    beta: float = 0.5
    scale: float = 1.0
    name: str = "power"

    def __post_init__(self) -> None:
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"power density needs beta in (0, 1), got {self.beta}")

    def value(self, a: float) -> float:
        return float(self.scale * (1.0 - a) ** (-1.0 - self.beta))

    def _antiderivative(self, a: float) -> float:
        if a >= 1.0:
            return math.inf
        return float(self.scale * (1.0 - a) ** (-self.beta) / self.beta)

    def mass(self, lo: float, hi: float) -> float:
        return max(0.0, self._antiderivative(hi) - self._antiderivative(lo))

    def inverse(self, lo: float, w: float) -> float:
        level = (1.0 - lo) ** (-self.beta) + w * self.beta / self.scale
        return float(1.0 - level ** (-1.0 / self.beta))

    def natural_p_lower(self, child_fraction: float) -> float:
        return self.beta - 1.0


DENSITIES: Dict[str, Callable[..., BinaryDensity]] = {
    "uniform": UniformDensity,
    "power": PowerDensity,
}


class BinaryDensityDislocation(DislocationMeasure):
    """
    Binary splits (a, c(a)) with a drawn from a density on [1/2, 1 - epsilon]
    and c(a) = child_fraction * (1 - a). epsilon = 0 keeps the full support,
    which may carry infinite total rate.
    """

    def __init__(self, density: BinaryDensity, child_fraction: float = 1.0, epsilon: float = 0.0, p_lower: Optional[float] = None):
        if not 0.0 < child_fraction <= 1.0:
            raise ValueError(f"child_fraction must be in (0, 1], got {child_fraction}")
        if not 0.0 <= epsilon < 0.5:
            raise ValueError(f"epsilon must be in [0, 1/2), got {epsilon}")
        self.density = density
        self.child_fraction = child_fraction
        self.epsilon = epsilon
        self.p_lower = density.natural_p_lower(child_fraction) if p_lower is None else p_lower
        self.discarded_rate_bound = 0.0
        self._upper = 1.0 - epsilon
        self._total = density.mass(0.5, self._upper) if epsilon > 0.0 else density.mass(0.5, 1.0)

    @property
    def total_rate(self) -> float:
        return self._total

    def child(self, a: float) -> float:
        return self.child_fraction * (1.0 - a)

    def partition_at(self, a: float) -> MassPartition:
        return normalize_partition((a, self.child(a)))

    def sample(self, rng: np.random.Generator) -> MassPartition:
        if not self.is_finite_rate():
            raise NonIntegrable(f"{self.density.name} density has infinite total rate, truncate it before sampling")
        a = self.density.inverse(0.5, rng.random() * self._total)
        a = min(max(a, 0.5), self._upper)
        if a >= 1.0:
            a = math.nextafter(1.0, 0.0)
        return self.partition_at(a)

    def integrate(self, h: Functional, points: Optional[Sequence[float]] = None) -> float:
        def integrand(a: float) -> float:
            return self.density.value(a) * h(self.partition_at(a))

        inner = sorted(p for p in (points or []) if 0.5 < p < self._upper)
        result = sp_integrate.quad(integrand, 0.5, self._upper, epsrel=QUAD_RELATIVE_TOLERANCE, epsabs=QUAD_ABSOLUTE_TOLERANCE, limit=QUAD_PANEL_LIMIT, points=inner or None, full_output=1)
        value = float(result[0])
        if not math.isfinite(value):
            raise NonIntegrable(f"integral against {self.density.name} density is not finite")
        if len(result) > 3:
            # quadpack reports non-convergence as a trailing message
            message = result[3]
            if self.epsilon == 0.0 or "divergent" in str(message):
                raise NonIntegrable(f"quadrature against {self.density.name} density did not converge: {message}")
            logger.debug(f"quadrature warning on truncated {self.density.name} density: {message}")
        return value

    def describe(self) -> Dict[str, object]:
        return {
            "type": "binary_density",
            "density": self.density.name,
            "child_fraction": self.child_fraction,
            "epsilon": self.epsilon,
            "discarded_rate_bound": self.discarded_rate_bound,
        }


def truncate(nu: DislocationMeasure, epsilon: float) -> DislocationMeasure:
    """
    Restrict nu to dislocations with 1 - s_1 >= epsilon. The discarded rate
    is bounded by integrate(1 - s_1) / epsilon, which is recorded on the
    returned measure.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"truncation epsilon must be in (0, 1/2), got {epsilon}")
    if not isinstance(nu, BinaryDensityDislocation):
        return nu

    first_moment = nu.integrate(lambda s: 1.0 - s.terms[0])
    truncated = BinaryDensityDislocation(nu.density, nu.child_fraction, epsilon, nu.p_lower)
    truncated.discarded_rate_bound = first_moment / epsilon
    logger.info(f"truncated {nu.density.name} density at epsilon={epsilon}: rate {truncated.total_rate}, discarded rate <= {truncated.discarded_rate_bound}")
    return truncated


def discrete(atoms: Sequence[Tuple[float, Sequence[float]]], p_lower: float = DISCRETE_P_LOWER) -> DiscreteDislocation:
    return DiscreteDislocation([(float(rate), normalize_partition(terms)) for rate, terms in atoms], p_lower)


def conservative_binary(a: float, rate: float = 1.0) -> DiscreteDislocation:
    return discrete([(rate, (a, 1.0 - a))])


def dissipative_pair(rate: float = 1.0) -> DiscreteDislocation:
    return discrete([(rate, (0.5, 0.25))])


def uniform_binary(scale: float = 1.0, child_fraction: float = 1.0, epsilon: float = 0.0) -> BinaryDensityDislocation:
    return BinaryDensityDislocation(UniformDensity(scale), child_fraction, epsilon)


def power_binary(beta: float, scale: float = 1.0, child_fraction: float = 1.0) -> BinaryDensityDislocation:
    return BinaryDensityDislocation(PowerDensity(beta, scale), child_fraction)


def catalog() -> Dict[str, DislocationMeasure]:
    return {
        "dyadic": conservative_binary(0.5),
        "binary_0.7": conservative_binary(0.7),
        "dissipative": dissipative_pair(),
        "uniform": uniform_binary(),
    }
