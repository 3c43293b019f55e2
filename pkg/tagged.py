import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple
import numpy as np
from scipy import stats
from logger import logger
from dislocation import DiscreteDislocation, DislocationMeasure
from exponent import ExponentContext, phi, tilted_exponent, check_index
from massPartition import MassPartition
from observables import TestFunction, indicator


KILLING_TOLERANCE = 1e-10
LATTICE_TOLERANCE = 1e-9
LATTICE_MAX_DENOMINATOR = 1000
PASSAGE_BATCH = 4096
MAX_PASSAGE_STEPS = 10**7


class KilledBeforePassage(RuntimeError):
    pass


class LatticeDetected(ValueError):
    pass


class DegenerateLimit(ValueError):
    pass


class PassageNotReached(RuntimeError):
    pass


@dataclass(frozen=True)
class TiltedJumpLaw:
    """
    Jump measure of -log of the tagged fragment after the exponential tilt
    by p: a jump of size -log s_i happens at rate nu(ds) * s_i^(1+p), the
    remaining Phi(p) is killing. Discrete measures keep their atoms exactly,
    other measures are sampled by rejection.
    """

    measure: DislocationMeasure
    p: float
    total_rate: float
    killing_rate: float
    jumps: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def jump_part(self, lam: float) -> float:
        """Integral of 1 - exp(-lam x) against the tilted jump measure."""
        if self.jumps is not None and self.weights is not None:
            return math.fsum(self.weights * -np.expm1(-lam * self.jumps))
        q = 1.0 + self.p
        return self.measure.integrate(lambda s: math.fsum(x**q - x ** (q + lam) for x in s.terms))

    def levy_khintchine(self, lam: float) -> Tuple[float, float]:
        """(jump part, Phi^(p)(lam)); the two agree for every p."""
        return self.jump_part(lam), tilted_exponent(self.measure, self.p, lam)

    def sample_jumps(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if size == 0:
            return np.empty(0)
        if self.jumps is not None and self.weights is not None:
            if len(self.jumps) == 1:
                return np.full(size, self.jumps[0])
            return rng.choice(self.jumps, size=size, p=self.weights / self.weights.sum())
        return np.array([self._rejection_jump(rng) for _ in range(size)])

    def _rejection_jump(self, rng: np.random.Generator) -> float:
        q = 1.0 + self.p
        while True:
            s = self.measure.sample(rng)
            # sum_i s_i^q <= len(s)^(1-q) for q < 1, and <= 1 otherwise
            ceiling = len(s) ** max(0.0, 1.0 - q)
            tilted = np.array(s.terms) ** q
            if rng.random() * ceiling <= tilted.sum():
                i = int(np.searchsorted(np.cumsum(tilted), rng.random() * tilted.sum(), side="right"))
                return float(-math.log(s.terms[min(i, len(s) - 1)]))


def tilted_jump_law(nu: DislocationMeasure, p: float) -> TiltedJumpLaw:
    check_index(nu, p)
    q = 1.0 + p
    killing = phi(nu, p)
    if abs(killing) < KILLING_TOLERANCE:
        killing = 0.0
    if isinstance(nu, DiscreteDislocation):
        merged: Dict[float, float] = {}
        for rate, partition in nu.atoms:
            for s in partition.terms:
                merged[s] = merged.get(s, 0.0) + rate * s**q
        terms = sorted(merged, reverse=True)
        jumps = np.array([-math.log(s) for s in terms])
        weights = np.array([merged[s] for s in terms])
        return TiltedJumpLaw(nu, p, math.fsum(weights), killing, jumps, weights)
    total = nu.integrate(lambda s: s.power_sum(q))
    return TiltedJumpLaw(nu, p, total, killing)


def overshoot_sample(law: TiltedJumpLaw, x: float, rng: np.random.Generator) -> Tuple[float, float]:
    """
    First value of the jump chain strictly above x and its overshoot. Holding
    times do not change the passage value and are not drawn.
    """
    if x < 0.0:
        raise ValueError(f"passage level must be nonnegative, got {x}")
    kill_probability = _kill_probability(law)
    level = 0.0
    for _ in range(MAX_PASSAGE_STEPS):
        if kill_probability > 0.0 and rng.random() < kill_probability:
            raise KilledBeforePassage(f"tagged fragment killed below level {x}")
        level += float(law.sample_jumps(rng, 1)[0])
        if level > x:
            return level, level - x
    raise PassageNotReached(f"no passage above {x} after {MAX_PASSAGE_STEPS} jumps")


def overshoot_samples(law: TiltedJumpLaw, x: float, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """n independent (passage value, overshoot) pairs, advanced together."""
    if x < 0.0:
        raise ValueError(f"passage level must be nonnegative, got {x}")
    if _kill_probability(law) > 0.0:
        raise KilledBeforePassage("first passage needs a law without killing, tilt at the Malthusian exponent")
    level = np.zeros(n)
    pending = np.arange(n)
    while pending.size:
        level[pending] += law.sample_jumps(rng, pending.size)
        pending = pending[level[pending] <= x]
    return level, level - x


def _kill_probability(law: TiltedJumpLaw) -> float:
    if law.killing_rate <= 0.0:
        return 0.0
    return law.killing_rate / (law.killing_rate + law.total_rate)


class LimitMeasure:
    """
    rho(du) = Phi'(p*)^-1 G(u) du / u on (0, 1], with G(u) the tilted rate
    of partition terms below u. Pairings swap the order of integration, so
    only one integral against nu is needed: sum_i s_i^(1+p*) times the
    du/u integral of f over [s_i, 1], which is closed form for every
    TestFunction.
    """

    def __init__(self, ctx: ExponentContext):
        if not 0.0 < ctx.phi_prime_at_p_star < math.inf:
            raise DegenerateLimit(f"the limit measure needs 0 < Phi'(p*) < inf, got {ctx.phi_prime_at_p_star}")
        self.measure = ctx.measure
        self.p_star = ctx.p_star
        self.phi_prime = ctx.phi_prime_at_p_star
        self._law = tilted_jump_law(ctx.measure, ctx.p_star)

    @property
    def smallest_term(self) -> Optional[float]:
        if self._law.jumps is None:
            return None
        return float(math.exp(-self._law.jumps.max()))

    def pairing(self, f: TestFunction) -> float:
        q = 1.0 + self.p_star
        if self._law.jumps is not None and self._law.weights is not None:
            terms = np.exp(-self._law.jumps)
            return math.fsum(w * f.log_integral(s) for w, s in zip(self._law.weights, terms)) / self.phi_prime

        breaks = sorted({b for ind in f.indicators for b in (ind.lo, ind.hi)})

        def h(s: MassPartition) -> float:
            return math.fsum(x**q * f.log_integral(x) for x in s.terms)

        return self.measure.integrate(h, points=breaks) / self.phi_prime

    def cdf(self, u: np.ndarray) -> np.ndarray:
        """rho([0, u])."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if self._law.jumps is not None and self._law.weights is not None:
            terms = np.exp(-self._law.jumps)
            safe = np.maximum(u[..., None], terms)
            return (self._law.weights * np.log(safe / terms)).sum(axis=-1) / self.phi_prime
        flat = np.array([self.pairing(indicator(0.0, float(v))) if v > 0.0 else 0.0 for v in u.ravel()])
        return flat.reshape(u.shape)


def limit_pairing(ctx: ExponentContext, f: TestFunction) -> float:
    return LimitMeasure(ctx).pairing(f)


def overshoot_limit_density(law: TiltedJumpLaw, z: float, phi_prime: float) -> float:
    """Stationary overshoot density m((z, inf)) / Phi'(p*) of the renewal limit."""
    if z < 0.0:
        return 0.0
    if law.jumps is not None and law.weights is not None:
        return math.fsum(law.weights[law.jumps > z]) / phi_prime
    q = 1.0 + law.p
    return law.measure.integrate(lambda s: math.fsum(x**q for x in s.terms if -math.log(x) > z)) / phi_prime


def lattice_span(nu: DislocationMeasure) -> Optional[float]:
    """
    Common step of the jump sizes when they are all rational multiples of
    one another, None for non-lattice laws.
    """
    if not isinstance(nu, DiscreteDislocation):
        return None
    jumps = sorted({-math.log(s) for _, partition in nu.atoms for s in partition.terms})
    base = jumps[0]
    denominators = []
    for x in jumps[1:]:
        ratio = x / base
        approx = Fraction(ratio).limit_denominator(LATTICE_MAX_DENOMINATOR)
        if abs(ratio - float(approx)) > LATTICE_TOLERANCE:
            return None
        denominators.append(approx.denominator)
    return base / math.lcm(*denominators) if denominators else base


def is_lattice(nu: DislocationMeasure) -> bool:
    return lattice_span(nu) is not None


@dataclass
class RenewalResult:
    x: float
    ks_distance: float
    p_value: float
    replicas: int


def renewal_limit_check(ctx: ExponentContext, x_grid: List[float], replicas: int, rng: np.random.Generator) -> List[RenewalResult]:
    """KS distance between the law of exp(-overshoot) at each level and rho."""
    span = lattice_span(ctx.measure)
    if span is not None:
        raise LatticeDetected(f"jump sizes live on the lattice {span:.6g} Z, the renewal limit does not hold")
    if any(b <= a for a, b in zip(x_grid, x_grid[1:])):
        raise ValueError(f"x grid must be increasing, got {x_grid}")
    law = tilted_jump_law(ctx.measure, ctx.p_star)
    rho = LimitMeasure(ctx)
    results = []
    for x in x_grid:
        _, over = overshoot_samples(law, x, replicas, rng)
        test = stats.kstest(np.exp(-over), rho.cdf)
        logger.debug(f"renewal check at x={x}: KS {test.statistic}")
        results.append(RenewalResult(x, float(test.statistic), float(test.pvalue), replicas))
    return results


@dataclass
class LaplaceComparison:
    lam: float
    empirical: float
    stderr: float
    target: float
    z_score: float
    kills: int
    replicas: int


def tagged_path_check(nu: DislocationMeasure, p: float, t: float, replicas: int, rng: np.random.Generator, lambdas: List[float]) -> List[LaplaceComparison]:
    """
    Tagged fragment under the tilt by p: jumps from the tilted law, killing
    at rate max(Phi(p), 0), survivors reweighted by exp(max(Phi(p), 0) t),
    compared with exp(-Phi^(p)(lam) t).
    """
    for lam in lambdas:
        check_index(nu, p + lam)
    law = tilted_jump_law(nu, p)
    killing = max(law.killing_rate, 0.0)
    alive = np.ones(replicas, dtype=bool)
    if killing > 0.0:
        alive = rng.exponential(1.0 / killing, replicas) > t
    counts = rng.poisson(law.total_rate * t, replicas)
    counts[~alive] = 0
    owners = np.repeat(np.arange(replicas), counts)
    xi = np.bincount(owners, weights=law.sample_jumps(rng, int(counts.sum())), minlength=replicas)
    kills = int((~alive).sum())
    if kills:
        logger.debug(f"tagged fragment killed on {kills} of {replicas} paths")

    results = []
    for lam in lambdas:
        sample = np.where(alive, np.exp(-lam * xi + killing * t), 0.0)
        mean = float(sample.mean())
        stderr = float(sample.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
        target = math.exp(-tilted_exponent(nu, p, lam) * t)
        results.append(LaplaceComparison(lam, mean, stderr, target, _z_score(mean - target, stderr), kills, replicas))
    return results


def _z_score(diff: float, stderr: float) -> float:
    if stderr > 0.0:
        return diff / stderr
    return 0.0 if abs(diff) < 1e-12 else math.copysign(math.inf, diff)
