import math
from dataclasses import dataclass, field, asdict
from typing import Dict
from typing import List
from typing import Optional
from scipy import optimize
from logger import logger
from dislocation import DislocationMeasure, NonIntegrable
from massPartition import MassPartition


ROOT_TOLERANCE = 1e-12
BIGGINS_TOLERANCE = 1e-10
BISECTION_MAX_ITER = 200
A3_GRID = [round(2.0 - 0.1 * k, 1) for k in range(10)]


class BelowLowerIndex(ValueError):
    pass


class NoMalthusianRoot(ArithmeticError):
    pass


class NoBigginsRoot(ArithmeticError):
    pass


def check_index(nu: DislocationMeasure, p: float) -> None:
    if not p > nu.p_lower:
        raise BelowLowerIndex(f"p={p} is not above the lower index {nu.p_lower}")


def phi(nu: DislocationMeasure, p: float) -> float:
    """Laplace exponent: integral of 1 - sum_i s_i^(1+p) against nu."""
    check_index(nu, p)
    q = 1.0 + p
    try:
        return nu.integrate(lambda s: 1.0 - s.power_sum(q))
    except NonIntegrable as e:
        raise BelowLowerIndex(f"Phi({p}) is not integrable: {e}") from e


def phi_prime(nu: DislocationMeasure, p: float) -> float:
    check_index(nu, p)
    q = 1.0 + p

    def h(s: MassPartition) -> float:
        return math.fsum(t**q * nl for t, nl in zip(s.terms, s.neg_log_terms))

    try:
        return nu.integrate(h)
    except NonIntegrable as e:
        raise BelowLowerIndex(f"Phi'({p}) is not integrable: {e}") from e


def tilted_exponent(nu: DislocationMeasure, p: float, lam: float) -> float:
    return phi(nu, lam + p) - phi(nu, p)


def malthusian(nu: DislocationMeasure, tol: float = ROOT_TOLERANCE, newton: bool = False) -> float:
    if nu.is_conservative():
        return 0.0

    hi = 0.0
    if phi(nu, hi) <= 0.0:
        raise NoMalthusianRoot("Phi(0) <= 0 for a dissipative measure")

    # Phi is increasing, walk towards the lower index until it turns negative
    lo: Optional[float] = None
    for k in range(1, 61):
        candidate = nu.p_lower + (hi - nu.p_lower) * 2.0**-k
        try:
            value = phi(nu, candidate)
        except BelowLowerIndex:
            break
        if value < 0.0:
            lo = candidate
            break
        hi = candidate
    if lo is None:
        raise NoMalthusianRoot(f"Phi has no sign change on ({nu.p_lower}, 0]")

    root = float(optimize.bisect(lambda p: phi(nu, p), lo, hi, xtol=1e-15, maxiter=BISECTION_MAX_ITER))
    residual = abs(phi(nu, root))
    if residual >= tol:
        raise NoMalthusianRoot(f"bisection stopped at p={root} with |Phi|={residual}")

    if newton:
        refined = float(optimize.newton(lambda p: phi(nu, p), root, fprime=lambda p: phi_prime(nu, p), tol=1e-15))
        if abs(refined - root) < 1e-9 and abs(phi(nu, refined)) <= residual:
            root = refined
        else:
            logger.warning(f"newton refinement {refined} disagrees with bisection {root}, keeping bisection")

    logger.debug(f"malthusian parameter p*={root} (|Phi|={residual})")
    return root


def _biggins_residual(nu: DislocationMeasure, p: float) -> float:
    return (1.0 + p) * phi_prime(nu, p) - phi(nu, p)


def biggins_threshold(nu: DislocationMeasure, tol: float = BIGGINS_TOLERANCE, p_star: Optional[float] = None) -> float:
    """
    The root p_bar of (1 + p) Phi'(p) = Phi(p). The additive martingale at p
    converges in L1 to a non-degenerate limit exactly for p_lower < p < p_bar.
    """
    lo = malthusian(nu) if p_star is None else p_star
    if _biggins_residual(nu, lo) <= 0.0:
        raise NoBigginsRoot(f"(1+p)Phi'(p) - Phi(p) is not positive at p*={lo}")

    hi = lo + 1.0
    for _ in range(12):
        if _biggins_residual(nu, hi) < 0.0:
            break
        lo, hi = hi, hi + 2.0 * (hi - lo)
    else:
        raise NoBigginsRoot(f"could not bracket the Biggins threshold below p={hi}")

    root = float(optimize.bisect(lambda p: _biggins_residual(nu, p), lo, hi, xtol=1e-15, maxiter=BISECTION_MAX_ITER))
    residual = abs(_biggins_residual(nu, root))
    if residual >= tol:
        raise NoBigginsRoot(f"bisection stopped at p={root} with residual {residual}")
    logger.debug(f"biggins threshold p_bar={root} (residual {residual})")
    return root


@dataclass
class AssumptionReport:
    a1: bool
    a2: bool
    a3: bool
    p_star: Optional[float] = None
    p0: Optional[float] = None
    a3_integral: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def all_hold(self) -> bool:
        return self.a1 and self.a2 and self.a3

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def assumption_report(nu: DislocationMeasure) -> AssumptionReport:
    notes: List[str] = []

    a1 = True
    if abs(nu.p_lower) < 1e-12:
        try:
            a1 = math.isfinite(phi_prime(nu, 1e-300))
        except BelowLowerIndex as e:
            a1 = False
            notes.append(f"A1: {e}")

    p_star: Optional[float] = None
    try:
        p_star = malthusian(nu)
        a2 = True
    except (NoMalthusianRoot, BelowLowerIndex) as e:
        a2 = False
        notes.append(f"A2: {e}")

    a3 = False
    p0: Optional[float] = None
    a3_integral: Optional[float] = None
    if p_star is not None:
        q = 1.0 + p_star
        for candidate in A3_GRID:
            try:
                value = nu.integrate(lambda s: s.power_sum(q) ** candidate)
            except NonIntegrable:
                continue
            if math.isfinite(value):
                a3, p0, a3_integral = True, candidate, value
                break
        if not a3:
            notes.append("A3: no p0 in (1, 2] gives a finite integral")
    else:
        notes.append("A3: needs the Malthusian parameter")

    return AssumptionReport(a1, a2, a3, p_star, p0, a3_integral, notes)


@dataclass(frozen=True)
class ExponentContext:
    measure: DislocationMeasure
    p_lower: float
    p_star: float
    p_bar: float
    phi_at_zero: float
    phi_prime_at_p_star: float
    conservative: bool
    assumptions: AssumptionReport

    @property
    def p0(self) -> Optional[float]:
        return self.assumptions.p0

    def summary(self) -> Dict[str, object]:
        return {
            "p_lower": self.p_lower,
            "p_star": self.p_star,
            "p_bar": self.p_bar,
            "phi_at_zero": self.phi_at_zero,
            "phi_prime_at_p_star": self.phi_prime_at_p_star,
            "speed_of_largest": phi_prime(self.measure, self.p_bar),
            "conservative": self.conservative,
            "assumptions": self.assumptions.to_dict(),
        }


def build_context(nu: DislocationMeasure, tol: float = ROOT_TOLERANCE) -> ExponentContext:
    conservative = nu.is_conservative()
    p_star = malthusian(nu, tol)
    p_bar = biggins_threshold(nu, p_star=p_star)
    phi_at_zero = 0.0 if conservative else phi(nu, 0.0)
    report = assumption_report(nu)
    if not report.all_hold():
        logger.warning(f"assumptions do not all hold: {report.notes}")
    logger.info(f"exponent context: p*={p_star}, p_bar={p_bar}, Phi(0)={phi_at_zero}")
    return ExponentContext(nu, nu.p_lower, p_star, p_bar, phi_at_zero, phi_prime(nu, p_star), conservative, report)


def martingale_regime(ctx: ExponentContext, p: float) -> str:
    check_index(ctx.measure, p)
    return "uniformly-integrable" if p < ctx.p_bar else "degenerate"
