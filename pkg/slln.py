import math
from dataclasses import dataclass, field
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
import numpy as np
from scipy import stats
from logger import logger
from common import make_rng, stream_seed
from dislocation import DislocationMeasure
from exponent import ExponentContext
from fragSim import DEFAULT_FRAGMENT_BUDGET, StoppingLine, refine, stopping_line
from observables import TestFunction
from replicaPool import ReplicaPool, run_replicas
from tagged import LimitMeasure, lattice_span, overshoot_samples, tilted_jump_law


Z_THRESHOLD = 3.0
SLOPE_TOLERANCE = 0.05
DEGENERATE_SPREAD = 1e-12
MONOTONE_TAIL = 4
MONOTONE_SLACK = 1e-9


class DegenerateRegression(ValueError):
    pass


def _weights(line: StoppingLine, p_star: float) -> np.ndarray:
    logs = np.array([f.log_mass for f in line.fragments])
    return np.exp(-(1.0 + p_star) * logs)


def empirical_pairing(line: StoppingLine, p_star: float, f: TestFunction) -> float:
    """<rho_eta, f> = sum_j X_j^(1+p*) f(X_j / eta)."""
    if not line.fragments:
        return 0.0
    masses = np.exp(-np.array([frag.log_mass for frag in line.fragments]))
    return float((_weights(line, p_star) * f.values(masses / line.eta)).sum())


def martingale_mass(line: StoppingLine, p_star: float) -> float:
    if not line.fragments:
        return 0.0
    return float(_weights(line, p_star).sum())


def absolute_pairing(line: StoppingLine, p_star: float, f: TestFunction) -> float:
    """sum_j X_j^(1+p*) f(X_j), f applied to the mass itself."""
    if not line.fragments:
        return 0.0
    masses = np.exp(-np.array([frag.log_mass for frag in line.fragments]))
    return float((_weights(line, p_star) * f.values(masses)).sum())


@dataclass
class TwoSampleComparison:
    lhs: float
    rhs: float
    lhs_stderr: float
    rhs_stderr: float
    z_score: float
    replicas: int

    def passed(self) -> bool:
        return abs(self.z_score) < Z_THRESHOLD


def _compare(lhs: np.ndarray, rhs: np.ndarray) -> TwoSampleComparison:
    lhs_se = float(lhs.std(ddof=1) / math.sqrt(lhs.size)) if lhs.size > 1 else 0.0
    rhs_se = float(rhs.std(ddof=1) / math.sqrt(rhs.size)) if rhs.size > 1 else 0.0
    diff = float(lhs.mean() - rhs.mean())
    pooled = math.hypot(lhs_se, rhs_se)
    if pooled > 0.0:
        z = diff / pooled
    else:
        z = 0.0 if abs(diff) < 1e-12 else math.copysign(math.inf, diff)
    return TwoSampleComparison(float(lhs.mean()), float(rhs.mean()), lhs_se, rhs_se, z, int(lhs.size))


def _line_values(nu: DislocationMeasure, eta: float, replicas: int, master_seed: int, value: Callable[[StoppingLine], float], pool: Optional[ReplicaPool], budget: int) -> np.ndarray:
    def one(r: int) -> float:
        line = stopping_line(nu, eta, stream_seed(master_seed, r, "fragment"), budget, keep_genealogy=False)
        return float(value(line))

    return np.array(run_replicas(one, range(replicas), pool))


def many_to_one_check(
    ctx: ExponentContext, eta: float, f: TestFunction, replicas: int, master_seed: int, pool: Optional[ReplicaPool] = None, budget: int = DEFAULT_FRAGMENT_BUDGET
) -> TwoSampleComparison:
    """
    Mean of sum_j X_j^(1+p*) f(X_j) over stopping lines against the mean of
    f(exp(-passage value)) for the tilted tagged fragment at level -log eta.
    """
    lhs = _line_values(ctx.measure, eta, replicas, master_seed, lambda line: absolute_pairing(line, ctx.p_star, f), pool, budget)
    law = tilted_jump_law(ctx.measure, ctx.p_star)
    passage, _ = overshoot_samples(law, max(-math.log(eta), 0.0), replicas, make_rng(stream_seed(master_seed, 0, "manyToOne")))
    rhs = f.values(np.exp(-passage))
    result = _compare(lhs, rhs)
    logger.info(f"many-to-one at eta={eta}, {f.name}: lhs {result.lhs} rhs {result.rhs} z {result.z_score}")
    return result


def expectation_form_check(
    ctx: ExponentContext, eta: float, f: TestFunction, replicas: int, master_seed: int, pool: Optional[ReplicaPool] = None, budget: int = DEFAULT_FRAGMENT_BUDGET
) -> TwoSampleComparison:
    """Mean of <rho_eta, f> against the mean of f(exp(-overshoot)) at level -log eta."""
    lhs = _line_values(ctx.measure, eta, replicas, master_seed, lambda line: empirical_pairing(line, ctx.p_star, f), pool, budget)
    law = tilted_jump_law(ctx.measure, ctx.p_star)
    _, over = overshoot_samples(law, max(-math.log(eta), 0.0), replicas, make_rng(stream_seed(master_seed, 0, "overshoot")))
    rhs = f.values(np.exp(-over))
    return _compare(lhs, rhs)


@dataclass
class SllnRecord:
    eta: float
    f_id: str
    pairing: float
    mass: float
    limit_pairing: float
    ratio: float
    fragment_count: int


@dataclass
class SllnTrajectory:
    replica: int
    seed: int
    eta_schedule: List[float]
    records: List[SllnRecord] = field(default_factory=list)

    def final(self, f_id: str) -> SllnRecord:
        return [r for r in self.records if r.f_id == f_id][-1]


def check_schedule(eta_schedule: List[float]) -> None:
    if not eta_schedule:
        raise ValueError("the eta schedule is empty")
    if any(not 0.0 < e for e in eta_schedule):
        raise ValueError(f"eta values must be positive, got {eta_schedule}")
    if any(b >= a for a, b in zip(eta_schedule, eta_schedule[1:])):
        raise ValueError(f"the eta schedule must be strictly decreasing, got {eta_schedule}")


def slln_trajectory(ctx: ExponentContext, functions: List[TestFunction], eta_schedule: List[float], limits: Dict[str, float], replica: int, master_seed: int, budget: int) -> SllnTrajectory:
    """One genealogy, refined through the schedule."""
    seed = stream_seed(master_seed, replica, "fragment")
    trajectory = SllnTrajectory(replica, seed, list(eta_schedule))
    line: Optional[StoppingLine] = None
    for eta in eta_schedule:
        line = stopping_line(ctx.measure, eta, seed, budget, keep_genealogy=False) if line is None else refine(line, eta, ctx.measure, budget)
        mass = martingale_mass(line, ctx.p_star)
        for f in functions:
            pairing = empirical_pairing(line, ctx.p_star, f)
            limit = limits[f.name]
            ratio = pairing / limit if limit > 0.0 else math.nan
            trajectory.records.append(SllnRecord(eta, f.name, pairing, mass, limit, ratio, len(line)))
    logger.debug(f"replica {replica}: {len(line) if line else 0} fragments at eta={eta_schedule[-1]}")
    return trajectory


def slln_experiment(
    ctx: ExponentContext,
    functions: List[TestFunction],
    eta_schedule: List[float],
    replicas: int,
    master_seed: int,
    replica_ids: Optional[List[int]] = None,
    pool: Optional[ReplicaPool] = None,
    budget: int = DEFAULT_FRAGMENT_BUDGET,
) -> List[SllnTrajectory]:
    check_schedule(eta_schedule)
    span = lattice_span(ctx.measure)
    if span is not None:
        logger.warning(f"jump sizes live on the lattice {span:.6g} Z, pairings may oscillate instead of converging")
    if not ctx.assumptions.all_hold():
        logger.warning(f"running the SLLN experiment although assumptions fail: {ctx.assumptions.notes}")

    rho = LimitMeasure(ctx)
    limits = {f.name: rho.pairing(f) for f in functions}
    for f in functions:
        if limits[f.name] == 0.0:
            logger.warning(f"<rho, {f.name}> = 0, its ratio column is undefined")
    ids = replica_ids if replica_ids is not None else list(range(replicas))
    logger.info(f"SLLN experiment: {len(ids)} replicas, {len(functions)} functions, eta down to {eta_schedule[-1]}")
    return run_replicas(lambda r: slln_trajectory(ctx, functions, eta_schedule, limits, r, master_seed, budget), ids, pool)


@dataclass
class SllnSummary:
    f_id: str
    eta: float
    median_ratio_error: float
    median_ratio_mass_gap: float
    quartiles: List[float]
    conservative: bool
    # median of the gap that passed() judges, one entry per eta of the schedule
    median_by_eta: List[float] = field(default_factory=list)

    @property
    def monotone_tail(self) -> bool:
        tail = self.median_by_eta[-MONOTONE_TAIL:]
        return all(b <= a + MONOTONE_SLACK for a, b in zip(tail, tail[1:]))

    def passed(self, tolerance: float = 0.05) -> bool:
        gap = self.median_ratio_error if self.conservative else self.median_ratio_mass_gap
        if self.conservative and not self.monotone_tail:
            return False
        return gap < tolerance


def _gap(record: SllnRecord, conservative: bool) -> float:
    return abs(record.ratio - 1.0) if conservative else abs(record.ratio - record.mass)


def summarize(trajectories: List[SllnTrajectory], conservative: bool) -> List[SllnSummary]:
    """
    Medians at the finest eta of |ratio - 1| and |ratio - <rho_eta, 1>| per
    function, plus the median gap at every eta of the schedule.
    """
    if not trajectories:
        return []
    summaries = []
    schedule = trajectories[0].eta_schedule
    eta = schedule[-1]
    for f_id in dict.fromkeys(r.f_id for r in trajectories[0].records):
        finals = [t.final(f_id) for t in trajectories]
        ratios = np.array([r.ratio for r in finals])
        if np.isnan(ratios).all():
            continue
        gaps = np.array([abs(r.ratio - r.mass) for r in finals])
        q1, q2, q3 = np.nanpercentile(ratios, [25, 50, 75])
        by_eta: List[float] = []
        for e in schedule:
            at_eta = [_gap(r, conservative) for t in trajectories for r in t.records if r.f_id == f_id and r.eta == e]
            by_eta.append(float(np.nanmedian(at_eta)))
        summaries.append(
            SllnSummary(f_id, eta, float(np.nanmedian(np.abs(ratios - 1.0))), float(np.nanmedian(gaps)), [float(q1), float(q2), float(q3)], conservative, by_eta)
        )
    return summaries


@dataclass
class RegressionResult:
    slope: float
    intercept: float
    slope_stderr: float
    replicas: int

    def passed(self) -> bool:
        return abs(self.slope - 1.0) <= SLOPE_TOLERANCE


def refinement_regression(
    ctx: ExponentContext, eta: float, eta_fine: float, replicas: int, master_seed: int, pool: Optional[ReplicaPool] = None, budget: int = DEFAULT_FRAGMENT_BUDGET
) -> RegressionResult:
    """Least squares of <rho_eta', 1> on <rho_eta, 1> over coupled lines; slope 1 for a martingale."""

    def pair(r: int) -> List[float]:
        coarse = stopping_line(ctx.measure, eta, stream_seed(master_seed, r, "fragment"), budget, keep_genealogy=False)
        fine = refine(coarse, eta_fine, ctx.measure, budget)
        return [martingale_mass(coarse, ctx.p_star), martingale_mass(fine, ctx.p_star)]

    values = np.array(run_replicas(pair, range(replicas), pool))
    if np.ptp(values[:, 0]) <= DEGENERATE_SPREAD:
        raise DegenerateRegression(f"<rho_eta, 1> is the same on every replica at eta={eta}, nothing to regress")
    fit = stats.linregress(values[:, 0], values[:, 1])
    return RegressionResult(float(fit.slope), float(fit.intercept), float(fit.stderr), replicas)
