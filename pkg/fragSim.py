import math
from dataclasses import dataclass, field, replace
from typing import List
from typing import Optional
from typing import Tuple
import numpy as np
from logger import logger
from common import make_rng, mix64
from dislocation import DislocationMeasure
from exponent import ExponentContext, phi


DEFAULT_FRAGMENT_BUDGET = 10**8
ROOT_CHILD_TAG = 0
# masses within this relative distance of eta count as equal to it, lattice masses hit eta up to rounding
FREEZE_TOLERANCE = 1e-12


class BudgetExceeded(RuntimeError):
    pass


class GenealogyMissing(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    """A stretch of an ancestral line during which the block did not split."""

    duration: float
    log_mass: float


@dataclass(frozen=True)
class Fragment:
    # log_mass holds -log of the mass, so it is >= 0 and products become sums
    fragment_id: int
    log_mass: float
    birth_time: float
    depth: int
    parent_id: Optional[int]
    frozen: bool = False
    freeze_time: float = 0.0
    ancestry: Optional[Tuple[Segment, ...]] = None

    @property
    def mass(self) -> float:
        return math.exp(-self.log_mass)


@dataclass(frozen=True)
class StoppingLine:
    eta: float
    seed: int
    fragments: Tuple[Fragment, ...]
    dust_events: int = 0
    dust_mass: float = 0.0
    keep_genealogy: bool = True

    def masses(self) -> List[float]:
        return [f.mass for f in self.fragments]

    def total_mass(self) -> float:
        return math.fsum(self.masses())

    def __len__(self) -> int:
        return len(self.fragments)


@dataclass
class Population:
    time: float
    active: List[Fragment] = field(default_factory=list)
    absorbed: List[Fragment] = field(default_factory=list)
    dust_mass: float = 0.0

    def active_masses(self) -> List[float]:
        return [f.mass for f in self.active]

    def absorbed_mass(self) -> float:
        return math.fsum(f.mass for f in self.absorbed)

    def total_mass(self) -> float:
        return math.fsum(self.active_masses()) + self.absorbed_mass()


def root_id(seed: int) -> int:
    return mix64(seed, ROOT_CHILD_TAG)


def child_id(parent_id: int, index: int) -> int:
    return mix64(parent_id, index + 1)


class Genealogy:
    """
    Lazily expanded fragmentation tree of one replica. Every block owns a
    counter-based stream keyed by its id, drawing first its exponential
    holding time and then its dislocation, so the tree is a pure function of
    the seed and does not depend on the order in which blocks are visited.
    """

    def __init__(self, nu: DislocationMeasure, seed: int, budget: int = DEFAULT_FRAGMENT_BUDGET):
        if not nu.is_finite_rate():
            raise ValueError("the simulator needs a dislocation measure with finite total rate")
        self._nu = nu
        self._seed = seed
        self._budget = budget
        self._visited = 0

    def root(self) -> Fragment:
        return Fragment(root_id(self._seed), 0.0, 0.0, 0, None, ancestry=())

    def split(self, frag: Fragment, keep_genealogy: bool = True) -> Tuple[float, List[Fragment], float]:
        """Holding time of frag, its children and the dust mass lost at the split."""
        self._visited += 1
        if self._visited > self._budget:
            raise BudgetExceeded(f"more than {self._budget} fragments simulated")

        rng = make_rng(frag.fragment_id)
        holding = float(rng.exponential(1.0 / self._nu.total_rate))
        partition = self._nu.sample(rng)
        split_time = frag.birth_time + holding

        ancestry: Optional[Tuple[Segment, ...]] = None
        if keep_genealogy and frag.ancestry is not None:
            ancestry = frag.ancestry + (Segment(holding, frag.log_mass),)

        children = [
            Fragment(child_id(frag.fragment_id, i), frag.log_mass + nl, split_time, frag.depth + 1, frag.fragment_id, ancestry=ancestry) for i, nl in enumerate(partition.neg_log_terms)
        ]
        return holding, children, partition.dust * frag.mass

    @property
    def visited(self) -> int:
        return self._visited


def _freeze(frag: Fragment) -> Fragment:
    return replace(frag, frozen=True, freeze_time=frag.birth_time)


def _below(frag: Fragment, log_eta: float) -> bool:
    return frag.log_mass > log_eta + FREEZE_TOLERANCE


def _expand_below(genealogy: Genealogy, start: List[Fragment], log_eta: float, keep_genealogy: bool) -> Tuple[List[Fragment], int, float]:
    frozen: List[Fragment] = []
    dust_events = 0
    dust_mass = 0.0
    stack = list(reversed(start))
    while stack:
        frag = stack.pop()
        # strictly smaller than eta means -log mass strictly larger than -log eta
        if _below(frag, log_eta):
            frozen.append(_freeze(frag))
            continue
        _, children, dust = genealogy.split(frag, keep_genealogy)
        if dust > 0.0:
            dust_events += 1
            dust_mass += dust
        stack.extend(reversed(children))
    return frozen, dust_events, dust_mass


def stopping_line(nu: DislocationMeasure, eta: float, seed: int, budget: int = DEFAULT_FRAGMENT_BUDGET, keep_genealogy: bool = True) -> StoppingLine:
    """
    Fragments frozen the instant they become strictly smaller than eta,
    simulated depth first from a unit block. eta >= 1 gives the unit block.
    """
    if not eta > 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    genealogy = Genealogy(nu, seed, budget)
    root = genealogy.root()
    if eta >= 1.0:
        return StoppingLine(eta, seed, (_freeze(root),), keep_genealogy=keep_genealogy)

    frozen, dust_events, dust_mass = _expand_below(genealogy, [root], -math.log(eta), keep_genealogy)
    logger.debug(f"stopping line eta={eta}: {len(frozen)} fragments, {genealogy.visited} splits")
    return StoppingLine(eta, seed, tuple(frozen), dust_events, dust_mass, keep_genealogy)


def refine(line: StoppingLine, eta: float, nu: DislocationMeasure, budget: int = DEFAULT_FRAGMENT_BUDGET) -> StoppingLine:
    """
    Continue the genealogy of line down to the finer level eta. Fragments
    already below eta are carried over, the others are split further with
    their own streams, so the result equals stopping_line(nu, eta) for the
    same seed.
    """
    if eta > line.eta:
        raise ValueError(f"refinement needs eta <= {line.eta}, got {eta}")
    if eta == line.eta:
        return line

    genealogy = Genealogy(nu, line.seed, budget)
    log_eta = -math.log(eta)
    fragments: List[Fragment] = []
    dust_events = line.dust_events
    dust_mass = line.dust_mass
    for frag in line.fragments:
        if _below(frag, log_eta):
            fragments.append(frag)
            continue
        reopened = replace(frag, frozen=False)
        frozen, events, dust = _expand_below(genealogy, [reopened], log_eta, line.keep_genealogy)
        fragments.extend(frozen)
        dust_events += events
        dust_mass += dust
    return StoppingLine(eta, line.seed, tuple(fragments), dust_events, dust_mass, line.keep_genealogy)


def simulate_until(nu: DislocationMeasure, t: float, floor: float, seed: int, budget: int = DEFAULT_FRAGMENT_BUDGET) -> Population:
    """
    All dislocations up to time t. Blocks lighter than floor are moved to
    the absorbed ledger with their mass instead of being split further.
    """
    genealogy = Genealogy(nu, seed, budget)
    pop = Population(time=t)
    log_floor = math.inf if floor <= 0.0 else -math.log(floor)
    stack = [genealogy.root()]
    while stack:
        frag = stack.pop()
        if frag.log_mass > log_floor:
            pop.absorbed.append(frag)
            continue
        holding, children, dust = genealogy.split(frag, keep_genealogy=False)
        if frag.birth_time + holding > t:
            pop.active.append(frag)
            continue
        pop.dust_mass += dust
        stack.extend(reversed(children))
    return pop


def largest_fragment(nu: DislocationMeasure, t: float, seed: int, budget: int = DEFAULT_FRAGMENT_BUDGET) -> float:
    """
    Mass of the largest block alive at time t. Blocks never grow, so a
    subtree whose root is no heavier than the best block found so far is
    skipped; heaviest children are explored first to tighten the bound.
    """
    genealogy = Genealogy(nu, seed, budget)
    best = math.inf
    stack = [genealogy.root()]
    while stack:
        frag = stack.pop()
        if frag.log_mass >= best:
            continue
        holding, children, _ = genealogy.split(frag, keep_genealogy=False)
        if frag.birth_time + holding > t:
            best = frag.log_mass
            continue
        stack.extend(sorted(children, key=lambda c: -c.log_mass))
    return math.exp(-best) if math.isfinite(best) else 0.0


def additive_martingale(pop: Population, p: float, ctx: ExponentContext) -> float:
    """Lambda_t(p) = sum_i X_i(t)^(1+p) exp(Phi(p) t), accumulated per term in log space."""
    phi_p = phi(ctx.measure, p)
    q = 1.0 + p
    if not pop.active:
        return 0.0
    logs = np.array([-q * f.log_mass for f in pop.active]) + phi_p * pop.time
    return float(np.exp(logs).sum())


def self_similar_freeze_times(line: StoppingLine, alpha: float) -> List[float]:
    """
    Freeze times after the self-similar time change of index alpha: along
    each ancestral line a segment of duration h spent at mass m lasts
    h * m^alpha. Masses are untouched, the stopping line is blind to the
    time change.
    """
    times = []
    for frag in line.fragments:
        if frag.ancestry is None:
            raise GenealogyMissing(f"fragment {frag.fragment_id} was simulated without its ancestry")
        times.append(math.fsum(seg.duration * math.exp(-alpha * seg.log_mass) for seg in frag.ancestry))
    return times
