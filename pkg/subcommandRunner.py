import math
from typing import Any
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
import numpy as np
from logger import logger
from artifacts import Artifact, OVERSHOOT_COLUMNS, SELF_SIMILAR_COLUMNS, SLLN_COLUMNS, STOPPING_LINE_COLUMNS, write_artifact
from common import make_rng, replica_rng, stream_seed
from dislocation import DislocationMeasure, NonIntegrable
from exponent import BelowLowerIndex, ExponentContext, NoBigginsRoot, NoMalthusianRoot, assumption_report, build_context, martingale_regime, phi, phi_prime
from fragSim import BudgetExceeded, GenealogyMissing, StoppingLine, additive_martingale, largest_fragment, refine, self_similar_freeze_times, simulate_until, stopping_line
from observables import identity
from replicaPool import ReplicaPool
from runConfig import ConfigValidationError, RunConfig
from slln import Z_THRESHOLD, DegenerateRegression, many_to_one_check, martingale_mass, slln_experiment, summarize
from tagged import DegenerateLimit, KilledBeforePassage, LatticeDetected, LimitMeasure, PassageNotReached, overshoot_sample, renewal_limit_check, tagged_path_check, tilted_jump_law

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

MASS_TOLERANCE = 1e-9
SPEED_TOLERANCE = 0.15
KS_THRESHOLD = 0.01
# critical value of the one-sample KS statistic at level 1e-3, times sqrt(N)
KS_CRITICAL = 1.95
LIMIT_CDF_POINTS = 101


def _mean_check(values: np.ndarray, target: float = 1.0) -> Dict[str, float]:
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    if stderr > 0.0:
        z = (mean - target) / stderr
    else:
        z = 0.0 if abs(mean - target) <= MASS_TOLERANCE else math.inf
    return {"mean": mean, "stderr": stderr, "z_score": z}


class SubcommandRunner:
    def __init__(self, cfg: RunConfig, replica_ids: Optional[List[int]] = None, measure: Optional[DislocationMeasure] = None, pool: Optional[ReplicaPool] = None):
        self._cfg = cfg
        self._nu = measure if measure is not None else cfg.build_measure()
        self._ids = replica_ids if replica_ids is not None else list(range(cfg.run.replicas))
        self._pool = pool if pool is not None else ReplicaPool()
        self._ctx: Optional[ExponentContext] = None
        self._subcommands: Dict[str, Callable[[], Artifact]] = {
            "phi": self.phi,
            "malthus": self.malthus,
            "assumptions": self.assumptions,
            "stopping-line": self.stopping_line,
            "martingale": self.martingale,
            "additive": self.additive,
            "many-to-one": self.many_to_one,
            "overshoot": self.overshoot,
            "renewal": self.renewal,
            "tagged": self.tagged,
            "limit": self.limit,
            "slln": self.slln,
            "self-similar-times": self.self_similar_times,
            "speed": self.speed,
        }

    @property
    def ctx(self) -> ExponentContext:
        if self._ctx is None:
            self._ctx = build_context(self._nu)
        return self._ctx

    def subcommands(self) -> List[str]:
        return list(self._subcommands)

    def run(self, subcommand: str) -> Artifact:
        if subcommand not in self._subcommands:
            raise ConfigValidationError("subcommand", f"unknown subcommand '{subcommand}'")
        logger.info(f"running {subcommand} on {self._nu.describe()}")
        return self._subcommands[subcommand]()

    def _seed(self, replica: int) -> int:
        return stream_seed(self._cfg.run.master_seed, replica, "fragment")

    def _lines(self, eta: float, keep_genealogy: bool = False) -> List[StoppingLine]:
        budget = self._cfg.run.fragment_budget
        return self._pool.map(lambda r: stopping_line(self._nu, eta, self._seed(r), budget, keep_genealogy), self._ids)

    def phi(self) -> Artifact:
        rows: List[List[Any]] = [[p, phi(self._nu, p), phi_prime(self._nu, p)] for p in self._cfg.run.p_grid]
        return Artifact(["p", "phi", "phi_prime"], rows)

    def malthus(self) -> Artifact:
        summary = self.ctx.summary()
        if self._cfg.run.p is not None:
            summary["regime"] = martingale_regime(self.ctx, self._cfg.run.p)
        rows: List[List[Any]] = [[k, v] for k, v in summary.items() if not isinstance(v, dict)]
        return Artifact(["key", "value"], rows, summary)

    def assumptions(self) -> Artifact:
        report = assumption_report(self._nu)
        rows: List[List[Any]] = [["a1", report.a1], ["a2", report.a2], ["a3", report.a3]]
        return Artifact(["assumption", "holds"], rows, report.to_dict(), report.all_hold())

    def stopping_line(self) -> Artifact:
        q = 1.0 + self.ctx.p_star
        lines = self._lines(self._cfg.run.eta)
        rows: List[List[Any]] = []
        for r, line in zip(self._ids, lines):
            rows.extend([r, f.fragment_id, f.mass, f.freeze_time, f.depth, math.exp(-q * f.log_mass)] for f in line.fragments)
        totals = np.array([line.total_mass() for line in lines])
        passed = not self.ctx.conservative or bool(np.all(np.abs(totals - 1.0) <= MASS_TOLERANCE))
        summary = {"eta": self._cfg.run.eta, "replicas": len(lines), "mean_fragments": float(np.mean([len(line) for line in lines])), "max_mass_defect": float(np.max(np.abs(totals - 1.0)))}
        return Artifact(STOPPING_LINE_COLUMNS, rows, summary, passed)

    def martingale(self) -> Artifact:
        schedule = self._cfg.run.eta_schedule
        p_star = self.ctx.p_star
        budget = self._cfg.run.fragment_budget

        def masses(r: int) -> List[List[Any]]:
            out: List[List[Any]] = []
            line: Optional[StoppingLine] = None
            for eta in schedule:
                line = stopping_line(self._nu, eta, self._seed(r), budget, keep_genealogy=False) if line is None else refine(line, eta, self._nu, budget)
                out.append([r, eta, martingale_mass(line, p_star), len(line)])
            return out

        rows = [row for block in self._pool.map(masses, self._ids) for row in block]
        summary: Dict[str, Any] = {}
        passed = True
        for eta in schedule:
            values = np.array([float(row[2]) for row in rows if row[1] == eta])
            check = _mean_check(values)
            zeros = int((values == 0.0).sum())
            summary[f"eta={eta!r}"] = dict(check, zero_mass_replicas=zeros)
            if self.ctx.conservative:
                passed = passed and bool(np.all(np.abs(values - 1.0) <= MASS_TOLERANCE))
            else:
                passed = passed and abs(check["z_score"]) < Z_THRESHOLD and zeros == 0
        return Artifact(["replica", "eta", "mass", "fragment_count"], rows, summary, passed)

    def additive(self) -> Artifact:
        run = self._cfg.run
        ctx = self.ctx
        p = run.p if run.p is not None else ctx.p_star

        def one(r: int) -> List[Any]:
            pop = simulate_until(self._nu, run.t, run.floor, self._seed(r), run.fragment_budget)
            return [r, run.t, p, additive_martingale(pop, p, ctx), len(pop.active), pop.absorbed_mass(), pop.dust_mass]

        rows = self._pool.map(one, self._ids)
        check = _mean_check(np.array([float(row[3]) for row in rows]))
        regime = martingale_regime(ctx, p)
        summary: Dict[str, Any] = {**check, "regime": regime}
        passed = abs(check["z_score"]) < Z_THRESHOLD or regime == "degenerate"
        return Artifact(["replica", "t", "p", "lambda", "active_count", "absorbed_mass", "dust_mass"], rows, summary, passed)

    def many_to_one(self) -> Artifact:
        run = self._cfg.run
        rows: List[List[Any]] = []
        passed = True
        for f in self._cfg.test_functions():
            result = many_to_one_check(self.ctx, run.eta, f, run.replicas, run.master_seed, self._pool, run.fragment_budget)
            rows.append([f.name, run.eta, result.lhs, result.rhs, result.lhs_stderr, result.rhs_stderr, result.z_score, result.replicas])
            passed = passed and result.passed()
        return Artifact(["f_id", "eta", "lhs", "rhs", "lhs_stderr", "rhs_stderr", "z_score", "replicas"], rows, passed=passed)

    def overshoot(self) -> Artifact:
        run = self._cfg.run
        p = run.p if run.p is not None else self.ctx.p_star
        law = tilted_jump_law(self._nu, p)

        def one(r: int) -> List[List[Any]]:
            rng = replica_rng(run.master_seed, r, "overshoot")
            out: List[List[Any]] = []
            for x in run.x_grid:
                passage, over = overshoot_sample(law, x, rng)
                out.append([r, x, passage, over, math.exp(-over)])
            return out

        rows = [row for block in self._pool.map(one, self._ids) for row in block]
        summary: Dict[str, Any] = {}
        for x in run.x_grid:
            summary[f"x={x!r}"] = float(np.mean([float(row[4]) for row in rows if row[1] == x]))
        if p == self.ctx.p_star:
            summary["limit_identity_pairing"] = LimitMeasure(self.ctx).pairing(identity())
        return Artifact(OVERSHOOT_COLUMNS, rows, summary)

    def renewal(self) -> Artifact:
        run = self._cfg.run
        results = renewal_limit_check(self.ctx, run.x_grid, run.replicas, make_rng(stream_seed(run.master_seed, 0, "overshoot")))
        threshold = max(KS_THRESHOLD, KS_CRITICAL / math.sqrt(run.replicas))
        rows: List[List[Any]] = [[res.x, res.ks_distance, res.p_value, res.replicas] for res in results]
        passed = results[-1].ks_distance < threshold if results else True
        return Artifact(["x", "ks_distance", "p_value", "replicas"], rows, {"threshold": threshold}, passed)

    def tagged(self) -> Artifact:
        run = self._cfg.run
        p = run.p if run.p is not None else 0.0
        results = tagged_path_check(self._nu, p, run.t, run.replicas, make_rng(stream_seed(run.master_seed, 0, "tagged")), run.lambdas)
        rows: List[List[Any]] = [[res.lam, res.empirical, res.stderr, res.target, res.z_score, res.kills, res.replicas] for res in results]
        passed = all(abs(res.z_score) < Z_THRESHOLD for res in results)
        return Artifact(["lambda", "empirical", "stderr", "target", "z_score", "kills", "replicas"], rows, {"p": p, "t": run.t}, passed)

    def limit(self) -> Artifact:
        rho = LimitMeasure(self.ctx)
        grid = np.linspace(0.0, 1.0, LIMIT_CDF_POINTS)
        cdf = rho.cdf(grid)
        rows: List[List[Any]] = [[float(u), float(c)] for u, c in zip(grid, cdf)]
        pairings = {f.name: rho.pairing(f) for f in self._cfg.test_functions()}
        total = float(cdf[-1])
        tolerance = 1e-9 if rho.smallest_term is not None else 1e-7
        return Artifact(["u", "cdf"], rows, {"pairings": pairings, "total_mass": total}, abs(total - 1.0) <= tolerance)

    def slln(self) -> Artifact:
        run = self._cfg.run
        trajectories = slln_experiment(self.ctx, self._cfg.test_functions(), run.eta_schedule, run.replicas, run.master_seed, self._ids, self._pool, run.fragment_budget)
        rows: List[List[Any]] = []
        for t in trajectories:
            rows.extend([t.replica, rec.eta, rec.f_id, rec.pairing, rec.mass, rec.limit_pairing, rec.ratio, rec.fragment_count] for rec in t.records)
        summaries = summarize(trajectories, self.ctx.conservative)
        summary = {
            s.f_id: {
                "eta": s.eta,
                "median_abs_ratio_error": s.median_ratio_error,
                "median_ratio_mass_gap": s.median_ratio_mass_gap,
                "ratio_quartiles": s.quartiles,
                "median_by_eta": s.median_by_eta,
                "monotone_tail": s.monotone_tail,
                "passed": s.passed(),
            }
            for s in summaries
        }
        return Artifact(SLLN_COLUMNS, rows, summary, all(s.passed() for s in summaries))

    def self_similar_times(self) -> Artifact:
        alpha = self._cfg.run.alpha
        lines = self._lines(self._cfg.run.eta, keep_genealogy=True)
        rows: List[List[Any]] = []
        for r, line in zip(self._ids, lines):
            times = self_similar_freeze_times(line, alpha)
            rows.extend([r, f.fragment_id, f.mass, f.freeze_time, t] for f, t in zip(line.fragments, times))
        return Artifact(SELF_SIMILAR_COLUMNS, rows, {"alpha": alpha})

    def speed(self) -> Artifact:
        rows = self._pool.map(self._speed_row, self._ids)
        speeds = np.array([float(row[3]) for row in rows])
        t = self._cfg.run.t
        speed = phi_prime(self._nu, self.ctx.p_bar)
        # the largest fragment lags its asymptotic speed by 3 log t / (2 (1 + p_bar)) in -log mass
        target = speed + 1.5 * math.log(t) / ((1.0 + self.ctx.p_bar) * t) if t > 1.0 else speed
        median = float(np.median(speeds))
        summary = {"median_speed": median, "phi_prime_at_p_bar": speed, "finite_time_target": target, "relative_error": abs(median / target - 1.0)}
        return Artifact(["replica", "t", "largest", "speed"], rows, summary, abs(median / target - 1.0) < SPEED_TOLERANCE)

    def _speed_row(self, r: int) -> List[Any]:
        run = self._cfg.run
        x1 = largest_fragment(self._nu, run.t, self._seed(r), run.fragment_budget)
        return [r, run.t, x1, -math.log(x1) / run.t if x1 > 0.0 and run.t > 0.0 else math.inf]


def dispatch(subcommand: str, cfg: RunConfig, replica_ids: Optional[List[int]] = None, measure: Optional[DislocationMeasure] = None, pool: Optional[ReplicaPool] = None) -> int:
    try:
        runner = SubcommandRunner(cfg, replica_ids, measure, pool)
        artifact = runner.run(subcommand)
    except LatticeDetected as e:
        logger.error(f"check refused: {e}")
        return EXIT_CHECK_FAILED
    except (
        BudgetExceeded,
        NonIntegrable,
        BelowLowerIndex,
        NoMalthusianRoot,
        NoBigginsRoot,
        KilledBeforePassage,
        PassageNotReached,
        DegenerateLimit,
        DegenerateRegression,
        GenealogyMissing,
    ) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_NUMERICAL_ERROR
    except ValueError as e:
        logger.error(f"invalid configuration: {e}")
        return EXIT_CONFIG_ERROR

    write_artifact(artifact, cfg.output.path, cfg.output.format, cfg.to_dict())
    if not artifact.passed:
        logger.error(f"{subcommand} check failed")
        return EXIT_CHECK_FAILED
    return EXIT_OK
