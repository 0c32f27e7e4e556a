"""Elitist multi-objective evolutionary engine with constraint domination.

Non-dominated sorting, crowding-distance truncation, binary tournaments,
simulated binary crossover and polynomial mutation drive a population of
design vectors; every evaluation lands in a deduplicated archive whose
feasible Pareto front is tracked incrementally.  All randomness flows from
one master seed through per-generation, per-operator substreams, so results
are bitwise reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .design_space import DesignSpec, round_half_away
from .machine_model import IntermediateMeasures
from .sampling import SamplingConfig, lhs_feasible, lhs_sample

KPI_SENTINEL = float("inf")   # objectives of designs that skipped physics

_OP_SELECT, _OP_CROSSOVER, _OP_MUTATE = 1, 2, 3


class EvaluatorFailure(RuntimeError):
    """Evaluator raised; carries the partial archive for persistence."""

    def __init__(self, message: str, archive: "ParetoArchive | None" = None,
                 history: list | None = None):
        super().__init__(message)
        self.archive = archive
        self.history = history or []


@dataclass
class EvalOutcome:
    """What an evaluator returns for one design vector."""

    kpis: tuple[float, float]
    constraints: np.ndarray
    measures: IntermediateMeasures | None = None
    physics_skipped: bool = False
    tag: str = "analytic"


@dataclass
class EvaluatedDesign:
    uid: int
    params: np.ndarray
    kpis: tuple[float, float]
    constraints: np.ndarray
    feasible: bool
    violation: float
    generation: int
    evaluator: str
    measures: IntermediateMeasures | None = None
    physics_skipped: bool = False


def make_design(uid: int, v: np.ndarray, generation: int,
                outcome: EvalOutcome) -> EvaluatedDesign:
    cons = np.asarray(outcome.constraints, dtype=float)
    finite = cons[~np.isnan(cons)]
    violation = float(np.sum(np.maximum(finite, 0.0))) if len(finite) else 0.0
    feasible = violation == 0.0 and not np.isnan(cons).any()
    return EvaluatedDesign(
        uid=uid, params=np.asarray(v, dtype=float).copy(),
        kpis=(float(outcome.kpis[0]), float(outcome.kpis[1])),
        constraints=cons, feasible=feasible, violation=violation,
        generation=generation, evaluator=outcome.tag,
        measures=outcome.measures, physics_skipped=outcome.physics_skipped,
    )


def dominates(a: EvaluatedDesign, b: EvaluatedDesign) -> bool:
    """Constraint domination: feasibility first, then violation, then
    componentwise objectives with at least one strict improvement."""
    if a.feasible:
        if not b.feasible:
            return True
        a1, a2 = a.kpis
        b1, b2 = b.kpis
        return a1 <= b1 and a2 <= b2 and (a1 < b1 or a2 < b2)
    if b.feasible:
        return False
    return a.violation < b.violation


def non_dominated_sort(pop: Sequence[EvaluatedDesign]) -> list[list[int]]:
    """Partition indices into fronts F1, F2, ... (stable by insertion order)."""
    n = len(pop)
    if n == 0:
        raise ValueError("empty population")
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    n_dominators = [0] * n
    for i in range(n):
        a = pop[i]
        for j in range(i + 1, n):
            b = pop[j]
            if dominates(a, b):
                dominated_by[i].append(j)
                n_dominators[j] += 1
            elif dominates(b, a):
                dominated_by[j].append(i)
                n_dominators[i] += 1
    fronts: list[list[int]] = []
    current = [i for i in range(n) if n_dominators[i] == 0]
    while current:
        fronts.append(current)
        nxt: list[int] = []
        for i in current:
            for j in dominated_by[i]:
                n_dominators[j] -= 1
                if n_dominators[j] == 0:
                    nxt.append(j)
        nxt.sort()
        current = nxt
    return fronts


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    """Crowding distance per member of one front (n, m objectives).

    Boundary members get +inf; interior members accumulate neighbor gaps
    normalized by the objective range; zero-range objectives contribute 0.
    """
    objectives = np.asarray(objectives, dtype=float)
    n, m = objectives.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(m):
        order = np.argsort(objectives[:, j], kind="stable")
        col = objectives[order, j]
        span = col[-1] - col[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span > 0.0:
            interior = order[1:-1]
            dist[interior] += (col[2:] - col[:-2]) / span
    return dist


def rank_population(pop: Sequence[EvaluatedDesign]) -> tuple[np.ndarray, np.ndarray]:
    """(front rank, crowding distance) arrays for one population."""
    fronts = non_dominated_sort(pop)
    ranks = np.empty(len(pop), dtype=int)
    crowd = np.empty(len(pop), dtype=float)
    for r, front in enumerate(fronts):
        ranks[front] = r
        if pop[front[0]].feasible:
            objs = np.array([pop[i].kpis for i in front])
            crowd[front] = crowding_distance(objs)
        else:
            # Members of an infeasible front tie on violation; crowding is
            # not meaningful on sentinel objectives.
            crowd[front] = np.inf
    return ranks, crowd


def tournament_select(pop: Sequence[EvaluatedDesign], ranks: np.ndarray,
                      crowd: np.ndarray, rng: np.random.Generator) -> int:
    """Binary tournament: lower rank wins, then larger crowding, then coin."""
    i, j = rng.integers(0, len(pop), size=2)
    if ranks[i] != ranks[j]:
        return int(i if ranks[i] < ranks[j] else j)
    if crowd[i] != crowd[j]:
        return int(i if crowd[i] > crowd[j] else j)
    return int(i if rng.integers(0, 2) == 0 else j)


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int
    population: int = 64
    max_generations: int = 100
    crossover_prob: float = 0.9
    eta_crossover: float = 15.0
    mutation_prob: float | None = None   # None -> 1 / n_dims
    eta_mutation: float = 20.0
    int_reset_prob: float = 0.1
    hv_window: int = 10
    hv_tol: float = 1e-3
    budget_multiplier: int = 1
    hv_reference: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be even and >= 2")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        for name in ("crossover_prob", "int_reset_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must be in [0, 1]")
        if self.budget_multiplier < 1:
            raise ValueError("budget_multiplier must be >= 1")


def _sbx_pair(x1: float, x2: float, lo: float, hi: float, eta: float,
              rng: np.random.Generator) -> tuple[float, float]:
    """Bounded simulated binary crossover of one variable (with the usual
    per-variable child swap); identical parents pass through unchanged."""
    if abs(x1 - x2) < 1e-14:
        return x1, x2
    yl, yu = (x1, x2) if x1 < x2 else (x2, x1)
    u = rng.random()
    exp = 1.0 / (eta + 1.0)

    beta = 1.0 + 2.0 * (yl - lo) / (yu - yl)
    alpha = 2.0 - beta ** -(eta + 1.0)
    betaq = (u * alpha) ** exp if u <= 1.0 / alpha \
        else (1.0 / (2.0 - u * alpha)) ** exp
    c1 = 0.5 * ((yl + yu) - betaq * (yu - yl))

    beta = 1.0 + 2.0 * (hi - yu) / (yu - yl)
    alpha = 2.0 - beta ** -(eta + 1.0)
    betaq = (u * alpha) ** exp if u <= 1.0 / alpha \
        else (1.0 / (2.0 - u * alpha)) ** exp
    c2 = 0.5 * ((yl + yu) + betaq * (yu - yl))

    c1 = min(max(c1, lo), hi)
    c2 = min(max(c2, lo), hi)
    if rng.random() <= 0.5:
        c1, c2 = c2, c1
    return c1, c2


def sbx_crossover(p1: np.ndarray, p2: np.ndarray, spec: DesignSpec,
                  cfg: OptimizerConfig,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover, bounded; integer variables swap uniformly."""
    c1 = np.asarray(p1, dtype=float).copy()
    c2 = np.asarray(p2, dtype=float).copy()
    if rng.random() >= cfg.crossover_prob:
        return c1, c2
    lo, hi = spec.lower_bounds(), spec.upper_bounds()
    for d, par in enumerate(spec.parameters):
        if par.integer:
            if rng.random() < 0.5:
                c1[d], c2[d] = c2[d], c1[d]
            c1[d] = min(max(round_half_away(c1[d]), lo[d]), hi[d])
            c2[d] = min(max(round_half_away(c2[d]), lo[d]), hi[d])
        elif rng.random() < 0.5:
            c1[d], c2[d] = _sbx_pair(c1[d], c2[d], lo[d], hi[d],
                                     cfg.eta_crossover, rng)
    return c1, c2


def polynomial_mutation(v: np.ndarray, spec: DesignSpec, cfg: OptimizerConfig,
                        rng: np.random.Generator) -> np.ndarray:
    """Polynomial mutation scaled to each variable range, bounded; integer
    variables reset uniformly with probability ``int_reset_prob``."""
    out = np.asarray(v, dtype=float).copy()
    lo, hi = spec.lower_bounds(), spec.upper_bounds()
    p_mut = cfg.mutation_prob if cfg.mutation_prob is not None else 1.0 / spec.n_dims
    for d, par in enumerate(spec.parameters):
        if par.integer:
            if rng.random() < cfg.int_reset_prob:
                out[d] = float(rng.integers(int(lo[d]), int(hi[d]) + 1))
        elif rng.random() < p_mut:
            u = rng.random()
            if u < 0.5:
                delta = (2.0 * u) ** (1.0 / (cfg.eta_mutation + 1.0)) - 1.0
            else:
                delta = 1.0 - (2.0 * (1.0 - u)) ** (1.0 / (cfg.eta_mutation + 1.0))
            out[d] = min(max(out[d] + delta * (hi[d] - lo[d]), lo[d]), hi[d])
    return out


def _weakly_dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[0] and a[1] <= b[1]


def _strictly_dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


class ParetoArchive:
    """Append-only store of every evaluated design.

    Designs are deduplicated on the parameter vector rounded to six
    significant digits; the feasible Pareto front is maintained
    incrementally so per-generation indicator updates stay cheap.
    """

    def __init__(self) -> None:
        self._members: list[EvaluatedDesign] = []
        self._index: dict[tuple, EvaluatedDesign] = {}
        self._front: list[EvaluatedDesign] = []

    @staticmethod
    def dedupe_key(v: np.ndarray) -> tuple:
        return tuple(float(f"{x:.6g}") for x in v)

    def __len__(self) -> int:
        return len(self._members)

    @property
    def members(self) -> list[EvaluatedDesign]:
        return list(self._members)

    def add(self, design: EvaluatedDesign) -> bool:
        """Store unless a design with the same dedupe key exists; returns
        whether the design was stored."""
        key = self.dedupe_key(design.params)
        if key in self._index:
            return False
        self._index[key] = design
        self._members.append(design)
        if design.feasible:
            self._update_front(design)
        return True

    def _update_front(self, design: EvaluatedDesign) -> None:
        for f in self._front:
            if _strictly_dominates(f.kpis, design.kpis):
                return
        self._front = [f for f in self._front
                       if not _strictly_dominates(design.kpis, f.kpis)]
        self._front.append(design)

    def pareto_front(self) -> list[EvaluatedDesign]:
        """Feasible, mutually non-dominated members in insertion order."""
        return sorted(self._front, key=lambda d: d.uid)

    def feasible_count(self) -> int:
        return sum(1 for d in self._members if d.feasible)


def hypervolume_2d(points: np.ndarray, reference: tuple[float, float]) -> float:
    """Exact dominated area of a 2-objective front against a reference point.

    Points that do not dominate the reference are discarded.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    rx, ry = float(reference[0]), float(reference[1])
    pts = pts[(pts[:, 0] <= rx) & (pts[:, 1] <= ry)]
    if len(pts) == 0:
        return 0.0
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    # Left-to-right sweep over the staircase of non-dominated points.
    hv = 0.0
    best_y = ry
    stair: list[tuple[float, float]] = []
    for x, y in pts:
        if y < best_y:
            stair.append((float(x), float(y)))
            best_y = y
    for i, (x, y) in enumerate(stair):
        next_x = stair[i + 1][0] if i + 1 < len(stair) else rx
        hv += (next_x - x) * (ry - y)
    return hv


def coverage(front_a: np.ndarray, front_b: np.ndarray) -> float:
    """Fraction of front B weakly dominated by at least one member of A."""
    a = np.asarray(front_a, dtype=float).reshape(-1, 2)
    b = np.asarray(front_b, dtype=float).reshape(-1, 2)
    if len(b) == 0:
        return 1.0
    if len(a) == 0:
        return 0.0
    covered = 0
    for q in b:
        if bool(np.any((a[:, 0] <= q[0]) & (a[:, 1] <= q[1]))):
            covered += 1
    return covered / len(b)


def margin_reference_point(worst: np.ndarray, factor: float = 1.1) -> tuple[float, float]:
    """Reference point strictly worse than ``worst`` by the given relative
    margin in each coordinate (margin works for negative values too)."""
    w = np.asarray(worst, dtype=float)
    return tuple(float(x + (factor - 1.0) * abs(x)) for x in w)


@dataclass
class GenerationRecord:
    generation: int
    evaluations: int
    hypervolume: float
    feasible_count: int
    front_size: int


@dataclass
class OptResult:
    population: list[EvaluatedDesign]
    front: list[EvaluatedDesign]
    archive: ParetoArchive
    history: list[GenerationRecord]
    evaluations: int
    eval_seconds: float
    reference_point: tuple[float, float] | None
    generations: int
    converged_early: bool = False

    def front_points(self) -> np.ndarray:
        return np.array([d.kpis for d in self.front]).reshape(-1, 2)


Evaluator = Callable[[np.ndarray], EvalOutcome]


def _rng_for(seed: int, generation: int, op: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, generation, op)))


def _environmental_selection(pop: list[EvaluatedDesign],
                             size: int) -> list[EvaluatedDesign]:
    fronts = non_dominated_sort(pop)
    chosen: list[int] = []
    for front in fronts:
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
            continue
        if pop[front[0]].feasible:
            objs = np.array([pop[i].kpis for i in front])
            crowd = crowding_distance(objs)
        else:
            crowd = np.full(len(front), np.inf)
        order = sorted(range(len(front)), key=lambda k: (-crowd[k], front[k]))
        chosen.extend(front[k] for k in order[:size - len(chosen)])
        break
    return [pop[i] for i in sorted(chosen)]


def run(cfg: OptimizerConfig, spec: DesignSpec, evaluator: Evaluator,
        feasibility_check: Callable[[np.ndarray], bool] | None = None,
        use_geometry_gate: bool = True) -> OptResult:
    """Full evolutionary loop: seeded feasible start population, per
    generation variation + evaluation + elitist truncation, archive and
    indicator bookkeeping, stagnation-or-budget stopping.

    ``feasibility_check`` gates the start population (pass None together
    with ``use_geometry_gate=False`` for box-constrained benchmark
    problems).  The evaluation budget is population * (max_generations + 1)
    * budget_multiplier evaluator calls.
    """
    scfg = SamplingConfig(n_samples=cfg.population, seed=cfg.seed)
    if feasibility_check is not None:
        initial = lhs_feasible(scfg, spec, check=feasibility_check)
    elif use_geometry_gate:
        initial = lhs_feasible(scfg, spec)
    else:
        initial = lhs_sample(scfg, spec)

    archive = ParetoArchive()
    history: list[GenerationRecord] = []
    state = {"uid": 0, "evals": 0, "seconds": 0.0}

    def evaluate(vectors: list[np.ndarray], gen: int) -> list[EvaluatedDesign]:
        out: list[EvaluatedDesign] = []
        t0 = time.perf_counter()
        for v in vectors:
            try:
                outcome = evaluator(v)
            except Exception as e:
                state["seconds"] += time.perf_counter() - t0
                raise EvaluatorFailure(
                    f"evaluator failed on design {state['uid']}: {e}",
                    archive=archive, history=history) from e
            out.append(make_design(state["uid"], v, gen, outcome))
            state["uid"] += 1
            state["evals"] += 1
        state["seconds"] += time.perf_counter() - t0
        return out

    population = evaluate(initial, 0)
    for d in population:
        archive.add(d)

    if cfg.hv_reference is not None:
        reference = cfg.hv_reference
    else:
        pool = [d.kpis for d in population if d.feasible]
        if not pool:
            pool = [d.kpis for d in population
                    if np.all(np.isfinite(np.asarray(d.kpis)))]
        reference = (margin_reference_point(np.max(np.asarray(pool), axis=0))
                     if pool else None)

    def record(gen: int) -> None:
        front = archive.pareto_front()
        hv = (hypervolume_2d(np.array([d.kpis for d in front]).reshape(-1, 2),
                             reference)
              if reference is not None and front else 0.0)
        history.append(GenerationRecord(
            generation=gen, evaluations=state["evals"], hypervolume=hv,
            feasible_count=archive.feasible_count(), front_size=len(front)))

    record(0)

    budget = cfg.population * (cfg.max_generations + 1) * cfg.budget_multiplier
    gen = 0
    converged = False
    while state["evals"] + cfg.population <= budget:
        gen += 1
        ranks, crowd = rank_population(population)
        rng_sel = _rng_for(cfg.seed, gen, _OP_SELECT)
        rng_cx = _rng_for(cfg.seed, gen, _OP_CROSSOVER)
        rng_mut = _rng_for(cfg.seed, gen, _OP_MUTATE)
        offspring_vecs: list[np.ndarray] = []
        for _ in range(cfg.population // 2):
            a = tournament_select(population, ranks, crowd, rng_sel)
            b = tournament_select(population, ranks, crowd, rng_sel)
            c1, c2 = sbx_crossover(population[a].params, population[b].params,
                                   spec, cfg, rng_cx)
            offspring_vecs.append(polynomial_mutation(c1, spec, cfg, rng_mut))
            offspring_vecs.append(polynomial_mutation(c2, spec, cfg, rng_mut))

        offspring = evaluate(offspring_vecs, gen)
        population = _environmental_selection(population + offspring,
                                              cfg.population)
        for d in offspring:
            archive.add(d)
        record(gen)

        if len(history) > cfg.hv_window:
            prev = history[-1 - cfg.hv_window].hypervolume
            cur = history[-1].hypervolume
            if prev > 0.0 and (cur - prev) / prev < cfg.hv_tol:
                converged = True
                break

    return OptResult(
        population=population, front=archive.pareto_front(), archive=archive,
        history=history, evaluations=state["evals"],
        eval_seconds=state["seconds"], reference_point=reference,
        generations=gen, converged_early=converged,
    )
