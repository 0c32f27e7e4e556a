"""Analytic test problems for validating the optimizer against known fronts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .design_space import DesignSpec, Parameter
from .optimizer import EvalOutcome

SUITE_IDS = ("zdt1", "zdt2", "constrained-demo")


def zdt1(x: np.ndarray) -> tuple[float, float]:
    """Convex front: f2 = 1 - sqrt(f1) for x_2..x_n = 0."""
    f1 = float(x[0])
    g = 1.0 + 9.0 * float(np.sum(x[1:])) / (len(x) - 1)
    return f1, g * (1.0 - np.sqrt(f1 / g))


def zdt2(x: np.ndarray) -> tuple[float, float]:
    """Concave front: f2 = 1 - f1^2 for x_2..x_n = 0."""
    f1 = float(x[0])
    g = 1.0 + 9.0 * float(np.sum(x[1:])) / (len(x) - 1)
    return f1, g * (1.0 - (f1 / g) ** 2)


def constrained_demo(x: np.ndarray) -> tuple[tuple[float, float], float]:
    """Objectives (x1, x2) with the corner x1 + x2 < 0.5 carved out, so the
    unconstrained optimum (0, 0) is infeasible and the true front is the
    segment x1 + x2 = 0.5."""
    f = (float(x[0]), float(x[1]))
    c = 0.5 - x[0] - x[1]
    return f, float(c)


def _unit_spec(n: int) -> DesignSpec:
    return DesignSpec(parameters=tuple(
        Parameter(f"x{i + 1:02d}", 0.0, 1.0) for i in range(n)))


@dataclass(frozen=True)
class BenchmarkProblem:
    suite: str
    spec: DesignSpec
    evaluator: Callable[[np.ndarray], EvalOutcome]
    true_hypervolume: float          # against reference (1, 1)
    true_front: np.ndarray           # dense sample of the analytic front


def _front_curve(f2_of_f1: Callable[[np.ndarray], np.ndarray],
                 n: int = 1001) -> np.ndarray:
    f1 = np.linspace(0.0, 1.0, n)
    return np.column_stack([f1, f2_of_f1(f1)])


def get_problem(suite: str, n_vars: int = 30) -> BenchmarkProblem:
    if suite == "zdt1":
        spec = _unit_spec(n_vars)

        def evaluator(v: np.ndarray) -> EvalOutcome:
            return EvalOutcome(kpis=zdt1(v), constraints=np.empty(0))

        # HV of f2 = 1 - sqrt(f1) vs (1, 1): integral of sqrt = 2/3.
        return BenchmarkProblem(suite, spec, evaluator, 2.0 / 3.0,
                                _front_curve(lambda f1: 1.0 - np.sqrt(f1)))
    if suite == "zdt2":
        spec = _unit_spec(n_vars)

        def evaluator(v: np.ndarray) -> EvalOutcome:
            return EvalOutcome(kpis=zdt2(v), constraints=np.empty(0))

        # HV of f2 = 1 - f1^2 vs (1, 1): integral of f1^2 = 1/3.
        return BenchmarkProblem(suite, spec, evaluator, 1.0 / 3.0,
                                _front_curve(lambda f1: 1.0 - f1**2))
    if suite == "constrained-demo":
        spec = _unit_spec(2)

        def evaluator(v: np.ndarray) -> EvalOutcome:
            kpis, c = constrained_demo(v)
            return EvalOutcome(kpis=kpis, constraints=np.array([c]))

        # Dominated area of the segment x1 + x2 = 0.5 vs (1, 1).
        front = _front_curve(lambda f1: 0.5 - f1)
        front = front[(front[:, 0] <= 0.5)]
        return BenchmarkProblem(suite, spec, evaluator, 0.875, front)
    raise ValueError(f"unknown suite {suite!r}; choose from {SUITE_IDS}")


def generational_distance(front: np.ndarray, true_front: np.ndarray) -> dict:
    """Mean/max Euclidean distance from front members to the analytic front."""
    front = np.asarray(front, dtype=float).reshape(-1, 2)
    if len(front) == 0:
        return {"mean": float("nan"), "max": float("nan")}
    d = np.sqrt(((front[:, None, :] - true_front[None, :, :]) ** 2).sum(-1))
    nearest = d.min(axis=1)
    return {"mean": float(nearest.mean()), "max": float(nearest.max())}
