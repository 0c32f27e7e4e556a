"""Latin hypercube sampling of the design space, with a feasibility gate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .design_space import DesignSpec, geometry_check, round_half_away


class FeasibilityExhausted(RuntimeError):
    """Raised when resampling rounds cannot produce enough feasible designs."""


@dataclass(frozen=True)
class SamplingConfig:
    n_samples: int
    seed: int
    max_resample_rounds: int = 100

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_resample_rounds < 1:
            raise ValueError("max_resample_rounds must be >= 1")


def _lhs_batch(rng: np.random.Generator, n: int, spec: DesignSpec) -> list[np.ndarray]:
    """One stratified batch: per dimension, one uniform point in each of n
    equal-width strata, strata paired across dimensions by independent
    permutations.  Integer dimensions are rounded half-away-from-zero."""
    lo, hi = spec.lower_bounds(), spec.upper_bounds()
    integer = spec.integer_mask()
    unit = np.empty((n, spec.n_dims), dtype=float)
    for d in range(spec.n_dims):
        perm = rng.permutation(n)
        jitter = rng.random(n)
        unit[:, d] = (perm + jitter) / n
    values = lo + unit * (hi - lo)
    out = []
    for row in values:
        v = row.copy()
        for d in np.nonzero(integer)[0]:
            v[d] = min(max(round_half_away(v[d]), lo[d]), hi[d])
        out.append(v)
    return out


def lhs_sample(cfg: SamplingConfig, spec: DesignSpec) -> list[np.ndarray]:
    """Draw exactly ``n_samples`` Latin-hypercube points inside the bounds.

    Deterministic in (seed, n_samples, spec).
    """
    rng = np.random.default_rng(cfg.seed)
    return _lhs_batch(rng, cfg.n_samples, spec)


def lhs_feasible(
    cfg: SamplingConfig,
    spec: DesignSpec,
    check: Callable[[np.ndarray], bool] | None = None,
) -> list[np.ndarray]:
    """Draw ``n_samples`` feasible designs by rejection over fresh LHS batches.

    Round r uses seed ``cfg.seed + r``, so round 0 reproduces ``lhs_sample``
    exactly and the whole procedure stays deterministic.  ``check`` defaults
    to the geometric feasibility gate of the design space.

    Raises:
        FeasibilityExhausted: the round budget ran out before ``n_samples``
            feasible designs were found (over-constrained spec).
    """
    if check is None:
        limits = spec.limits
        check = lambda v: geometry_check(v, limits).feasible  # noqa: E731

    kept: list[np.ndarray] = []
    for round_idx in range(cfg.max_resample_rounds):
        rng = np.random.default_rng(cfg.seed + round_idx)
        for v in _lhs_batch(rng, cfg.n_samples, spec):
            if check(v):
                kept.append(v)
                if len(kept) == cfg.n_samples:
                    return kept
    raise FeasibilityExhausted(
        f"found {len(kept)}/{cfg.n_samples} feasible designs "
        f"in {cfg.max_resample_rounds} rounds"
    )
