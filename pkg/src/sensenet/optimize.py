"""Minimax resistance optimization: widen the smallest gap between touch delays."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .circuit import CircuitSpec, DelayModel, profile_from_delays
from .selection import SpanningTree


@dataclass(frozen=True)
class OptimizationConfig:
    r_min: float = 50e3
    r_max: float = 300e3
    step_size_alpha: Optional[float] = None  # ohms; None -> 1% of the range
    max_iterations: int = 10_000
    patience: int = 200
    init: Optional[Sequence[float]] = None  # None -> uniform random in the bounds
    rng_seed: int = 0
    # after a patience stall, restart from the best iterate with half the step
    step_refinements: int = 3

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.step_size_alpha is not None and self.step_size_alpha <= 0:
            raise ValueError("step_size_alpha must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.step_refinements < 0:
            raise ValueError("step_refinements must be >= 0")

    @property
    def alpha(self) -> float:
        if self.step_size_alpha is not None:
            return self.step_size_alpha
        return 0.01 * (self.r_max - self.r_min)


@dataclass
class OptimizationTrace:
    min_diff: list[float] = field(default_factory=list)
    bottleneck: list[tuple[int, int]] = field(default_factory=list)
    best_so_far: list[float] = field(default_factory=list)
    r_best: Optional[np.ndarray] = None

    @property
    def initial(self) -> float:
        return self.min_diff[0]

    @property
    def final(self) -> float:
        return self.best_so_far[-1]

    def summary(self) -> dict:
        return {
            "iterations": len(self.min_diff),
            "initial_min_diff": self.initial if self.min_diff else None,
            "best_min_diff": self.final if self.best_so_far else None,
        }


def evaluate_objective(tree: SpanningTree, r, spec: CircuitSpec, model: Optional[DelayModel] = None):
    """Smallest pairwise delay difference and the (lexicographically first) pair producing it."""
    model = model or DelayModel(tree, spec)
    prof = profile_from_delays(model.delays(r))
    return prof.min_diff, prof.bottleneck_pair


def bottleneck_gradient(model: DelayModel, r, delays: np.ndarray, pair: tuple[int, int]) -> np.ndarray:
    """Gradient of |t_x - t_y| from the redistributed per-node gradients; sign(0) = +1."""
    x, y = pair
    sign = 1.0 if delays[x] >= delays[y] else -1.0
    return sign * (model.distributed_gradient(r, x) - model.distributed_gradient(r, y))


def optimize(tree: SpanningTree, spec: CircuitSpec, cfg: OptimizationConfig = OptimizationConfig(),
             model: Optional[DelayModel] = None):
    """Ascend the bottleneck difference with box clipping; keep the best iterate.

    Each step moves the largest-gradient resistor by ``alpha`` ohms (the gradient is
    scaled by its max-abs norm), so alpha keeps its meaning as a resistance increment.
    The run stops after ``patience`` iterations without improvement once the step
    has been halved ``step_refinements`` times, or after ``max_iterations``.
    """
    n_edges = len(tree.edges)
    trace = OptimizationTrace()
    if n_edges == 0:
        trace.r_best = np.zeros(0)
        return trace.r_best, trace
    model = model or DelayModel(tree, spec)

    if cfg.init is not None:
        r = np.clip(np.asarray(cfg.init, dtype=float), cfg.r_min, cfg.r_max)
        if r.shape != (n_edges,):
            raise ValueError(f"init needs {n_edges} values")
    else:
        rng = np.random.default_rng(cfg.rng_seed)
        r = rng.uniform(cfg.r_min, cfg.r_max, n_edges)

    alpha = cfg.alpha
    refinements = 0
    best = -np.inf
    r_best = r.copy()
    stale = 0
    while True:
        delays = model.delays(r)
        prof = profile_from_delays(delays)
        trace.min_diff.append(prof.min_diff)
        trace.bottleneck.append(prof.bottleneck_pair)
        if prof.min_diff > best:
            best, r_best, stale = prof.min_diff, r.copy(), 0
        else:
            stale += 1
        trace.best_so_far.append(best)
        if len(trace.min_diff) > cfg.max_iterations:
            break
        if stale >= cfg.patience:
            if refinements >= cfg.step_refinements:
                break
            refinements += 1
            alpha *= 0.5
            r, stale = r_best.copy(), 0
            delays = model.delays(r)
            prof = profile_from_delays(delays)
        grad = bottleneck_gradient(model, r, delays, prof.bottleneck_pair)
        scale = np.max(np.abs(grad))
        if scale == 0:
            break
        r = np.clip(r + alpha * grad / scale, cfg.r_min, cfg.r_max)

    trace.r_best = r_best
    return r_best, trace
