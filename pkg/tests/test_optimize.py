import math

import numpy as np
import pytest

from sensenet.circuit import CircuitSpec, DelayModel, profile_from_delays
from sensenet.optimize import (OptimizationConfig, bottleneck_gradient, evaluate_objective,
                               optimize)
from sensenet.selection import SpanningTree

from conftest import random_tree, star_tree

TAU = 100e-12 * math.log(2.0)


def star_optimum(k, r_min=50e3, r_max=300e3):
    """Largest gap g such that {0, r_1..r_k} can be spaced g apart inside the box.

    Greedy feasibility: the first leaf sits at max(r_min, g), each next one g higher.
    Solved by bisection, independent of the gradient optimizer.
    """
    lo, hi = 0.0, r_max
    for _ in range(200):
        g = 0.5 * (lo + hi)
        if max(r_min, g) + (k - 1) * g <= r_max:
            lo = g
        else:
            hi = g
    return lo


def test_star_oracle_values():
    assert [round(star_optimum(k)) for k in (1, 2, 3, 4, 6)] == [300000, 150000, 100000, 75000, 50000]
    assert star_optimum(7) == pytest.approx(250e3 / 6)


def test_two_node_goes_to_upper_bound():
    tree = SpanningTree(2, [(0, 1)], 0, 0)
    r, trace = optimize(tree, CircuitSpec(), OptimizationConfig(rng_seed=3))
    assert r[0] == pytest.approx(300e3)
    assert trace.final == pytest.approx(300e3 * TAU, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 7])
def test_star_reaches_grid_optimum(k):
    for seed in range(2):
        _, trace = optimize(star_tree(k), CircuitSpec(), OptimizationConfig(rng_seed=seed))
        assert trace.final >= 0.99 * star_optimum(k) * TAU
        assert trace.final <= star_optimum(k) * TAU * (1 + 1e-9)


def test_best_so_far_is_monotone_and_bounded(rng):
    tree = random_tree(12, rng)
    r, trace = optimize(tree, CircuitSpec(), OptimizationConfig(rng_seed=1))
    best = np.array(trace.best_so_far)
    assert np.all(np.diff(best) >= 0)
    assert np.all((r >= 50e3) & (r <= 300e3))
    assert trace.final == pytest.approx(evaluate_objective(tree, r, CircuitSpec())[0], rel=1e-12)
    assert trace.final >= trace.initial
    assert trace.summary()["iterations"] == len(trace.min_diff)


def test_init_is_clipped_and_validated():
    tree = star_tree(2)
    r, trace = optimize(tree, CircuitSpec(), OptimizationConfig(init=(1e3, 1e7), max_iterations=0))
    assert list(r) == [50e3, 300e3]
    with pytest.raises(ValueError):
        optimize(tree, CircuitSpec(), OptimizationConfig(init=(1e5,)))


def test_max_iterations_bound():
    _, trace = optimize(star_tree(4), CircuitSpec(), OptimizationConfig(max_iterations=5))
    assert len(trace.min_diff) == 6


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizationConfig(r_min=3e5, r_max=5e4)
    with pytest.raises(ValueError):
        OptimizationConfig(step_size_alpha=0)
    with pytest.raises(ValueError):
        OptimizationConfig(patience=0)
    assert OptimizationConfig().alpha == pytest.approx(2500.0)


def test_deterministic_for_seed(rng):
    tree = random_tree(10, rng)
    a, _ = optimize(tree, CircuitSpec(), OptimizationConfig(rng_seed=7))
    b, _ = optimize(tree, CircuitSpec(), OptimizationConfig(rng_seed=7))
    assert np.array_equal(a, b)


def test_capacitance_scaling_leaves_argmax_unchanged(rng):
    # delays scale linearly in c; rounding may flip near-ties, so compare objectives
    tree = random_tree(9, rng)
    big = CircuitSpec(human_capacitance=250e-12)
    a, ta = optimize(tree, CircuitSpec(), OptimizationConfig(rng_seed=2))
    b, tb = optimize(tree, big, OptimizationConfig(rng_seed=2))
    assert evaluate_objective(tree, a, big)[0] == pytest.approx(2.5 * ta.final, rel=1e-12)
    assert tb.final == pytest.approx(2.5 * ta.final, rel=0.02)


def test_bottleneck_gradient_matches_finite_difference(rng):
    spec = CircuitSpec()
    tree = random_tree(8, rng)
    model = DelayModel(tree, spec)
    r = rng.uniform(5e4, 3e5, 7)
    d = model.delays(r)
    pair = profile_from_delays(d).bottleneck_pair
    g = bottleneck_gradient(model, r, d, pair)
    x, y = pair
    for e in range(7):
        up, dn = r.copy(), r.copy()
        up[e] += 1.0
        dn[e] -= 1.0
        fd = (abs(model.delays(up)[x] - model.delays(up)[y])
              - abs(model.delays(dn)[x] - model.delays(dn)[y])) / 2.0
        assert g[e] == pytest.approx(fd, rel=1e-6, abs=1e-6 * TAU)


def test_empty_tree():
    r, trace = optimize(SpanningTree(1, [], 0, 0), CircuitSpec())
    assert r.shape == (0,)
