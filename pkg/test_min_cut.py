import itertools
import math

import numpy as np
import pytest

from lipgraph.exceptions import InstanceError, ParameterError
from lipgraph.graph_core import CutInstance, Perturbation, WeightedGraph, random_cut_instance
from lipgraph.harness import (mean_and_sem, mincut_balanced_exact, mincut_exact, mincut_maxflow,
                              perturb_instance)
from lipgraph.min_cut import (CutFractional, bucket_count, bucket_interval, cut_expmech, cut_kway,
                              cut_naive_baseline, expected_threshold_cut, expmech_prepare,
                              expmech_probabilities, expmech_round, fractional_cut_value, kway_combine,
                              kway_parameters, kway_prepare, kway_round, solve_balanced_fractional,
                              solve_fractional, solve_naive_fractional, threshold_round, threshold_set)
from lipgraph.settings import setting
from lipgraph.tape import RandomTape


def test_fractional_cut_on_path(path_instance):
    frac = solve_fractional(path_instance, 0.1)
    assert frac.violations(path_instance, tol=1e-5) == []
    assert 0.5 - 1e-6 <= frac.objective_f <= 1.1 * 0.5 + 1e-4
    assert frac.lambda2 > 0


def test_fractional_cut_approximates_min_cut(rng):
    for trial in range(8):
        n = int(rng.integers(6, 11))
        inst = random_cut_instance(n, 0.35, rng, terminals=(1 + trial % 2, 1))
        optimum = mincut_exact(inst).weight
        for eps in (0.1, 1.0 / math.sqrt(n)):
            frac = solve_fractional(inst, eps)
            assert frac.objective_f <= (1.0 + eps) * optimum + 1e-4
            assert frac.objective_f >= optimum - 1e-6


def test_fractional_cut_rejects_bad_parameters(path_instance):
    with pytest.raises(ParameterError):
        solve_fractional(path_instance, 0.0)
    with pytest.raises(ParameterError):
        solve_fractional(path_instance, 0.1, (-0.25, 0.5))
    with pytest.raises(TypeError):
        solve_fractional(path_instance, "0.1")


def piecewise_expectation(frac, inst):
    """E[cut(A_tau)] by integrating over the pieces between consecutive y values."""
    lo, hi = frac.interval
    points = sorted({lo, hi, *[float(np.clip(v, lo, hi)) for v in frac.y]})
    total = 0.0
    for a, b in zip(points, points[1:]):
        total += inst.graph.cut_weight(threshold_set(frac.y, 0.5 * (a + b))) * (b - a)
    return total / (hi - lo)


def test_threshold_expectation_is_half_the_fractional_value(rng):
    for _ in range(6):
        inst = random_cut_instance(int(rng.integers(5, 10)), 0.4, rng)
        frac = solve_fractional(inst, 0.1)
        expected, feasible = expected_threshold_cut(frac, inst)
        assert expected == pytest.approx(0.5 * frac.objective_f, abs=1e-6)
        assert expected == pytest.approx(piecewise_expectation(frac, inst), abs=1e-9)
        assert feasible == pytest.approx(0.5, abs=1e-6)


def test_threshold_round_reads_one_draw(path_instance):
    frac = solve_fractional(path_instance, 0.1)
    tape = RandomTape.from_draws([0.5])
    result = threshold_round(frac, path_instance, tape)
    assert tape.counter == 1
    assert result.diagnostics["tau"] == 0.0
    assert result.A == threshold_set(frac.y, 0.0)
    assert result.weight == pytest.approx(path_instance.graph.cut_weight(result.A))


def test_naive_baseline_is_always_feasible(square_instance):
    frac = solve_naive_fractional(square_instance, 0.01)
    assert frac.y[square_instance.s0] == pytest.approx(0.0, abs=1e-7)
    assert frac.y[square_instance.t0] == pytest.approx(1.0, abs=1e-7)
    master = RandomTape(seed=3)
    for t in range(50):
        result = cut_naive_baseline(square_instance, 0.01, master.spawn(t))
        assert result.feasible
        assert "objective_f" in result.diagnostics


def test_balanced_fractional_respects_box(path_instance):
    frac = solve_balanced_fractional(path_instance, 0.25, 1.0)
    assert frac.interval == (-0.75, 0.75)
    assert frac.y.min() >= -0.75 - 1e-7 and frac.y.max() <= 0.75 + 1e-7
    with pytest.raises(ParameterError):
        solve_balanced_fractional(path_instance, 0.5, 1.0)


def test_bucket_helpers():
    assert bucket_count(0.25) == 4
    assert bucket_interval(1, 0.25) == (-1.0, 0.25)
    assert bucket_interval(4, 0.25) == (-0.25, 1.0)
    with pytest.raises(ParameterError, match="1/gamma must be an integer"):
        bucket_count(0.3)


def test_expmech_probabilities():
    p = expmech_probabilities([0.0, np.inf, 1.0], math.log(2.0))
    assert p == pytest.approx([2.0 / 3.0, 0.0, 1.0 / 3.0])
    with pytest.raises(ParameterError):
        expmech_probabilities([np.inf, np.inf], 1.0)


def test_expmech_probabilities_are_smooth(rng):
    for _ in range(1000):
        x = rng.uniform(0.0, 3.0, 5)
        x_tilde = x.copy()
        x_tilde[rng.integers(5)] += rng.uniform(-0.5, 0.5)
        gap = np.abs(expmech_probabilities(x, 1.0) - expmech_probabilities(x_tilde, 1.0)).sum()
        assert gap <= 2.0 * np.abs(x - x_tilde).sum() + 1e-12


def test_expmech_round_draw_order(square_instance):
    plan = expmech_prepare(square_instance, 0.25)
    assert np.all(np.isfinite(plan.theta))
    tape = RandomTape.from_draws([0.0, 0.0, 0.5])
    result = expmech_round(plan, square_instance, tape)
    assert tape.counter == 3
    assert result.diagnostics["Lambda2"] == pytest.approx(plan.lambda2 / 2.0)
    assert result.diagnostics["bucket"] == 1
    lo, hi = bucket_interval(1, 0.25)
    assert result.diagnostics["tau"] == pytest.approx(lo + 0.5 * (hi - lo))


def test_expmech_needs_connected_graph():
    g = WeightedGraph.from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)])
    with pytest.raises(InstanceError):
        expmech_prepare(CutInstance(g, {0}, {3}), 0.25)


def check_expmech_feasibility_and_error(inst, gamma, runs, seed):
    plan = expmech_prepare(inst, gamma)
    optimum = mincut_exact(inst).weight
    master = RandomTape(seed=seed)
    results = [expmech_round(plan, inst, master.spawn(t)) for t in range(runs)]
    rate, sem = mean_and_sem([r.feasible for r in results])
    assert rate >= 1.0 - gamma - 3.0 * sem
    feasible_weights = [r.weight for r in results if r.feasible]
    bound = (1.0 + 1.0 / (gamma * math.sqrt(inst.n))) * optimum \
        + 8.0 * plan.lambda2 * (math.log(1.0 / gamma) + 1.0) / gamma
    assert np.mean(feasible_weights) <= bound


def test_expmech_feasibility_and_error(rng):
    for _ in range(3):
        check_expmech_feasibility_and_error(random_cut_instance(8, 0.4, rng), 0.25, 2000, seed=11)


@pytest.mark.slow
def test_expmech_feasibility_and_error_at_scale(rng):
    for i in range(30):
        inst = random_cut_instance(int(rng.integers(6, 13)), 0.4, rng)
        check_expmech_feasibility_and_error(inst, 0.25, 20000, seed=100 + i)


def test_cut_expmech_entry_point(square_instance):
    result = cut_expmech(square_instance, 0.25, RandomTape(seed=7))
    assert result.A <= frozenset(range(square_instance.n))
    assert result.weight == pytest.approx(square_instance.graph.cut_weight(result.A))
    assert sum(result.diagnostics["probabilities"]) == pytest.approx(1.0)


def test_kway_parameters():
    assert kway_parameters(0.25, 0.1) == (576, 288, 324)
    assert kway_parameters(0.25, 0.5) == (268, 134, 150)
    with pytest.raises(ParameterError):
        kway_parameters(0.6, 0.1)


def brute_force_combine(sets, r):
    found = set()
    for chosen in itertools.combinations(sets, r):
        found |= set.intersection(*map(set, chosen))
    return frozenset(found)


def test_kway_combine_matches_definition(rng):
    for _ in range(1000):
        k = int(rng.integers(1, 7))
        sets = [frozenset(np.flatnonzero(rng.random(6) < 0.5).tolist()) for _ in range(k)]
        r = int(rng.integers(1, k + 1))
        assert kway_combine(sets, r) == brute_force_combine(sets, r)


def test_kway_combine_rejects_bad_r():
    with pytest.raises(ParameterError):
        kway_combine([{0}, {1}], 3)


def test_kway_rounding(path_instance):
    beta, gamma = 0.25, 0.1
    plan = kway_prepare(path_instance, beta, gamma)
    assert plan.balanced
    master = RandomTape(seed=5)
    runs = [kway_round(plan, path_instance, master.spawn(t)) for t in range(100)]
    for run in runs:
        assert run.diagnostics["range_cut_sum"] <= run.diagnostics["threshold_cut_sum"] + 1e-9
        assert plan.r_min <= run.diagnostics["r"] <= plan.r_max
    rate, sem = mean_and_sem([r.feasible for r in runs])
    assert rate >= 1.0 - gamma - 3.0 * sem
    balanced_optimum = mincut_balanced_exact(path_instance, beta).weight
    assert np.mean([r.weight for r in runs]) <= 16.0 / beta * balanced_optimum


def test_cut_kway_entry_point(square_instance):
    tape = RandomTape(seed=2)
    result = cut_kway(square_instance, 0.25, 0.5, tape)
    assert tape.counter == result.diagnostics["k"] + 1
    assert result.weight == pytest.approx(square_instance.graph.cut_weight(result.A))


def test_fractional_cut_value(path_instance):
    y = np.array([-0.5, -0.5, 0.5, 0.5])
    assert fractional_cut_value(path_instance.graph, y) == pytest.approx(0.5)


def single_edge(weight=3.0):
    return CutInstance(WeightedGraph.from_edges(2, [(0, 1, weight)]), {0}, {1})


def test_single_edge_cut_is_forced():
    frac = solve_fractional(single_edge(), 0.1)
    assert frac.y == pytest.approx([-0.5, 0.5], abs=1e-6)
    assert frac.objective_f == pytest.approx(3.0, abs=1e-5)
    naive = solve_naive_fractional(single_edge(), 0.01)
    assert naive.y == pytest.approx([0.0, 1.0], abs=1e-7)
    assert naive.objective_f == pytest.approx(3.0, abs=1e-6)


def test_four_cycle():
    g = WeightedGraph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)])
    inst = CutInstance(g, {0}, {2})
    assert mincut_exact(inst).weight == pytest.approx(2.0)
    frac = solve_fractional(inst, 0.1)
    assert frac.objective_f <= 1.1 * 2.0 + 1e-4


def test_threshold_expectation_on_a_path():
    g = WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
    inst = CutInstance(g, {0}, {2})
    frac = CutFractional(np.array([0.0, 0.5, 1.0]), 0.1, (0.0, 1.0), 1.0, centered=False)
    assert expected_threshold_cut(frac, inst) == pytest.approx((1.0, 1.0))
    low = CutFractional(np.array([0.2, 0.5, 1.0]), 0.1, (0.0, 1.0), 0.8, centered=False)
    result = threshold_round(low, inst, RandomTape.from_draws([0.0]))
    assert result.A == frozenset() and not result.feasible


def test_kway_combine_small_sets():
    sets = [{1, 2}, {2, 3}, {2}]
    assert kway_combine(sets, 2) == frozenset({2})
    assert kway_combine(sets, 1) == frozenset({1, 2, 3})
    assert kway_combine([{4, 5}] * 3, 3) == frozenset({4, 5})


def stable_edges(inst, eps):
    """Edges whose 1e-3 relative bump moves y by at most slack * delta / (eps * lambda2) in l2."""
    frac = solve_fractional(inst, eps)
    bound = setting("calibration", "fractional_cut_slack") / (eps * frac.lambda2)
    stable = 0
    for e, weight in enumerate(inst.graph.weights):
        delta = 1e-3 * float(weight)
        moved = solve_fractional(perturb_instance(inst, Perturbation(e, delta)), eps)
        stable += np.linalg.norm(moved.y - frac.y) <= bound * delta
    return stable, inst.graph.m


def test_fractional_cut_is_stable_under_one_weight_change(rng):
    for _ in range(8):
        stable, total = stable_edges(random_cut_instance(int(rng.integers(6, 11)), 0.35, rng), 0.1)
        assert stable >= 0.95 * total


@pytest.mark.slow
def test_fractional_cut_stability_at_scale(rng):
    stable = total = 0
    for _ in range(50):
        inst = random_cut_instance(int(rng.integers(6, 15)), 0.3, rng)
        for eps in (0.1, 1.0 / math.sqrt(inst.n)):
            s, t = stable_edges(inst, eps)
            stable, total = stable + s, total + t
    assert stable >= 0.95 * total


def test_naive_baseline_bounds(rng):
    Lambda, delta = 0.5, 0.05
    for _ in range(6):
        inst = random_cut_instance(int(rng.integers(5, 10)), 0.4, rng)
        frac = solve_naive_fractional(inst, Lambda)
        assert frac.objective_f <= mincut_exact(inst).weight + Lambda * inst.n / 2.0 + 1e-4
        for e in range(0, inst.graph.m, 3):
            moved = solve_naive_fractional(perturb_instance(inst, Perturbation(e, delta)), Lambda)
            assert np.abs(moved.y - frac.y).sum() <= delta * inst.n / (2.0 * Lambda) + 1e-4


def test_threshold_roundings_reach_the_max_flow_value(rng):
    # Lambda n / 2 stays below the quarter-step gap between cut values
    master = RandomTape(seed=17)
    for i in range(10):
        n = int(rng.integers(6, 15))
        inst = random_cut_instance(n, 0.3, rng)
        frac = solve_naive_fractional(inst, 0.2 / n)
        weights = [threshold_round(frac, inst, master.spawn(i, t)).weight for t in range(1000)]
        assert min(weights) == pytest.approx(mincut_maxflow(inst).weight, abs=1e-9)


def test_expmech_bucket_choice_moves_with_the_scores(rng):
    gamma, trials = 0.25, 4000
    inst = random_cut_instance(8, 0.4, rng)
    e = int(rng.integers(inst.graph.m))
    moved = perturb_instance(inst, Perturbation(e, 0.25 * float(inst.graph.weights[e])))
    plan, plan_tilde = expmech_prepare(inst, gamma), expmech_prepare(moved, gamma)

    finite = np.isfinite(plan.theta)
    assert np.array_equal(finite, np.isfinite(plan_tilde.theta))
    score_gap = np.abs(plan.theta[finite] - plan_tilde.theta[finite]).sum()
    eta = gamma / (plan.eps * plan.lambda2 * math.sqrt(inst.n))
    gap = np.abs(expmech_probabilities(plan.theta, eta) - expmech_probabilities(plan_tilde.theta, eta)).sum()
    assert gap <= 2.0 * eta * score_gap + 1e-12

    # the bucket law is a mixture over the shared Lambda2 draw
    worst = 0.0
    for u in np.linspace(0.0, 1.0, 101):
        etas = [gamma / (p.eps * p.lambda2 * (1.0 + u) / 2.0 * math.sqrt(inst.n)) for p in (plan, plan_tilde)]
        probabilities = [expmech_probabilities(p.theta, eta) for p, eta in zip((plan, plan_tilde), etas)]
        worst = max(worst, 0.5 * np.abs(probabilities[0] - probabilities[1]).sum())

    master = RandomTape(seed=23)
    counts = np.zeros((2, bucket_count(gamma)))
    for t in range(trials):
        tape = master.spawn(t)
        twin = tape.twin()
        counts[0, expmech_round(plan, inst, tape).diagnostics["bucket"] - 1] += 1
        counts[1, expmech_round(plan_tilde, moved, twin).diagnostics["bucket"] - 1] += 1
    frequencies = counts / trials
    tv = 0.5 * np.abs(frequencies[0] - frequencies[1]).sum()
    noise = np.sqrt(frequencies[0] * (1.0 - frequencies[0]) / trials).sum()
    assert tv <= worst + 3.0 * noise


def test_fractional_solvers_are_bit_identical_on_repeat(square_instance):
    for solver in (lambda: solve_fractional(square_instance, 0.1),
                   lambda: solve_naive_fractional(square_instance, 0.05),
                   lambda: solve_balanced_fractional(square_instance, 0.25, 1.0)):
        first, second = solver(), solver()
        assert first.y.tobytes() == second.y.tobytes()
        assert first.objective_f == second.objective_f
    assert expmech_prepare(square_instance, 0.25).theta.tobytes() == \
        expmech_prepare(square_instance, 0.25).theta.tobytes()
