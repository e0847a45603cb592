import numpy as np
import pytest

from lipgraph.exceptions import NumericError, ParameterError, SolverConvergenceError
from lipgraph.graph_core import random_bipartite_graph, random_cut_instance
from lipgraph.matching import matching_program
from lipgraph.min_cut import cut_program
from lipgraph.pip import pip_program, random_pip_instance
from lipgraph.prox_solver import (ConstraintSet, RegularizedProgram, assumption_constants,
                                  dykstra_project, gradient_mapping_residual,
                                  gradient_step_expansiveness_check, pgm_trajectory, prox, quadratic, solve)
from lipgraph.settings import use_settings_file


def simplex(dim):
    cs = ConstraintSet(dim, np.zeros(dim), np.ones(dim))
    cs.add_hyperplane(np.ones(dim), 1.0)
    return cs


def test_dykstra_projects_onto_simplex():
    x = dykstra_project(simplex(3), np.array([0.9, 0.8, -0.5]))
    assert x == pytest.approx([0.55, 0.45, 0.0], abs=1e-6)


def test_single_halfspace_is_projected_directly():
    cs = ConstraintSet(2, halfspaces=[(np.array([1.0, 1.0]), 1.0)])
    assert dykstra_project(cs, np.array([1.0, 1.0])) == pytest.approx([0.5, 0.5])
    assert dykstra_project(cs, np.array([0.2, 0.1])) == pytest.approx([0.2, 0.1])


def test_dykstra_reports_last_iterate_at_cap():
    with pytest.raises(SolverConvergenceError) as info:
        dykstra_project(simplex(3), np.array([5.0, -3.0, 2.0]), max_iter=1)
    assert info.value.last_iterate is not None


def test_constraint_set_validation():
    with pytest.raises(ParameterError):
        ConstraintSet(2, np.ones(2), np.zeros(2))
    with pytest.raises(ParameterError):
        ConstraintSet(2).add_hyperplane(np.zeros(2), 1.0)
    with pytest.raises(ParameterError):
        ConstraintSet(2).add_halfspace(np.ones(3), 1.0)


def test_check_feasible():
    assert simplex(3).check_feasible()
    empty = ConstraintSet(2, np.zeros(2), np.ones(2))
    empty.add_hyperplane(np.ones(2), 3.0)
    assert not empty.check_feasible()


def program(Q, c, constraints, **kwargs):
    Q = np.asarray(Q, dtype=float)
    g_value, g_gradient = quadratic(Q)
    return RegularizedProgram(dim=Q.size, g_value=g_value, g_gradient=g_gradient, sigma=float(Q.min()),
                              lsmooth=float(Q.max()), constraints=constraints,
                              linear_term=np.asarray(c, dtype=float), **kwargs)


def test_program_validation():
    g_value, g_gradient = quadratic(np.ones(2))
    with pytest.raises(ParameterError):
        RegularizedProgram(2, g_value, g_gradient, 0.0, 1.0, ConstraintSet(2), linear_term=np.ones(2))
    with pytest.raises(ParameterError):
        RegularizedProgram(2, g_value, g_gradient, 2.0, 1.0, ConstraintSet(2), linear_term=np.ones(2))
    with pytest.raises(ParameterError):
        RegularizedProgram(2, g_value, g_gradient, 1.0, 1.0, ConstraintSet(2))


def test_proximal_gradient_box():
    prog = program([1.0, 1.0, 1.0], [-0.3, -1.7, 0.4], ConstraintSet(3, np.zeros(3), np.ones(3)))
    result = solve(prog, np.zeros(3))
    assert result.converged
    assert result.x == pytest.approx([0.3, 1.0, 0.0], abs=1e-9)


def test_proximal_gradient_unconstrained():
    prog = program([1.0, 4.0], [-1.0, -1.0], ConstraintSet(2))
    result = solve(prog, np.array([5.0, -5.0]))
    assert result.converged
    assert result.x == pytest.approx([1.0, 0.25], abs=1e-6)
    assert result.objective == pytest.approx(-0.5 - 0.125, abs=1e-9)


def test_proximal_gradient_reports_non_convergence():
    prog = program([1.0, 4.0], [-1.0, -1.0], ConstraintSet(2))
    result = solve(prog, np.array([50.0, -5.0]), max_iter=3)
    assert not result.converged
    assert result.iterations == 3


def shifted_square(center):
    return (lambda x: 0.5 * float((x - center) @ (x - center))), (lambda x: x - center)


def test_absolute_value_program_soft_thresholds():
    g_value, g_gradient = shifted_square(np.array([2.0]))
    prog = RegularizedProgram(1, g_value, g_gradient, 1.0, 1.0, ConstraintSet(1, -5.0, 5.0),
                              abs_terms=(np.array([[1.0]]), np.array([1.0])))
    result = solve(prog, np.zeros(1))
    assert result.converged
    assert result.x == pytest.approx([1.0], abs=1e-5)


def test_subgradient_fallback():
    g_value, g_gradient = shifted_square(np.array([2.0]))
    prog = RegularizedProgram(1, g_value, g_gradient, 1.0, 1.0, ConstraintSet(1, -5.0, 5.0),
                              f_value=lambda x: float(np.abs(x).sum()), f_subgradient=np.sign)
    result = solve(prog, np.zeros(1))
    assert result.x == pytest.approx([1.0], abs=1e-2)


def test_non_finite_callback():
    prog = RegularizedProgram(1, lambda x: 0.0, lambda x: np.array([np.nan]), 1.0, 1.0,
                              ConstraintSet(1), linear_term=np.ones(1))
    with pytest.raises(NumericError):
        solve(prog, np.zeros(1))


def test_prox_of_linear_term_is_shifted_projection():
    prog = program([2.0, 2.0], [1.0, -1.0], ConstraintSet(2, np.zeros(2), np.ones(2)))
    assert prox(prog, np.array([0.75, 0.75])) == pytest.approx([0.25, 1.0])


def test_pgm_trajectory_contracts():
    prog = program([1.0, 4.0], [-1.0, -1.0], ConstraintSet(2))
    optimum = np.array([1.0, 0.25])
    trajectory = pgm_trajectory(prog, np.array([3.0, 3.0]), 30)
    assert len(trajectory) == 31
    gaps = [np.linalg.norm(x - optimum) for x in trajectory]
    for before, after in zip(gaps, gaps[1:]):
        assert after <= (1.0 - prog.sigma / prog.lsmooth) * before + 1e-12


def test_gradient_step_is_a_contraction(rng):
    for _ in range(5):
        M = rng.standard_normal((4, 4))
        Q = M.T @ M + 0.5 * np.eye(4)
        eigenvalues = np.linalg.eigvalsh(Q)
        sigma, lsmooth = float(eigenvalues[0]), float(eigenvalues[-1])
        _, g_gradient = quadratic(Q)
        eta = 1.0 / lsmooth
        worst = gradient_step_expansiveness_check(g_gradient, sigma, lsmooth, eta, 2000, 4, rng)
        assert worst <= 1.0 - eta * sigma + 1e-8


def test_expansiveness_check_rejects_long_steps():
    _, g_gradient = quadratic(np.ones(2))
    with pytest.raises(ParameterError):
        gradient_step_expansiveness_check(g_gradient, 1.0, 1.0, 1.5, 10, 2)


def test_assumption_constants_for_weighted_regularizer(rng):
    w = np.array([1.0, 2.0, 1.5])
    delta = 1e-3
    w_tilde = w.copy()
    w_tilde[0] += delta
    box = ConstraintSet(3, np.zeros(3), np.ones(3))
    prog = program(w, -w, box)
    prog_tilde = program(w_tilde, -w_tilde, ConstraintSet(3, np.zeros(3), np.ones(3)))
    points = [rng.uniform(0.0, 1.0, 3) for _ in range(50)]
    constants = assumption_constants(prog, prog_tilde, points, delta)
    assert constants.C <= 1.0 / prog.lsmooth + 1e-9
    assert constants.D <= 1.0 / prog.lsmooth + 1e-9
    assert constants.bound == pytest.approx(prog.lsmooth * (constants.C + constants.D) / prog.sigma)


def test_projection_onto_box_and_plane():
    cs = ConstraintSet(2, np.zeros(2), np.ones(2), halfspaces=[(np.ones(2), 1.0)])
    assert dykstra_project(cs, np.array([2.0, 2.0])) == pytest.approx([0.5, 0.5], abs=1e-6)
    assert dykstra_project(cs, np.array([0.25, 0.5])) == pytest.approx([0.25, 0.5])
    plane = ConstraintSet(3)
    plane.add_hyperplane(np.ones(3), 0.0)
    y = np.array([1.0, 2.0, 6.0])
    assert dykstra_project(plane, y) == pytest.approx(y - 3.0)


def test_one_variable_programs():
    w, eps = 2.0, 0.5
    clipped = program([eps * w], [-w], ConstraintSet(1, np.zeros(1), np.ones(1)))
    assert solve(clipped, np.zeros(1)).x == pytest.approx([1.0], abs=1e-9)
    flat = program([1.0, 1.0, 1.0], np.zeros(3), ConstraintSet(3, np.zeros(3), np.ones(3)))
    assert solve(flat, np.array([0.9, 0.1, 0.4])).x == pytest.approx(np.zeros(3), abs=1e-9)


@pytest.mark.parametrize("diagonal, eta, expected", [
    ([1.0, 1.0], 1.0, 0.0),
    ([1.0, 2.0], 0.5, 0.5),
])
def test_gradient_step_ratio_on_diagonal_quadratics(diagonal, eta, expected):
    diagonal = np.array(diagonal)
    _, g_gradient = quadratic(diagonal)
    worst = gradient_step_expansiveness_check(g_gradient, float(diagonal.min()), float(diagonal.max()), eta,
                                              200, 2)
    assert worst <= expected + 1e-12
    assert worst >= expected - 0.5


def abs_program(center, diagonal):
    center, diagonal = np.asarray(center, dtype=float), np.asarray(diagonal, dtype=float)
    dim = center.size
    return RegularizedProgram(dim, lambda x: 0.5 * float((x - center) @ (diagonal * (x - center))),
                              lambda x: diagonal * (x - center), float(diagonal.min()), float(diagonal.max()),
                              ConstraintSet(dim, np.full(dim, -5.0), np.full(dim, 5.0)),
                              abs_terms=(np.eye(dim), np.ones(dim)))


def test_absolute_value_program_is_certified():
    prog = abs_program([2.0], [1.0])
    assert gradient_mapping_residual(prog, np.zeros(1)) == pytest.approx(1.0, abs=1e-6)
    result = solve(prog, np.zeros(1))
    assert result.converged
    assert result.residual == pytest.approx(gradient_mapping_residual(prog, result.x))
    assert result.residual <= 1e-5


def test_absolute_value_program_at_iteration_cap_is_not_converged(tmp_path):
    path = tmp_path / "capped.yaml"
    path.write_text("solver:\n  slsqp_max_iter: 1\n", encoding="utf-8")
    use_settings_file(path)
    result = solve(abs_program([3.0, -2.0, 0.5], [1.0, 4.0, 9.0]), np.zeros(3))
    assert not result.converged


def test_proximal_gradient_residual_is_within_tolerance():
    prog = program([1.0, 4.0], [-1.0, -1.0], ConstraintSet(2))
    result = solve(prog, np.array([5.0, -5.0]), tol=1e-7)
    assert result.converged
    assert prog.lsmooth * result.residual <= 1e-7
    assert result.residual <= 1e-7 * max(1.0, prog.sigma) / prog.lsmooth


def real_programs(rng):
    """Ten matching, packing and cut programs each, as the solvers build them."""
    for _ in range(10):
        yield matching_program(random_bipartite_graph(4, 4, 0.5, rng, b_max=2), 0.1), 1e-6
        yield pip_program(random_pip_instance(3, 8, rng, B=1.0, c=2.0)), 1e-6
        yield cut_program(random_cut_instance(int(rng.integers(5, 13)), 0.35, rng), 0.1), 1e-5


def test_pgm_trajectories_of_real_programs_contract(rng):
    for prog, slack in real_programs(rng):
        first = pgm_trajectory(prog, rng.uniform(-2.0, 2.0, prog.dim), 6)
        second = pgm_trajectory(prog, rng.uniform(-2.0, 2.0, prog.dim), 6)
        gaps = [np.linalg.norm(x - y) for x, y in zip(first, second)]
        for before, after in zip(gaps, gaps[1:]):
            assert after <= (1.0 - prog.sigma / prog.lsmooth) * before + slack


def test_solve_is_bit_identical_on_repeat(rng):
    for prog, _ in real_programs(rng):
        x0 = rng.uniform(-1.0, 1.0, prog.dim)
        first, second = solve(prog, x0.copy()), solve(prog, x0.copy())
        assert first.x.tobytes() == second.x.tobytes()
        assert (first.iterations, first.residual, first.converged) == \
            (second.iterations, second.residual, second.converged)
