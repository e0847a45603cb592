"""First-order solver for composite programs min_{x in K} f(x) + g(x).

g is smooth and sigma-strongly convex; f is convex and possibly nonsmooth.
Three shapes of f are recognised:

* ``linear_term`` c (f(x) = <c, x>): proximal gradient, whose prox step is the
  Euclidean projection onto K of the shifted point.
* ``abs_terms`` (D, omega) (f(x) = sum_i omega_i |D_i x|): solved exactly through
  the epigraph reformulation with SLSQP, then cleaned up by one projection.
* anything else (callbacks only): averaged projected subgradient with step
  2 / (sigma (t + 1)).

Projections onto K (a box intersected with hyperplanes and halfspaces) use
cyclic Dykstra.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .exceptions import NumericError, ParameterError, SolverConvergenceError
from .settings import setting

logger = logging.getLogger(__name__)

Vector = np.ndarray
Callback = Callable[[Vector], object]


def _finite(value, what: str):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{what} returned a non-finite value")
    return value


@dataclass
class ConstraintSet:
    """Box [lo, hi] intersected with hyperplanes <a, x> = c and halfspaces <a, x> <= c."""
    dim: int
    lo: Optional[Vector] = None
    hi: Optional[Vector] = None
    hyperplanes: List[Tuple[Vector, float]] = field(default_factory=list)
    halfspaces: List[Tuple[Vector, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.lo is not None:
            self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (self.dim,)).copy()
        if self.hi is not None:
            self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (self.dim,)).copy()
        if self.lo is not None and self.hi is not None and np.any(self.lo > self.hi):
            raise ParameterError("box has lo > hi")
        self.hyperplanes = [self._row(a, c) for a, c in self.hyperplanes]
        self.halfspaces = [self._row(a, c) for a, c in self.halfspaces]

    def _row(self, a, c):
        a = np.asarray(a, dtype=float).reshape(-1)
        if a.size != self.dim:
            raise ParameterError(f"constraint row has {a.size} entries, expected {self.dim}")
        if not np.any(a):
            raise ParameterError("constraint row is zero")
        return a, float(c)

    def add_hyperplane(self, a, c):
        self.hyperplanes.append(self._row(a, c))

    def add_halfspace(self, a, c):
        self.halfspaces.append(self._row(a, c))

    @property
    def has_box(self) -> bool:
        return self.lo is not None or self.hi is not None

    @property
    def count(self) -> int:
        return int(self.has_box) + len(self.hyperplanes) + len(self.halfspaces)

    def clip(self, x: Vector) -> Vector:
        lo = -np.inf if self.lo is None else self.lo
        hi = np.inf if self.hi is None else self.hi
        return np.clip(x, lo, hi)

    def violation(self, x: Vector) -> float:
        worst = 0.0
        if self.lo is not None:
            worst = max(worst, float(np.max(self.lo - x, initial=0.0)))
        if self.hi is not None:
            worst = max(worst, float(np.max(x - self.hi, initial=0.0)))
        for a, c in self.hyperplanes:
            worst = max(worst, abs(a @ x - c) / np.linalg.norm(a))
        for a, c in self.halfspaces:
            worst = max(worst, max(0.0, a @ x - c) / np.linalg.norm(a))
        return worst

    def contains(self, x: Vector, tol: float) -> bool:
        return self.violation(x) <= tol

    def check_feasible(self, tol: Optional[float] = None) -> bool:
        """One Dykstra run from the origin; False when it cannot reach the region."""
        tol = setting("solver", "feasibility_tol") if tol is None else tol
        try:
            x = dykstra_project(self, np.zeros(self.dim), tol=tol * 0.1)
        except SolverConvergenceError:
            return False
        return self.contains(x, tol)


def _projectors(cs: ConstraintSet) -> List[Callable[[Vector], Vector]]:
    ops: List[Callable[[Vector], Vector]] = []
    if cs.has_box:
        ops.append(cs.clip)
    for a, c in cs.hyperplanes:
        ops.append(lambda y, a=a, c=c, aa=a @ a: y - ((a @ y - c) / aa) * a)
    for a, c in cs.halfspaces:
        ops.append(lambda y, a=a, c=c, aa=a @ a: y - (max(0.0, a @ y - c) / aa) * a)
    return ops


def dykstra_project(cs: ConstraintSet, x0: Vector, tol: Optional[float] = None,
                    max_iter: Optional[int] = None) -> Vector:
    """Euclidean projection of ``x0`` onto the constraint set.

    Stops once a full sweep moves the point by at most ``tol`` and the point
    violates no constraint by more than ``tol``. Raises SolverConvergenceError
    (carrying the last iterate) at the sweep cap, which defaults to
    ``max(10 * dim * count, solver.dykstra_min_iter)``.
    """
    if tol is None:
        tol = setting("solver", "tol") * setting("solver", "dykstra_tol_factor")
    x = np.array(x0, dtype=float)
    ops = _projectors(cs)
    if not ops:
        return x
    if len(ops) == 1:
        return ops[0](x)
    if max_iter is None:
        max_iter = max(10 * cs.dim * cs.count, setting("solver", "dykstra_min_iter"))
    corrections = [np.zeros_like(x) for _ in ops]
    for sweep in range(max_iter):
        start = x.copy()
        for i, op in enumerate(ops):
            y = x + corrections[i]
            x = op(y)
            corrections[i] = y - x
        if np.linalg.norm(x - start) <= tol and cs.violation(x) <= tol:
            logger.debug("Dykstra converged after %d sweeps", sweep + 1)
            return x
    raise SolverConvergenceError(
        f"Dykstra projection did not converge within {max_iter} sweeps "
        f"(violation {cs.violation(x):.3g})", last_iterate=x)


@dataclass
class RegularizedProgram:
    """min_{x in K} f(x) + g(x) with g sigma-strongly convex and lsmooth-smooth.

    Give f either as callbacks or through ``linear_term`` / ``abs_terms``; the
    callbacks are derived when a structured form is given.
    """
    dim: int
    g_value: Callback
    g_gradient: Callback
    sigma: float
    lsmooth: float
    constraints: ConstraintSet
    f_value: Optional[Callback] = None
    f_subgradient: Optional[Callback] = None
    linear_term: Optional[Vector] = None
    abs_terms: Optional[Tuple[np.ndarray, Vector]] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"strong convexity modulus must be positive, got {self.sigma}")
        if self.sigma > self.lsmooth * (1 + 1e-12):
            raise ParameterError(f"need sigma <= lsmooth, got {self.sigma} > {self.lsmooth}")
        if self.constraints.dim != self.dim:
            raise ParameterError("constraint dimension does not match the program")
        if self.linear_term is not None:
            c = np.asarray(self.linear_term, dtype=float).reshape(-1)
            self.linear_term = c
            self.f_value = lambda x: float(c @ x)
            self.f_subgradient = lambda x: c
        elif self.abs_terms is not None:
            D, omega = (np.asarray(a, dtype=float) for a in self.abs_terms)
            D = D.reshape(-1, self.dim)
            self.abs_terms = (D, omega.reshape(-1))
            self.f_value = lambda x: float(omega @ np.abs(D @ x))
            self.f_subgradient = lambda x: D.T @ (omega * np.sign(D @ x))
        elif self.f_value is None or self.f_subgradient is None:
            raise ParameterError("program needs f callbacks, a linear term or absolute-value terms")

    def project(self, x: Vector) -> Vector:
        return dykstra_project(self.constraints, x)

    def objective(self, x: Vector) -> float:
        return float(self.f_value(x)) + float(self.g_value(x))


@dataclass
class SolveResult:
    x: Vector
    objective: float
    iterations: int
    residual: float
    converged: bool


def quadratic(Q) -> Tuple[Callback, Callback]:
    """Value and gradient callbacks of x -> 1/2 x^T Q x (Q may be a vector diagonal)."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        return (lambda x: 0.5 * float(x @ (Q * x))), (lambda x: Q * x)
    return (lambda x: 0.5 * float(x @ Q @ x)), (lambda x: Q @ x)


def solve(prog: RegularizedProgram, x0: Vector, tol: Optional[float] = None,
          max_iter: Optional[int] = None) -> SolveResult:
    """Minimize the program from ``x0``; deterministic given its inputs."""
    tol = setting("solver", "tol") if tol is None else tol
    max_iter = setting("solver", "max_iter") if max_iter is None else max_iter
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != prog.dim:
        raise ParameterError(f"start point has {x0.size} entries, expected {prog.dim}")
    _finite(x0, "start point")
    if prog.abs_terms is not None:
        return _solve_epigraph(prog, x0, tol)
    if prog.linear_term is not None:
        return _solve_proximal_gradient(prog, x0, tol, max_iter)
    return _solve_subgradient(prog, x0, tol, max_iter)


def _certified(prog: RegularizedProgram, movement: float, tol: float) -> bool:
    """Movement rule together with the gradient-mapping residual L * movement <= tol."""
    return movement <= tol * max(1.0, prog.sigma) / prog.lsmooth and prog.lsmooth * movement <= tol


def _solve_proximal_gradient(prog, x0, tol, max_iter) -> SolveResult:
    c = prog.linear_term
    step = 1.0 / prog.lsmooth
    needed = setting("solver", "stable_iterations")
    x = prog.project(x0)
    stable, movement = 0, np.inf
    for t in range(1, max_iter + 1):
        grad = _finite(prog.g_gradient(x), "g gradient") + c
        x_next = prog.project(x - step * grad)
        movement = float(np.linalg.norm(x_next - x))
        x = x_next
        stable = stable + 1 if _certified(prog, movement, tol) else 0
        if stable >= needed:
            logger.debug("proximal gradient converged after %d iterations", t)
            return SolveResult(x, prog.objective(x), t, movement, True)
    logger.warning("proximal gradient hit the iteration cap %d (movement %.3g)", max_iter, movement)
    return SolveResult(x, prog.objective(x), max_iter, movement, False)


def _solve_subgradient(prog, x0, tol, max_iter) -> SolveResult:
    needed = setting("solver", "stable_iterations")
    x = prog.project(x0)
    average, weight_sum = x.copy(), 0.0
    stable, movement = 0, np.inf
    for t in range(1, max_iter + 1):
        sub = _finite(prog.f_subgradient(x), "f subgradient") + _finite(prog.g_gradient(x), "g gradient")
        x = prog.project(x - (2.0 / (prog.sigma * (t + 1))) * sub)
        weight_sum += t
        previous = average
        average = average + (t / weight_sum) * (x - average)
        movement = float(np.linalg.norm(average - previous))
        stable = stable + 1 if _certified(prog, movement, tol) else 0
        if stable >= needed:
            logger.debug("subgradient method converged after %d iterations", t)
            return SolveResult(average, prog.objective(average), t, movement, True)
    logger.warning("subgradient method hit the iteration cap %d (movement %.3g)", max_iter, movement)
    return SolveResult(average, prog.objective(average), max_iter, movement, False)


def _epigraph_minimize(D, omega, g_value, g_gradient, cs: ConstraintSet, x0):
    """min sum omega_i t_i + g(x) s.t. |D_i x| <= t_i and x in K, over z = (x, t)."""
    n, k = cs.dim, D.shape[0]
    t0 = np.abs(D @ x0)
    z0 = np.concatenate([x0, t0])

    def objective(z):
        return _finite(float(omega @ z[n:]) + float(g_value(z[:n])), "objective")

    def gradient(z):
        return np.concatenate([_finite(g_gradient(z[:n]), "g gradient"), omega])

    # t - D x >= 0 and t + D x >= 0
    eye = np.eye(k)
    abs_jac = np.vstack([np.hstack([-D, eye]), np.hstack([D, eye])])
    constraints = [{"type": "ineq", "fun": lambda z: abs_jac @ z, "jac": lambda z: abs_jac}]
    if cs.hyperplanes:
        A_eq = np.hstack([np.array([a for a, _ in cs.hyperplanes]), np.zeros((len(cs.hyperplanes), k))])
        b_eq = np.array([c for _, c in cs.hyperplanes])
        constraints.append({"type": "eq", "fun": lambda z: A_eq @ z - b_eq, "jac": lambda z: A_eq})
    if cs.halfspaces:
        A_ub = np.hstack([np.array([a for a, _ in cs.halfspaces]), np.zeros((len(cs.halfspaces), k))])
        b_ub = np.array([c for _, c in cs.halfspaces])
        constraints.append({"type": "ineq", "fun": lambda z: b_ub - A_ub @ z, "jac": lambda z: -A_ub})
    lo = [None] * n if cs.lo is None else cs.lo.tolist()
    hi = [None] * n if cs.hi is None else cs.hi.tolist()
    bounds = list(zip(lo, hi)) + [(0.0, None)] * k
    result = optimize.minimize(
        objective, z0, jac=gradient, method="SLSQP", bounds=bounds, constraints=constraints,
        options={"ftol": setting("solver", "slsqp_ftol"), "maxiter": setting("solver", "slsqp_max_iter")})
    return result


def _solve_epigraph(prog: RegularizedProgram, x0: Vector, tol: float) -> SolveResult:
    D, omega = prog.abs_terms
    start = prog.constraints.clip(x0)
    result = _epigraph_minimize(D, omega, prog.g_value, prog.g_gradient, prog.constraints, start)
    raw = result.x[:prog.dim]
    _finite(raw, "SLSQP iterate")
    try:
        x = prog.project(raw)
    except SolverConvergenceError as e:
        logger.warning("cleanup projection did not converge: %s", e)
        return SolveResult(raw, prog.objective(raw), int(result.nit), np.inf, False)
    cleanup = float(np.linalg.norm(x - raw))
    # status 8 is "positive directional derivative in linesearch", which SLSQP
    # reports at optima it cannot improve in floating point
    if not (result.success or result.status == 8) or cleanup > setting("solver", "feasibility_tol"):
        logger.warning("SLSQP stopped without convergence: %s", result.message)
        return SolveResult(x, prog.objective(x), int(result.nit), cleanup, False)
    residual = gradient_mapping_residual(prog, x)
    converged = residual <= setting("solver", "certificate_tol") * max(1.0, prog.lsmooth)
    if not converged:
        logger.warning("SLSQP point failed the optimality check (gradient mapping %.3g)", residual)
    else:
        logger.debug("SLSQP converged after %d iterations", result.nit)
    return SolveResult(x, prog.objective(x), int(result.nit), residual, converged)


def prox(prog: RegularizedProgram, z: Vector, scale: Optional[float] = None) -> Vector:
    """argmin_{x in K} f(x) + (scale/2) ||x - z||^2, with ``scale`` defaulting to L."""
    scale = prog.lsmooth if scale is None else scale
    z = np.asarray(z, dtype=float)
    if prog.linear_term is not None:
        return prog.project(z - prog.linear_term / scale)
    if prog.abs_terms is not None:
        D, omega = prog.abs_terms
        result = _epigraph_minimize(
            D, omega,
            lambda x: 0.5 * scale * float((x - z) @ (x - z)),
            lambda x: scale * (x - z),
            prog.constraints, prog.constraints.clip(z))
        return prog.project(result.x[:prog.dim])
    raise ParameterError("prox needs a linear or absolute-value f")


def gradient_mapping_residual(prog: RegularizedProgram, x: Vector) -> float:
    """L ||x - prox(x - grad g(x) / L)||, zero exactly at the optimum."""
    x = np.asarray(x, dtype=float)
    step = prox(prog, x - _finite(prog.g_gradient(x), "g gradient") / prog.lsmooth)
    return prog.lsmooth * float(np.linalg.norm(x - step))


def pgm_trajectory(prog: RegularizedProgram, x0: Vector, steps: int) -> List[Vector]:
    """Iterates x^{t+1} = prox_{L,f}(x^t - grad g(x^t) / L) from project(x0)."""
    x = prog.project(np.asarray(x0, dtype=float))
    trajectory = [x]
    for _ in range(steps):
        x = prox(prog, x - _finite(prog.g_gradient(x), "g gradient") / prog.lsmooth)
        trajectory.append(x)
    return trajectory


def gradient_step_expansiveness_check(g_gradient: Callback, sigma: float, lsmooth: float, eta: float,
                                      trials: int, dim: int,
                                      rng: Optional[np.random.Generator] = None,
                                      constraints: Optional[ConstraintSet] = None) -> float:
    """Largest observed ||G(x) - G(y)|| / ||x - y|| for G(x) = x - eta grad g(x).

    Sample points are standard normal, projected onto ``constraints`` when given.
    For eta <= 1/L the ratio stays below 1 - eta sigma.
    """
    if eta <= 0 or eta > 1.0 / lsmooth * (1 + 1e-12):
        raise ParameterError(f"step size must satisfy 0 < eta <= 1/L = {1.0 / lsmooth}")
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(trials):
        x, y = rng.standard_normal(dim), rng.standard_normal(dim)
        if constraints is not None:
            x, y = dykstra_project(constraints, x), dykstra_project(constraints, y)
        gap = np.linalg.norm(x - y)
        if gap == 0.0:
            continue
        gx = x - eta * np.asarray(g_gradient(x))
        gy = y - eta * np.asarray(g_gradient(y))
        worst = max(worst, float(np.linalg.norm(gx - gy) / gap))
    return worst


@dataclass(frozen=True)
class AssumptionConstants:
    C: float
    D: float
    bound: float  # L (C + D) / sigma


def assumption_constants(prog: RegularizedProgram, prog_tilde: RegularizedProgram,
                         points: Sequence[Vector], delta: float) -> AssumptionConstants:
    """Empirical constants of the perturbation bound over sample points of K.

    C is the largest ||grad g(x) - grad g~(x)|| / (L |delta|) and D the largest
    ||prox_{L,f}(x) - prox_{L,f~}(x)|| / |delta|, both with the unperturbed L.
    """
    if delta == 0:
        raise ParameterError("delta must be nonzero")
    L = prog.lsmooth
    C = D = 0.0
    for point in points:
        x = prog.project(np.asarray(point, dtype=float))
        grad_gap = np.linalg.norm(np.asarray(prog.g_gradient(x)) - np.asarray(prog_tilde.g_gradient(x)))
        C = max(C, float(grad_gap / (L * abs(delta))))
        prox_gap = np.linalg.norm(prox(prog, x, L) - prox(prog_tilde, x, L))
        D = max(D, float(prox_gap / abs(delta)))
    return AssumptionConstants(C, D, L * (C + D) / prog.sigma)
